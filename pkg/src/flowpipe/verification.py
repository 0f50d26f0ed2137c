"""Chunk verification and challenge adjudication: deterministic chunk
assignment, re-execution checks producing approvals or faulty-computation
challenges, and consensus-side resolution of both challenge kinds."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from . import crypto
from .collection import collection_hash as compute_collection_hash
from .encoding import canonical_json, hexify
from .execution import (
    EMPTY_TRACE,
    Chunk,
    ExecutionReceipt,
    ExecutionResult,
    trace_fault_origin,
    trace_update,
)
from .merkle import ExecutionState, value_proof_vrfy
from .state import (
    Adjudication,
    ChallengeKind,
    ProtocolState,
    SlashingChallenge,
    StateUpdate,
    adjudicate_challenge,
    challenge_id,
)
from .vm import SignedTransaction, execute

_U64 = 1 << 64


def assign_chunks(verifier: bytes, chunk_count: int, randomness: bytes, p: float) -> set[int]:
    """Publicly recomputable sample: chunk i is assigned iff a seeded draw
    keyed by (block randomness, verifier, i) lands below p."""
    if not 0.0 < p <= 1.0:
        raise ValueError("coverage fraction must lie in (0, 1]")
    threshold = int(p * _U64)
    assigned = set()
    for i in range(chunk_count):
        seed = crypto.derive_seed(["verify"], randomness + verifier + i.to_bytes(8, "big"))
        if crypto.seeded_stream(seed).word(0) < threshold:
            assigned.add(i)
    return assigned


@dataclass(frozen=True)
class ResultApproval:
    execution_result_hash: bytes
    chunk_index: int
    verifier: bytes
    spock: bytes
    signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_json(
            {
                "result": hexify(self.execution_result_hash),
                "chunk": self.chunk_index,
                "spock": hexify(self.spock),
            }
        )


def make_approval(
    keypair: crypto.StakingKeyPair, result_hash: bytes, chunk_index: int, spock: bytes
) -> ResultApproval:
    stub = ResultApproval(result_hash, chunk_index, keypair.public, spock, b"")
    return ResultApproval(
        result_hash, chunk_index, keypair.public, spock, keypair.sign(stub.signed_payload())
    )


@dataclass
class ChunkDataPackage:
    """Executor-provided verification inputs for one chunk: the touched
    registers with proofs against the chunk's start commitment, plus the
    full transaction texts."""

    registers: dict[bytes, bytes]
    proofs: dict[bytes, object]  # key -> ValueProof
    transactions: list[SignedTransaction]


@dataclass
class ChunkVerdict:
    ok: bool
    reason: Optional[str] = None
    approval: Optional[ResultApproval] = None
    recomputed_consumption: Optional[int] = None
    recomputed_end_commitment: Optional[bytes] = None
    recomputed_spock: Optional[bytes] = None


def _reexecute(
    chunk: Chunk, package: ChunkDataPackage
) -> tuple[int, bytes, bytes]:
    state = ExecutionState(dict(package.registers))
    consumed = 0
    trace = EMPTY_TRACE
    for tx in package.transactions:
        out = execute(state, tx)
        state = out.state
        consumed += out.cost
        trace = trace_update(trace, out.trace)
    return consumed, state.root(), trace


def verify_chunk(
    keypair: crypto.StakingKeyPair,
    result: ExecutionResult,
    chunk_index: int,
    package: ChunkDataPackage,
    executor_spock: bytes,
) -> ChunkVerdict:
    """Re-execute an assigned chunk from the executor's data package and
    approve only a full match of consumption, end commitment, and trace."""
    chunk = result.chunks[chunk_index]
    for key, value in package.registers.items():
        proof = package.proofs.get(key)
        if proof is None or not value_proof_vrfy(
            key, value, proof, chunk.start_state_commitment
        ):
            return ChunkVerdict(ok=False, reason="state-proof-failure")
    if ExecutionState(dict(package.registers)).root() != chunk.start_state_commitment:
        return ChunkVerdict(ok=False, reason="state-proof-failure")
    consumed, end_root, trace = _reexecute(chunk, package)
    expected_end = (
        result.chunks[chunk_index + 1].start_state_commitment
        if chunk_index + 1 < len(result.chunks)
        else result.final_state
    )
    if consumed != chunk.computation_consumption:
        reason = "consumption-mismatch"
    elif end_root != expected_end:
        reason = "end-state-mismatch"
    elif trace != executor_spock:
        reason = "trace-mismatch"
    else:
        approval = make_approval(keypair, result.result_hash(), chunk_index, trace)
        return ChunkVerdict(
            ok=True,
            approval=approval,
            recomputed_consumption=consumed,
            recomputed_end_commitment=end_root,
            recomputed_spock=trace,
        )
    return ChunkVerdict(
        ok=False,
        reason=reason,
        recomputed_consumption=consumed,
        recomputed_end_commitment=end_root,
        recomputed_spock=trace,
    )


def make_fcc(
    challenger: bytes,
    executor: bytes,
    result_hash: bytes,
    chunk_index: int,
    deadline: int,
) -> SlashingChallenge:
    ch = SlashingChallenge(
        kind=ChallengeKind.FAULTY_COMPUTATION,
        challenger=challenger,
        accused=(executor,),
        evidence=(result_hash, crypto.hash("chunk-index", chunk_index.to_bytes(8, "big"))),
        deadline=deadline,
    )
    return SlashingChallenge(
        kind=ch.kind,
        challenger=ch.challenger,
        accused=ch.accused,
        evidence=ch.evidence,
        deadline=ch.deadline,
        challenge_id=challenge_id(ch),
    )


def make_mcc(
    challenger: bytes, guarantors: Sequence[bytes], coll_hash: bytes, deadline: int
) -> SlashingChallenge:
    ch = SlashingChallenge(
        kind=ChallengeKind.MISSING_COLLECTION,
        challenger=challenger,
        accused=tuple(guarantors),
        evidence=(coll_hash,),
        deadline=deadline,
    )
    return SlashingChallenge(
        kind=ch.kind,
        challenger=ch.challenger,
        accused=ch.accused,
        evidence=ch.evidence,
        deadline=ch.deadline,
        challenge_id=challenge_id(ch),
    )


@dataclass
class DisputedChunk:
    """Attested inputs an adjudicator re-executes a challenged chunk from."""

    result: ExecutionResult
    chunk_index: int
    package: ChunkDataPackage
    executor_spock: bytes


def adjudicate_fcc(
    state: ProtocolState,
    challenge: SlashingChallenge,
    disputed: DisputedChunk,
    receipt_chain: Optional[Sequence[ExecutionReceipt]] = None,
    correct_results: Optional[Sequence[ExecutionResult]] = None,
    slash_fraction: Fraction = Fraction(1),
) -> tuple[Adjudication, StateUpdate]:
    """Re-execute the disputed chunk; a genuine divergence slashes the fault
    origin (traced through the receipt chain when given), a clean replay
    slashes the challenger."""
    keypair = crypto.StakingKeyPair.from_seed(b"adjudicator" + challenge.challenge_id)
    verdict = verify_chunk(
        keypair, disputed.result, disputed.chunk_index, disputed.package, disputed.executor_spock
    )
    if verdict.ok:
        return adjudicate_challenge(
            state, challenge, response_exonerates=True, timed_out=False,
            slash_fraction=slash_fraction,
        )
    accused = challenge.accused
    if receipt_chain is not None and correct_results is not None:
        try:
            accused = (trace_fault_origin(receipt_chain, correct_results),)
        except ValueError:
            pass  # no chain divergence; fall back to the named executor
    resolved = SlashingChallenge(
        kind=challenge.kind,
        challenger=challenge.challenger,
        accused=accused,
        evidence=challenge.evidence,
        deadline=challenge.deadline,
        full_proof=challenge.full_proof,
        challenge_id=challenge.challenge_id,
    )
    return adjudicate_challenge(
        state, resolved, response_exonerates=False, timed_out=False,
        slash_fraction=slash_fraction,
    )


@dataclass(frozen=True)
class MissingCollectionAttestation:
    """Licence for executors to skip a collection whose guarantors all went
    silent; references the upholding adjudication."""

    collection_hash: bytes
    adjudication_id: bytes

    def to_dict(self) -> dict:
        return {
            "collection_hash": hexify(self.collection_hash),
            "adjudication_id": hexify(self.adjudication_id),
        }


@dataclass
class MccOutcome:
    adjudication: Adjudication
    update: Optional[StateUpdate] = None
    attestation: Optional[MissingCollectionAttestation] = None
    recovered: Optional[list[SignedTransaction]] = None


def adjudicate_mcc(
    state: ProtocolState,
    challenge: SlashingChallenge,
    responses: dict[bytes, Optional[list[SignedTransaction]]],
    slash_fraction: Fraction = Fraction(1),
) -> MccOutcome:
    """Any guarantor response reconstructing the collection hash closes the
    challenge without a slash; total silence slashes every guarantor and
    issues the skip attestation. A response failing reconstruction counts
    as silence for that guarantor."""
    coll_hash = challenge.evidence[0]
    cid = challenge.challenge_id or challenge_id(challenge)
    for guarantor in sorted(responses):
        texts = responses[guarantor]
        if texts is None:
            continue
        if compute_collection_hash([t.tx_hash() for t in texts]) == coll_hash:
            adj = Adjudication(challenge_id=cid, outcome="dismissed", slashed=())
            return MccOutcome(adjudication=adj, recovered=list(texts))
    adj, upd = adjudicate_challenge(
        state, challenge, response_exonerates=None, timed_out=True,
        slash_fraction=slash_fraction,
    )
    attestation = MissingCollectionAttestation(
        collection_hash=coll_hash, adjudication_id=adj.challenge_id
    )
    return MccOutcome(adjudication=adj, update=upd, attestation=attestation)
