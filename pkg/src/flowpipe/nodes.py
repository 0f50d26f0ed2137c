"""Simulated node processes for every role, plus scripted Byzantine
behaviors and the transaction workload. Each node is a reactive callback
object driven by the simulator; nodes share nothing but messages."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from itertools import islice
from typing import Any, Optional

from . import crypto
from .blocks import (
    EvaluationContext,
    ProtoBlock,
    approval_payload,
    evaluate_proposal,
    form_seal,
    propose_proto_block,
    validate_seal,
)
from .clustering import route_transaction
from .collection import (
    Collection,
    GuaranteedCollection,
    TxCheck,
    close_trigger,
    collection_hash,
    validate_append_proposal,
    validate_transaction,
)
from .encoding import canonical_json, hexify
from .execution import (
    GENESIS_RESULT_HASH,
    BlockExecutionOutput,
    ExecutionReceipt,
    ExecutionResult,
    block_execution,
    canonical,
)
from .hotstuff import GENESIS_DIGEST, ConsensusEngine, NewRound, Proposal, Vote
from .merkle import ExecutionState, value_proof_gen
from .sim import Metrics, Simulator
from .state import (
    ChallengeKind,
    NodeIdentity,
    ProtocolState,
    SlashingChallenge,
    StateUpdate,
    UpdateRejected,
    adjudicate_challenge,
    apply_updates,
    challenge_id,
    effective_votes,
    meets_supermajority,
)
from .verification import (
    ChunkDataPackage,
    DisputedChunk,
    adjudicate_fcc,
    adjudicate_mcc,
    assign_chunks,
    make_fcc,
    make_mcc,
    verify_chunk,
)
from .vm import SignedTransaction, ToyTransaction


# ---------------------------------------------------------------------------
# Shared read-only world directory
# ---------------------------------------------------------------------------


@dataclass
class Directory:
    """Static world view handed to every node at scenario start: membership,
    cluster map, beacon material, and protocol parameters. Stake weights are
    per-epoch snapshots; mid-run slashes change the protocol state but not
    the current epoch's voting weights."""

    name_of: dict[bytes, str]
    key_of: dict[str, bytes]
    consensus_members: list[NodeIdentity]
    verifier_members: list[NodeIdentity]
    executor_names: list[str]
    verifier_names: list[str]
    consensus_names: list[str]
    collector_names: list[str]
    clusters: dict[int, list[NodeIdentity]]  # cluster index -> members
    cluster_of: dict[bytes, int]
    initial_state: ProtocolState
    genesis_digest: bytes  # engine-level digest standing for the genesis block
    epoch_seed: bytes
    params: crypto.ThresholdParams
    drb_vv: crypto.VerificationVector
    drb_committee: dict[bytes, crypto.SecretShare]  # member key -> share
    registered_accounts: list[bytes]
    # protocol parameters
    gamma_chunk: int = 10
    coverage_p: float = 1.0
    tx_window: int = 10_000
    collection_size_threshold: int = 3
    collection_timespan_rounds: int = 8
    base_timeout: int = 400
    mcc_deadline: int = 600
    retrieval_timeout: int = 300


@dataclass
class Behavior:
    kind: str  # withhold_collection | equivocate_proposal | faulty_execution | non_responsive | stale_vote
    target_chunk: Optional[int] = None


class EquivocatingEngine(ConsensusEngine):
    """Byzantine leader: signs two conflicting proposals for each round it
    leads and broadcasts both."""

    def _propose(self):
        r = self.current_round
        if r in self._proposed_rounds:
            return
        self._proposed_rounds.add(r)
        parent = self.high_qc.payload_digest
        base = self.make_payload(parent)
        variants = [base]
        if isinstance(base, ProtoBlock):
            variants.append(
                dataclasses.replace(
                    base,
                    slashing_challenges=base.slashing_challenges + ({"equivocation": 1},),
                )
            )
        elif isinstance(base, dict):
            variants.append(dict(base, equivocation=1))
        for payload in variants:
            digest = self.digest_payload(payload)
            proposal = Proposal(
                round=r,
                payload=payload,
                payload_digest=digest,
                justify=self.high_qc,
                proposer=self.keypair.public,
                signature=self._sign_proposal(r, digest, self.high_qc),
            )
            self.broadcast(proposal)


class StaleVoteEngine(ConsensusEngine):
    """Byzantine voter: emits votes carrying an outdated round number, which
    honest leaders discard during aggregation."""

    def on_proposal(self, proposal):
        real_send = self.send

        def stale_send(key, msg):
            if isinstance(msg, Vote) and msg.round > 1:
                msg = Vote(
                    round=msg.round - 1,
                    payload_digest=msg.payload_digest,
                    voter=msg.voter,
                    signature=self.keypair.sign(
                        canonical_json(
                            {"vote_round": msg.round - 1, "digest": hexify(msg.payload_digest)}
                        )
                    ),
                )
            real_send(key, msg)

        self.send = stale_send
        try:
            super().on_proposal(proposal)
        finally:
            self.send = real_send


# ---------------------------------------------------------------------------
# Message types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubmitTx:
    tx: SignedTransaction


@dataclass(frozen=True)
class GossipTx:
    tx: SignedTransaction


@dataclass(frozen=True)
class GuaranteeShare:
    collection_hash: bytes
    cluster_index: int
    signer: bytes
    signature: bytes


@dataclass(frozen=True)
class GuaranteeAnnounce:
    gc: GuaranteedCollection


@dataclass(frozen=True)
class Finalized:
    pb: ProtoBlock


@dataclass(frozen=True)
class DrbShare:
    pb_hash: bytes
    share: crypto.SignatureShare


@dataclass(frozen=True)
class BlockRandomness:
    pb_hash: bytes
    sigma: int


@dataclass(frozen=True)
class ReceiptMsg:
    receipt: ExecutionReceipt
    packages: tuple  # one ChunkDataPackage per chunk


@dataclass(frozen=True)
class ApprovalMsg:
    result_hash: bytes
    verifier: bytes
    signature: bytes


@dataclass(frozen=True)
class ChallengeMsg:
    challenge: SlashingChallenge
    # FCC context so adjudicators can locate the disputed chunk
    result_hash: Optional[bytes] = None
    chunk_index: Optional[int] = None


@dataclass(frozen=True)
class CollectionRequest:
    collection_hash: bytes


@dataclass(frozen=True)
class CollectionResponse:
    collection_hash: bytes
    texts: tuple[SignedTransaction, ...]


@dataclass(frozen=True)
class MccQuery:
    collection_hash: bytes
    challenge_id: bytes


@dataclass(frozen=True)
class MccResponse:
    challenge_id: bytes
    collection_hash: bytes
    texts: Optional[tuple[SignedTransaction, ...]]


@dataclass(frozen=True)
class AttestationMsg:
    collection_hash: bytes
    adjudication_id: bytes


# ---------------------------------------------------------------------------
# Collector
# ---------------------------------------------------------------------------


class CollectorNode:
    def __init__(
        self,
        sim: Simulator,
        name: str,
        keypair: crypto.StakingKeyPair,
        directory: Directory,
        metrics: Metrics,
        behavior: Optional[Behavior] = None,
    ):
        self.sim = sim
        self.name = name
        self.keypair = keypair
        self.d = directory
        self.metrics = metrics
        self.behavior = behavior
        self.cluster_index = directory.cluster_of[keypair.public]
        self.peers = [
            directory.name_of[m.staking_public_key]
            for m in directory.clusters[self.cluster_index]
            if m.staking_public_key != keypair.public
        ]
        self.pool: dict[bytes, SignedTransaction] = {}
        self.included: set[bytes] = set()
        self.open_collection: list[bytes] = []
        self.open_round = 1
        self.guaranteed_history: set[bytes] = set()
        self.store: dict[bytes, list[SignedTransaction]] = {}
        self.shares: dict[bytes, dict[bytes, bytes]] = {}
        self.announced: set[bytes] = set()
        self.heights: dict[bytes, int] = {directory.genesis_digest: 0}
        self.next_height = 1

        members = directory.clusters[self.cluster_index]
        cluster_seed = crypto.derive_seed(
            ["cluster-consensus", str(self.cluster_index)], directory.epoch_seed
        )
        self.engine = ConsensusEngine(
            keypair=keypair,
            members=members,
            seed=cluster_seed,
            base_timeout=directory.base_timeout,
            digest_payload=lambda p: crypto.hash("cluster-payload", canonical_json(p)),
            validate_payload=self._validate_payload,
            make_payload=self._make_payload,
            broadcast=self._engine_broadcast,
            send=self._engine_send,
            set_timer=self._engine_timer,
            on_finalize=self._on_cluster_finalize,
        )

    # -- engine plumbing ---------------------------------------------------

    def _engine_broadcast(self, msg):
        for peer in self.peers:
            self.sim.send(self.name, peer, msg)

    def _engine_send(self, key, msg):
        self.sim.send(self.name, self.d.name_of[key], msg)

    def _engine_timer(self, duration, round_number):
        self.sim.set_timer(
            self.name, duration, lambda: self.engine.on_local_timeout(round_number)
        )

    def start(self):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        self.engine.start()

    # -- cluster consensus payloads -----------------------------------------

    def _make_payload(self, parent_digest):
        # parent/round fields chain the payload so digests are unique per slot
        base = {"parent": hexify(parent_digest), "round": self.engine.current_round}
        rounds_open = self.engine.current_round - self.open_round
        if close_trigger(
            len(self.open_collection),
            rounds_open,
            self.d.collection_size_threshold,
            self.d.collection_timespan_rounds,
        ):
            return dict(base, kind="close")
        fresh = [
            hexify(h)
            for h in self.pool
            if h not in self.included and h not in self.guaranteed_history
        ]
        if fresh:
            return dict(base, kind="append", hashes=fresh)
        return dict(base, kind="noop")

    def _validate_payload(self, payload, parent_digest):
        if not isinstance(payload, dict):
            return False
        if payload.get("parent") != hexify(parent_digest):
            return False
        kind = payload.get("kind")
        if kind == "noop":
            return True
        if kind == "close":
            return bool(self.open_collection)
        if kind == "append":
            hashes = [bytes.fromhex(h) for h in payload.get("hashes", [])]
            return bool(hashes) and validate_append_proposal(
                hashes, self.pool, self.open_collection, self.guaranteed_history
            )
        return False

    def _on_cluster_finalize(self, node):
        payload = node.payload
        kind = payload.get("kind")
        if kind == "append":
            for h in (bytes.fromhex(x) for x in payload["hashes"]):
                if h in self.pool and h not in self.included and h not in self.guaranteed_history:
                    self.open_collection.append(h)
                    self.included.add(h)
        elif kind == "close" and self.open_collection:
            coll = Collection(list(self.open_collection), self.cluster_index, closed=True)
            ch = coll.hash()
            self.store[ch] = [self.pool[h] for h in coll.tx_hashes]
            self.guaranteed_history.update(coll.tx_hashes)
            self.open_collection = []
            self.open_round = self.engine.current_round
            stub = GuaranteedCollection(ch, self.cluster_index, (), ())
            sig = self.keypair.sign(stub.signed_payload())
            self.sim.event(self.name, "collection_closed", {"hash": hexify(ch), "size": len(coll.tx_hashes)})
            share = GuaranteeShare(ch, self.cluster_index, self.keypair.public, sig)
            self._on_guarantee_share(share)
            for peer in self.peers:
                self.sim.send(self.name, peer, share)

    # -- message handling ----------------------------------------------------

    def handle(self, sender: str, msg: Any):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        if isinstance(msg, (Proposal, Vote, NewRound)):
            if isinstance(msg, Proposal):
                self.engine.on_proposal(msg)
            elif isinstance(msg, Vote):
                self.engine.on_vote(msg)
            else:
                self.engine.on_new_round(msg)
        elif isinstance(msg, SubmitTx):
            self._ingest(msg.tx, gossip=True)
        elif isinstance(msg, GossipTx):
            self._ingest(msg.tx, gossip=False)
        elif isinstance(msg, GuaranteeShare):
            self._on_guarantee_share(msg)
        elif isinstance(msg, Finalized):
            self.heights[msg.pb.hash()] = msg.pb.height
            self.next_height = max(self.next_height, msg.pb.height + 1)
        elif isinstance(msg, CollectionRequest):
            if not (self.behavior and self.behavior.kind == "withhold_collection"):
                texts = self.store.get(msg.collection_hash)
                if texts is not None:
                    self.sim.send(
                        self.name, sender, CollectionResponse(msg.collection_hash, tuple(texts))
                    )
        elif isinstance(msg, MccQuery):
            if not (self.behavior and self.behavior.kind == "withhold_collection"):
                texts = self.store.get(msg.collection_hash)
                self.sim.send(
                    self.name,
                    sender,
                    MccResponse(
                        msg.challenge_id,
                        msg.collection_hash,
                        tuple(texts) if texts is not None else None,
                    ),
                )

    def _ingest(self, tx: SignedTransaction, gossip: bool):
        h = tx.tx_hash()
        if h in self.pool:
            return
        verdict = validate_transaction(
            tx,
            self.heights.get,
            self.next_height,
            self.d.tx_window,
            self.cluster_index,
            len(self.d.clusters),
            self.d.registered_accounts,
        )
        if verdict != TxCheck.OK:
            self.sim.event(self.name, "tx_rejected", {"hash": hexify(h), "reason": verdict.value})
            return
        self.pool[h] = tx
        if gossip:
            for peer in self.peers:
                self.sim.send(self.name, peer, GossipTx(tx))

    def _on_guarantee_share(self, share: GuaranteeShare):
        if share.collection_hash not in self.store:
            # only guarantors that hold the texts aggregate
            return
        stub = GuaranteedCollection(share.collection_hash, share.cluster_index, (), ())
        if not crypto.staking_verify(share.signer, stub.signed_payload(), share.signature):
            return
        bucket = self.shares.setdefault(share.collection_hash, {})
        bucket.setdefault(share.signer, share.signature)
        if share.collection_hash in self.announced:
            return
        members = self.d.clusters[self.cluster_index]
        gc = GuaranteedCollection(
            share.collection_hash,
            self.cluster_index,
            tuple(sorted(bucket)),
            tuple(bucket[s] for s in sorted(bucket)),
        )
        if meets_supermajority(effective_votes(gc.signers, members)):
            self.announced.add(share.collection_hash)
            self.sim.event(
                self.name, "collection_guaranteed", {"hash": hexify(share.collection_hash)}
            )
            for cname in self.d.consensus_names:
                self.sim.send(self.name, cname, GuaranteeAnnounce(gc))


# ---------------------------------------------------------------------------
# Consensus
# ---------------------------------------------------------------------------


def _challenge_mark(doc: dict):
    """Chain-dedupe key: the challenged target, independent of challenger."""
    if doc["kind"] == ChallengeKind.MISSING_COLLECTION.value:
        return bytes.fromhex(doc["evidence"][0])
    if doc["kind"] == ChallengeKind.FAULTY_COMPUTATION.value:
        return (bytes.fromhex(doc["evidence"][0]), bytes.fromhex(doc["evidence"][1]))
    return None


class ChainSet:
    """Append-only set view shared along a block chain. Extending the current
    tip reuses the backing dict, so accumulating per-block context costs
    O(new entries) instead of O(chain length); a fork off an older block
    copies its prefix once."""

    __slots__ = ("_index", "_size")

    def __init__(self, items=()):
        self._index: dict = {}
        for x in items:
            if x not in self._index:
                self._index[x] = len(self._index)
        self._size = len(self._index)

    def __contains__(self, x) -> bool:
        idx = self._index.get(x)
        return idx is not None and idx < self._size

    def __iter__(self):
        # backing dict preserves insertion order; our view is its prefix
        return islice(iter(self._index), self._size)

    def __len__(self) -> int:
        return self._size

    def extend(self, items) -> "ChainSet":
        index = self._index
        if self._size != len(index):
            # a sibling branch already grew the backing dict; copy our prefix
            n = self._size
            index = {k: v for k, v in index.items() if v < n}
        for x in items:
            if x not in index:
                index[x] = len(index)
        view = ChainSet.__new__(ChainSet)
        view._index = index
        view._size = len(index)
        return view


@dataclass
class ChainCtx:
    digest: bytes
    height: int
    state: ProtocolState
    collections: ChainSet = field(default_factory=ChainSet)
    sealed: ChainSet = field(default_factory=ChainSet)
    ancestors: ChainSet = field(default_factory=ChainSet)
    challenge_ids: ChainSet = field(default_factory=ChainSet)
    adjudicated: ChainSet = field(default_factory=ChainSet)
    open_fcc: dict[bytes, bytes] = field(default_factory=dict)  # challenge id -> result hash
    condemned: ChainSet = field(default_factory=ChainSet)  # results with upheld FCC
    # sealing is sequential, so the sealed set is a chain; this is its head
    sealed_tip: bytes = GENESIS_RESULT_HASH
    # chain-level duplicate suppression by challenge target
    mcc_collections: ChainSet = field(default_factory=ChainSet)
    fcc_marks: ChainSet = field(default_factory=ChainSet)


class ConsensusNode:
    def __init__(
        self,
        sim: Simulator,
        name: str,
        keypair: crypto.StakingKeyPair,
        directory: Directory,
        metrics: Metrics,
        behavior: Optional[Behavior] = None,
    ):
        self.sim = sim
        self.name = name
        self.keypair = keypair
        self.d = directory
        self.metrics = metrics
        self.behavior = behavior

        self.ctxs: dict[bytes, ChainCtx] = {
            directory.genesis_digest: ChainCtx(
                digest=directory.genesis_digest,
                height=0,
                state=directory.initial_state,
                sealed=ChainSet([GENESIS_RESULT_HASH]),
                ancestors=ChainSet([directory.genesis_digest]),
            )
        }
        self.known_collections: dict[bytes, GuaranteedCollection] = {}
        self.pending_collections: list[bytes] = []
        self.pending_challenges: dict[bytes, dict] = {}  # dedupe key -> challenge doc
        self._challenge_seen: set[bytes] = set()  # dedupe keys ever accepted
        self.challenge_objects: dict[bytes, SlashingChallenge] = {}  # challenge id -> object
        self.pending_updates: dict[bytes, StateUpdate] = {}  # challenge id -> update
        self.results: dict[bytes, ExecutionResult] = {}
        self.results_by_prev: dict[bytes, list[bytes]] = {}  # prev result -> successors
        self.packages: dict[bytes, tuple] = {}  # result hash -> chunk packages
        self.receipts: dict[bytes, ExecutionReceipt] = {}
        self.approvals: dict[bytes, dict[bytes, bytes]] = {}
        self.drb_shares: dict[bytes, dict[int, crypto.SignatureShare]] = {}
        self.randomness: dict[bytes, int] = {}
        self.fcc_context: dict[bytes, tuple[bytes, int]] = {}  # id -> (result, chunk)
        self.mcc_responses: dict[bytes, dict[bytes, Optional[tuple]]] = {}
        self.adjudicated_ids: set[bytes] = set()
        self.finalized_heights: dict[int, bytes] = {}
        self.finalize_times: dict[bytes, int] = {}
        self.first_seen: dict[bytes, int] = {}
        self.recorded_challenges: dict[bytes, dict] = {}  # challenge id -> doc
        # one designated observer feeds the aggregate run metrics
        self.is_observer = name == directory.consensus_names[0]

        engine_cls = ConsensusEngine
        if behavior and behavior.kind == "equivocate_proposal":
            engine_cls = EquivocatingEngine
        elif behavior and behavior.kind == "stale_vote":
            engine_cls = StaleVoteEngine
        self.engine = engine_cls(
            keypair=keypair,
            members=directory.consensus_members,
            seed=directory.epoch_seed,
            base_timeout=directory.base_timeout,
            digest_payload=self._digest_payload,
            validate_payload=self._validate_payload,
            make_payload=self._make_payload,
            broadcast=self._engine_broadcast,
            send=self._engine_send,
            set_timer=self._engine_timer,
            on_finalize=self._on_finalize,
            on_evidence=self._on_evidence,
        )

    # -- engine plumbing ---------------------------------------------------

    def _engine_broadcast(self, msg):
        for peer in self.d.consensus_names:
            if peer != self.name:
                self.sim.send(self.name, peer, msg)

    def _engine_send(self, key, msg):
        self.sim.send(self.name, self.d.name_of[key], msg)

    def _engine_timer(self, duration, round_number):
        self.sim.set_timer(
            self.name, duration, lambda: self.engine.on_local_timeout(round_number)
        )

    def start(self):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        self.engine.start()

    @staticmethod
    def _digest_payload(payload) -> bytes:
        if isinstance(payload, ProtoBlock):
            return payload.hash()
        return crypto.hash("payload", canonical_json(payload))

    # -- proposal assembly ---------------------------------------------------

    def _ctx_for(self, digest: bytes) -> Optional[ChainCtx]:
        """Chain context for a known tree node, built lazily by replaying the
        payload chain from the nearest cached ancestor."""
        if digest in self.ctxs:
            return self.ctxs[digest]
        chain = []
        cur = digest
        while cur not in self.ctxs:
            node = self.engine.tree.nodes.get(cur)
            if node is None or not isinstance(node.payload, ProtoBlock):
                return None
            chain.append(node.payload)
            cur = node.parent
        ctx = self.ctxs[cur]
        for pb in reversed(chain):
            try:
                ctx = self._build_ctx(pb, ctx)
            except UpdateRejected:
                return None
        return ctx

    def _make_payload(self, parent_digest: bytes):
        ctx = self._ctx_for(parent_digest)
        if ctx is None:  # parent context missing; propose a no-op extension
            ctx = self.ctxs[self.d.genesis_digest]
        collections = [
            self.known_collections[h]
            for h in self.pending_collections
            if h not in ctx.collections
        ]
        challenges = []
        updates = []
        block_marks: set = set()
        for dedupe_key in sorted(self.pending_challenges):
            doc = self.pending_challenges[dedupe_key]
            cid = bytes.fromhex(doc["id"])
            if cid in ctx.challenge_ids:
                continue
            mark = _challenge_mark(doc)
            if mark is not None and (
                mark in block_marks
                or mark in ctx.mcc_collections
                or mark in ctx.fcc_marks
            ):
                continue  # same target already challenged on this chain
            if mark is not None:
                block_marks.add(mark)
            challenges.append(doc)
        for cid in sorted(self.pending_updates):
            if cid not in ctx.adjudicated:
                updates.append(self.pending_updates[cid])
        seals = self._ready_seals(ctx)
        return propose_proto_block(
            parent_hash=ctx.digest,
            parent_height=ctx.height,
            parent_protocol_state=ctx.state,
            pending_collections=collections,
            ready_seals=seals,
            pending_challenges=challenges,
            pending_updates=updates,
        )

    def _result_pending_challenge(self, ctx: ChainCtx, result_hash: bytes) -> bool:
        if result_hash in ctx.condemned:
            return True
        for cid, rh in ctx.open_fcc.items():
            if rh == result_hash and cid not in ctx.adjudicated:
                return True
        # locally known challenges not yet chain-recorded also block sealing
        for cid, (rh, _) in self.fcc_context.items():
            if rh == result_hash and cid not in ctx.adjudicated:
                if self._fcc_upheld(cid) is not False:
                    return True
        return False

    def _fcc_upheld(self, cid: bytes) -> Optional[bool]:
        upd = self.pending_updates.get(cid)
        if upd is None:
            return None
        return upd.meta.get("outcome") == "accused_slashed"

    def _ready_seals(self, ctx: ChainCtx):
        seals = []
        tip = ctx.sealed_tip
        advanced = True
        while advanced:
            advanced = False
            for rh in sorted(self.results_by_prev.get(tip, ())):
                if rh in ctx.sealed:
                    continue
                result = self.results[rh]
                if result.block_hash not in ctx.ancestors:
                    continue
                if self._result_pending_challenge(ctx, rh):
                    continue
                seal = form_seal(
                    sealed_block_hash=result.block_hash,
                    execution_result_hash=rh,
                    final_state_commitment=result.final_state,
                    approvals=self.approvals.get(rh, {}),
                    verifiers=self.d.verifier_members,
                    parent_result_sealed=True,
                    pending_challenge=False,
                )
                if seal is not None:
                    seals.append(seal)
                    tip = rh
                    advanced = True
                    break
        return seals

    # -- proposal validation ---------------------------------------------------

    def _validate_payload(self, payload, parent_digest: bytes) -> bool:
        if not isinstance(payload, ProtoBlock):
            return False
        self.first_seen.setdefault(payload.hash(), self.sim.now)
        ctx = self._ctx_for(parent_digest)
        if ctx is None:
            return False
        newly_sealed: set = set()

        def _is_sealed(rh: bytes) -> bool:
            return rh in newly_sealed or rh in ctx.sealed

        def seal_ok(seal) -> bool:
            ok = validate_seal(
                seal,
                self.d.verifier_members,
                result_lookup=lambda rh: (
                    (self.results[rh].block_hash, self.results[rh].final_state)
                    if rh in self.results
                    else None
                ),
                parent_result_sealed=lambda rh: (
                    _is_sealed(self.results[rh].previous_execution_result_hash)
                    if rh in self.results
                    else False
                ),
                challenge_pending=lambda rh: self._result_pending_challenge(ctx, rh),
            )
            if ok:
                newly_sealed.add(seal.execution_result_hash)
            return ok

        seen_marks: set = set()

        def challenge_ok(doc) -> bool:
            try:
                ch = self._challenge_from_doc(doc)
            except (KeyError, ValueError):
                return False
            if challenge_id(ch) != ch.challenge_id:
                return False
            mark = _challenge_mark(doc)
            if mark is not None:
                if (
                    mark in seen_marks
                    or mark in ctx.mcc_collections
                    or mark in ctx.fcc_marks
                ):
                    return False  # duplicate challenge for an already-challenged target
                seen_marks.add(mark)
            return True

        ectx = EvaluationContext(
            proposer_is_primary=True,  # engine enforces the round primary
            extends_known_chain=True,  # engine enforces chain extension
            parent_height=ctx.height,
            consensus_safe=True,  # engine enforces the locking rule
            ancestor_collection_hashes=ctx.collections,
            received_collections=set(self.known_collections),
            collector_clusters=self.d.clusters,
            received_seals={s.digest() for s in payload.block_seals},  # self-authenticating
            seal_valid=seal_ok,
            challenge_verified=challenge_ok,
            parent_protocol_state=ctx.state,
        )
        ok, reason = evaluate_proposal(payload, ectx)
        if not ok:
            self.sim.event(self.name, "proposal_rejected", {"reason": reason})
            return False
        self._build_ctx(payload, ctx)
        return True

    @staticmethod
    def _challenge_from_doc(doc: dict) -> SlashingChallenge:
        return SlashingChallenge(
            kind=ChallengeKind(doc["kind"]),
            challenger=bytes.fromhex(doc["challenger"]),
            accused=tuple(bytes.fromhex(a) for a in doc["accused"]),
            evidence=tuple(bytes.fromhex(e) for e in doc["evidence"]),
            deadline=doc["deadline"],
            full_proof=doc["full_proof"],
            challenge_id=bytes.fromhex(doc["id"]),
        )

    def _build_ctx(self, pb: ProtoBlock, parent: ChainCtx) -> ChainCtx:
        digest = pb.hash()
        if digest in self.ctxs:
            return self.ctxs[digest]
        from .state import apply_updates

        new_state = apply_updates(parent.state, pb.protocol_state_updates).state
        new_ids: list[bytes] = []
        new_mcc: list[bytes] = []
        new_fcc_marks: list = []
        open_fcc = dict(parent.open_fcc)
        for doc in pb.slashing_challenges:
            cid = bytes.fromhex(doc["id"])
            new_ids.append(cid)
            mark = _challenge_mark(doc)
            if doc["kind"] == ChallengeKind.MISSING_COLLECTION.value:
                new_mcc.append(mark)
            elif doc["kind"] == ChallengeKind.FAULTY_COMPUTATION.value:
                open_fcc[cid] = bytes.fromhex(doc["evidence"][0])
                new_fcc_marks.append(mark)
        new_adjudicated: list[bytes] = []
        new_condemned: list[bytes] = []
        for upd in pb.protocol_state_updates:
            if upd.cause == "adjudication":
                cid = bytes.fromhex(upd.meta["challenge_id"])
                new_adjudicated.append(cid)
                if upd.meta.get("outcome") == "accused_slashed" and cid in open_fcc:
                    new_condemned.append(open_fcc[cid])
        ctx = ChainCtx(
            digest=digest,
            height=pb.height,
            state=new_state,
            collections=parent.collections.extend(
                g.collection_hash for g in pb.guaranteed_collections
            ),
            sealed=parent.sealed.extend(
                s.execution_result_hash for s in pb.block_seals
            ),
            ancestors=parent.ancestors.extend((digest,)),
            challenge_ids=parent.challenge_ids.extend(new_ids),
            adjudicated=parent.adjudicated.extend(new_adjudicated),
            open_fcc=open_fcc,
            condemned=parent.condemned.extend(new_condemned),
            mcc_collections=parent.mcc_collections.extend(new_mcc),
            fcc_marks=parent.fcc_marks.extend(new_fcc_marks),
            sealed_tip=(
                pb.block_seals[-1].execution_result_hash
                if pb.block_seals
                else parent.sealed_tip
            ),
        )
        self.ctxs[digest] = ctx
        return ctx

    # -- finalization pipeline ---------------------------------------------------

    def _on_finalize(self, node):
        pb: ProtoBlock = node.payload
        digest = pb.hash()
        ctx = self._ctx_for(digest)
        if ctx is None:
            return
        self.finalized_heights[pb.height] = digest
        self.finalize_times[digest] = self.sim.now
        if self.is_observer:
            self.metrics.blocks_finalized = len(self.finalized_heights)
            self.metrics.blocks_sealed += len(pb.block_seals)
            seen = self.first_seen.get(digest)
            if seen is not None:
                self.metrics.finalization_latencies.append(self.sim.now - seen)
        self.sim.event(
            self.name,
            "finalized",
            {
                "height": pb.height,
                "hash": hexify(digest),
                "collections": len(pb.guaranteed_collections),
                "seals": [hexify(s.execution_result_hash) for s in pb.block_seals],
            },
        )
        for seal in pb.block_seals:
            self.sim.event(
                self.name,
                "sealed",
                {"result": hexify(seal.execution_result_hash), "block": hexify(seal.sealed_block_hash)},
            )
        # drop mempool entries now recorded on-chain
        self.pending_collections = [
            h for h in self.pending_collections if h not in ctx.collections
        ]
        for key in list(self.pending_challenges):
            doc = self.pending_challenges[key]
            cid = bytes.fromhex(doc["id"])
            mark = _challenge_mark(doc)
            if (
                cid in ctx.challenge_ids
                or mark in ctx.mcc_collections
                or (mark is not None and mark in ctx.fcc_marks)
            ):
                del self.pending_challenges[key]
        for cid in list(self.pending_updates):
            if cid in ctx.adjudicated:
                del self.pending_updates[cid]
        # notify the other roles
        notice = Finalized(pb)
        for name in (
            self.d.executor_names + self.d.verifier_names + self.d.collector_names
        ):
            self.sim.send(self.name, name, notice)
        # beacon committee members contribute their share
        share = self.d.drb_committee.get(self.keypair.public)
        if share is not None:
            drb = DrbShare(digest, crypto.threshold_sign(self.d.params, share, digest))
            for peer in self.d.consensus_names:
                if peer == self.name:
                    self._on_drb_share(drb)
                else:
                    self.sim.send(self.name, peer, drb)
        # adjudicate challenges recorded in this block
        for doc in pb.slashing_challenges:
            self.recorded_challenges[bytes.fromhex(doc["id"])] = doc
            self._start_adjudication(doc)

    def _on_evidence(self, ev):
        dedupe = ("equiv", hexify(ev.proposer), ev.round)
        key = crypto.hash("dedupe", canonical_json(dedupe))
        if key in self.pending_challenges:
            return
        # canonical challenge fields so every detecting node derives the same
        # challenge id and the chain records the violation once
        ch = SlashingChallenge(
            kind=ChallengeKind.PROTOCOL_VIOLATION,
            challenger=ev.proposer,
            accused=(ev.proposer,),
            evidence=tuple(sorted((ev.first.payload_digest, ev.second.payload_digest))),
            deadline=0,
            full_proof=True,
        )
        ch = dataclasses.replace(ch, challenge_id=challenge_id(ch))
        self.pending_challenges[key] = ch.to_dict()
        self.challenge_objects[ch.challenge_id] = ch
        if self.is_observer:
            self.metrics.challenges += 1
        self.sim.event(
            self.name,
            "equivocation_challenge",
            {"accused": hexify(ev.proposer), "round": ev.round},
        )
        # full-proof: adjudicate immediately against the proposer
        state = self.ctxs[self.d.genesis_digest].state
        adj, upd = adjudicate_challenge(state, ch, response_exonerates=None, timed_out=False)
        self._record_adjudication(adj, upd)

    def _record_adjudication(self, adj, upd):
        if adj.challenge_id in self.adjudicated_ids:
            return
        self.adjudicated_ids.add(adj.challenge_id)
        self.pending_updates[adj.challenge_id] = upd
        if adj.outcome != "dismissed" and self.is_observer:
            self.metrics.slashes += len(adj.slashed)
        self.sim.event(
            self.name,
            "adjudication",
            {
                "id": hexify(adj.challenge_id),
                "outcome": adj.outcome,
                "slashed": [hexify(s) for s in adj.slashed],
            },
        )

    def _start_adjudication(self, doc: dict):
        cid = bytes.fromhex(doc["id"])
        if cid in self.adjudicated_ids or cid in self.mcc_responses:
            return
        kind = doc["kind"]
        ch = self._challenge_from_doc(doc)
        if kind == ChallengeKind.PROTOCOL_VIOLATION.value:
            if cid not in self.pending_updates:
                state = self.ctxs[self.d.genesis_digest].state
                adj, upd = adjudicate_challenge(state, ch, None, timed_out=False)
                self._record_adjudication(adj, upd)
        elif kind == ChallengeKind.FAULTY_COMPUTATION.value:
            info = self.fcc_context.get(cid)
            if info is None:
                return
            result_hash, chunk_index = info
            result = self.results.get(result_hash)
            packages = self.packages.get(result_hash)
            receipt = self.receipts.get(result_hash)
            state = self.ctxs[self.d.genesis_digest].state
            if result is None or packages is None or receipt is None:
                return  # disputed receipt not yet received; retried on arrival
            disputed = DisputedChunk(
                result=result,
                chunk_index=chunk_index,
                package=packages[chunk_index],
                executor_spock=receipt.spocks[chunk_index],
            )
            adj, upd = adjudicate_fcc(state, ch, disputed)
            self._record_adjudication(adj, upd)
        elif kind == ChallengeKind.MISSING_COLLECTION.value:
            self.mcc_responses[cid] = {}
            coll_hash = ch.evidence[0]
            for accused in ch.accused:
                self.sim.send(
                    self.name, self.d.name_of[accused], MccQuery(coll_hash, cid)
                )
            self.sim.set_timer(
                self.name, self.d.mcc_deadline, lambda: self._mcc_deadline(ch)
            )

    def _mcc_deadline(self, ch: SlashingChallenge):
        cid = ch.challenge_id
        if cid in self.adjudicated_ids:
            return
        responses = {
            g: (list(t) if t is not None else None)
            for g, t in self.mcc_responses.get(cid, {}).items()
        }
        for g in ch.accused:
            responses.setdefault(g, None)
        state = self.ctxs[self.d.genesis_digest].state
        outcome = adjudicate_mcc(state, ch, responses)
        if outcome.update is not None:
            self._record_adjudication(outcome.adjudication, outcome.update)
        else:
            self.adjudicated_ids.add(cid)
            self.sim.event(
                self.name, "adjudication", {"id": hexify(cid), "outcome": "dismissed", "slashed": []}
            )
        if outcome.attestation is not None:
            att = AttestationMsg(
                outcome.attestation.collection_hash, outcome.attestation.adjudication_id
            )
            self.sim.event(
                self.name,
                "attestation",
                {"collection": hexify(outcome.attestation.collection_hash)},
            )
            for name in self.d.executor_names:
                self.sim.send(self.name, name, att)
        if outcome.recovered is not None:
            # forward the recovered texts to executors still waiting on them
            resp = CollectionResponse(ch.evidence[0], tuple(outcome.recovered))
            for name in self.d.executor_names:
                self.sim.send(self.name, name, resp)

    # -- beacon ---------------------------------------------------

    def _on_drb_share(self, msg: DrbShare):
        if msg.pb_hash in self.randomness:
            return
        if not crypto.signature_share_verify(self.d.params, self.d.drb_vv, msg.share, msg.pb_hash):
            return
        bucket = self.drb_shares.setdefault(msg.pb_hash, {})
        bucket.setdefault(msg.share.party_index, msg.share)
        if len(bucket) < self.d.params.t + 1:
            return
        sigma = crypto.threshold_recover(
            self.d.params, self.d.drb_vv, list(bucket.values()), msg.pb_hash
        )
        self.randomness[msg.pb_hash] = sigma.value
        self.sim.event(self.name, "randomness", {"block": hexify(msg.pb_hash)})
        out = BlockRandomness(msg.pb_hash, sigma.value)
        for name in self.d.verifier_names:
            self.sim.send(self.name, name, out)

    # -- message handling ---------------------------------------------------

    def handle(self, sender: str, msg: Any):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        if isinstance(msg, Proposal):
            self.engine.on_proposal(msg)
        elif isinstance(msg, Vote):
            self.engine.on_vote(msg)
        elif isinstance(msg, NewRound):
            self.engine.on_new_round(msg)
        elif isinstance(msg, GuaranteeAnnounce):
            h = msg.gc.collection_hash
            if h not in self.known_collections:
                self.known_collections[h] = msg.gc
                self.pending_collections.append(h)
        elif isinstance(msg, ReceiptMsg):
            self._on_receipt(msg)
        elif isinstance(msg, ApprovalMsg):
            if crypto.staking_verify(
                msg.verifier, approval_payload(msg.result_hash), msg.signature
            ):
                self.approvals.setdefault(msg.result_hash, {}).setdefault(
                    msg.verifier, msg.signature
                )
        elif isinstance(msg, ChallengeMsg):
            self._on_challenge(msg)
        elif isinstance(msg, DrbShare):
            self._on_drb_share(msg)
        elif isinstance(msg, MccResponse):
            bucket = self.mcc_responses.get(msg.challenge_id)
            if bucket is not None:
                bucket.setdefault(self.d.key_of[sender], msg.texts)

    def _on_receipt(self, msg: ReceiptMsg):
        receipt = msg.receipt
        rh = receipt.execution_result.result_hash()
        if rh in self.results:
            return
        if not crypto.staking_verify(receipt.executor, rh, receipt.executor_signature):
            return
        self.results[rh] = receipt.execution_result
        self.results_by_prev.setdefault(
            receipt.execution_result.previous_execution_result_hash, []
        ).append(rh)
        self.receipts[rh] = receipt
        self.packages[rh] = msg.packages
        self.sim.event(
            self.name,
            "receipt",
            {"result": hexify(rh), "executor": hexify(receipt.executor)},
        )
        for cid, doc in list(self.recorded_challenges.items()):
            if cid not in self.adjudicated_ids:
                self._start_adjudication(doc)

    def _on_challenge(self, msg: ChallengeMsg):
        ch = msg.challenge
        if ch.kind == ChallengeKind.FAULTY_COMPUTATION:
            dedupe = crypto.hash(
                "dedupe", b"fcc" + msg.result_hash + msg.chunk_index.to_bytes(8, "big")
            )
            self.fcc_context.setdefault(ch.challenge_id, (msg.result_hash, msg.chunk_index))
        else:
            dedupe = crypto.hash("dedupe", b"mcc" + ch.evidence[0])
        if dedupe in self._challenge_seen:
            # a recorded challenge may have been waiting on this context
            if ch.challenge_id in self.recorded_challenges:
                self._start_adjudication(self.recorded_challenges[ch.challenge_id])
            return
        self._challenge_seen.add(dedupe)
        self.pending_challenges[dedupe] = ch.to_dict()
        self.challenge_objects[ch.challenge_id] = ch
        if self.is_observer:
            self.metrics.challenges += 1
        self.sim.event(
            self.name,
            "challenge",
            {"kind": ch.kind.value, "id": hexify(ch.challenge_id)},
        )
        if ch.challenge_id in self.recorded_challenges:
            self._start_adjudication(self.recorded_challenges[ch.challenge_id])


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


class ExecutionNode:
    def __init__(
        self,
        sim: Simulator,
        name: str,
        keypair: crypto.StakingKeyPair,
        directory: Directory,
        metrics: Metrics,
        behavior: Optional[Behavior] = None,
    ):
        self.sim = sim
        self.name = name
        self.keypair = keypair
        self.d = directory
        self.metrics = metrics
        self.behavior = behavior
        self.blocks: dict[int, ProtoBlock] = {}
        self.next_height = 1
        self.exec_state = ExecutionState()
        self.prev_result_hash = GENESIS_RESULT_HASH
        self.texts: dict[bytes, list[SignedTransaction]] = {}
        self.skipped: set[bytes] = set()
        self.retrieving: dict[bytes, dict] = {}  # collection hash -> query state
        self.challenged: set[bytes] = set()

    def start(self):
        pass

    def handle(self, sender: str, msg: Any):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        if isinstance(msg, Finalized):
            pb = msg.pb
            if pb.height >= self.next_height and pb.height not in self.blocks:
                self.blocks[pb.height] = pb
                self._advance()
        elif isinstance(msg, CollectionResponse):
            self._on_collection_response(msg)
        elif isinstance(msg, AttestationMsg):
            if msg.collection_hash not in self.texts:
                self.skipped.add(msg.collection_hash)
                self.retrieving.pop(msg.collection_hash, None)
                self._advance()

    def _advance(self):
        while self.next_height in self.blocks:
            pb = self.blocks[self.next_height]
            missing = [
                gc
                for gc in pb.guaranteed_collections
                if gc.collection_hash not in self.texts
                and gc.collection_hash not in self.skipped
            ]
            for gc in missing:
                self._retrieve(gc)
            if missing:
                return
            self._execute(pb)
            self.next_height += 1

    def _retrieve(self, gc: GuaranteedCollection):
        h = gc.collection_hash
        if h in self.retrieving or h in self.challenged:
            return
        state = {"gc": gc, "order": sorted(gc.signers), "next": 0}
        self.retrieving[h] = state
        self._query_next(h)

    def _query_next(self, h: bytes):
        state = self.retrieving.get(h)
        if state is None:
            return
        order = state["order"]
        if state["next"] >= len(order):
            # every guarantor failed: challenge the whole signer set
            self.retrieving.pop(h, None)
            if h in self.challenged:
                return
            self.challenged.add(h)
            mcc = make_mcc(self.keypair.public, order, h, deadline=self.sim.now + self.d.mcc_deadline)
            self.sim.event(self.name, "mcc_raised", {"collection": hexify(h)})
            for cname in self.d.consensus_names:
                self.sim.send(self.name, cname, ChallengeMsg(mcc))
            return
        guarantor = order[state["next"]]
        state["next"] += 1
        self.sim.send(self.name, self.d.name_of[guarantor], CollectionRequest(h))
        self.sim.set_timer(
            self.name, self.d.retrieval_timeout, lambda: self._query_timeout(h, state["next"])
        )

    def _query_timeout(self, h: bytes, expected_next: int):
        state = self.retrieving.get(h)
        if state is None or state["next"] != expected_next:
            return  # resolved or already advanced
        self._query_next(h)

    def _on_collection_response(self, msg: CollectionResponse):
        h = msg.collection_hash
        if h in self.texts:
            return
        if collection_hash([t.tx_hash() for t in msg.texts]) != h:
            return  # tampered response; the query timeout will move on
        self.texts[h] = list(msg.texts)
        self.retrieving.pop(h, None)
        self._advance()

    def _execute(self, pb: ProtoBlock):
        ordered = [
            self.texts[gc.collection_hash]
            for gc in pb.guaranteed_collections
            if gc.collection_hash in self.texts
        ]
        txs = canonical(ordered)
        out = block_execution(
            pb.hash(), txs, self.prev_result_hash, self.exec_state, self.d.gamma_chunk
        )
        result = out.result
        if self.behavior and self.behavior.kind == "faulty_execution":
            result = self._tamper(result)
        self.exec_state = out.end_state
        self.prev_result_hash = result.result_hash()
        packages = self._packages(out, txs)
        receipt = ExecutionReceipt(
            execution_result=result,
            spocks=out.spocks,
            executor=self.keypair.public,
            executor_signature=self.keypair.sign(result.result_hash()),
        )
        self.sim.event(
            self.name,
            "executed",
            {"height": pb.height, "result": hexify(result.result_hash()), "txs": len(txs)},
        )
        msg = ReceiptMsg(receipt, packages)
        for name in self.d.consensus_names + self.d.verifier_names:
            self.sim.send(self.name, name, msg)

    def _tamper(self, result: ExecutionResult) -> ExecutionResult:
        target = self.behavior.target_chunk
        if target is not None and target < len(result.chunks):
            from .execution import Chunk

            c = result.chunks[target]
            fake = Chunk(
                c.start_state_commitment,
                c.starting_transaction_cc,
                c.starting_transaction_index,
                c.computation_consumption + 1,
            )
            chunks = result.chunks[:target] + (fake,) + result.chunks[target + 1 :]
            return ExecutionResult(
                result.block_hash, result.previous_execution_result_hash, chunks, result.final_state
            )
        return ExecutionResult(
            result.block_hash,
            result.previous_execution_result_hash,
            result.chunks,
            crypto.hash("tampered", result.final_state),
        )

    @staticmethod
    def _packages(out: BlockExecutionOutput, txs) -> tuple:
        packages = []
        for k, st in enumerate(out.chunk_start_states):
            lo, hi = out.chunk_tx_ranges[k]
            registers = {key: st.get(key) for key in st.keys()}
            proofs = {key: value_proof_gen(st, key) for key in st.keys()}
            packages.append(
                ChunkDataPackage(registers=registers, proofs=proofs, transactions=txs[lo:hi])
            )
        return tuple(packages)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


class VerificationNode:
    def __init__(
        self,
        sim: Simulator,
        name: str,
        keypair: crypto.StakingKeyPair,
        directory: Directory,
        metrics: Metrics,
        behavior: Optional[Behavior] = None,
    ):
        self.sim = sim
        self.name = name
        self.keypair = keypair
        self.d = directory
        self.metrics = metrics
        self.behavior = behavior
        self.seeds: dict[bytes, bytes] = {}  # block hash -> randomness seed
        self.pending: dict[bytes, ReceiptMsg] = {}  # result hash -> receipt awaiting seed
        self.checked: set[bytes] = set()

    def start(self):
        pass

    def handle(self, sender: str, msg: Any):
        if self.behavior and self.behavior.kind == "non_responsive":
            return
        if isinstance(msg, BlockRandomness):
            sig = crypto.GroupSignature(value=msg.sigma)
            if not crypto.threshold_verify(
                self.d.params, sig, self.d.drb_vv.group_public_key, msg.pb_hash
            ):
                return
            self.seeds.setdefault(
                msg.pb_hash, crypto.hash("block-seed", crypto.signature_bytes(sig))
            )
            for rh in sorted(self.pending):
                self._try_verify(self.pending[rh])
        elif isinstance(msg, ReceiptMsg):
            rh = msg.receipt.execution_result.result_hash()
            if rh not in self.checked:
                self.pending.setdefault(rh, msg)
                self._try_verify(msg)
        elif isinstance(msg, Finalized):
            pass  # verifiers key off randomness + receipts

    def _try_verify(self, msg: ReceiptMsg):
        result = msg.receipt.execution_result
        rh = result.result_hash()
        if rh in self.checked:
            return
        seed = self.seeds.get(result.block_hash)
        if seed is None:
            return
        self.checked.add(rh)
        self.pending.pop(rh, None)
        assigned = assign_chunks(
            self.keypair.public, len(result.chunks), seed, self.d.coverage_p
        )
        for k in sorted(assigned):
            verdict = verify_chunk(
                self.keypair, result, k, msg.packages[k], msg.receipt.spocks[k]
            )
            if not verdict.ok:
                fcc = make_fcc(
                    self.keypair.public,
                    msg.receipt.executor,
                    rh,
                    k,
                    deadline=self.sim.now + self.d.mcc_deadline,
                )
                self.sim.event(
                    self.name,
                    "fcc_raised",
                    {"result": hexify(rh), "chunk": k, "reason": verdict.reason},
                )
                for cname in self.d.consensus_names:
                    self.sim.send(
                        self.name, cname, ChallengeMsg(fcc, result_hash=rh, chunk_index=k)
                    )
                return
        self.sim.event(self.name, "approved", {"result": hexify(rh)})
        sig = self.keypair.sign(approval_payload(rh))
        approval = ApprovalMsg(rh, self.keypair.public, sig)
        for cname in self.d.consensus_names:
            self.sim.send(self.name, cname, approval)


# ---------------------------------------------------------------------------
# Workload
# ---------------------------------------------------------------------------


class UserAgent:
    """Scripted submitter: periodically signs a fresh transaction and sends
    it to a collector of the responsible cluster."""

    def __init__(
        self,
        sim: Simulator,
        name: str,
        keypair: crypto.StakingKeyPair,
        directory: Directory,
        reference_block_hash: bytes,
        interval: int,
        tx_cost: int = 3,
        count: Optional[int] = None,
    ):
        self.sim = sim
        self.name = name
        self.keypair = keypair
        self.d = directory
        self.reference = reference_block_hash
        self.interval = interval
        self.tx_cost = tx_cost
        self.count = count
        self.sent = 0

    def start(self):
        self.sim.set_timer(self.name, self.interval, self._tick)

    def handle(self, sender: str, msg: Any):
        pass

    def _tick(self):
        if self.count is not None and self.sent >= self.count:
            return
        script = ToyTransaction(
            operations=(
                {
                    "kind": "set_register",
                    "register": f"{self.name}/{self.sent}",
                    "value": "01",
                    "cost": self.tx_cost,
                },
            )
        ).to_script()
        tx = SignedTransaction(
            script=script,
            payer_signature=self.keypair.public + self.keypair.sign(script),
            script_signatures=(),
            reference_block_hash=self.reference,
        )
        self.sent += 1
        cluster = route_transaction(tx.tx_hash(), len(self.d.clusters))
        members = self.d.clusters[cluster]
        target = self.d.name_of[members[self.sent % len(members)].staking_public_key]
        self.sim.event(self.name, "tx_submitted", {"hash": hexify(tx.tx_hash()), "cluster": cluster})
        self.sim.send(self.name, target, SubmitTx(tx))
        self.sim.set_timer(self.name, self.interval, self._tick)
