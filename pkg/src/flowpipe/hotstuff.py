"""Stake-weighted round-based BFT consensus with deterministic finality.

Chained variant: one generic phase per round; a payload is finalized once
three certified descendants with consecutive rounds sit above it. The same
engine drives both collector-cluster consensus and main-chain block
formation via pluggable payload hooks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from . import crypto
from .encoding import canonical_json, hexify
from .state import NodeIdentity, effective_votes, meets_supermajority

GENESIS_DIGEST = crypto.hash("consensus-genesis", b"")


def leader_for_round(round_number: int, members: Sequence[NodeIdentity], seed: bytes) -> bytes:
    """Stake-weighted pseudo-random leader; all nodes agree given the seed."""
    if not members:
        raise ValueError("empty membership")
    ordered = sorted(members, key=lambda m: m.staking_public_key)
    total = sum(m.stake for m in ordered)
    stream = crypto.seeded_stream(
        crypto.derive_seed(["leader"], seed + round_number.to_bytes(8, "big"))
    )
    pick = stream.next_below(total)
    acc = 0
    for m in ordered:
        acc += m.stake
        if pick < acc:
            return m.staking_public_key
    raise AssertionError("cumulative stake walk must terminate")


@dataclass(frozen=True)
class QuorumCertificate:
    payload_digest: bytes
    round: int
    signers: tuple[bytes, ...]
    signatures: tuple[bytes, ...]

    def to_dict(self) -> dict:
        return {
            "payload_digest": hexify(self.payload_digest),
            "round": self.round,
            "signers": [hexify(s) for s in self.signers],
            "signatures": [hexify(s) for s in self.signatures],
        }


GENESIS_QC = QuorumCertificate(payload_digest=GENESIS_DIGEST, round=0, signers=(), signatures=())


def vote_payload(round_number: int, digest: bytes) -> bytes:
    return canonical_json({"vote_round": round_number, "digest": hexify(digest)})


def qc_valid(qc: QuorumCertificate, members: Sequence[NodeIdentity]) -> bool:
    """Genuine supermajority of authorized signers over the vote payload."""
    if qc.round == 0:
        return qc.payload_digest == GENESIS_DIGEST and not qc.signers
    if len(set(qc.signers)) != len(qc.signers) or len(qc.signers) != len(qc.signatures):
        return False
    member_keys = {m.staking_public_key for m in members}
    if not set(qc.signers) <= member_keys:
        return False
    msg = vote_payload(qc.round, qc.payload_digest)
    for signer, sig in zip(qc.signers, qc.signatures):
        if not crypto.staking_verify(signer, msg, sig):
            return False
    return meets_supermajority(effective_votes(qc.signers, members))


@dataclass(frozen=True)
class Proposal:
    round: int
    payload: Any
    payload_digest: bytes
    justify: QuorumCertificate  # certifies the parent
    proposer: bytes
    signature: bytes

    def signed_bytes(self) -> bytes:
        return canonical_json(
            {
                "round": self.round,
                "digest": hexify(self.payload_digest),
                "parent": hexify(self.justify.payload_digest),
                "justify_round": self.justify.round,
            }
        )


@dataclass(frozen=True)
class Vote:
    round: int
    payload_digest: bytes
    voter: bytes
    signature: bytes


@dataclass(frozen=True)
class NewRound:
    round: int
    high_qc: QuorumCertificate
    sender: bytes


@dataclass(frozen=True)
class EquivocationEvidence:
    """Two signed proposals by one leader for the same round — full proof."""

    proposer: bytes
    round: int
    first: Proposal
    second: Proposal


@dataclass
class BlockNode:
    digest: bytes
    round: int
    parent: bytes
    payload: Any


@dataclass
class BlockTree:
    nodes: dict[bytes, BlockNode] = field(default_factory=dict)
    certified: dict[bytes, QuorumCertificate] = field(default_factory=dict)
    _children: dict[bytes, list[bytes]] = field(default_factory=dict)

    def __post_init__(self):
        if GENESIS_DIGEST not in self.nodes:
            self.nodes[GENESIS_DIGEST] = BlockNode(
                digest=GENESIS_DIGEST, round=0, parent=b"", payload=None
            )
            self.certified[GENESIS_DIGEST] = GENESIS_QC

    def add(self, digest: bytes, round_number: int, parent: bytes, payload: Any) -> None:
        if digest in self.nodes:
            return
        self.nodes[digest] = BlockNode(
            digest=digest, round=round_number, parent=parent, payload=payload
        )
        self._children.setdefault(parent, []).append(digest)

    def certify(self, qc: QuorumCertificate) -> bool:
        """Record the QC; True when this newly certifies a known block."""
        if qc.payload_digest in self.nodes and qc.payload_digest not in self.certified:
            self.certified[qc.payload_digest] = qc
            return True
        return False

    def children(self, digest: bytes) -> list[BlockNode]:
        return [self.nodes[d] for d in self._children.get(digest, []) if d != digest]


def finality_check(tree: BlockTree) -> list[bytes]:
    """Digests finalized under the 3-chain rule, in chain order from genesis.

    A node is finalized when certified descendants b1 <- b2 <- b3 with
    consecutive rounds sit directly above it; finality extends to every
    ancestor."""
    finalized_heads = []
    for node in tree.nodes.values():
        for b1 in tree.children(node.digest):
            if b1.digest not in tree.certified:
                continue
            for b2 in tree.children(b1.digest):
                if b2.digest not in tree.certified or b2.round != b1.round + 1:
                    continue
                for b3 in tree.children(b2.digest):
                    if b3.digest in tree.certified and b3.round == b2.round + 1:
                        finalized_heads.append(node.digest)
    # expand to ancestor closure, emit in chain order
    finalized: set[bytes] = set()
    for head in finalized_heads:
        cur = head
        while cur and cur not in finalized and cur in tree.nodes:
            finalized.add(cur)
            cur = tree.nodes[cur].parent
    ordered = []

    def depth(d: bytes) -> int:
        n = 0
        cur = d
        while cur and cur in tree.nodes and tree.nodes[cur].parent:
            cur = tree.nodes[cur].parent
            n += 1
        return n

    for d in sorted(finalized, key=depth):
        ordered.append(d)
    return ordered


DigestFn = Callable[[Any], bytes]
ValidateFn = Callable[[Any, bytes], bool]  # (payload, parent_digest) -> accept
MakePayloadFn = Callable[[bytes], Any]  # parent_digest -> payload
SendFn = Callable[[bytes, Any], None]
BroadcastFn = Callable[[Any], None]
TimerFn = Callable[[int, int], None]  # (duration, round) -> schedules on_local_timeout(round)
FinalizeFn = Callable[[BlockNode], None]
EvidenceFn = Callable[[EquivocationEvidence], None]


class ConsensusEngine:
    """One instance per node per consensus group; reactive, single-threaded.

    The host wires `broadcast`, `send`, and `set_timer` to its transport and
    calls `start`, `on_proposal`, `on_vote`, `on_new_round`, and
    `on_local_timeout` as events arrive.
    """

    def __init__(
        self,
        keypair: crypto.StakingKeyPair,
        members: Sequence[NodeIdentity],
        seed: bytes,
        base_timeout: int,
        digest_payload: DigestFn,
        validate_payload: ValidateFn,
        make_payload: MakePayloadFn,
        broadcast: BroadcastFn,
        send: SendFn,
        set_timer: TimerFn,
        on_finalize: FinalizeFn,
        on_evidence: Optional[EvidenceFn] = None,
    ):
        self.keypair = keypair
        self.members = sorted(members, key=lambda m: m.staking_public_key)
        self.seed = seed
        self.base_timeout = base_timeout
        self.timeout = base_timeout
        self.digest_payload = digest_payload
        self.validate_payload = validate_payload
        self.make_payload = make_payload
        self.broadcast = broadcast
        self.send = send
        self.set_timer = set_timer
        self.on_finalize = on_finalize
        self.on_evidence = on_evidence or (lambda ev: None)

        self.tree = BlockTree()
        self.current_round = 1
        self._entered = 1
        self.last_voted_round = 0
        self.locked_round = 0
        self.high_qc = GENESIS_QC
        self.finalized: list[bytes] = []
        self._finalized_set: set[bytes] = set()
        self._votes: dict[tuple[int, bytes], dict[bytes, bytes]] = {}
        self._pending_qcs: dict[bytes, QuorumCertificate] = {}
        self._orphans: dict[bytes, list[Proposal]] = {}
        self._proposal_seen: dict[tuple[bytes, int], Proposal] = {}
        self._proposed_rounds: set[int] = set()
        self._evidence_emitted: set[tuple[bytes, int]] = set()

    # -- helpers ----------------------------------------------------------

    def leader(self, round_number: int) -> bytes:
        return leader_for_round(round_number, self.members, self.seed)

    def is_leader(self, round_number: int) -> bool:
        return self.leader(round_number) == self.keypair.public

    def _sign_proposal(self, p_round: int, digest: bytes, justify: QuorumCertificate) -> bytes:
        stub = Proposal(
            round=p_round,
            payload=None,
            payload_digest=digest,
            justify=justify,
            proposer=self.keypair.public,
            signature=b"",
        )
        return self.keypair.sign(stub.signed_bytes())

    def _update_high_qc(self, qc: QuorumCertificate) -> None:
        if qc.round > self.high_qc.round:
            self.high_qc = qc
            # progress: reset the pacemaker
            self.timeout = self.base_timeout

    def _certify(self, qc: QuorumCertificate) -> None:
        if qc.payload_digest not in self.tree.nodes:
            self._pending_qcs.setdefault(qc.payload_digest, qc)
            return
        if self.tree.certify(qc):
            self._finalize_from(qc.payload_digest)

    def _finalize_from(self, d3: bytes) -> None:
        """Incremental 3-chain rule: a fresh certification of b3 finalizes the
        parent of b1 when b1 <- b2 <- b3 are certified with consecutive rounds."""
        b3 = self.tree.nodes[d3]
        b2 = self.tree.nodes.get(b3.parent)
        if b2 is None or b2.digest not in self.tree.certified or b3.round != b2.round + 1:
            return
        b1 = self.tree.nodes.get(b2.parent)
        if b1 is None or b1.digest not in self.tree.certified or b2.round != b1.round + 1:
            return
        chain = []
        cur = b1.parent
        while (
            cur
            and cur != GENESIS_DIGEST
            and cur not in self._finalized_set
            and cur in self.tree.nodes
        ):
            chain.append(cur)
            cur = self.tree.nodes[cur].parent
        for digest in reversed(chain):
            self.finalized.append(digest)
            self._finalized_set.add(digest)
            self.on_finalize(self.tree.nodes[digest])

    def _enter_round(self, round_number: int) -> None:
        if round_number <= self._entered:
            return
        self._entered = round_number
        self.current_round = round_number
        self.set_timer(self.timeout, round_number)
        if self.is_leader(round_number):
            self._propose()

    def _propose(self) -> None:
        r = self.current_round
        if r in self._proposed_rounds:  # one proposal per round — never equivocate
            return
        parent = self.high_qc.payload_digest
        payload = self.make_payload(parent)
        digest = self.digest_payload(payload)
        proposal = Proposal(
            round=r,
            payload=payload,
            payload_digest=digest,
            justify=self.high_qc,
            proposer=self.keypair.public,
            signature=self._sign_proposal(r, digest, self.high_qc),
        )
        self._proposed_rounds.add(r)
        self.broadcast(proposal)
        self.on_proposal(proposal)  # leaders process their own proposal

    # -- event handlers ----------------------------------------------------

    def start(self) -> None:
        self.set_timer(self.timeout, self.current_round)
        if self.is_leader(self.current_round):
            self._propose()

    def on_proposal(self, proposal: Proposal) -> None:
        if proposal.proposer != self.leader(proposal.round):
            return
        expected = proposal.signed_bytes()
        if not crypto.staking_verify(proposal.proposer, expected, proposal.signature):
            return
        key = (proposal.proposer, proposal.round)
        prior = self._proposal_seen.get(key)
        if prior is not None and prior.payload_digest != proposal.payload_digest:
            if key not in self._evidence_emitted:
                self._evidence_emitted.add(key)
                self.on_evidence(
                    EquivocationEvidence(
                        proposer=proposal.proposer,
                        round=proposal.round,
                        first=prior,
                        second=proposal,
                    )
                )
            return
        self._proposal_seen[key] = proposal

        justify = proposal.justify
        if not qc_valid(justify, self.members):
            return
        if justify.payload_digest not in self.tree.nodes:
            # out-of-order arrival: park until the parent shows up
            self._orphans.setdefault(justify.payload_digest, []).append(proposal)
            return
        self._certify(justify)
        self._update_high_qc(justify)
        # two-chain lock: the grandparent's certifying round
        parent_node = self.tree.nodes[justify.payload_digest]
        grand_qc = self.tree.certified.get(parent_node.parent)
        if grand_qc is not None:
            self.locked_round = max(self.locked_round, grand_qc.round)

        self.tree.add(
            proposal.payload_digest, proposal.round, justify.payload_digest, proposal.payload
        )
        pending = self._pending_qcs.pop(proposal.payload_digest, None)
        if pending is not None:
            self._certify(pending)
        for orphan in self._orphans.pop(proposal.payload_digest, []):
            self.on_proposal(orphan)

        if proposal.round < self.current_round:
            return
        self._enter_round(proposal.round)

        # HotStuff voting rule: fresh round, justify at or above the lock
        if proposal.round <= self.last_voted_round or justify.round < self.locked_round:
            return
        if not self.validate_payload(proposal.payload, justify.payload_digest):
            return
        self.last_voted_round = proposal.round
        vote = Vote(
            round=proposal.round,
            payload_digest=proposal.payload_digest,
            voter=self.keypair.public,
            signature=self.keypair.sign(vote_payload(proposal.round, proposal.payload_digest)),
        )
        next_leader = self.leader(proposal.round + 1)
        if next_leader == self.keypair.public:
            self.on_vote(vote)
        else:
            self.send(next_leader, vote)

    def on_vote(self, vote: Vote) -> None:
        if not self.is_leader(vote.round + 1):
            return
        if not crypto.staking_verify(
            vote.voter, vote_payload(vote.round, vote.payload_digest), vote.signature
        ):
            return
        bucket = self._votes.setdefault((vote.round, vote.payload_digest), {})
        bucket.setdefault(vote.voter, vote.signature)  # duplicates counted once
        signers = tuple(sorted(bucket))
        if not meets_supermajority(effective_votes(signers, self.members)):
            return
        qc = QuorumCertificate(
            payload_digest=vote.payload_digest,
            round=vote.round,
            signers=signers,
            signatures=tuple(bucket[s] for s in signers),
        )
        self._certify(qc)
        self._update_high_qc(qc)
        self._enter_round(vote.round + 1)

    def on_new_round(self, msg: NewRound) -> None:
        if qc_valid(msg.high_qc, self.members):
            self._certify(msg.high_qc)
            self._update_high_qc(msg.high_qc)
        if msg.round == self.current_round and self.is_leader(msg.round):
            self._propose()

    def on_local_timeout(self, round_number: int) -> None:
        if round_number != self.current_round:
            return  # stale timer
        self.timeout *= 2
        nxt = self.current_round + 1
        self.current_round = nxt
        self._entered = nxt
        self.set_timer(self.timeout, nxt)
        msg = NewRound(round=nxt, high_qc=self.high_qc, sender=self.keypair.public)
        leader = self.leader(nxt)
        if leader == self.keypair.public:
            self._propose()
        else:
            self.send(leader, msg)
