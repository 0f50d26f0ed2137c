import itertools

import pytest

from flowpipe import crypto
from flowpipe.blocks import (
    GENESIS_PARENT,
    GENESIS_RANDOMNESS,
    Block,
    BlockSeal,
    EvaluationContext,
    ProtoBlock,
    approval_payload,
    attach_randomness,
    evaluate_proposal,
    form_seal,
    genesis_block,
    propose_proto_block,
    validate_seal,
    verify_block_randomness,
)
from flowpipe.collection import GuaranteedCollection
from flowpipe.state import (
    Epoch,
    NodeIdentity,
    ProtocolState,
    Role,
    StateUpdate,
    apply_updates,
    commit_state,
)

EPOCH = Epoch(index=0, start_height=0, length_blocks=1000, staking_deadline_height=800)


def node(seed: bytes, role: Role, stake=10) -> tuple[crypto.StakingKeyPair, NodeIdentity]:
    kp = crypto.StakingKeyPair.from_seed(seed)
    return kp, NodeIdentity(kp.public, role, stake, seed.hex()[:6])


def base_protocol_state(n_collectors=4, n_verifiers=4):
    records = {}
    collector_kps, verifier_kps = [], []
    for i in range(n_collectors):
        kp, ident = node(bytes([60 + i]) * 32, Role.COLLECTOR)
        records[ident.staking_public_key] = ident
        collector_kps.append(kp)
    for i in range(n_verifiers):
        kp, ident = node(bytes([80 + i]) * 32, Role.VERIFICATION)
        records[ident.staking_public_key] = ident
        verifier_kps.append(kp)
    return ProtocolState(records=records, epoch=EPOCH), collector_kps, verifier_kps


def make_guarantee(collector_kps, members, coll_hash, signer_idx, cluster=0):
    stub = GuaranteedCollection(coll_hash, cluster, (), ())
    payload = stub.signed_payload()
    signers = tuple(collector_kps[i].public for i in signer_idx)
    sigs = tuple(collector_kps[i].sign(payload) for i in signer_idx)
    return GuaranteedCollection(coll_hash, cluster, signers, sigs)


def plain_context(state: ProtocolState, **overrides) -> EvaluationContext:
    defaults = dict(
        proposer_is_primary=True,
        extends_known_chain=True,
        parent_height=0,
        consensus_safe=True,
        ancestor_collection_hashes=set(),
        received_collections=set(),
        collector_clusters={0: state.members(Role.COLLECTOR)},
        received_seals=set(),
        seal_valid=lambda s: True,
        challenge_verified=lambda c: True,
        parent_protocol_state=state,
    )
    defaults.update(overrides)
    return EvaluationContext(**defaults)


def empty_proto(state: ProtocolState, parent=b"\x10" * 32, height=1) -> ProtoBlock:
    return ProtoBlock(
        previous_block_hash=parent,
        height=height,
        guaranteed_collections=(),
        block_seals=(),
        slashing_challenges=(),
        protocol_state_updates=(),
        state_commitment=commit_state(state),
    )


class TestGenesis:
    def test_shape(self):
        state, _, _ = base_protocol_state()
        g = genesis_block(state)
        assert g.proto.height == 0
        assert g.proto.previous_block_hash == GENESIS_PARENT
        assert g.source_of_randomness is None
        assert g.random_seed() == GENESIS_RANDOMNESS

    def test_hash_binds_state(self):
        state, _, _ = base_protocol_state()
        other = state.copy()
        key = next(iter(other.records))
        del other.records[key]
        assert genesis_block(state).hash() != genesis_block(other).hash()


class TestProposalAssembly:
    def test_invalid_updates_dropped(self):
        state, _, _ = base_protocol_state()
        bad = StateUpdate(entries=({"op": "stake_delta", "key": "ff" * 32, "delta": 1},), cause="stake")
        pb = propose_proto_block(b"\x10" * 32, 0, state, [], [], [], [bad])
        assert pb.protocol_state_updates == ()
        assert pb.state_commitment == commit_state(state)

    def test_commitment_reflects_accepted_updates(self):
        state, _, _ = base_protocol_state()
        key = sorted(state.records)[0]
        upd = StateUpdate(entries=({"op": "stake_delta", "key": key.hex(), "delta": 5},), cause="stake")
        pb = propose_proto_block(b"\x10" * 32, 0, state, [], [], [], [upd])
        assert pb.protocol_state_updates == (upd,)
        assert pb.state_commitment == apply_updates(state, [upd]).commitment

    def test_empty_mempool_still_produces(self):
        state, _, _ = base_protocol_state()
        pb = propose_proto_block(b"\x10" * 32, 4, state, [], [], [], [])
        assert pb.height == 5
        assert pb.guaranteed_collections == ()


class TestEvaluateProposal:
    def test_fully_valid(self):
        state, kps, _ = base_protocol_state()
        coll = crypto.hash("collection", b"a")
        gc = make_guarantee(kps, state.members(Role.COLLECTOR), coll, [0, 1, 2])
        pb = ProtoBlock(b"\x10" * 32, 1, (gc,), (), (), (), commit_state(state))
        ctx = plain_context(state, received_collections={coll})
        assert evaluate_proposal(pb, ctx) == (True, None)

    def test_condition_1_proposer(self):
        state, _, _ = base_protocol_state()
        ok, reason = evaluate_proposal(empty_proto(state), plain_context(state, proposer_is_primary=False))
        assert not ok and reason.startswith("condition-1")

    def test_condition_2_height_gap(self):
        state, _, _ = base_protocol_state()
        ok, reason = evaluate_proposal(
            empty_proto(state, height=3), plain_context(state, parent_height=0)
        )
        assert not ok and reason.startswith("condition-2")

    def test_condition_3_unsafe(self):
        state, _, _ = base_protocol_state()
        ok, reason = evaluate_proposal(empty_proto(state), plain_context(state, consensus_safe=False))
        assert not ok and reason.startswith("condition-3")

    def test_condition_4_stale_collection(self):
        state, kps, _ = base_protocol_state()
        coll = crypto.hash("collection", b"a")
        gc = make_guarantee(kps, state.members(Role.COLLECTOR), coll, [0, 1, 2])
        pb = ProtoBlock(b"\x10" * 32, 1, (gc,), (), (), (), commit_state(state))
        ctx = plain_context(
            state, received_collections={coll}, ancestor_collection_hashes={coll}
        )
        ok, reason = evaluate_proposal(pb, ctx)
        assert not ok and reason.startswith("condition-4")

    def test_condition_5_not_received(self):
        state, kps, _ = base_protocol_state()
        coll = crypto.hash("collection", b"a")
        gc = make_guarantee(kps, state.members(Role.COLLECTOR), coll, [0, 1, 2])
        pb = ProtoBlock(b"\x10" * 32, 1, (gc,), (), (), (), commit_state(state))
        ok, reason = evaluate_proposal(pb, plain_context(state))
        assert not ok and reason.startswith("condition-5")

    def test_condition_6_insufficient_signers(self):
        state, kps, _ = base_protocol_state()
        coll = crypto.hash("collection", b"a")
        gc = make_guarantee(kps, state.members(Role.COLLECTOR), coll, [0, 1])  # 50%
        pb = ProtoBlock(b"\x10" * 32, 1, (gc,), (), (), (), commit_state(state))
        ok, reason = evaluate_proposal(pb, plain_context(state, received_collections={coll}))
        assert not ok and reason.startswith("condition-6")

    def test_condition_7_seal_not_received(self):
        state, _, vkps = base_protocol_state()
        seal = BlockSeal(b"\x01" * 32, b"\x02" * 32, b"\x03" * 32, (), ())
        pb = ProtoBlock(b"\x10" * 32, 1, (), (seal,), (), (), commit_state(state))
        ok, reason = evaluate_proposal(pb, plain_context(state))
        assert not ok and reason.startswith("condition-7")

    def test_condition_8_seal_invalid(self):
        state, _, _ = base_protocol_state()
        seal = BlockSeal(b"\x01" * 32, b"\x02" * 32, b"\x03" * 32, (), ())
        pb = ProtoBlock(b"\x10" * 32, 1, (), (seal,), (), (), commit_state(state))
        ctx = plain_context(state, received_seals={seal.digest()}, seal_valid=lambda s: False)
        ok, reason = evaluate_proposal(pb, ctx)
        assert not ok and reason.startswith("condition-8")

    def test_condition_9_challenge_unverified(self):
        state, _, _ = base_protocol_state()
        pb = ProtoBlock(
            b"\x10" * 32, 1, (), (), ({"kind": "bogus"},), (), commit_state(state)
        )
        ok, reason = evaluate_proposal(pb, plain_context(state, challenge_verified=lambda c: False))
        assert not ok and reason.startswith("condition-9")

    def test_condition_10_tampered_commitment(self):
        state, _, _ = base_protocol_state()
        pb = ProtoBlock(b"\x10" * 32, 1, (), (), (), (), b"\xde" * 32)
        ok, reason = evaluate_proposal(pb, plain_context(state))
        assert not ok and reason.startswith("condition-10")

    def test_condition_10_replay_matches(self):
        state, _, _ = base_protocol_state()
        key = sorted(state.records)[0]
        upd = StateUpdate(entries=({"op": "stake_delta", "key": key.hex(), "delta": 3},), cause="stake")
        pb = propose_proto_block(b"\x10" * 32, 0, state, [], [], [], [upd])
        assert evaluate_proposal(pb, plain_context(state)) == (True, None)


class TestRandomnessAttachment:
    def setup_method(self):
        self.params = crypto.make_params(7)
        entropy = [crypto.hash("drb", bytes([i])) for i in range(7)]
        self.dkg = crypto.dkg_setup(self.params, entropy)

    def proto(self):
        state, _, _ = base_protocol_state()
        return empty_proto(state)

    def test_t_plus_one_shares_suffice(self):
        pb = self.proto()
        shares = [
            crypto.threshold_sign(self.params, s, pb.hash()) for s in self.dkg.shares[:4]
        ]
        block = attach_randomness(self.params, pb, shares, self.dkg.verification_vector)
        assert verify_block_randomness(self.params, block, self.dkg.verification_vector.group_public_key)

    def test_t_shares_fail(self):
        pb = self.proto()
        shares = [
            crypto.threshold_sign(self.params, s, pb.hash()) for s in self.dkg.shares[:3]
        ]
        with pytest.raises(crypto.InsufficientShares):
            attach_randomness(self.params, pb, shares, self.dkg.verification_vector)

    def test_any_subset_recovers_identical_randomness(self):
        pb = self.proto()
        all_shares = [
            crypto.threshold_sign(self.params, s, pb.hash()) for s in self.dkg.shares
        ]
        values = set()
        for subset in itertools.combinations(all_shares, 4):
            block = attach_randomness(self.params, pb, list(subset), self.dkg.verification_vector)
            values.add(block.source_of_randomness)
        assert len(values) == 1

    def test_seed_differs_per_block(self):
        pb = self.proto()
        shares = [
            crypto.threshold_sign(self.params, s, pb.hash()) for s in self.dkg.shares[:4]
        ]
        block = attach_randomness(self.params, pb, shares, self.dkg.verification_vector)
        assert block.random_seed() != GENESIS_RANDOMNESS

    def test_wrong_group_key_rejected(self):
        pb = self.proto()
        shares = [
            crypto.threshold_sign(self.params, s, pb.hash()) for s in self.dkg.shares[:4]
        ]
        block = attach_randomness(self.params, pb, shares, self.dkg.verification_vector)
        wrong = (self.dkg.verification_vector.group_public_key * self.params.g) % self.params.p
        assert not verify_block_randomness(self.params, block, wrong)


def seal_inputs(state, vkps, result_hash=b"\x22" * 32):
    payload = approval_payload(result_hash)
    approvals = {kp.public: kp.sign(payload) for kp in vkps}
    verifiers = state.members(Role.VERIFICATION)
    return approvals, verifiers


class TestFormSeal:
    def test_seal_formed(self):
        state, _, vkps = base_protocol_state()
        approvals, verifiers = seal_inputs(state, vkps)
        seal = form_seal(
            b"\x11" * 32, b"\x22" * 32, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=True, pending_challenge=False,
        )
        assert seal is not None
        assert len(seal.approvers) == 4

    def test_exactly_two_thirds_pending(self):
        state, _, vkps = base_protocol_state(n_verifiers=3)
        approvals, verifiers = seal_inputs(state, vkps[:2])
        seal = form_seal(
            b"\x11" * 32, b"\x22" * 32, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=True, pending_challenge=False,
        )
        assert seal is None

    def test_pending_challenge_blocks(self):
        state, _, vkps = base_protocol_state()
        approvals, verifiers = seal_inputs(state, vkps)
        assert form_seal(
            b"\x11" * 32, b"\x22" * 32, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=True, pending_challenge=True,
        ) is None

    def test_unsealed_parent_blocks(self):
        state, _, vkps = base_protocol_state()
        approvals, verifiers = seal_inputs(state, vkps)
        assert form_seal(
            b"\x11" * 32, b"\x22" * 32, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=False, pending_challenge=False,
        ) is None

    def test_bad_signature_not_counted(self):
        state, _, vkps = base_protocol_state(n_verifiers=3)
        approvals, verifiers = seal_inputs(state, vkps)
        approvals[vkps[0].public] = b"\x00" * 32  # 2 of 3 valid = exactly 2/3
        assert form_seal(
            b"\x11" * 32, b"\x22" * 32, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=True, pending_challenge=False,
        ) is None


class TestValidateSeal:
    def make(self, state, vkps, result_hash=b"\x22" * 32):
        approvals, verifiers = seal_inputs(state, vkps, result_hash)
        return form_seal(
            b"\x11" * 32, result_hash, b"\x33" * 32, approvals, verifiers,
            parent_result_sealed=True, pending_challenge=False,
        )

    def test_roundtrip_valid(self):
        state, _, vkps = base_protocol_state()
        seal = self.make(state, vkps)
        assert validate_seal(
            seal,
            state.members(Role.VERIFICATION),
            result_lookup=lambda rh: (b"\x11" * 32, b"\x33" * 32),
            parent_result_sealed=lambda rh: True,
            challenge_pending=lambda rh: False,
        )

    def test_unknown_result_rejected(self):
        state, _, vkps = base_protocol_state()
        seal = self.make(state, vkps)
        assert not validate_seal(
            seal, state.members(Role.VERIFICATION),
            result_lookup=lambda rh: None,
            parent_result_sealed=lambda rh: True,
            challenge_pending=lambda rh: False,
        )

    def test_field_mismatch_rejected(self):
        state, _, vkps = base_protocol_state()
        seal = self.make(state, vkps)
        assert not validate_seal(
            seal, state.members(Role.VERIFICATION),
            result_lookup=lambda rh: (b"\x99" * 32, b"\x33" * 32),
            parent_result_sealed=lambda rh: True,
            challenge_pending=lambda rh: False,
        )

    def test_pending_challenge_rejected(self):
        state, _, vkps = base_protocol_state()
        seal = self.make(state, vkps)
        assert not validate_seal(
            seal, state.members(Role.VERIFICATION),
            result_lookup=lambda rh: (b"\x11" * 32, b"\x33" * 32),
            parent_result_sealed=lambda rh: True,
            challenge_pending=lambda rh: True,
        )

    def test_serialization_roundtrip(self):
        state, _, vkps = base_protocol_state()
        seal = self.make(state, vkps)
        assert BlockSeal.from_dict(seal.to_dict()) == seal
