import itertools
import random

import pytest

from flowpipe.merkle import (
    EMPTY_ROOT,
    ExecutionState,
    state_proof_gen,
    value_proof_gen,
    value_proof_vrfy,
)


def random_state(rng, n):
    return ExecutionState({rng.randbytes(8): rng.randbytes(4) for _ in range(n)})


class TestRoot:
    def test_empty(self):
        assert ExecutionState().root() == EMPTY_ROOT

    def test_order_independence(self):
        a = ExecutionState({b"a": b"1", b"b": b"2"})
        b = ExecutionState({b"b": b"2", b"a": b"1"})
        assert a.root() == b.root()

    def test_value_sensitivity(self):
        a = ExecutionState({b"a": b"1"})
        b = ExecutionState({b"a": b"2"})
        assert a.root() != b.root()

    def test_updates_immutable(self):
        a = ExecutionState({b"a": b"1"})
        root_before = a.root()
        b = a.with_updates({b"b": b"2"})
        assert a.root() == root_before
        assert b.root() != root_before


class TestProofs:
    def test_prove_verify_random_state(self):
        rng = random.Random(2)
        st = random_state(rng, 100)
        root = state_proof_gen(st)
        for key in st.keys():
            proof = value_proof_gen(st, key)
            assert value_proof_vrfy(key, st.get(key), proof, root)

    def test_flipped_value_rejected(self):
        st = ExecutionState({b"k%d" % i: b"v%d" % i for i in range(9)})
        root = st.root()
        proof = value_proof_gen(st, b"k3")
        bad = bytes([st.get(b"k3")[0] ^ 1]) + st.get(b"k3")[1:]
        assert not value_proof_vrfy(b"k3", bad, proof, root)

    def test_wrong_root_rejected(self):
        a = ExecutionState({b"a": b"1", b"b": b"2"})
        other = ExecutionState({b"a": b"1", b"b": b"3"})
        proof = value_proof_gen(a, b"a")
        assert not value_proof_vrfy(b"a", b"1", proof, other.root())

    def test_missing_key_raises(self):
        with pytest.raises(KeyError):
            value_proof_gen(ExecutionState({b"a": b"1"}), b"zz")

    def test_soundness_exhaustive_small_states(self):
        # proofs accept exactly the (key, value) pairs present in the state
        rng = random.Random(9)
        for n in (1, 2, 3, 5, 8, 13, 64):
            st = random_state(rng, n)
            root = st.root()
            for key in st.keys():
                proof = value_proof_gen(st, key)
                assert value_proof_vrfy(key, st.get(key), proof, root)
                assert not value_proof_vrfy(key, st.get(key) + b"x", proof, root)
                assert not value_proof_vrfy(key + b"x", st.get(key), proof, root)
