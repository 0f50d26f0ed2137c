"""Authenticated key-value execution state: a sorted-key binary Merkle tree
with inclusion proofs. Values are immutable snapshots; mutation returns a
new state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .crypto import hash as fhash

EMPTY_ROOT = fhash("empty", b"")


def _leaf_hash(key: bytes, value: bytes) -> bytes:
    return fhash("leaf", len(key).to_bytes(8, "big") + key + value)


def _node_hash(left: bytes, right: bytes) -> bytes:
    return fhash("node", left + right)


@dataclass(frozen=True)
class ValueProof:
    """Merkle inclusion path: (is_right_sibling, sibling_digest) pairs from
    leaf to root."""

    path: tuple[tuple[bool, bytes], ...]


class ExecutionState:
    """Immutable register map with a Merkle root commitment."""

    def __init__(self, registers: Optional[dict[bytes, bytes]] = None):
        self._registers = dict(registers or {})
        self._root: Optional[bytes] = None

    @property
    def registers(self) -> dict[bytes, bytes]:
        return dict(self._registers)

    def get(self, key: bytes) -> Optional[bytes]:
        return self._registers.get(key)

    def with_updates(self, updates: dict[bytes, bytes]) -> "ExecutionState":
        merged = dict(self._registers)
        merged.update(updates)
        return ExecutionState(merged)

    def keys(self) -> list[bytes]:
        return sorted(self._registers)

    def root(self) -> bytes:
        if self._root is None:
            self._root = self._compute_root()
        return self._root

    def _sorted_leaves(self) -> list[tuple[bytes, bytes]]:
        return [(k, self._registers[k]) for k in sorted(self._registers)]

    def _compute_root(self) -> bytes:
        leaves = [_leaf_hash(k, v) for k, v in self._sorted_leaves()]
        if not leaves:
            return EMPTY_ROOT
        level = leaves
        while len(level) > 1:
            nxt = []
            for i in range(0, len(level) - 1, 2):
                nxt.append(_node_hash(level[i], level[i + 1]))
            if len(level) % 2:
                nxt.append(level[-1])  # odd node promoted unchanged
            level = nxt
        return level[0]

    def prove(self, key: bytes) -> ValueProof:
        items = self._sorted_leaves()
        try:
            idx = [k for k, _ in items].index(key)
        except ValueError:
            raise KeyError(f"key not in state: {key!r}") from None
        level = [_leaf_hash(k, v) for k, v in items]
        path: list[tuple[bool, bytes]] = []
        while len(level) > 1:
            nxt = []
            for i in range(0, len(level) - 1, 2):
                nxt.append(_node_hash(level[i], level[i + 1]))
            if len(level) % 2:
                nxt.append(level[-1])  # odd node promoted without a sibling
            pair = idx ^ 1
            if pair < len(level):
                path.append((pair > idx, level[pair]))
            idx //= 2
            level = nxt
        return ValueProof(path=tuple(path))


def state_proof_gen(state: ExecutionState) -> bytes:
    """Commitment to the full state."""
    return state.root()


def value_proof_gen(state: ExecutionState, key: bytes) -> ValueProof:
    return state.prove(key)


def value_proof_vrfy(key: bytes, value: bytes, proof: ValueProof, commitment: bytes) -> bool:
    """Recompute the path from the (key, value) leaf; never raises."""
    try:
        acc = _leaf_hash(key, value)
        for right, sibling in proof.path:
            acc = _node_hash(acc, sibling) if right else _node_hash(sibling, acc)
        return acc == commitment
    except Exception:
        return False
