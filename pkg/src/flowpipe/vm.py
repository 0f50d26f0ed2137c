"""Deterministic toy VM: scripted register/account operations with declared
computation costs. Stands in for a real contract language; the only
contract is determinism and cost accounting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .crypto import hash as fhash
from .encoding import canonical_json, hexify

MIN_COST = 1

ACCOUNT_PREFIX = b"acct/"
REGISTER_PREFIX = b"reg/"


def account_key(account: str) -> bytes:
    return ACCOUNT_PREFIX + account.encode()


def register_key(name: str) -> bytes:
    return REGISTER_PREFIX + name.encode()


def encode_balance(amount: int) -> bytes:
    return amount.to_bytes(8, "big")


def decode_balance(value: bytes) -> int:
    return int.from_bytes(value, "big")


@dataclass(frozen=True)
class ToyTransaction:
    """Ordered operations, each with a declared computation cost."""

    operations: tuple[dict, ...]

    def total_cost(self) -> int:
        return max(MIN_COST, sum(op.get("cost", MIN_COST) for op in self.operations))

    def to_script(self) -> bytes:
        return canonical_json({"ops": list(self.operations)})

    @classmethod
    def parse(cls, script: bytes) -> "ToyTransaction":
        try:
            doc = json.loads(script.decode())
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedScript(str(exc)) from exc
        ops = doc.get("ops") if isinstance(doc, dict) else None
        if not isinstance(ops, list):
            raise MalformedScript("script must carry an operation list")
        for op in ops:
            if not isinstance(op, dict) or op.get("kind") not in (
                "create_account",
                "transfer",
                "set_register",
            ):
                raise MalformedScript(f"unknown operation: {op!r}")
        return cls(operations=tuple(ops))


class MalformedScript(ValueError):
    pass


@dataclass(frozen=True)
class SignedTransaction:
    script: bytes
    payer_signature: bytes
    script_signatures: tuple[bytes, ...]
    reference_block_hash: bytes

    def to_dict(self) -> dict:
        return {
            "script": hexify(self.script),
            "payer_signature": hexify(self.payer_signature),
            "script_signatures": [hexify(s) for s in self.script_signatures],
            "reference_block_hash": hexify(self.reference_block_hash),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignedTransaction":
        return cls(
            script=bytes.fromhex(d["script"]),
            payer_signature=bytes.fromhex(d["payer_signature"]),
            script_signatures=tuple(bytes.fromhex(s) for s in d["script_signatures"]),
            reference_block_hash=bytes.fromhex(d["reference_block_hash"]),
        )

    def tx_hash(self) -> bytes:
        return fhash("tx", canonical_json(self.to_dict()))


@dataclass
class ExecOutcome:
    state: "ExecutionState"
    cost: int
    trace: bytes  # per-transaction execution trace commitment
    status: str  # ok | failed | malformed
    detail: Optional[str] = None


def _apply_ops(state, ops) -> dict[bytes, bytes]:
    """Compute register updates for a parsed script; raises on rule violations."""
    updates: dict[bytes, bytes] = {}

    def current(key: bytes) -> Optional[bytes]:
        return updates.get(key, state.get(key))

    for op in ops:
        kind = op["kind"]
        if kind == "create_account":
            key = account_key(op["account"])
            if current(key) is not None:
                raise ValueError(f"account exists: {op['account']}")
            updates[key] = encode_balance(int(op.get("balance", 0)))
        elif kind == "transfer":
            src = account_key(op["from"])
            dst = account_key(op["to"])
            src_val, dst_val = current(src), current(dst)
            if src_val is None or dst_val is None:
                raise ValueError("transfer endpoints must exist")
            amount = int(op["amount"])
            if amount < 0 or decode_balance(src_val) < amount:
                raise ValueError("insufficient balance")
            updates[src] = encode_balance(decode_balance(src_val) - amount)
            updates[dst] = encode_balance(decode_balance(dst_val) + amount)
        elif kind == "set_register":
            updates[register_key(op["register"])] = bytes.fromhex(op["value"])
    return updates


def execute(state, tx: SignedTransaction) -> ExecOutcome:
    """Apply a transaction; failed or malformed scripts consume their cost
    but leave the registers unchanged. The trace commitment binds the start
    root, the transaction hash, and the end root."""
    from .merkle import ExecutionState  # local import to avoid a cycle at import time

    start_root = state.root()
    try:
        parsed = ToyTransaction.parse(tx.script)
    except MalformedScript as exc:
        trace = fhash("trace", start_root + tx.tx_hash() + state.root())
        return ExecOutcome(state=state, cost=MIN_COST, trace=trace, status="malformed", detail=str(exc))

    cost = parsed.total_cost()
    try:
        updates = _apply_ops(state, parsed.operations)
    except ValueError as exc:
        trace = fhash("trace", start_root + tx.tx_hash() + state.root())
        return ExecOutcome(state=state, cost=cost, trace=trace, status="failed", detail=str(exc))

    new_state = state.with_updates(updates)
    trace = fhash("trace", start_root + tx.tx_hash() + new_state.root())
    return ExecOutcome(state=new_state, cost=cost, trace=trace, status="ok")
