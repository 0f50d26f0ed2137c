"""Block execution: canonical transaction ordering, chunked execution with
per-chunk trace commitments, execution receipts, and fault-origin tracing
along the receipt chain."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .crypto import hash as fhash
from .encoding import canonical_json, hexify
from .merkle import ExecutionState, state_proof_gen
from .vm import ExecOutcome, SignedTransaction, execute

EMPTY_TRACE = b"\x00" * 32

GENESIS_RESULT_HASH = fhash("genesis-result", b"")


def trace_update(chunk_trace: bytes, tx_trace: bytes) -> bytes:
    """Fold a transaction trace into the running chunk trace commitment.

    Hash-commitment stand-in for a proof of confidential knowledge: producing
    it requires walking the actual execution trace."""
    return fhash("spock", chunk_trace + tx_trace)


@dataclass(frozen=True)
class Chunk:
    start_state_commitment: bytes
    starting_transaction_cc: int
    starting_transaction_index: int
    computation_consumption: int

    def to_dict(self) -> dict:
        return {
            "start_state_commitment": hexify(self.start_state_commitment),
            "starting_transaction_cc": self.starting_transaction_cc,
            "starting_transaction_index": self.starting_transaction_index,
            "computation_consumption": self.computation_consumption,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            start_state_commitment=bytes.fromhex(d["start_state_commitment"]),
            starting_transaction_cc=d["starting_transaction_cc"],
            starting_transaction_index=d["starting_transaction_index"],
            computation_consumption=d["computation_consumption"],
        )


@dataclass(frozen=True)
class ExecutionResult:
    block_hash: bytes
    previous_execution_result_hash: bytes
    chunks: tuple[Chunk, ...]
    final_state: bytes

    def to_dict(self) -> dict:
        return {
            "block_hash": hexify(self.block_hash),
            "previous_execution_result_hash": hexify(self.previous_execution_result_hash),
            "chunks": [c.to_dict() for c in self.chunks],
            "final_state": hexify(self.final_state),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionResult":
        return cls(
            block_hash=bytes.fromhex(d["block_hash"]),
            previous_execution_result_hash=bytes.fromhex(d["previous_execution_result_hash"]),
            chunks=tuple(Chunk.from_dict(c) for c in d["chunks"]),
            final_state=bytes.fromhex(d["final_state"]),
        )

    def result_hash(self) -> bytes:
        return fhash("execresult", canonical_json(self.to_dict()))


@dataclass(frozen=True)
class ExecutionReceipt:
    execution_result: ExecutionResult
    spocks: tuple[bytes, ...]  # one per chunk
    executor: bytes  # staking public key
    executor_signature: bytes

    def __post_init__(self):
        if len(self.spocks) != len(self.execution_result.chunks):
            raise ValueError("one trace commitment per chunk required")

    def to_dict(self) -> dict:
        return {
            "execution_result": self.execution_result.to_dict(),
            "spocks": [hexify(z) for z in self.spocks],
            "executor": hexify(self.executor),
            "executor_signature": hexify(self.executor_signature),
        }


def canonical(collections: Sequence[Sequence[SignedTransaction]]) -> list[SignedTransaction]:
    """Canonical transaction order: collections in block order, transactions
    in collection order; first transaction of the first collection is index 0."""
    out: list[SignedTransaction] = []
    for coll in collections:
        out.extend(coll)
    return out


ExecuteFn = Callable[[ExecutionState, SignedTransaction], ExecOutcome]


@dataclass
class BlockExecutionOutput:
    result: ExecutionResult
    spocks: tuple[bytes, ...]
    end_state: ExecutionState
    chunk_start_states: list[ExecutionState]
    chunk_tx_ranges: list[tuple[int, int]]  # [start, end) indices per chunk
    oversized_chunks: list[int] = field(default_factory=list)
    tx_outcomes: list[ExecOutcome] = field(default_factory=list)


def block_execution(
    block_hash: bytes,
    transactions: Sequence[SignedTransaction],
    previous_result_hash: bytes,
    state: ExecutionState,
    gamma_chunk: int,
    execute_fn: ExecuteFn = execute,
) -> BlockExecutionOutput:
    """Execute a block's canonical transaction sequence into chunks.

    A chunk closes (before the current transaction) once adding its cost
    would exceed gamma_chunk; the closing transaction becomes the first of
    the next chunk, and its trace lands in the next chunk's commitment. A
    chunk always holds at least one transaction, so a single transaction
    costing more than gamma_chunk occupies an oversized chunk of its own
    (flagged in the output).
    """
    spocks: list[bytes] = []
    chunks: list[Chunk] = []
    chunk_start_states: list[ExecutionState] = []
    chunk_starts: list[int] = []
    outcomes: list[ExecOutcome] = []

    state_start = state
    start_index = 0
    consumption = 0
    chunk_trace = EMPTY_TRACE
    tau_0 = 0

    for i, tx in enumerate(transactions):
        state_before = state
        outcome = execute_fn(state, tx)
        outcomes.append(outcome)
        state, tau, zeta = outcome.state, outcome.cost, outcome.trace
        if i == 0:
            tau_0 = tau
        if consumption + tau > gamma_chunk and consumption > 0:
            chunks.append(
                Chunk(
                    start_state_commitment=state_proof_gen(state_start),
                    starting_transaction_cc=tau_0,
                    starting_transaction_index=start_index,
                    computation_consumption=consumption,
                )
            )
            spocks.append(chunk_trace)
            chunk_start_states.append(state_start)
            chunk_starts.append(start_index)
            state_start = state_before
            start_index = i
            tau_0 = tau
            chunk_trace = EMPTY_TRACE
            consumption = 0
        consumption += tau
        chunk_trace = trace_update(chunk_trace, zeta)

    chunks.append(
        Chunk(
            start_state_commitment=state_proof_gen(state_start),
            starting_transaction_cc=tau_0,
            starting_transaction_index=start_index,
            computation_consumption=consumption,
        )
    )
    spocks.append(chunk_trace)
    chunk_start_states.append(state_start)
    chunk_starts.append(start_index)

    result = ExecutionResult(
        block_hash=block_hash,
        previous_execution_result_hash=previous_result_hash,
        chunks=tuple(chunks),
        final_state=state_proof_gen(state),
    )
    ranges = [
        (chunk_starts[k], chunk_starts[k + 1] if k + 1 < len(chunk_starts) else len(transactions))
        for k in range(len(chunk_starts))
    ]
    oversized = [k for k, c in enumerate(chunks) if c.computation_consumption > gamma_chunk]
    return BlockExecutionOutput(
        result=result,
        spocks=tuple(spocks),
        end_state=state,
        chunk_start_states=chunk_start_states,
        chunk_tx_ranges=ranges,
        oversized_chunks=oversized,
        tx_outcomes=outcomes,
    )


def trace_fault_origin(
    receipts: Sequence[ExecutionReceipt],
    correct_results: Sequence[ExecutionResult],
) -> bytes:
    """Walk a receipt chain (oldest first) against independently recomputed
    correct results and return the executor of the earliest divergent
    receipt. Downstream receipts merely propagating the fault are spared."""
    if len(receipts) != len(correct_results):
        raise ValueError("need one reference result per receipt")
    for receipt, correct in zip(receipts, correct_results):
        if receipt.execution_result.result_hash() != correct.result_hash():
            return receipt.executor
    raise ValueError("no divergence found; challenge unfounded")
