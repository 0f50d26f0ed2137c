"""Deterministic seeded discrete-event simulator: integer-tick scheduler,
partially synchronous message delivery (bounded delay post-GST, configurable
drop/delay before), per-node clock skew, and a replayable event log."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import crypto
from .encoding import canonical_json


@dataclass(frozen=True)
class SimConfig:
    delta_t: int = 100  # max post-GST delivery delay, ticks
    phi_t: float = 1.0  # max relative clock-rate factor, >= 1
    gst: int = 0
    pre_gst_drop_probability: float = 0.0
    pre_gst_delay_multiplier: int = 4
    seed: bytes = b"\x00" * 32
    max_sim_time: int = 100_000

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.phi_t < 1:
            raise ValueError("phi_t must be at least 1")
        if self.gst < 0:
            raise ValueError("gst must be non-negative")
        if not 0.0 <= self.pre_gst_drop_probability <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")


class EventLog:
    """Totally ordered run record; identical for identical (scenario, seed)."""

    def __init__(self):
        self.records: list[dict] = []

    def append(self, t: int, node: str, kind: str, payload: dict) -> None:
        self.records.append({"t": t, "node": node, "kind": kind, "payload": payload})

    def write_jsonl(self, path: str) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n" for rec in self.records
        )

    def digest(self) -> bytes:
        return crypto.hash("eventlog", self.to_jsonl().encode())

    def select(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]


Handler = Callable[[str, Any], None]  # (sender_name, message)


class Simulator:
    """Single-threaded event loop over (time, sequence)-ordered events."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.now = 0
        self.log = EventLog()
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self._handlers: dict[str, Handler] = {}
        self._skew: dict[str, float] = {}
        self._net_stream = crypto.seeded_stream(crypto.derive_seed(["net"], config.seed))
        self._skew_stream = crypto.seeded_stream(crypto.derive_seed(["skew"], config.seed))
        self.dropped = 0
        self.delivered = 0

    # -- topology ----------------------------------------------------------

    def register_node(self, name: str, handler: Handler) -> None:
        if name in self._handlers:
            raise ValueError(f"duplicate node name: {name}")
        self._handlers[name] = handler
        span = self.config.phi_t - 1.0
        self._skew[name] = 1.0 + span * self._skew_stream.next_unit()

    def nodes(self) -> list[str]:
        return list(self._handlers)

    # -- scheduling --------------------------------------------------------

    def schedule(self, delay: int, fn: Callable[[], None]) -> None:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._heap, (self.now + delay, self._seq, fn))
        self._seq += 1

    def set_timer(self, node: str, duration: int, fn: Callable[[], None]) -> None:
        """Node-local timer, dilated by the node's clock skew."""
        dilated = max(1, round(duration * self._skew[node]))
        self.schedule(dilated, fn)

    def send(self, sender: str, receiver: str, message: Any) -> None:
        if receiver not in self._handlers:
            raise ValueError(f"unknown receiver: {receiver}")
        if self.now < self.config.gst:
            if self._net_stream.next_unit() < self.config.pre_gst_drop_probability:
                self.dropped += 1
                return
            bound = self.config.delta_t * self.config.pre_gst_delay_multiplier
        else:
            bound = self.config.delta_t
        delay = 1 + self._net_stream.next_below(bound)

        def deliver():
            self.delivered += 1
            self._handlers[receiver](sender, message)

        self.schedule(delay, deliver)

    def broadcast(self, sender: str, message: Any, include_self: bool = False) -> None:
        for name in self._handlers:
            if name == sender and not include_self:
                continue
            self.send(sender, name, message)

    # -- run loop ----------------------------------------------------------

    def run(self, until: Optional[int] = None) -> None:
        horizon = self.config.max_sim_time if until is None else until
        while self._heap and self._heap[0][0] <= horizon:
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()
        self.now = max(self.now, min(horizon, self._heap[0][0]) if self._heap else horizon)

    def event(self, node: str, kind: str, payload: dict) -> None:
        # canonical_json round-trip keeps the log JSON-safe and ordered
        self.log.append(self.now, node, kind, json.loads(canonical_json(payload).decode()))


@dataclass
class Metrics:
    blocks_finalized: int = 0
    blocks_sealed: int = 0
    collections_guaranteed: int = 0
    challenges: int = 0
    slashes: int = 0
    finalization_latencies: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        lat = self.finalization_latencies
        rows = [
            ("blocks_finalized", self.blocks_finalized),
            ("blocks_sealed", self.blocks_sealed),
            ("collections_guaranteed", self.collections_guaranteed),
            ("challenges", self.challenges),
            ("slashes", self.slashes),
            ("mean_finalization_latency", sum(lat) / len(lat) if lat else 0),
            ("max_finalization_latency", max(lat) if lat else 0),
        ]
        return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
