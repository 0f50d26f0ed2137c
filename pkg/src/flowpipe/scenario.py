"""Scenario configuration, world construction, and property evaluation.

A scenario is a JSON document (strictly validated; unknown keys rejected with
path-addressed errors) describing roles, protocol parameters, the network
model, scripted adversary behaviors, and the pass/fail checks evaluated on
the run's event log."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Optional

from . import crypto
from .blocks import GENESIS_RANDOMNESS
from .clustering import cluster_assignment
from .hotstuff import GENESIS_DIGEST
from .nodes import (
    Behavior,
    CollectorNode,
    ConsensusNode,
    Directory,
    ExecutionNode,
    UserAgent,
    VerificationNode,
)
from .encoding import hexify
from .execution import GENESIS_RESULT_HASH, block_execution, canonical
from .merkle import ExecutionState
from .sim import Metrics, SimConfig, Simulator
from .state import ChallengeKind, NodeIdentity, ProtocolState, Role


class ScenarioError(ValueError):
    """Configuration rejected; `errors` lists path-addressed messages."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


_BEHAVIORS = {
    "withhold_collection",
    "equivocate_proposal",
    "faulty_execution",
    "non_responsive",
    "stale_vote",
}

_NUM = (int, float)

# section -> key -> (type tuple, allows None)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "name": {},
    "description": {},
    "roles": {
        "collectors": ((int,), False),
        "consensus": ((int,), False),
        "execution": ((int,), False),
        "verification": ((int,), False),
    },
    "stakes": {
        "collector": ((int,), False),
        "consensus": ((int,), False),
        "execution": ((int,), False),
        "verification": ((int,), False),
    },
    "clusters": {
        "count": ((int,), False),
        "size_threshold": ((int,), False),
        "timespan_rounds": ((int,), False),
    },
    "consensus": {"base_timeout": ((int,), False)},
    "drb": {"committee_size": ((int,), False)},
    "execution_params": {"gamma_chunk": ((int,), False)},
    "verification_params": {"coverage_p": (_NUM, False)},
    "transactions": {
        "interval": ((int,), False),
        "count": ((int,), True),
        "cost": ((int,), False),
        "window": ((int,), False),
    },
    "network": {
        "delta_t": ((int,), False),
        "phi_t": (_NUM, False),
        "gst": ((int,), False),
        "pre_gst_drop_probability": (_NUM, False),
        "pre_gst_delay_multiplier": ((int,), False),
    },
    "timeouts": {
        "mcc_deadline": ((int,), False),
        "retrieval_timeout": ((int,), False),
    },
    "adversary": {},  # list; validated separately
    "run": {"seed": ((int,), False), "max_sim_time": ((int,), False)},
    "checks": {
        "safety": ((bool,), False),
        "min_finalized": ((int,), False),
        "max_finalized": ((int,), False),
        "min_sealed": ((int,), False),
        "no_faulty_seals": ((bool,), False),
        "mcc_per_withheld_cluster": ((int,), False),
        "equivocator_slashed": ((bool,), False),
        "no_challenges": ((bool,), False),
        "min_slashes": ((int,), False),
        "min_attestations": ((int,), False),
    },
}

_ADVERSARY_KEYS = {
    "behavior": ((str,), False),
    "role": ((str,), False),
    "indices": ((list,), True),
    "cluster": ((int,), True),
    "target_chunk": ((int,), True),
}

DEFAULTS: dict = {
    "name": "unnamed",
    "description": "",
    "roles": {"collectors": 8, "consensus": 7, "execution": 2, "verification": 5},
    "stakes": {"collector": 100, "consensus": 100, "execution": 100, "verification": 100},
    "clusters": {"count": 2, "size_threshold": 3, "timespan_rounds": 10},
    "consensus": {"base_timeout": 250},
    "drb": {"committee_size": 5},
    "execution_params": {"gamma_chunk": 10},
    "verification_params": {"coverage_p": 1.0},
    "transactions": {"interval": 400, "count": 12, "cost": 3, "window": 10000},
    "network": {
        "delta_t": 50,
        "phi_t": 1.0,
        "gst": 0,
        "pre_gst_drop_probability": 0.0,
        "pre_gst_delay_multiplier": 4,
    },
    "timeouts": {"mcc_deadline": 400, "retrieval_timeout": 150},
    "adversary": [],
    "run": {"seed": 1, "max_sim_time": 30000},
    "checks": {"safety": True},
}


def validate_scenario(doc: Any) -> list[str]:
    errors: list[str] = []
    if not isinstance(doc, dict):
        return ["$: scenario must be an object"]
    for key, value in doc.items():
        if key not in _SCHEMA:
            errors.append(f"{key}: unknown key")
            continue
        if key in ("name", "description"):
            if not isinstance(value, str):
                errors.append(f"{key}: expected string")
            continue
        if key == "adversary":
            if not isinstance(value, list):
                errors.append("adversary: expected a list")
                continue
            for i, spec in enumerate(value):
                errors.extend(_validate_adversary(f"adversary[{i}]", spec))
            continue
        if not isinstance(value, dict):
            errors.append(f"{key}: expected an object")
            continue
        allowed = _SCHEMA[key]
        for sub, sub_value in value.items():
            if sub not in allowed:
                errors.append(f"{key}.{sub}: unknown key")
                continue
            types, nullable = allowed[sub]
            if sub_value is None:
                if not nullable:
                    errors.append(f"{key}.{sub}: must not be null")
            elif not isinstance(sub_value, types) or isinstance(sub_value, bool) != (
                bool in types
            ):
                expected = "/".join(t.__name__ for t in types)
                errors.append(f"{key}.{sub}: expected {expected}")
    errors.extend(_validate_semantics(doc))
    return errors


def _validate_adversary(path: str, spec: Any) -> list[str]:
    errors = []
    if not isinstance(spec, dict):
        return [f"{path}: expected an object"]
    for sub, sub_value in spec.items():
        if sub not in _ADVERSARY_KEYS:
            errors.append(f"{path}.{sub}: unknown key")
            continue
        types, nullable = _ADVERSARY_KEYS[sub]
        if sub_value is None:
            if not nullable:
                errors.append(f"{path}.{sub}: must not be null")
        elif not isinstance(sub_value, types):
            errors.append(f"{path}.{sub}: expected {'/'.join(t.__name__ for t in types)}")
    if "behavior" not in spec:
        errors.append(f"{path}.behavior: required")
    elif spec["behavior"] not in _BEHAVIORS:
        errors.append(f"{path}.behavior: unknown behavior {spec['behavior']!r}")
    if "role" not in spec:
        errors.append(f"{path}.role: required")
    elif spec["role"] not in ("collector", "consensus", "execution", "verification"):
        errors.append(f"{path}.role: unknown role {spec['role']!r}")
    if spec.get("indices") is not None:
        for j, idx in enumerate(spec["indices"]):
            if not isinstance(idx, int) or isinstance(idx, bool):
                errors.append(f"{path}.indices[{j}]: expected int")
    return errors


def _validate_semantics(doc: dict) -> list[str]:
    errors = []

    def get(section: str, key: str):
        """Configured value, falling back to the default when absent or of
        the wrong type (the type error is already reported)."""
        value = doc.get(section, {}).get(key, None) if isinstance(doc.get(section), dict) else None
        default = DEFAULTS[section][key]
        if isinstance(value, _NUM) and not isinstance(value, bool):
            return value
        return default

    if get("roles", "collectors") < get("clusters", "count"):
        errors.append("clusters.count: more clusters than collectors")
    for section, key, low in [
        ("roles", "collectors", 1),
        ("roles", "consensus", 1),
        ("roles", "execution", 1),
        ("roles", "verification", 1),
        ("clusters", "count", 1),
        ("drb", "committee_size", 1),
        ("execution_params", "gamma_chunk", 1),
        ("transactions", "interval", 1),
        ("network", "delta_t", 1),
        ("run", "max_sim_time", 1),
    ]:
        value = get(section, key)
        if isinstance(value, int) and value < low:
            errors.append(f"{section}.{key}: must be >= {low}")
    if get("drb", "committee_size") > get("roles", "consensus"):
        errors.append("drb.committee_size: larger than the consensus role")
    p = get("verification_params", "coverage_p")
    if isinstance(p, _NUM) and not 0 < p <= 1:
        errors.append("verification_params.coverage_p: must lie in (0, 1]")
    drop = get("network", "pre_gst_drop_probability")
    if isinstance(drop, _NUM) and not 0 <= drop <= 1:
        errors.append("network.pre_gst_drop_probability: must lie in [0, 1]")
    return errors


def merge_defaults(doc: dict) -> dict:
    merged = copy.deepcopy(DEFAULTS)
    for key, value in doc.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_scenario(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError([f"$: cannot read scenario: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"$: line {exc.lineno}: {exc.msg}"]) from exc
    errors = validate_scenario(doc)
    if errors:
        raise ScenarioError(errors)
    return merge_defaults(doc)


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply `a.b=value` overrides (values parsed as JSON, falling back to
    string) and re-validate."""
    out = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError([f"override {item!r}: expected key=value"])
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = path.split(".")
        target = out
        for part in parts[:-1]:
            nxt = target.get(part)
            if not isinstance(nxt, dict):
                raise ScenarioError([f"override {path}: no such section {part!r}"])
            target = nxt
        target[parts[-1]] = value
    errors = validate_scenario(_strip_defaults_shape(out))
    if errors:
        raise ScenarioError(errors)
    return out


def _strip_defaults_shape(doc: dict) -> dict:
    # merged docs carry every section; validation applies to the same shape
    return doc


# ---------------------------------------------------------------------------
# World construction
# ---------------------------------------------------------------------------


@dataclass
class World:
    doc: dict
    seed: int
    sim: Simulator
    directory: Directory
    metrics: Metrics
    collectors: list[CollectorNode] = field(default_factory=list)
    consensus: list[ConsensusNode] = field(default_factory=list)
    executors: list[ExecutionNode] = field(default_factory=list)
    verifiers: list[VerificationNode] = field(default_factory=list)
    agents: list[UserAgent] = field(default_factory=list)

    @property
    def observer(self) -> ConsensusNode:
        return self.consensus[0]


def _behavior_for(doc: dict, role: str, index: int, cluster_index: Optional[int]) -> Optional[Behavior]:
    for spec in doc.get("adversary", []):
        if spec["role"] != role:
            continue
        indices = spec.get("indices")
        target_cluster = spec.get("cluster")
        if indices is not None and index in indices:
            return Behavior(spec["behavior"], spec.get("target_chunk"))
        if target_cluster is not None and cluster_index == target_cluster:
            return Behavior(spec["behavior"], spec.get("target_chunk"))
    return None


def build_world(doc: dict, seed: Optional[int] = None) -> World:
    doc = merge_defaults(doc)
    run_seed = doc["run"]["seed"] if seed is None else seed
    seed_bytes = crypto.hash("scenario-seed", run_seed.to_bytes(8, "big"))

    roles = doc["roles"]
    stakes = doc["stakes"]

    def make_keys(prefix: str, count: int) -> list[crypto.StakingKeyPair]:
        return [
            crypto.StakingKeyPair.from_seed(
                crypto.hash("identity", f"{prefix}{i}".encode() + seed_bytes)
            )
            for i in range(count)
        ]

    collector_keys = make_keys("c", roles["collectors"])
    consensus_keys = make_keys("n", roles["consensus"])
    executor_keys = make_keys("e", roles["execution"])
    verifier_keys = make_keys("v", roles["verification"])
    agent_keys = make_keys("u", 1)

    records: dict[bytes, NodeIdentity] = {}
    name_of: dict[bytes, str] = {}

    def register(keys, prefix, role, stake):
        identities = []
        for i, kp in enumerate(keys):
            name = f"{prefix}{i}"
            ident = NodeIdentity(kp.public, role, stake, name)
            records[kp.public] = ident
            name_of[kp.public] = name
            identities.append(ident)
        return identities

    collector_ids = register(collector_keys, "c", Role.COLLECTOR, stakes["collector"])
    consensus_ids = register(consensus_keys, "n", Role.CONSENSUS, stakes["consensus"])
    register(executor_keys, "e", Role.EXECUTION, stakes["execution"])
    register(verifier_keys, "v", Role.VERIFICATION, stakes["verification"])

    initial_state = ProtocolState(records=records)
    epoch_seed = crypto.derive_seed(["epoch"], GENESIS_RANDOMNESS + seed_bytes)

    # collector clusters from the epoch randomness
    assignment = cluster_assignment(
        [k.public for k in collector_keys], doc["clusters"]["count"], epoch_seed
    )
    by_key = {i.staking_public_key: i for i in collector_ids}
    clusters = {
        idx: [by_key[k] for k in assignment.cluster_members(idx)]
        for idx in range(assignment.c)
    }

    # beacon committee: the consensus members with the lowest staking keys
    committee_size = doc["drb"]["committee_size"]
    committee_keys = sorted(i.staking_public_key for i in consensus_ids)[:committee_size]
    params = crypto.make_params(committee_size, crypto.TEST_FIELD)
    entropy = [
        crypto.derive_seed(["dkg", str(i)], seed_bytes) for i in range(1, committee_size + 1)
    ]
    dkg = crypto.dkg_setup(params, entropy)
    drb_committee = {
        key: dkg.shares[i] for i, key in enumerate(committee_keys)
    }

    directory = Directory(
        name_of=name_of,
        key_of={v: k for k, v in name_of.items()},
        consensus_members=consensus_ids,
        verifier_members=[records[k.public] for k in verifier_keys],
        executor_names=[f"e{i}" for i in range(roles["execution"])],
        verifier_names=[f"v{i}" for i in range(roles["verification"])],
        consensus_names=[f"n{i}" for i in range(roles["consensus"])],
        collector_names=[f"c{i}" for i in range(roles["collectors"])],
        clusters=clusters,
        cluster_of=dict(assignment.mapping),
        initial_state=initial_state,
        genesis_digest=GENESIS_DIGEST,
        epoch_seed=epoch_seed,
        params=params,
        drb_vv=dkg.verification_vector,
        drb_committee=drb_committee,
        registered_accounts=[kp.public for kp in agent_keys],
        gamma_chunk=doc["execution_params"]["gamma_chunk"],
        coverage_p=float(doc["verification_params"]["coverage_p"]),
        tx_window=doc["transactions"]["window"],
        collection_size_threshold=doc["clusters"]["size_threshold"],
        collection_timespan_rounds=doc["clusters"]["timespan_rounds"],
        base_timeout=doc["consensus"]["base_timeout"],
        mcc_deadline=doc["timeouts"]["mcc_deadline"],
        retrieval_timeout=doc["timeouts"]["retrieval_timeout"],
    )

    net = doc["network"]
    sim = Simulator(
        SimConfig(
            delta_t=net["delta_t"],
            phi_t=float(net["phi_t"]),
            gst=net["gst"],
            pre_gst_drop_probability=float(net["pre_gst_drop_probability"]),
            pre_gst_delay_multiplier=net["pre_gst_delay_multiplier"],
            seed=seed_bytes,
            max_sim_time=doc["run"]["max_sim_time"],
        )
    )
    metrics = Metrics()
    world = World(doc=doc, seed=run_seed, sim=sim, directory=directory, metrics=metrics)

    for i, kp in enumerate(collector_keys):
        behavior = _behavior_for(doc, "collector", i, assignment.mapping[kp.public])
        node = CollectorNode(sim, f"c{i}", kp, directory, metrics, behavior)
        sim.register_node(node.name, node.handle)
        world.collectors.append(node)
    for i, kp in enumerate(consensus_keys):
        behavior = _behavior_for(doc, "consensus", i, None)
        node = ConsensusNode(sim, f"n{i}", kp, directory, metrics, behavior)
        sim.register_node(node.name, node.handle)
        world.consensus.append(node)
    for i, kp in enumerate(executor_keys):
        behavior = _behavior_for(doc, "execution", i, None)
        node = ExecutionNode(sim, f"e{i}", kp, directory, metrics, behavior)
        sim.register_node(node.name, node.handle)
        world.executors.append(node)
    for i, kp in enumerate(verifier_keys):
        behavior = _behavior_for(doc, "verification", i, None)
        node = VerificationNode(sim, f"v{i}", kp, directory, metrics, behavior)
        sim.register_node(node.name, node.handle)
        world.verifiers.append(node)
    tx_conf = doc["transactions"]
    for i, kp in enumerate(agent_keys):
        agent = UserAgent(
            sim,
            f"u{i}",
            kp,
            directory,
            reference_block_hash=GENESIS_DIGEST,
            interval=tx_conf["interval"],
            tx_cost=tx_conf["cost"],
            count=tx_conf["count"],
        )
        sim.register_node(agent.name, agent.handle)
        world.agents.append(agent)
    return world


def run_world(world: World) -> None:
    for node in (
        world.collectors + world.consensus + world.executors + world.verifiers + world.agents
    ):
        node.start()
    world.sim.run()
    # guaranteed-collection count: distinct hashes announced by any guarantor
    seen = {r["payload"]["hash"] for r in world.sim.log.select("collection_guaranteed")}
    world.metrics.collections_guaranteed = len(seen)


# ---------------------------------------------------------------------------
# Property evaluation
# ---------------------------------------------------------------------------


def _observer_events(world: World, kind: str) -> list[dict]:
    name = world.observer.name
    return [r for r in world.sim.log.select(kind) if r["node"] == name]


def _honest_result_hashes(world: World) -> set[bytes]:
    """Reference re-execution of the observer's finalized chain with honest
    execution semantics; the returned result hashes are the only ones a
    correct seal may reference."""
    obs = world.observer
    attested = {
        bytes.fromhex(r["payload"]["collection"])
        for r in world.sim.log.select("attestation")
    }
    exec_state = ExecutionState()
    prev = GENESIS_RESULT_HASH
    honest: set[bytes] = set()
    for height in sorted(obs.finalized_heights):
        digest = obs.finalized_heights[height]
        ctx = obs.ctxs.get(digest)
        if ctx is None:
            continue
        node = obs.engine.tree.nodes.get(digest)
        if node is None:
            continue
        pb = node.payload
        ordered = []
        for gc in pb.guaranteed_collections:
            texts = None
            for collector in world.collectors:
                texts = collector.store.get(gc.collection_hash)
                if texts is not None:
                    break
            if texts is not None:
                ordered.append(texts)
            elif gc.collection_hash not in attested:
                # unresolvable and unattested: treat as skipped either way
                continue
        txs = canonical(ordered)
        out = block_execution(
            pb.hash(), txs, prev, exec_state, world.directory.gamma_chunk
        )
        exec_state = out.end_state
        prev = out.result.result_hash()
        honest.add(prev)
    return honest


def evaluate_properties(world: World) -> dict:
    checks = world.doc.get("checks", {})
    properties: list[dict] = []

    def add(name: str, passed: bool, detail: str):
        properties.append({"name": name, "passed": bool(passed), "detail": detail})

    if checks.get("safety", True):
        conflicts = []
        by_height: dict[int, bytes] = {}
        for node in world.consensus:
            for height, digest in node.finalized_heights.items():
                prior = by_height.setdefault(height, digest)
                if prior != digest:
                    conflicts.append((node.name, height))
        add(
            "safety",
            not conflicts,
            "no conflicting finalized blocks"
            if not conflicts
            else f"conflicts at {conflicts[:3]}",
        )

    finalized = len(world.observer.finalized_heights)
    if "min_finalized" in checks:
        add(
            "liveness",
            finalized >= checks["min_finalized"],
            f"finalized {finalized} blocks (need >= {checks['min_finalized']})",
        )
    if "max_finalized" in checks:
        add(
            "halted",
            finalized <= checks["max_finalized"],
            f"finalized {finalized} blocks (allow <= {checks['max_finalized']})",
        )

    sealed_events = _observer_events(world, "sealed")
    if "min_sealed" in checks:
        add(
            "sealing",
            len(sealed_events) >= checks["min_sealed"],
            f"sealed {len(sealed_events)} results (need >= {checks['min_sealed']})",
        )

    if checks.get("no_faulty_seals"):
        honest = {hexify(h) for h in _honest_result_hashes(world)}
        sealed = {r["payload"]["result"] for r in sealed_events}
        faulty = sealed - honest
        add(
            "no-faulty-seals",
            not faulty,
            f"{len(sealed)} sealed results all match honest re-execution"
            if not faulty
            else f"faulty results sealed: {sorted(faulty)[:2]}",
        )

    if checks.get("no_challenges"):
        count = world.metrics.challenges
        add("no-challenges", count == 0, f"{count} challenges recorded")

    if "min_slashes" in checks:
        add(
            "slashing",
            world.metrics.slashes >= checks["min_slashes"],
            f"{world.metrics.slashes} slashes (need >= {checks['min_slashes']})",
        )

    if "min_attestations" in checks:
        count = len(_observer_events(world, "attestation"))
        add(
            "attestations",
            count >= checks["min_attestations"],
            f"{count} skip attestations issued (need >= {checks['min_attestations']})",
        )

    if "mcc_per_withheld_cluster" in checks:
        add_mcc_property(world, checks["mcc_per_withheld_cluster"], add)

    if checks.get("equivocator_slashed"):
        equivocators = set()
        for spec in world.doc.get("adversary", []):
            if spec["behavior"] == "equivocate_proposal":
                for idx in spec.get("indices") or []:
                    equivocators.add(hexify(world.consensus[idx].keypair.public))
        slashed = set()
        for r in _observer_events(world, "adjudication"):
            if r["payload"]["outcome"] == "accused_slashed":
                slashed.update(r["payload"]["slashed"])
        add(
            "equivocator-slashed",
            bool(equivocators) and equivocators <= slashed,
            f"equivocators slashed: {sorted(equivocators & slashed)}"
            if equivocators & slashed
            else "no equivocator slashed",
        )

    return {
        "scenario": world.doc.get("name", "unnamed"),
        "seed": world.seed,
        "passed": all(p["passed"] for p in properties),
        "properties": properties,
    }


def add_mcc_property(world: World, cluster_index: int, add) -> None:
    """Exactly one recorded missing-collection challenge per on-chain
    collection of the withholding cluster, each upheld with the full
    guarantor set slashed."""
    obs = world.observer
    chain_gcs: dict[bytes, Any] = {}
    for height in sorted(obs.finalized_heights):
        node = obs.engine.tree.nodes.get(obs.finalized_heights[height])
        if node is None:
            continue
        for gc in node.payload.guaranteed_collections:
            chain_gcs[gc.collection_hash] = gc
    withheld = {h for h, gc in chain_gcs.items() if gc.cluster_index == cluster_index}
    mcc_targets: dict[bytes, dict] = {}
    for doc in obs.recorded_challenges.values():
        if doc["kind"] == ChallengeKind.MISSING_COLLECTION.value:
            mcc_targets[bytes.fromhex(doc["evidence"][0])] = doc
    ok = bool(withheld) and set(mcc_targets) == withheld
    detail = f"{len(withheld)} withheld collections, {len(mcc_targets)} MCCs recorded"
    if ok:
        # every upheld adjudication must slash the full silent guarantor set
        slashed_by_id: dict[str, set[str]] = {}
        for r in _observer_events(world, "adjudication"):
            slashed_by_id[r["payload"]["id"]] = set(r["payload"]["slashed"])
        for h, doc in mcc_targets.items():
            want = {hexify(s) for s in chain_gcs[h].signers}
            got = slashed_by_id.get(doc["id"], set())
            if got != want:
                ok = False
                detail = f"guarantor set not fully slashed for {hexify(h)[:12]}"
                break
    add("mcc-per-withheld-collection", ok, detail)


@dataclass
class RunResult:
    world: World
    report: dict


def run_scenario(doc: dict, seed: Optional[int] = None) -> RunResult:
    world = build_world(doc, seed)
    run_world(world)
    return RunResult(world=world, report=evaluate_properties(world))
