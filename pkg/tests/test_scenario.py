import copy
import json
from importlib import resources

import pytest

from flowpipe.scenario import (
    DEFAULTS,
    ScenarioError,
    apply_overrides,
    build_world,
    load_scenario,
    merge_defaults,
    run_scenario,
    validate_scenario,
)

BUNDLED = [
    "happy-path",
    "byzantine-executor",
    "withheld-collection",
    "equivocating-leader",
    "network-partition",
    "pre-gst-chaos",
]


def bundled_path(name: str) -> str:
    return str(resources.files("flowpipe") / "scenarios" / f"{name}.json")


def short_doc(**over):
    doc = copy.deepcopy(DEFAULTS)
    doc["run"]["max_sim_time"] = 6000
    doc["checks"] = {"safety": True}
    for key, value in over.items():
        if isinstance(value, dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return doc


class TestValidation:
    def test_empty_document_valid(self):
        assert validate_scenario({}) == []

    def test_unknown_top_level_key(self):
        errors = validate_scenario({"netwrok": {}})
        assert errors == ["netwrok: unknown key"]

    def test_unknown_nested_key_path_addressed(self):
        errors = validate_scenario({"network": {"delta_tt": 5}})
        assert errors == ["network.delta_tt: unknown key"]

    def test_type_error_path_addressed(self):
        errors = validate_scenario({"network": {"delta_t": "fast"}})
        assert errors == ["network.delta_t: expected int"]

    def test_bool_is_not_int(self):
        errors = validate_scenario({"roles": {"consensus": True}})
        assert "roles.consensus: expected int" in errors

    def test_multiple_errors_reported_together(self):
        errors = validate_scenario(
            {"roles": {"consensus": "x"}, "drb": {"committee": 1}}
        )
        assert "roles.consensus: expected int" in errors
        assert "drb.committee: unknown key" in errors

    def test_non_object_rejected(self):
        assert validate_scenario([1, 2]) == ["$: scenario must be an object"]

    def test_coverage_p_range(self):
        assert validate_scenario({"verification_params": {"coverage_p": 0.0}}) == [
            "verification_params.coverage_p: must lie in (0, 1]"
        ]
        assert validate_scenario({"verification_params": {"coverage_p": 1.0}}) == []

    def test_drop_probability_range(self):
        errors = validate_scenario({"network": {"pre_gst_drop_probability": 1.5}})
        assert errors == ["network.pre_gst_drop_probability: must lie in [0, 1]"]

    def test_more_clusters_than_collectors(self):
        errors = validate_scenario({"roles": {"collectors": 2}, "clusters": {"count": 5}})
        assert errors == ["clusters.count: more clusters than collectors"]

    def test_committee_larger_than_consensus(self):
        errors = validate_scenario({"roles": {"consensus": 3}, "drb": {"committee_size": 5}})
        assert errors == ["drb.committee_size: larger than the consensus role"]

    def test_adversary_must_be_list(self):
        assert validate_scenario({"adversary": {}}) == ["adversary: expected a list"]

    def test_adversary_unknown_behavior(self):
        errors = validate_scenario(
            {"adversary": [{"behavior": "explode", "role": "execution"}]}
        )
        assert errors == ["adversary[0].behavior: unknown behavior 'explode'"]

    def test_adversary_missing_role(self):
        errors = validate_scenario({"adversary": [{"behavior": "faulty_execution"}]})
        assert errors == ["adversary[0].role: required"]

    def test_adversary_bad_index_type(self):
        errors = validate_scenario(
            {
                "adversary": [
                    {"behavior": "faulty_execution", "role": "execution", "indices": ["x"]}
                ]
            }
        )
        assert errors == ["adversary[0].indices[0]: expected int"]


class TestLoadingAndOverrides:
    def test_all_bundled_scenarios_validate(self):
        for name in BUNDLED:
            doc = load_scenario(bundled_path(name))
            assert doc["name"] == name
            # merged docs carry every section
            assert set(doc) == set(DEFAULTS)

    def test_missing_file_raises(self):
        with pytest.raises(ScenarioError):
            load_scenario("/no/such/scenario.json")

    def test_malformed_json_raises_with_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  broken\n}")
        with pytest.raises(ScenarioError) as exc:
            load_scenario(str(path))
        assert "line 2" in exc.value.errors[0]

    def test_invalid_content_raises(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"network": {"delta_t": -3}}))
        with pytest.raises(ScenarioError) as exc:
            load_scenario(str(path))
        assert exc.value.errors == ["network.delta_t: must be >= 1"]

    def test_merge_preserves_defaults(self):
        merged = merge_defaults({"network": {"delta_t": 9}})
        assert merged["network"]["delta_t"] == 9
        assert merged["network"]["gst"] == DEFAULTS["network"]["gst"]
        assert DEFAULTS["network"]["delta_t"] != 9  # defaults untouched

    def test_override_applies_json_value(self):
        doc = apply_overrides(merge_defaults({}), ["run.max_sim_time=1234"])
        assert doc["run"]["max_sim_time"] == 1234

    def test_override_bad_path_raises(self):
        with pytest.raises(ScenarioError):
            apply_overrides(merge_defaults({}), ["nowhere.key=1"])

    def test_override_missing_equals_raises(self):
        with pytest.raises(ScenarioError):
            apply_overrides(merge_defaults({}), ["run.max_sim_time"])

    def test_override_revalidates(self):
        with pytest.raises(ScenarioError) as exc:
            apply_overrides(merge_defaults({}), ["verification_params.coverage_p=2.0"])
        assert exc.value.errors == ["verification_params.coverage_p: must lie in (0, 1]"]


class TestBehaviorAssignment:
    def test_indices_target_specific_nodes(self):
        doc = short_doc(
            adversary=[{"behavior": "faulty_execution", "role": "execution", "indices": [1]}]
        )
        world = build_world(doc)
        assert world.executors[0].behavior is None
        assert world.executors[1].behavior.kind == "faulty_execution"

    def test_cluster_targets_all_members(self):
        doc = short_doc(
            adversary=[{"behavior": "withhold_collection", "role": "collector", "cluster": 0}]
        )
        world = build_world(doc)
        by_name = {c.name: c for c in world.collectors}
        name_of = world.directory.name_of
        for ident in world.directory.clusters[0]:
            assert by_name[name_of[ident.staking_public_key]].behavior.kind == "withhold_collection"
        for ident in world.directory.clusters[1]:
            assert by_name[name_of[ident.staking_public_key]].behavior is None

    def test_seed_argument_overrides_document(self):
        doc = short_doc()
        doc["run"]["seed"] = 5
        world = build_world(doc, seed=9)
        assert world.seed == 9


class TestShortRuns:
    def test_happy_path_report_shape(self):
        doc = short_doc()
        doc["checks"] = {"safety": True, "min_finalized": 10, "no_challenges": True}
        res = run_scenario(doc, seed=3)
        assert res.report["scenario"] == doc["name"]
        assert res.report["seed"] == 3
        assert res.report["passed"] is True
        names = [p["name"] for p in res.report["properties"]]
        assert names == ["safety", "liveness", "no-challenges"]
        assert res.world.metrics.blocks_finalized >= 10

    def test_failing_check_reported(self):
        doc = short_doc()
        doc["checks"] = {"safety": True, "min_finalized": 10**6}
        res = run_scenario(doc, seed=3)
        assert res.report["passed"] is False
        failed = [p for p in res.report["properties"] if not p["passed"]]
        assert [p["name"] for p in failed] == ["liveness"]

    def test_determinism_identical_logs(self):
        doc = short_doc()
        digests = [run_scenario(doc, seed=4).world.sim.log.digest() for _ in range(2)]
        assert digests[0] == digests[1]

    def test_seed_changes_log(self):
        doc = short_doc()
        a = run_scenario(doc, seed=4).world.sim.log.digest()
        b = run_scenario(doc, seed=5).world.sim.log.digest()
        assert a != b

    def test_transactions_reach_sealed_chain(self):
        doc = short_doc()
        doc["run"]["max_sim_time"] = 12000
        res = run_scenario(doc, seed=1)
        assert res.world.metrics.collections_guaranteed > 0
        assert res.world.metrics.blocks_sealed > 0
