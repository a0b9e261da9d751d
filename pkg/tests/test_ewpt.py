import dataclasses
import random

import pytest

from anonabac import anonymity
from anonabac import ewpt as ewpt_mod
from anonabac.errors import BenchError, RegistryError
from anonabac.ewpt import (
    Decision,
    Engine,
    EngineConfig,
    build_tree,
    linear_scan,
    match_strict,
    match_subset,
    maybe_rebuild,
    sort_request_attributes,
)
from anonabac.model import AVPair, PolicyRule
from anonabac.optimizer import WeightList

from conftest import micro_registry, micro_request
from instances import random_instance
from oracles import oracle_match


def cred(*pairs):
    return frozenset(AVPair(a, v) for a, v in pairs)


FIG_RULES = [
    PolicyRule("r1", cred(("a", "a1"), ("b", "b1"), ("c", "c1"))),
    PolicyRule("r2", cred(("a", "a2"), ("b", "b1"), ("c", "c1"), ("d", "d1"))),
    PolicyRule("r3", cred(("a", "a2"), ("c", "c2"))),
    PolicyRule("r4", cred(("a", "a3"), ("b", "b2"), ("c", "c2"))),
]
W1 = WeightList.from_pairs([("a", 4), ("b", 3), ("c", 2), ("d", 1)])
W2 = WeightList.from_pairs([("c", 4), ("b", 3), ("a", 2), ("d", 1)])
FIG_REQUEST = [AVPair("a", "a3"), AVPair("b", "b2"), AVPair("c", "c1")]


def sort_by(weights, pairs):
    ranks = weights.ranks()
    return sorted(pairs, key=lambda p: ranks[p.attr])


def test_initial_weight_order_takes_five_comparisons():
    tree = build_tree(FIG_RULES, W1)
    assert match_strict(tree, sort_by(W1, FIG_REQUEST)) == (False, 5)


def test_reordered_tree_takes_two_comparisons():
    tree = build_tree(FIG_RULES, W2)
    assert match_strict(tree, sort_by(W2, FIG_REQUEST)) == (False, 2)


def test_reordered_request_sequence():
    seq = sort_by(W2, FIG_REQUEST)
    assert [p.value for p in seq] == ["c1", "b2", "a3"]


def test_tree_shapes():
    t1 = build_tree(FIG_RULES, W1)
    assert [c.key.value for c in t1.root.child_list] == ["a1", "a2", "a3"]
    t2 = build_tree(FIG_RULES, W2)
    assert [c.key.value for c in t2.root.child_list] == ["c1", "c2"]
    assert t1.leaf_count() == t2.leaf_count() == 4


def test_empty_policy_set_denies_everything():
    tree = build_tree([], W1)
    assert match_strict(tree, sort_by(W1, FIG_REQUEST)) == (False, 0)
    assert match_subset(tree, sort_by(W1, FIG_REQUEST)) == (False, 0)


def test_duplicate_rule_is_idempotent():
    tree_once = build_tree(FIG_RULES, W1)
    tree_twice = build_tree(FIG_RULES + [FIG_RULES[0]], W1)
    assert tree_twice.leaf_count() == tree_once.leaf_count() == 4
    seq = sort_by(W1, sorted(FIG_RULES[0].constraints))
    assert match_strict(tree_twice, seq)[0]


def test_rule_attribute_missing_from_weight_list():
    rule = PolicyRule("rx", cred(("z", "z1")))
    with pytest.raises(RegistryError, match="missing from the weight list"):
        build_tree([rule], W1)


def test_exact_rule_sequence_matches():
    tree = build_tree(FIG_RULES, W2)
    seq = sort_by(W2, FIG_RULES[3].constraints)
    matched, comparisons = match_strict(tree, seq)
    assert matched and comparisons > 0


def test_subset_allows_unconstrained_attributes():
    tree = build_tree(FIG_RULES, W2)
    pairs = [AVPair("a", "a2"), AVPair("b", "b1"), AVPair("c", "c2")]
    seq = sort_by(W2, pairs)
    assert match_subset(tree, seq)[0] is True  # rule (a2, c2); b1 skipped
    assert match_strict(tree, seq)[0] is False
    assert oracle_match([set(r.constraints) for r in FIG_RULES], pairs, "subset")
    assert not oracle_match([set(r.constraints) for r in FIG_RULES], pairs, "exact")


def test_missing_constraint_fails_both_modes():
    tree = build_tree(FIG_RULES, W2)
    pairs = [AVPair("a", "a2")]
    assert match_subset(tree, sort_by(W2, pairs))[0] is False
    assert match_strict(tree, sort_by(W2, pairs))[0] is False


def test_linear_scan_examples():
    rules = [PolicyRule("r", cred(("a", "a2"), ("c", "c2")))]
    pairs = cred(("a", "a2"), ("b", "b1"), ("c", "c2"))
    assert linear_scan(rules, pairs, "subset") is True
    assert linear_scan(rules, pairs, "exact") is False
    assert linear_scan([], pairs, "subset") is False
    with pytest.raises(ValueError):
        linear_scan(rules, pairs, "sideways")


# ---------------------------------------------------------------------------
# Engine pipeline
# ---------------------------------------------------------------------------


def micro_policies():
    return [
        PolicyRule("p0", cred(("dept", "eng"), ("tier", "gold"), ("op", "read"))),
        PolicyRule("p1", cred(("dept", "hr"))),
    ]


def test_sort_request_attributes_concatenates_all_classes():
    registry = micro_registry()
    req = micro_request(registry, "s1", ["dept", "role"])
    weights = WeightList.from_pairs([("tier", 4), ("role", 3), ("dept", 2), ("op", 1)])
    seq = sort_request_attributes(req, registry, weights)
    assert [p.attr for p in seq] == ["tier", "role", "dept", "op"]
    bad = dataclasses.replace(req, object_id="missing")
    with pytest.raises(RegistryError, match="unresolvable object"):
        sort_request_attributes(bad, registry, weights)


def test_sort_request_ties_break_by_name():
    registry = micro_registry()
    req = micro_request(registry, "s1", ["dept", "role"])
    weights = WeightList.from_pairs([("tier", 1), ("role", 1), ("dept", 1), ("op", 1)])
    seq = sort_request_attributes(req, registry, weights)
    assert [p.attr for p in seq] == ["dept", "op", "role", "tier"]


def test_tampered_request_denied_before_entropy(monkeypatch):
    registry = micro_registry()
    engine = Engine(registry, micro_policies(), EngineConfig(threshold=0.0))

    def boom(*args, **kwargs):
        raise AssertionError("entropy computed for an unverified request")

    monkeypatch.setattr(ewpt_mod.anonymity, "subject_space", boom)
    req = micro_request(registry, "s1", ["dept"])
    sig = bytearray(req.signed_credential.signature)
    sig[0] ^= 0x40
    tampered = dataclasses.replace(
        req, signed_credential=dataclasses.replace(req.signed_credential, signature=bytes(sig))
    )
    decision = engine.decide(tampered)
    assert (decision.outcome, decision.reason) == ("DENY", "bad-signature")
    assert decision.entropy == 0.0 and decision.comparisons == 0


def test_unique_credential_denied_for_low_anonymity():
    registry = micro_registry()
    engine = Engine(registry, micro_policies(), EngineConfig(threshold=1.0))
    req = micro_request(registry, "s4", ["dept"])  # only s4 holds dept=hr
    decision = engine.decide(req)
    assert (decision.outcome, decision.reason) == ("DENY", "low-anonymity")
    assert decision.entropy == 0.0


def test_grant_records_and_reasons():
    registry = micro_registry()
    engine = Engine(registry, micro_policies(), EngineConfig(threshold=0.0, mode="strict"))
    req = micro_request(registry, "s3", ["dept"])  # dept=eng + gold + read = p0
    decision = engine.decide(req)
    assert (decision.outcome, decision.reason) == ("GRANT", "granted")
    assert len(engine.history) == 1 and len(engine.pool) == 1
    assert engine.history.records[0].outcome == "GRANT"


def test_incomplete_path_reason():
    registry = micro_registry()
    rules = [PolicyRule("p0", cred(("dept", "eng"), ("tier", "gold"), ("op", "read"), ("role", "dev")))]
    engine = Engine(registry, rules, EngineConfig(threshold=0.0, mode="strict"))
    req = micro_request(registry, "s3", ["dept"])  # prefix of the only path
    decision = engine.decide(req)
    assert decision.reason in ("incomplete-path", "no-path")
    assert decision.outcome == "DENY"


def test_unresolvable_object_denies_no_path():
    registry = micro_registry()
    engine = Engine(registry, micro_policies(), EngineConfig(threshold=0.0))
    req = micro_request(registry, "s1", ["dept"], object_id="ghost")
    decision = engine.decide(req)
    assert (decision.outcome, decision.reason) == ("DENY", "no-path")
    assert decision.comparisons == 0


def test_fig_tree_inside_pipeline_counts_two_comparisons():
    registry = micro_registry()
    engine = Engine(
        registry,
        [PolicyRule("p0", cred(("dept", "hr"), ("tier", "gold"), ("op", "write")))],
        EngineConfig(threshold=0.0, mode="strict"),
    )
    req = micro_request(registry, "s1", ["dept", "role"])
    decision = engine.decide(req)
    assert decision.outcome == "DENY"
    assert decision.comparisons >= 1


def test_rebuild_cadence_and_static_variant():
    registry = micro_registry()
    config = EngineConfig(threshold=0.0, update_interval=3)
    full = Engine(registry, micro_policies(), config, variant="full")
    static = Engine(registry, micro_policies(), config, variant="static")
    for seq in range(1, 10):
        req = micro_request(registry, "s1", ["dept"], seq=seq)
        full.decide(req)
        static.decide(req)
    assert full.rebuilds == 3  # after decisions 3, 6, 9
    assert full.snapshot.weights.version == 3
    assert static.rebuilds == 0
    assert static.snapshot.weights.version == 0
    assert maybe_rebuild(static) is None
    assert maybe_rebuild(full) is None  # already rebuilt at this boundary


def test_rebuild_depends_only_on_pool_and_matrix():
    registry = micro_registry()
    config = EngineConfig(threshold=0.0, update_interval=4)
    engines = [Engine(registry, micro_policies(), config) for _ in range(2)]
    for seq in range(1, 5):
        for engine in engines:
            engine.decide(micro_request(registry, "s1", ["dept"], seq=seq))
    w1, w2 = (e.snapshot.weights for e in engines)
    assert [ (e.attr, e.weight) for e in w1.entries ] == [ (e.attr, e.weight) for e in w2.entries ]


def test_unknown_variant_rejected():
    registry = micro_registry()
    with pytest.raises(BenchError):
        Engine(registry, micro_policies(), variant="quantum")


def test_decision_outcome_reason_invariant():
    registry = micro_registry()
    engine = Engine(registry, micro_policies(), EngineConfig(threshold=0.0, mode="subset"))
    for seq, names in enumerate((["dept"], ["dept", "role"], ["role"]), start=1):
        d = engine.decide(micro_request(registry, "s2", names, seq=seq))
        assert (d.outcome == "GRANT") == (d.reason == "granted")


# ---------------------------------------------------------------------------
# Randomized oracle equivalence (smoke scale; the acceptance suite sweeps more)
# ---------------------------------------------------------------------------


def assert_instance_equivalence(rng, mode):
    registry, policies, requests = random_instance(rng, max_requests=60)
    threshold = rng.choice([0.0, 1.0])
    config = EngineConfig(
        threshold=threshold, mode=mode, update_interval=rng.choice([1, 3, 10, 1000])
    )
    engines = {v: Engine(registry, policies, config, variant=v) for v in ("full", "static", "linear")}
    rules = [set(r.constraints) for r in policies]
    op_attr = registry.space.operation_attribute().name
    semantics = "exact" if mode == "strict" else "subset"
    for req in requests:
        decisions = {v: engines[v].decide(req) for v in engines}
        outcomes = {(d.outcome, round(d.entropy, 12)) for d in decisions.values()}
        assert len(outcomes) == 1, f"variants disagree: {decisions}"
        sample = decisions["full"]
        if sample.reason in ("granted", "no-path", "incomplete-path"):
            obj = registry.objects[req.object_id]
            pairs = (
                set(req.signed_credential.credential)
                | set(obj.pair_tuple)
                | {AVPair(op_attr, req.op)}
            )
            want = oracle_match(rules, pairs, semantics)
            assert (sample.outcome == "GRANT") == want


def test_random_instances_strict():
    rng = random.Random(101)
    for _ in range(60):
        assert_instance_equivalence(rng, "strict")


def test_random_instances_subset():
    rng = random.Random(202)
    for _ in range(60):
        assert_instance_equivalence(rng, "subset")
