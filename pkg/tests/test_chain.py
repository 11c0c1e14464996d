import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supplyacct.chain import (
    ACCOUNTABLE,
    CLEARED,
    REPLACED,
    SKIPPED,
    InvestigationPolicy,
    LRTTest,
    NPTest,
    SupplierNode,
    SupplyChainGraph,
    fuse_tier1,
    investigate_node,
    load_graph,
    multistage_investigate,
    replace_or_investigate,
    tier1_hypotheses,
    write_trace_csv,
)
from supplyacct.core import BernoulliModel, Reputation, SampleBatch, sample
from supplyacct.errors import AccountabilityError, ConfigError
from supplyacct.hypotest import HypothesisPair, NPConfig, decentralized_fuse

POLICY = InvestigationPolicy(0.5, 1000.0)


def smart_lock(costs=None):
    """Root lock with face and fingerprint branches, two suppliers each."""
    costs = costs or {}
    ids = ["lock", "face", "finger", "face_cam", "face_algo", "finger_sensor", "finger_algo"]
    nodes = {i: SupplierNode(i, cost=costs.get(i, 10.0)) for i in ids}
    edges = [
        ("lock", "face"),
        ("lock", "finger"),
        ("face", "face_cam"),
        ("face", "face_algo"),
        ("finger", "finger_sensor"),
        ("finger", "finger_algo"),
    ]
    return SupplyChainGraph(nodes, edges, "lock")


def test_tier1_table():
    rows = tier1_hypotheses(2)
    assert [(r.bits, r.index) for r in rows] == [((0, 0), 0), ((0, 1), 1), ((1, 0), 2), ((1, 1), 3)]
    assert [r.bits for r in tier1_hypotheses(1)] == [(0,), (1,)]
    assert tier1_hypotheses(3)[5].bits == (1, 0, 1)
    with pytest.raises(AccountabilityError):
        tier1_hypotheses(21)
    with pytest.raises(AccountabilityError):
        tier1_hypotheses(0)


def test_investigate_node_direct_pa():
    node = SupplierNode("n")
    assert investigate_node(node, 0.95, POLICY) == (0.95, ACCOUNTABLE)
    assert investigate_node(node, 0.5, POLICY) == (0.5, CLEARED)
    with pytest.raises(AccountabilityError):
        investigate_node(node, "bad", POLICY)


def test_investigate_node_missing_test():
    with pytest.raises(AccountabilityError):
        investigate_node(SupplierNode("n"), SampleBatch([1.0]), POLICY)


def test_np_node_s12_accountable():
    node = SupplierNode("face", NPTest(0.9, 0.7, NPConfig(0.05, 20)))
    p_a, verdict = investigate_node(node, SampleBatch([1] * 12 + [0] * 8), POLICY)
    assert verdict == ACCOUNTABLE
    assert p_a > 0.5
    p_a, verdict = investigate_node(node, SampleBatch([1] * 19 + [0]), POLICY)
    assert (p_a, verdict) == (0.0, CLEARED)


def test_np_node_validation():
    with pytest.raises(AccountabilityError):
        NPTest(0.7, 0.9, NPConfig(0.05, 20))
    node = SupplierNode("f", NPTest(0.9, 0.7, NPConfig(0.05, 20)))
    with pytest.raises(AccountabilityError):
        investigate_node(node, SampleBatch([1] * 10), POLICY)
    with pytest.raises(AccountabilityError):
        investigate_node(node, SampleBatch([2] * 20), POLICY)


def test_lrt_node():
    pair = HypothesisPair(BernoulliModel(0.95), BernoulliModel(0.6))
    node = SupplierNode("s", LRTTest(pair, Reputation.binary(0.5)))
    p_a, verdict = investigate_node(node, SampleBatch([1] * 15 + [0] * 15), POLICY)
    assert verdict == ACCOUNTABLE and p_a > 0.9
    assert investigate_node(node, SampleBatch([1] * 30), POLICY) == (0.0, CLEARED)


@pytest.mark.parametrize("remaining, cost, decision", [(100, 30, "investigate"), (30, 30, "replace"), (0, 0, "replace")])
def test_replace_or_investigate(remaining, cost, decision):
    assert replace_or_investigate(remaining, cost) == decision


def test_fingerprint_subtree_skipped():
    ev = {"lock": 0.9, "face": 0.9, "finger": 0.1, "face_cam": 0.2, "face_algo": 0.8,
          "finger_sensor": 0.9, "finger_algo": 0.9}
    trace = multistage_investigate(smart_lock(), ev, POLICY)
    assert trace.verdict("finger") == CLEARED
    assert trace.verdict("finger_sensor") == SKIPPED and trace.verdict("finger_algo") == SKIPPED
    assert trace.investigated == ["lock", "face", "finger", "face_algo", "face_cam"]


def test_root_cleared_investigates_only_root():
    trace = multistage_investigate(smart_lock(), {"lock": 0.1}, POLICY)
    assert trace.investigated == ["lock"]
    assert set(trace.by_verdict(SKIPPED)) == set(smart_lock().nodes) - {"lock"}


def test_budget_below_root_cost():
    trace = multistage_investigate(smart_lock(), {}, InvestigationPolicy(0.5, 5.0))
    assert trace.verdict("lock") == REPLACED
    assert trace.investigated == [] and trace.total_spent == 0


def test_replacement_on_exact_budget():
    ev = {k: 0.9 for k in smart_lock().nodes}
    trace = multistage_investigate(smart_lock(), ev, InvestigationPolicy(0.5, 30.0))
    # after lock and face 10 remains, equal to the next cost -> replace
    assert trace.investigated == ["lock", "face"]
    assert trace.verdict("finger") == REPLACED


def test_shared_supplier_any_parent_rule():
    nodes = {i: SupplierNode(i, cost=1) for i in ("r", "a", "b", "s")}
    g = SupplyChainGraph(nodes, [("r", "a"), ("r", "b"), ("a", "s"), ("b", "s")], "r")
    trace = multistage_investigate(g, {"r": 0.9, "a": 0.1, "b": 0.9, "s": 0.7}, POLICY)
    assert trace.verdict("s") == ACCOUNTABLE
    assert [e.node_id for e in trace.entries].count("s") == 1


def test_graph_validation():
    nodes = {i: SupplierNode(i) for i in "abc"}
    with pytest.raises(ConfigError):
        SupplyChainGraph(nodes, [("a", "b"), ("b", "c"), ("c", "b")], "a")
    with pytest.raises(ConfigError):
        SupplyChainGraph(nodes, [("b", "a")], "a")
    with pytest.raises(ConfigError):
        SupplyChainGraph(nodes, [("a", "z")], "a")
    with pytest.raises(AccountabilityError):
        InvestigationPolicy(1.0, 10)
    with pytest.raises(AccountabilityError):
        SupplierNode("x", cost=-1)


def test_missing_evidence_errors():
    with pytest.raises(AccountabilityError):
        multistage_investigate(smart_lock(), {"lock": 0.9}, POLICY)


def test_two_supplier_fusion_matches_bits():
    pair = HypothesisPair(BernoulliModel(0.95), BernoulliModel(0.6))
    node = SupplierNode("s", LRTTest(pair, Reputation.binary(0.5)))
    for seed, (m1, m2) in enumerate(itertools.product((False, True), repeat=2)):
        b1 = sample(node.test.sample_model(m1), 40, seed)
        b2 = sample(node.test.sample_model(m2), 40, seed + 100)
        v = [investigate_node(node, b, POLICY)[1] for b in (b1, b2)]
        assert fuse_tier1(v) == decentralized_fuse(tuple(int(x == ACCOUNTABLE) for x in v))


def test_load_graph_and_csv(tmp_path):
    doc = {
        "policy": {"epsilon": 0.5, "budget": 100},
        "nodes": [
            {"id": "lock", "cost": 10},
            {"id": "face", "parents": ["lock"], "cost": 20,
             "test": {"kind": "np", "mu0": 0.9, "mu1": 0.7, "alpha": 0.05, "n_trials": 20}},
            {"id": "finger", "parents": ["lock"], "cost": 20,
             "test": {"kind": "gaussian", "sigma": 1, "mean_truthful": 0, "mean_misinformation": 1}},
        ],
    }
    graph, policy = load_graph(doc)
    assert graph.children("lock") == ["face", "finger"]
    trace = multistage_investigate(graph, {"lock": 0.9, "face": SampleBatch([1] * 12 + [0] * 8),
                                           "finger": SampleBatch([0.0] * 5)}, policy)
    assert trace.verdict("face") == ACCOUNTABLE and trace.verdict("finger") == CLEARED
    text = write_trace_csv(trace, tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "node_id,p_a,verdict,cumulative_cost"
    assert text[1] == "lock,0.9,accountable,10"


def test_load_graph_errors():
    with pytest.raises(ConfigError):
        load_graph({"nodes": []})
    with pytest.raises(ConfigError):
        load_graph({"policy": {"epsilon": 0.5, "budget": 1}, "nodes": [{"id": "a"}, {"id": "b"}]})
    with pytest.raises(ConfigError):
        load_graph({"policy": {"epsilon": 0.5, "budget": 1}, "nodes": [{"id": "a", "test": {"kind": "x"}}]})
    with pytest.raises(ConfigError):
        load_graph({"policy": {"epsilon": 0.5, "budget": 1}, "nodes": [{"id": "a", "test": {"kind": "np"}}]})


@st.composite
def random_dag(draw):
    n = draw(st.integers(1, 12))
    edges = []
    for j in range(1, n):
        parents = draw(st.sets(st.integers(0, j - 1), min_size=1, max_size=min(3, j)))
        edges.extend((f"n{p:02d}", f"n{j:02d}") for p in parents)
    costs = draw(st.lists(st.floats(0, 50), min_size=n, max_size=n))
    pas = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    budget = draw(st.floats(0, 300))
    nodes = {f"n{i:02d}": SupplierNode(f"n{i:02d}", cost=costs[i]) for i in range(n)}
    graph = SupplyChainGraph(nodes, edges, "n00")
    evidence = {f"n{i:02d}": pas[i] for i in range(n)}
    return graph, evidence, InvestigationPolicy(0.5, budget)


@settings(max_examples=200, deadline=None)
@given(random_dag())
def test_random_dag_properties(case):
    graph, evidence, policy = case
    trace = multistage_investigate(graph, evidence, policy)
    assert sorted(e.node_id for e in trace.entries) == sorted(graph.nodes)
    assert trace.total_spent <= policy.budget
    # budget rule reproduced from the trace
    spent = 0.0
    for e in trace.entries:
        if e.verdict in (ACCOUNTABLE, CLEARED):
            assert policy.budget - spent > graph.nodes[e.node_id].cost
            spent += graph.nodes[e.node_id].cost
        elif e.verdict == REPLACED:
            assert policy.budget - spent <= graph.nodes[e.node_id].cost
    # pruning soundness: each visited non-root node has an accountable parent
    verdicts = {e.node_id: e.verdict for e in trace.entries}
    for nid, v in verdicts.items():
        if v != SKIPPED and nid != graph.root:
            assert any(verdicts[p] == ACCOUNTABLE for p in graph.parents(nid))
    assert multistage_investigate(graph, evidence, policy).rows() == trace.rows()
