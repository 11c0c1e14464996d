"""Supply-chain investigation.

Tier-1 decentralized hypotheses, per-node accountability tests and the
multi-stage top-down traversal of the procurement graph under an
accountability threshold ``epsilon`` and an investigation budget.

Evidence for a node is one of:

* a :class:`~supplyacct.core.SampleBatch`, run through the node's test;
* a float, taken as an already-computed accountability ``P_A^i``.

A node's ``P_A^i`` is the accountability of its test when the evidence
establishes misinformation, and 0 when it does not; the node is held
accountable iff ``P_A^i > epsilon``.
"""

from __future__ import annotations

import graphlib
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .core import (
    BernoulliModel,
    GaussianModel,
    Reputation,
    SampleBatch,
    bayes_threshold,
    write_csv,
)
from .errors import AccountabilityError, ConfigError
from .hypotest import (
    HypothesisPair,
    HypothesisVector,
    NPConfig,
    decentralized_fuse,
    likelihood_ratio,
    lrt_decide,
    lrt_outcome,
    np_binomial_test,
    np_decide,
    np_detection_probability,
)

ACCOUNTABLE = "accountable"
CLEARED = "cleared"
SKIPPED = "skipped"
REPLACED = "replaced"
MAX_TIER1 = 20


# ---------------------------------------------------------------------------
# node tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LRTTest:
    """Bayesian LRT; ``pair.h0`` is the truthful model, ``pair.h1`` misinformation."""

    pair: HypothesisPair
    reputation: Reputation

    @property
    def tau(self) -> float:
        return bayes_threshold(self.reputation)

    def run(self, batch: SampleBatch) -> tuple[bool, float]:
        established = lrt_decide(likelihood_ratio(self.pair, batch), self.tau) == 1
        p_a = lrt_outcome(self.pair, self.tau, len(batch)).accountability
        return established, p_a

    def sample_model(self, misinforms: bool):
        return self.pair.h1 if misinforms else self.pair.h0


@dataclass(frozen=True)
class NPTest:
    """Neyman-Pearson test on the number of correct outcomes out of ``cfg.n_trials``.

    ``mu1`` is the degraded accuracy at which the test's accountability is
    evaluated; it does not enter the decision.
    """

    mu0: float
    mu1: float
    cfg: NPConfig

    def __post_init__(self):
        if not 0 < self.mu1 < self.mu0 < 1:
            raise AccountabilityError(f"need 0 < mu1 < mu0 < 1, got mu0={self.mu0}, mu1={self.mu1}")

    @property
    def threshold(self) -> int:
        return np_binomial_test(self.mu0, self.cfg).threshold

    def run(self, batch: SampleBatch) -> tuple[bool, float]:
        if len(batch) != self.cfg.n_trials:
            raise AccountabilityError(
                f"NP node expects {self.cfg.n_trials} trials, got {len(batch)}"
            )
        if not all(v in (0.0, 1.0) for v in batch.values):
            raise AccountabilityError("NP evidence must be 0/1 trial outcomes")
        lam = self.threshold
        established = np_decide(int(round(batch.total)), lam) == 1
        return established, np_detection_probability(self.mu1, self.cfg.n_trials, lam)

    def sample_model(self, misinforms: bool):
        return BernoulliModel(self.mu1 if misinforms else self.mu0)


@dataclass(frozen=True)
class SupplierNode:
    id: str
    test: LRTTest | NPTest | None = None
    cost: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.cost < 0 or not math.isfinite(self.cost):
            raise AccountabilityError(f"investigation cost of {self.id} must be finite and >= 0")


@dataclass(frozen=True)
class InvestigationPolicy:
    epsilon: float
    budget: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise AccountabilityError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.budget < 0:
            raise AccountabilityError("budget must be >= 0")


@dataclass(frozen=True, eq=False)
class SupplyChainGraph:
    """Procurement DAG; an edge (buyer, supplier) points from buyer to supplier."""

    nodes: Mapping[str, SupplierNode]
    edges: tuple
    root: str

    def __post_init__(self):
        nodes = dict(self.nodes)
        edges = tuple((str(a), str(b)) for a, b in self.edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        if self.root not in nodes:
            raise ConfigError(f"root {self.root!r} is not a node")
        for a, b in edges:
            if a not in nodes or b not in nodes:
                raise ConfigError(f"edge {a!r} -> {b!r} references an unknown node")
        if any(b == self.root for _, b in edges):
            raise ConfigError("the root must not have an incoming edge")
        sorter = graphlib.TopologicalSorter({n: set() for n in nodes})
        for a, b in edges:
            sorter.add(b, a)
        try:
            tuple(sorter.static_order())
        except graphlib.CycleError as exc:
            raise ConfigError(f"supply chain graph has a cycle: {exc.args[1]}") from exc

    def children(self, node_id: str) -> list[str]:
        return sorted({b for a, b in self.edges if a == node_id})

    def parents(self, node_id: str) -> list[str]:
        return sorted({a for a, b in self.edges if b == node_id})


@dataclass(frozen=True)
class TraceEntry:
    node_id: str
    p_a: float | None
    verdict: str
    cumulative_cost: float


@dataclass
class InvestigationTrace:
    entries: list = field(default_factory=list)
    total_spent: float = 0.0

    def verdict(self, node_id: str) -> str:
        for e in self.entries:
            if e.node_id == node_id:
                return e.verdict
        raise KeyError(node_id)

    def by_verdict(self, verdict: str) -> list[str]:
        return [e.node_id for e in self.entries if e.verdict == verdict]

    @property
    def investigated(self) -> list[str]:
        return [e.node_id for e in self.entries if e.verdict in (ACCOUNTABLE, CLEARED)]

    def rows(self):
        return [(e.node_id, e.p_a, e.verdict, e.cumulative_cost) for e in self.entries]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def tier1_hypotheses(n: int) -> list[HypothesisVector]:
    """All 2^n joint hypotheses for n tier-1 suppliers, in index order."""
    if not 1 <= n <= MAX_TIER1:
        raise AccountabilityError(f"tier-1 supplier count must lie in [1, {MAX_TIER1}], got {n}")
    return [HypothesisVector.from_index(j, n) for j in range(2**n)]


def investigate_node(node: SupplierNode, evidence, policy: InvestigationPolicy) -> tuple[float, str]:
    """(P_A^i, verdict) for one node; verdict is accountable iff P_A^i > epsilon."""
    if isinstance(evidence, SampleBatch):
        if node.test is None:
            raise AccountabilityError(f"node {node.id!r} has no test configured")
        established, test_p_a = node.test.run(evidence)
        p_a = test_p_a if established else 0.0
    elif isinstance(evidence, (int, float)) and not isinstance(evidence, bool):
        p_a = float(evidence)
        if not 0.0 <= p_a <= 1.0:
            raise AccountabilityError(f"accountability of {node.id!r} must lie in [0,1]")
    else:
        raise AccountabilityError(f"no usable evidence for node {node.id!r}")
    return p_a, ACCOUNTABLE if p_a > policy.epsilon else CLEARED


def replace_or_investigate(remaining_budget: float, next_cost: float) -> str:
    """``"replace"`` when the remaining budget cannot exceed the next cost."""
    if remaining_budget < 0 or next_cost < 0:
        raise AccountabilityError("budget and cost must be >= 0")
    return "replace" if remaining_budget - next_cost <= 0 else "investigate"


def multistage_investigate(
    graph: SupplyChainGraph, evidence: Mapping[str, object], policy: InvestigationPolicy
) -> InvestigationTrace:
    """Breadth-first investigation from the root, pruning below cleared nodes.

    Children are visited in id order. A supplier is queued once as soon as
    any of its buyers is held accountable. Before each investigation the
    remaining budget is compared with the node's cost; when it cannot
    cover it the node is ``replaced`` and nothing below it is visited.
    Every node never reached is recorded as ``skipped`` (in id order).
    """
    trace = InvestigationTrace()
    spent = 0.0
    queue = deque([graph.root])
    queued = {graph.root}
    while queue:
        nid = queue.popleft()
        node = graph.nodes[nid]
        if replace_or_investigate(policy.budget - spent, node.cost) == "replace":
            trace.entries.append(TraceEntry(nid, None, REPLACED, spent))
            continue
        if nid not in evidence:
            raise AccountabilityError(f"no evidence supplied for node {nid!r}")
        spent += node.cost
        p_a, verdict = investigate_node(node, evidence[nid], policy)
        trace.entries.append(TraceEntry(nid, p_a, verdict, spent))
        if verdict == ACCOUNTABLE:
            for child in graph.children(nid):
                if child not in queued:
                    queued.add(child)
                    queue.append(child)
    for nid in sorted(set(graph.nodes) - queued):
        trace.entries.append(TraceEntry(nid, None, SKIPPED, spent))
    trace.total_spent = spent
    return trace


def fuse_tier1(verdicts) -> int:
    """Joint hypothesis index from per-supplier verdicts (supplier 1 first)."""
    return decentralized_fuse(tuple(int(v == ACCOUNTABLE) for v in verdicts))


def write_trace_csv(trace: InvestigationTrace, path):
    return write_csv(path, ("node_id", "p_a", "verdict", "cumulative_cost"), trace.rows())


# ---------------------------------------------------------------------------
# loading from a structured document
# ---------------------------------------------------------------------------

def _build_test(spec: Mapping, node_id: str):
    if spec is None:
        return None
    kind = spec.get("kind")
    try:
        if kind == "np":
            return NPTest(
                float(spec["mu0"]),
                float(spec["mu1"]),
                NPConfig(float(spec["alpha"]), int(spec["n_trials"])),
            )
        prior = Reputation.binary(float(spec.get("pi0", 0.5)))
        if kind == "gaussian":
            var = float(spec["sigma"]) ** 2
            pair = HypothesisPair(
                GaussianModel(float(spec["mean_truthful"]), var),
                GaussianModel(float(spec["mean_misinformation"]), var),
            )
            return LRTTest(pair, prior)
        if kind == "bernoulli":
            pair = HypothesisPair(
                BernoulliModel(float(spec["p_truthful"])),
                BernoulliModel(float(spec["p_misinformation"])),
            )
            return LRTTest(pair, prior)
    except KeyError as exc:
        raise ConfigError(f"node {node_id!r}: test is missing parameter {exc.args[0]!r}") from exc
    raise ConfigError(f"node {node_id!r}: unknown test kind {kind!r}")


def load_graph(doc: Mapping) -> tuple[SupplyChainGraph, InvestigationPolicy]:
    """Graph and policy from a mapping shaped like::

        policy: {epsilon: 0.5, budget: 100}
        nodes:
          - {id: lock, cost: 10, test: {...}}
          - {id: face, parents: [lock], cost: 20, test: {kind: np, mu0: 0.9, mu1: 0.7, alpha: 0.05, n_trials: 20}}
    """
    try:
        pol = doc["policy"]
        policy = InvestigationPolicy(float(pol["epsilon"]), float(pol["budget"]))
        raw_nodes = doc["nodes"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"chain document is missing {exc}") from exc
    nodes, edges, roots = {}, [], []
    for item in raw_nodes:
        nid = str(item["id"])
        if nid in nodes:
            raise ConfigError(f"duplicate node id {nid!r}")
        nodes[nid] = SupplierNode(
            nid, _build_test(item.get("test"), nid), float(item.get("cost", 0.0)), str(item.get("label", ""))
        )
        parents = item.get("parents") or []
        if not parents:
            roots.append(nid)
        edges.extend((str(p), nid) for p in parents)
    if len(roots) != 1:
        raise ConfigError(f"exactly one node must have no parents, found {roots}")
    return SupplyChainGraph(nodes, tuple(edges), roots[0]), policy
