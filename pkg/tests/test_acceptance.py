"""Acceptance gate: one PASS/FAIL line per criterion, printed to the terminal."""

import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from supplyacct.aroc import aroc_curve_gaussian, auc_numeric, gaussian_auc_bounds, validate_aroc_properties
from supplyacct.chain import (
    ACCOUNTABLE,
    CLEARED,
    REPLACED,
    SKIPPED,
    InvestigationPolicy,
    SupplierNode,
    SupplyChainGraph,
    multistage_investigate,
)
from supplyacct.econ import (
    BuyerEconomics,
    ContractInstance,
    RiskModel,
    check_ic_ir,
    coverage_bounds,
    feasible_penalty_region,
    max_premium_full_coverage,
    optimal_test_count,
)
from supplyacct.hypotest import NPConfig, accountability_gaussian, np_binomial_test, q_function
from supplyacct.platoon import (
    GaussianScenario,
    PlatoonModel,
    accountability_vs_n,
    accountability_vs_tau,
    monte_carlo_accountability,
    riccati_residual,
    simulate_acc,
    simulate_acc_batch,
    solve_lqr,
)


@pytest.fixture
def report(capsys):
    def emit(number, title, checks):
        ok = all(v for _, v in checks)
        failed = [name for name, v in checks if not v]
        detail = "" if ok else f" (failed: {', '.join(failed)})"
        with capsys.disabled():
            print(f"\ncriterion {number} [{title}]: {'PASS' if ok else 'FAIL'}{detail}")
        assert ok, failed

    return emit


def binom_cdf(k, n, p):
    if k < 0:
        return 0.0
    return sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k + 1))


def test_criterion_1_closed_form(report):
    start = time.perf_counter()
    sc = GaussianScenario(sensor_bias=2, noise_sigma=2, n_tests=30, tau=1)
    out = sc.outcome()
    expected = 1 - float(q_function(math.sqrt(30) / 2))
    mc = monte_carlo_accountability(sc, trials=100_000, seed=20240101)
    elapsed = time.perf_counter() - start
    report(1, "closed-form accountability", [
        ("P_A = 1 - Q(sqrt(30)/2)", math.isclose(out.accountability, expected, abs_tol=1e-12)),
        ("P_A ~ 0.9969", abs(out.accountability - 0.9969) < 5e-5),
        ("P_U ~ 0.0031", abs(out.wronged - 0.0031) < 5e-5),
        ("MC P_A within 3 SE", abs(mc.p_a - out.accountability) <= 3 * mc.se_a),
        ("MC P_U within 3 SE", abs(mc.p_u - out.wronged) <= 3 * mc.se_u),
        ("runtime < 5 s", elapsed < 5),
    ])


def test_criterion_2_trends(report):
    n_rows = accountability_vs_n(2, 2, 1.0, range(1, 101))
    tau_rows = accountability_vs_tau(2, 2, 30, np.logspace(-2, 2, 100))
    report(2, "trends in N and tau", [
        ("P_A increasing in N", bool(np.all(np.diff([r[1] for r in n_rows]) > 0))),
        ("P_A nondecreasing in tau", bool(np.all(np.diff([r[1] for r in tau_rows]) >= 0))),
        ("P_U nondecreasing in tau", bool(np.all(np.diff([r[2] for r in tau_rows]) >= 0))),
        ("P_A rises over the tau grid", tau_rows[-1][1] > tau_rows[0][1]),
        ("P_U rises over the tau grid", tau_rows[-1][2] > tau_rows[0][2]),
    ])


def test_criterion_3_aroc(report):
    checks = []
    for d in (0.5, 1.0, 2.0, 4.0):
        curve = aroc_curve_gaussian(d, grid_size=1001)
        props = validate_aroc_properties(curve)
        lo, hi = gaussian_auc_bounds(d)
        auc = auc_numeric(curve)
        checks += [
            (f"d={d} endpoints", props.endpoints),
            (f"d={d} slope", props.slope),
            (f"d={d} concave", props.concave),
            (f"d={d} proper", props.proper),
            (f"d={d} AUC in bounds", lo <= auc <= hi),
        ]
    oracle, _ = integrate.quad(lambda x: stats.norm.sf(x - 2.0) * stats.norm.pdf(x), -np.inf, np.inf)
    auc2 = auc_numeric(aroc_curve_gaussian(2.0, grid_size=1001))
    checks += [
        ("d=2 AUC ~ 0.921", abs(auc2 - 0.921) <= 0.002),
        ("d=2 AUC vs quadrature", abs(auc2 - oracle) <= 0.002),
    ]
    report(3, "AROC properties and AUC", checks)


def test_criterion_4_lqr(report):
    model = PlatoonModel(noise_sigma=2.0, sensor_bias=2.0)
    sol = solve_lqr(model)
    residual = riccati_residual(sol.P, model.A, model.B, model.Q, model.R)
    y1 = simulate_acc(model, 1, horizon=60, noisy=False, lqr=sol).final_error
    y0 = simulate_acc(model, 0, horizon=60, noisy=False, lqr=sol).final_error
    noisy = simulate_acc_batch(model, 0, 10_000, seed=77, lqr=sol)
    ks = stats.kstest(noisy, "norm", args=(-2.0, 2.0))
    report(4, "LQR and closed-loop simulation", [
        ("Riccati residual <= 1e-9", residual <= 1e-9),
        ("theta=1 |y(T)| < 1e-3", abs(y1) < 1e-3),
        ("theta=0 y(T) within 1e-3 of -e_d", abs(y0 + 2.0) < 1e-3),
        ("KS vs N(-e_d, sigma^2) at 1%", ks.pvalue > 0.01),
    ])


def test_criterion_5_neyman_pearson(report):
    n, mu0, alpha = 20, 0.9, 0.05
    res = np_binomial_test(mu0, NPConfig(alpha, n))
    checks = [("achieved false alarm <= 0.05", res.false_alarm <= alpha)]
    for mu1 in (0.5, 0.6, 0.7):
        # thresholds t: hold accountable iff S < t; false alarm F0(t-1)
        feasible = [t for t in range(n + 2) if binom_cdf(t - 1, n, mu0) <= alpha]
        power = {t: binom_cdf(t - 1, n, mu1) for t in feasible}
        best = max(power.values())
        checks.append((f"mu1={mu1} quantile is sweep optimum", math.isclose(power[res.threshold], best, abs_tol=1e-15)))
    report(5, "Neyman-Pearson threshold", checks)


def _lock_graph():
    ids = ["lock", "face", "finger", "face_cam", "face_algo", "finger_sensor", "finger_algo"]
    nodes = {i: SupplierNode(i, cost=10.0) for i in ids}
    edges = [("lock", "face"), ("lock", "finger"), ("face", "face_cam"), ("face", "face_algo"),
             ("finger", "finger_sensor"), ("finger", "finger_algo")]
    return SupplyChainGraph(nodes, edges, "lock")


def _random_dag(rng):
    n = int(rng.integers(1, 15))
    edges = []
    for j in range(1, n):
        k = int(rng.integers(1, min(3, j) + 1))
        for p in rng.choice(j, size=k, replace=False):
            edges.append((f"n{int(p):02d}", f"n{j:02d}"))
    nodes = {f"n{i:02d}": SupplierNode(f"n{i:02d}", cost=float(rng.uniform(0, 40))) for i in range(n)}
    evidence = {f"n{i:02d}": float(rng.uniform()) for i in range(n)}
    policy = InvestigationPolicy(0.5, float(rng.uniform(0, 200)))
    return SupplyChainGraph(nodes, edges, "n00"), evidence, policy


def test_criterion_6_multistage(report):
    graph = _lock_graph()
    ev = {k: 0.9 for k in graph.nodes} | {"finger": 0.1}
    trace = multistage_investigate(graph, ev, InvestigationPolicy(0.5, 1000))
    subtree_skipped = (
        trace.verdict("finger") == CLEARED
        and trace.verdict("finger_sensor") == SKIPPED
        and trace.verdict("finger_algo") == SKIPPED
        and trace.verdict("face_algo") == ACCOUNTABLE
    )
    rng = np.random.default_rng(6)
    replace_rule = budget_ok = True
    for _ in range(200):
        g, evidence, policy = _random_dag(rng)
        t = multistage_investigate(g, evidence, policy)
        spent = 0.0
        for e in t.entries:
            cost = g.nodes[e.node_id].cost
            if e.verdict in (ACCOUNTABLE, CLEARED):
                replace_rule &= policy.budget - spent > cost
                spent += cost
            elif e.verdict == REPLACED:
                replace_rule &= policy.budget - spent <= cost
        budget_ok &= t.total_spent <= policy.budget and math.isclose(spent, t.total_spent)
    report(6, "multi-stage investigation", [
        ("cleared branch skips its subtree", subtree_skipped),
        ("replaced exactly when B - sum C <= C_next", replace_rule),
        ("trace cost <= B over 200 DAGs", budget_ok),
    ])


def test_criterion_7_contract(report):
    base = dict(profit=((200, 250), (200, 250)), purchase=(0.5, 0.8), accountability=(0.7, 0.3))
    accept = check_ic_ir(ContractInstance(penalty=((0, 500), (100, 0)), **base))
    ir = check_ic_ir(ContractInstance(penalty=((0, 900), (100, 0)), **base))
    ic = check_ic_ir(ContractInstance(penalty=((0, 0), (0, 0)), **base))
    region = feasible_penalty_region(ContractInstance(penalty=((0, 0), (0, 0)), **base), 0, 1000, 1000, 1001)
    cell = region.c_lie[1] - region.c_lie[0]
    lowest = region.boundary()[0][1]
    report(7, "contract feasibility", [
        ("accepts (0, 500, 0, 100)", accept.feasible),
        ("rejects C01=900 on IR", not ir.feasible and any(v.startswith("IR") for v in ir.violated)),
        ("rejects zero penalties on IC", not ic.feasible and any(v.startswith("IC") for v in ic.violated)),
        ("boundary crosses 416.7 within one cell", lowest is not None and abs(lowest - 416.6667) <= cell),
    ])


def test_criterion_8_insurance(report):
    pt = RiskModel.prospect(loss_aversion=2.25, beta=0.88, zeta=0.69)
    c_star = max_premium_full_coverage(BuyerEconomics(6, 0.8), pt)[1]
    grid = np.linspace(0.0, 0.99, 100)
    premiums = [max_premium_full_coverage(BuyerEconomics(6, float(p)), pt)[1] for p in grid]
    iv = coverage_bounds(2, BuyerEconomics(6, 0.8), pt)
    shifts = [coverage_bounds(2, BuyerEconomics(6, float(p)), pt) for p in np.linspace(0.5, 0.95, 20)]
    limit = 2.25 ** (1 / (1 - 0.88))
    below_crossover = all(
        max_premium_full_coverage(BuyerEconomics(float(du), 0.8), pt)[1] >= (0.2 * du) * (1 - 1e-12)
        for du in np.logspace(-3, math.log10(limit), 200)
    )
    report(8, "insurance design", [
        ("C_I* ~ 2.18", abs(c_star - 2.18) <= 0.01),
        ("C_I* strictly decreasing in P_A", bool(np.all(np.diff(premiums) < 0))),
        ("coverage interval ~ [0.66, 1]", abs(iv.r_lo - 0.66) <= 0.01 and iv.r_hi == 1.0),
        ("lower bound increasing in P_A", bool(np.all(np.diff([s.r_lo for s in shifts]) > 0))),
        ("upper bound nondecreasing in P_A", bool(np.all(np.diff([s.r_hi for s in shifts]) >= 0))),
        ("C_I* >= expected loss below the crossover", below_crossover),
    ])


def test_criterion_9_tradeoff(report):
    cara = RiskModel.cara(0.5)
    be = BuyerEconomics(6, 0.0, procurement_cost=1.0)
    n_max = 80
    phi = math.exp(0.5 * 6) / 0.5

    def sweep(c_n):
        values = [1.0 + phi + 0.0]
        for n in range(1, n_max + 1):
            p_a = accountability_gaussian(math.sqrt(n), 1.0).accountability
            values.append(1.0 + (1 - p_a) * phi + n * c_n)
        return int(np.argmin(values))

    rng = np.random.default_rng(9)
    costs = np.exp(rng.uniform(math.log(1e-3), math.log(5.0), 20))
    matches = all(optimal_test_count(float(c), be, 2, 2, 1.0, cara, n_max).n_star == sweep(float(c)) for c in costs)
    interior = any(0 < sweep(float(c)) < n_max for c in costs)
    report(9, "investigation vs insurance trade-off", [
        ("c_n = 0 gives N_max", optimal_test_count(0.0, be, 2, 2, 1.0, cara, n_max).n_star == n_max),
        ("large c_n gives 0", optimal_test_count(100.0, be, 2, 2, 1.0, cara, n_max).n_star == 0),
        ("20 random costs match the sweep", matches),
        ("some random costs give interior N*", interior),
    ])
