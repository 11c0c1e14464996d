"""Truck-platooning case study.

Gap dynamics under a constant time-gap spacing policy, LQR design,
closed-loop simulation with a truthful or biased ranging sensor, and the
closed-form / Monte Carlo accountability of the sensor supplier.

Labels follow the case study: H0 is misinformation (sensor biased by
``e_d``, final control error ~ N(-e_d, sigma^2)) and H1 is truthful
(final control error ~ N(0, sigma^2)). The reputation ratio is
``tau = pi_0 / pi_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import block_sizes, substream, write_csv
from .errors import AccountabilityError, DegenerateScenarioError, DivergenceError, RiccatiError
from .hypotest import TestOutcome, accountability_gaussian

RICCATI_TOL = 1e-9
DIVERGENCE_LIMIT = 1e6
MC_BLOCK = 8192


@dataclass(frozen=True)
class PlatoonModel:
    t_gap: float = 1.5
    lead_speed: float = 20.0
    w1: float = 1.0
    w2: float = 1.0
    noise_sigma: float = 2.0
    sensor_bias: float = 2.0

    def __post_init__(self):
        if not self.t_gap > 0:
            raise AccountabilityError(f"t_gap must be positive, got {self.t_gap}")
        if not self.noise_sigma > 0:
            raise AccountabilityError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.w1 < 0 or self.w2 < 0 or self.w1 + self.w2 <= 0:
            raise AccountabilityError("state weights must be >= 0 and not both zero")
        if self.sensor_bias < 0:
            raise AccountabilityError("sensor_bias must be >= 0")

    @property
    def A(self):
        return np.array([[0.0, 1.0], [0.0, 0.0]])

    @property
    def B(self):
        return np.array([[-self.t_gap], [-1.0]])

    @property
    def C(self):
        return np.array([[1.0, 0.0]])

    @property
    def Q(self):
        return np.diag([self.w1, self.w2])

    @property
    def R(self):
        return np.array([[1.0]])

    def desired_gap(self, host_speed: float | None = None) -> float:
        """Constant time-gap spacing L = v_h * t_gap."""
        return (self.lead_speed if host_speed is None else host_speed) * self.t_gap


@dataclass(frozen=True, eq=False)
class LqrSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    closed_loop_eigs: np.ndarray


def riccati_residual(P, A, B, Q, R) -> float:
    res = P @ A + A.T @ P + Q - P @ B @ np.linalg.solve(R, B.T @ P)
    return float(np.linalg.norm(res))


def solve_lqr(model: PlatoonModel, tol: float = RICCATI_TOL, max_refine: int = 20) -> LqrSolution:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Schur-based solve followed by Newton-Kleinman refinement until the
    residual norm drops below ``tol``.
    """
    A, B, Q, R = model.A, model.B, model.Q, model.R
    try:
        P = linalg.solve_continuous_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"Riccati solve failed: {exc}", math.inf) from exc
    P = 0.5 * (P + P.T)
    res = riccati_residual(P, A, B, Q, R)
    for _ in range(max_refine):
        if res <= tol:
            break
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        # Kleinman step: Acl^T P + P Acl = -(Q + K^T R K)
        P = linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        res = riccati_residual(P, A, B, Q, R)
    if res > tol:
        raise RiccatiError("Riccati iteration did not converge", res)
    K = np.linalg.solve(R, B.T @ P)
    eigs = np.linalg.eigvals(A - B @ K)
    if np.any(eigs.real >= 0):
        raise RiccatiError(f"closed loop not stable, eigenvalues {eigs}", res)
    return LqrSolution(P, K, res, eigs)


@dataclass(frozen=True, eq=False)
class AccRun:
    t: np.ndarray
    states: np.ndarray  # (steps+1, 2): gap error and relative speed
    control: np.ndarray
    final_error: float  # noisy final control error y(T)


def _rk4_closed_loop(model, K, x0, sensor_type, horizon, dt, keep_trajectory=True):
    """Fixed-step RK4 of x' = A x - B K (x + bias); x0 may be (2,) or (runs, 2).

    Returns (times, states, bias); ``states`` holds only the final state when
    ``keep_trajectory`` is false.
    """
    if dt <= 0:
        raise AccountabilityError("dt must be positive")
    if horizon < 10 * dt:
        raise AccountabilityError("horizon must cover at least 10 steps")
    steps = int(round(horizon / dt))
    BK = model.B @ K
    bias = np.array([model.sensor_bias if sensor_type == 0 else 0.0, 0.0])
    # closed loop is affine, x' = M x + c, so one RK4 step is exactly x <- T x + g
    M = model.A - BK
    c = -BK @ bias
    hM = dt * M
    eye = np.eye(2)
    T = eye + hM + hM @ hM / 2 + hM @ hM @ hM / 6 + hM @ hM @ hM @ hM / 24
    g = dt * (eye + hM / 2 + hM @ hM / 6 + hM @ hM @ hM / 24) @ c
    Tt = T.T

    x = np.array(x0, dtype=float)
    traj = [x.copy()]
    for _ in range(steps):
        x = x @ Tt + g
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_LIMIT:g}")
        if keep_trajectory:
            traj.append(x.copy())
    if not keep_trajectory:
        return np.array([steps * dt]), x[None, ...], bias
    return np.arange(steps + 1) * dt, np.array(traj), bias


def simulate_acc(
    model: PlatoonModel,
    sensor_type: int,
    horizon: float = 60.0,
    dt: float = 0.01,
    seed: int = 0,
    initial_state=(5.0, 0.0),
    noisy: bool = True,
    lqr: LqrSolution | None = None,
) -> AccRun:
    """One closed-loop run; the controller sees the gap through the sensor.

    Sensor type 1 reports the true gap, type 0 adds ``sensor_bias``. The
    output is the final control error plus N(0, sigma^2) measurement noise.
    """
    if sensor_type not in (0, 1):
        raise AccountabilityError(f"sensor type must be 0 or 1, got {sensor_type}")
    lqr = lqr or solve_lqr(model)
    t, states, bias = _rk4_closed_loop(model, lqr.K, initial_state, sensor_type, horizon, dt)
    control = -((states + bias) @ lqr.K.T)[:, 0]
    y = float(states[-1, 0])
    if noisy:
        y += model.noise_sigma * float(substream(seed).standard_normal())
    return AccRun(t, states, control, y)


def simulate_acc_batch(
    model: PlatoonModel,
    sensor_type: int,
    runs: int,
    seed: int,
    horizon: float = 60.0,
    dt: float = 0.01,
    initial_state=(5.0, 0.0),
    initial_spread: float = 0.0,
    lqr: LqrSolution | None = None,
) -> np.ndarray:
    """Noisy final control errors of ``runs`` independent closed-loop runs.

    Each run may start from its own gap error (``initial_spread`` is the
    standard deviation of the perturbation). Run ``i`` draws from substream
    ``(seed, i // MC_BLOCK)`` at a fixed offset, so output does not depend
    on how runs are scheduled.
    """
    if sensor_type not in (0, 1):
        raise AccountabilityError(f"sensor type must be 0 or 1, got {sensor_type}")
    if runs < 1:
        raise AccountabilityError("runs must be >= 1")
    lqr = lqr or solve_lqr(model)
    x0 = np.tile(np.asarray(initial_state, dtype=float), (runs, 1))
    noise = np.empty(runs)
    start = 0
    for b, size in enumerate(block_sizes(runs, MC_BLOCK)):
        rng = substream(seed, b)
        x0[start:start + size, 0] += initial_spread * rng.standard_normal(size)
        noise[start:start + size] = rng.standard_normal(size)
        start += size
    _, states, _ = _rk4_closed_loop(model, lqr.K, x0, sensor_type, horizon, dt, keep_trajectory=False)
    return states[-1, :, 0] + model.noise_sigma * noise


# ---------------------------------------------------------------------------
# accountability of the sensor supplier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianScenario:
    sensor_bias: float
    noise_sigma: float
    n_tests: int
    tau: float = 1.0

    def __post_init__(self):
        if self.n_tests < 1:
            raise AccountabilityError(f"n_tests must be >= 1, got {self.n_tests}")
        if not self.noise_sigma > 0:
            raise AccountabilityError("noise_sigma must be positive")
        if not self.tau > 0:
            raise AccountabilityError("tau must be positive")
        if self.sensor_bias < 0:
            raise AccountabilityError("sensor_bias must be >= 0")

    @property
    def d(self) -> float:
        return math.sqrt(self.n_tests) * self.sensor_bias / self.noise_sigma

    def outcome(self) -> TestOutcome:
        return accountability_gaussian(self.d, self.tau)


def closed_form_threshold(sc: GaussianScenario) -> float:
    """eta = e_d/2 + sigma^2 ln(tau) / (N e_d).

    ``eta`` is measured from the misinformation mean -e_d: the sample mean S
    establishes misinformation iff S + e_d < eta (see :func:`establishes_misinformation`).
    """
    if sc.sensor_bias == 0:
        raise DegenerateScenarioError("e_d = 0: truthful and biased sensors are indistinguishable")
    return sc.sensor_bias / 2 + sc.noise_sigma**2 * math.log(sc.tau) / (sc.n_tests * sc.sensor_bias)


def establishes_misinformation(sample_mean, sc: GaussianScenario):
    """Decision rule on the sample mean; vectorized over ``sample_mean``."""
    eta = closed_form_threshold(sc)
    return np.asarray(sample_mean) + sc.sensor_bias < eta


@dataclass(frozen=True)
class MonteCarloResult:
    p_a: float
    p_u: float
    se_a: float
    se_u: float
    trials: int


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def monte_carlo_accountability(
    sc: GaussianScenario,
    trials: int = 100_000,
    seed: int = 0,
    path: str = "analytic",
    model: PlatoonModel | None = None,
    horizon: float = 60.0,
    dt: float = 0.01,
) -> MonteCarloResult:
    """Empirical (P_A, P_U) of the sample-mean test.

    ``path="analytic"`` draws observation batches from N(-e_d, sigma^2) and
    N(0, sigma^2) directly; ``path="simulated"`` takes every observation from
    a full closed-loop run of :func:`simulate_acc_batch` with the matching
    sensor type. Hypothesis h in {0, 1} uses substreams ``(seed, h, block)``.
    """
    if trials < 1000:
        raise AccountabilityError("Monte Carlo needs at least 1000 trials")
    n = sc.n_tests
    rates = []
    for hyp in (0, 1):
        if path == "analytic":
            mean = -sc.sensor_bias if hyp == 0 else 0.0
            hits = 0
            for b, size in enumerate(block_sizes(trials, MC_BLOCK)):
                rng = substream(seed, hyp, b)
                obs = rng.normal(mean, sc.noise_sigma, size=(size, n))
                hits += int(np.count_nonzero(establishes_misinformation(obs.mean(axis=1), sc)))
        elif path == "simulated":
            plant = model or PlatoonModel(noise_sigma=sc.noise_sigma, sensor_bias=sc.sensor_bias)
            if plant.noise_sigma != sc.noise_sigma or plant.sensor_bias != sc.sensor_bias:
                raise AccountabilityError("platoon model and scenario disagree on sigma or e_d")
            seed_h = substream(seed, hyp).integers(0, 2**63)
            y = simulate_acc_batch(plant, hyp, trials * n, int(seed_h), horizon=horizon, dt=dt)
            hits = int(np.count_nonzero(establishes_misinformation(y.reshape(trials, n).mean(axis=1), sc)))
        else:
            raise AccountabilityError(f"unknown Monte Carlo path {path!r}")
        rates.append(hits / trials)
    p_a, p_u = rates
    return MonteCarloResult(p_a, p_u, _binomial_se(p_a, trials), _binomial_se(p_u, trials), trials)


def accountability_vs_n(sensor_bias: float, noise_sigma: float, tau: float, n_grid) -> list[tuple]:
    """Closed-form (N, P_A, P_U) rows over a grid of test counts."""
    n_grid = list(n_grid)
    if not n_grid:
        raise AccountabilityError("N grid is empty")
    rows = []
    for n in n_grid:
        out = GaussianScenario(sensor_bias, noise_sigma, int(n), tau).outcome()
        rows.append((int(n), out.accountability, out.wronged))
    return rows


def accountability_vs_tau(sensor_bias: float, noise_sigma: float, n_tests: int, tau_grid) -> list[tuple]:
    """Closed-form (tau, P_A, P_U) rows over a grid of reputation ratios."""
    tau_grid = list(tau_grid)
    if not tau_grid:
        raise AccountabilityError("tau grid is empty")
    rows = []
    for t in tau_grid:
        out = GaussianScenario(sensor_bias, noise_sigma, n_tests, float(t)).outcome()
        rows.append((float(t), out.accountability, out.wronged))
    return rows


def write_n_table(rows, path):
    return write_csv(path, ("n", "p_a", "p_u"), rows)


def write_tau_table(rows, path):
    return write_csv(path, ("tau", "p_a", "p_u"), rows)
