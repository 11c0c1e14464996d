"""Scenario runner: YAML config in, CSV artifacts plus a hash manifest out.

Config layout::

    kind: platoon            # aroc | platoon | chain | contract | insure | tradeoff
    seed: 7                  # required for stochastic kinds
    output_dir: out/platoon
    parameters: {...}        # kind-specific, see ``supplyacct kinds``

Grids may be given as a list or as ``{start, stop, num, log: false}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import aroc, chain, econ, platoon
from .core import SampleBatch, check_seed, substream, write_csv
from .errors import AccountabilityError, ConfigError, DivergenceError, RiccatiError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_DIVERGENCE = 4


@dataclass(frozen=True)
class KindInfo:
    required: tuple
    optional: tuple
    outputs: dict  # file name pattern -> CSV header
    stochastic: bool = False


KINDS = {
    "aroc": KindInfo(
        required=("d_values",),
        optional=("grid_size",),
        outputs={"aroc_d<d>.csv": "tau,p_u,p_a", "auc.csv": "d,auc,lower,upper"},
    ),
    "platoon": KindInfo(
        required=("sensor_bias", "noise_sigma"),
        optional=("tau", "n_grid", "n_tests", "tau_grid", "mc_trials"),
        outputs={"p_vs_n.csv": "n,p_a,p_u", "p_vs_tau.csv": "tau,p_a,p_u", "monte_carlo.csv": "n,p_a,p_u,se_a,se_u"},
        stochastic=True,
    ),
    "chain": KindInfo(
        required=("policy", "nodes"),
        optional=(),
        outputs={"trace.csv": "node_id,p_a,verdict,cumulative_cost"},
        stochastic=True,
    ),
    "contract": KindInfo(
        required=("profit", "purchase", "accountability", "truth_max", "lie_max"),
        optional=("penalty", "resolution", "strict_ir"),
        outputs={"region_theta<t>.csv": "c_truth,c_lie,feasible", "constraints.csv": "constraint,satisfied,slack"},
    ),
    "insure": KindInfo(
        required=("risk", "performance_gap", "accountability", "premium"),
        optional=("delta_u_grid", "p_a_grid"),
        outputs={"premium.csv": "delta_u,c_i_star", "coverage.csv": "p_a,r_lo,r_hi"},
    ),
    "tradeoff": KindInfo(
        required=("cost_per_test", "performance_gap", "sensor_bias", "noise_sigma", "beta", "n_max"),
        optional=("tau", "procurement_cost"),
        outputs={"tradeoff.csv": "n,payoff"},
    ),
}


class ConfigParseError(Exception):
    """The config file could not be read or is not valid YAML."""


@dataclass(frozen=True)
class Scenario:
    kind: str
    parameters: dict
    seed: int | None
    output_dir: Path
    raw: dict = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    """Parse a YAML document; any read or syntax problem is a ``ConfigParseError``."""
    try:
        text = Path(path).read_text()
        doc = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigParseError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise ConfigParseError("config must be a mapping at the top level")
    return doc


def validate(doc: dict, seed: int | None = None, out: str | None = None) -> Scenario:
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"field 'kind': unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    info = KINDS[kind]
    params = doc.get("parameters") or {}
    if not isinstance(params, dict):
        raise ConfigError("field 'parameters' must be a mapping")
    missing = [k for k in info.required if k not in params]
    if missing:
        raise ConfigError(f"field 'parameters.{missing[0]}' is required for kind {kind!r}")
    unknown = sorted(set(params) - set(info.required) - set(info.optional))
    if unknown:
        raise ConfigError(f"field 'parameters.{unknown[0]}' is not recognised for kind {kind!r}")
    if seed is None:
        seed = doc.get("seed")
    if seed is not None:
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"field 'seed' must be an unsigned 64-bit integer, got {seed!r}")
        check_seed(seed)
    elif info.stochastic:
        raise ConfigError(f"field 'seed' is required for stochastic kind {kind!r}")
    output_dir = out if out is not None else doc.get("output_dir")
    if not output_dir:
        raise ConfigError("field 'output_dir' is required")
    return Scenario(kind, params, seed, Path(output_dir), doc)


def grid(spec, name: str, integer: bool = False) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"field '{name}' needs start, stop and num") from exc
        if num < 1:
            raise ConfigError(f"field '{name}.num' must be >= 1")
        if spec.get("log", False):
            if start <= 0 or stop <= 0:
                raise ConfigError(f"field '{name}': log grid bounds must be positive")
            values = np.logspace(math.log10(start), math.log10(stop), num)
        else:
            values = np.linspace(start, stop, num)
    elif isinstance(spec, (list, tuple)) and spec:
        values = np.asarray(spec, dtype=float)
    else:
        raise ConfigError(f"field '{name}' must be a non-empty list or a start/stop/num mapping")
    if integer:
        rounded = np.round(values)
        if np.any(np.abs(rounded - values) > 1e-9):
            raise ConfigError(f"field '{name}' must hold integers")
        return np.unique(rounded.astype(int))
    return values


def _risk(spec) -> econ.RiskModel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("field 'parameters.risk' needs a 'kind'")
    kind = spec["kind"]
    if kind == "neutral":
        return econ.RiskModel.neutral()
    if kind == "cara":
        return econ.RiskModel.cara(float(spec["beta"]))
    if kind == "prospect":
        return econ.RiskModel.prospect(
            float(spec.get("loss_aversion", 2.25)), float(spec.get("beta", 0.88)), float(spec.get("zeta", 0.69))
        )
    raise ConfigError(f"field 'parameters.risk.kind': unknown risk model {kind!r}")


# ---------------------------------------------------------------------------
# kind runners; each returns the written paths
# ---------------------------------------------------------------------------

def _run_aroc(p, seed, out: Path) -> list[Path]:
    grid_size = int(p.get("grid_size", 201))
    paths, rows = [], []
    for d in grid(p["d_values"], "parameters.d_values"):
        curve = aroc.aroc_curve_gaussian(float(d), grid_size)
        paths.append(aroc.write_curve_csv(curve, out / f"aroc_d{d:g}.csv"))
        lo, hi = aroc.gaussian_auc_bounds(float(d))
        rows.append((float(d), aroc.auc_numeric(curve), lo, hi))
    paths.append(write_csv(out / "auc.csv", ("d", "auc", "lower", "upper"), rows))
    return paths


def _run_platoon(p, seed, out: Path) -> list[Path]:
    e_d, sigma = float(p["sensor_bias"]), float(p["noise_sigma"])
    tau = float(p.get("tau", 1.0))
    n_tests = int(p.get("n_tests", 30))
    n_grid = grid(p.get("n_grid", {"start": 1, "stop": 100, "num": 100}), "parameters.n_grid", integer=True)
    tau_grid = grid(
        p.get("tau_grid", {"start": 0.01, "stop": 100, "num": 100, "log": True}), "parameters.tau_grid"
    )
    paths = [
        platoon.write_n_table(platoon.accountability_vs_n(e_d, sigma, tau, n_grid), out / "p_vs_n.csv"),
        platoon.write_tau_table(platoon.accountability_vs_tau(e_d, sigma, n_tests, tau_grid), out / "p_vs_tau.csv"),
    ]
    trials = int(p.get("mc_trials", 0))
    if trials:
        mc = platoon.monte_carlo_accountability(platoon.GaussianScenario(e_d, sigma, n_tests, tau), trials, seed)
        paths.append(
            write_csv(out / "monte_carlo.csv", ("n", "p_a", "p_u", "se_a", "se_u"),
                      [(n_tests, mc.p_a, mc.p_u, mc.se_a, mc.se_u)])
        )
    return paths


def _chain_evidence(graph: chain.SupplyChainGraph, raw_nodes, seed: int) -> dict:
    evidence = {}
    for index, item in enumerate(raw_nodes):
        nid = str(item["id"])
        ev = item.get("evidence")
        if ev is None:
            continue
        if isinstance(ev, (int, float)) and not isinstance(ev, bool):
            evidence[nid] = float(ev)
        elif isinstance(ev, dict) and "observations" in ev:
            evidence[nid] = SampleBatch(ev["observations"])
        elif isinstance(ev, dict) and "simulate" in ev:
            test = graph.nodes[nid].test
            if test is None:
                raise ConfigError(f"field 'nodes[{index}].evidence': simulated evidence needs a test")
            if ev["simulate"] not in ("truthful", "misinformation"):
                raise ConfigError(f"field 'nodes[{index}].evidence.simulate' must be truthful or misinformation")
            n = int(ev.get("n", getattr(getattr(test, "cfg", None), "n_trials", 1)))
            model = test.sample_model(ev["simulate"] == "misinformation")
            evidence[nid] = SampleBatch(model.draw(substream(seed, index), n), seed=seed)
        else:
            raise ConfigError(f"field 'nodes[{index}].evidence' must be a number, observations or simulate")
    return evidence


def _run_chain(p, seed, out: Path) -> list[Path]:
    if not isinstance(p["nodes"], list):
        raise ConfigError("field 'parameters.nodes' must be a list")
    graph, policy = chain.load_graph(p)
    evidence = _chain_evidence(graph, p["nodes"], seed)
    trace = chain.multistage_investigate(graph, evidence, policy)
    return [chain.write_trace_csv(trace, out / "trace.csv")]


def _run_contract(p, seed, out: Path) -> list[Path]:
    penalty = p.get("penalty", [[0.0, 0.0], [0.0, 0.0]])
    c = econ.ContractInstance(p["profit"], penalty, p["purchase"], p["accountability"])
    strict = bool(p.get("strict_ir", False))
    res = int(p.get("resolution", 401))
    paths = []
    for theta in (0, 1):
        region = econ.feasible_penalty_region(c, theta, float(p["truth_max"]), float(p["lie_max"]), res, strict)
        paths.append(econ.write_region_csv(region, out / f"region_theta{theta}.csv"))
    if "penalty" in p:
        report = econ.check_ic_ir(c, strict)
        rows = [(name, ok, slack) for name, (ok, slack) in report.constraints.items()]
        paths.append(write_csv(out / "constraints.csv", ("constraint", "satisfied", "slack"), rows))
    return paths


def _run_insure(p, seed, out: Path) -> list[Path]:
    rm = _risk(p["risk"])
    gap, p_a, premium = float(p["performance_gap"]), float(p["accountability"]), float(p["premium"])
    du = grid(p.get("delta_u_grid", {"start": 0.5, "stop": 10, "num": 20}), "parameters.delta_u_grid")
    pa = grid(p.get("p_a_grid", {"start": 0.0, "stop": 0.95, "num": 20}), "parameters.p_a_grid")
    return [
        econ.write_premium_csv(econ.premium_curve(du, p_a, rm), out / "premium.csv"),
        econ.write_coverage_csv(econ.coverage_curve(pa, premium, gap, rm), out / "coverage.csv"),
    ]


def _run_tradeoff(p, seed, out: Path) -> list[Path]:
    be = econ.BuyerEconomics(float(p["performance_gap"]), 0.0, float(p.get("procurement_cost", 0.0)))
    result = econ.optimal_test_count(
        float(p["cost_per_test"]),
        be,
        float(p["sensor_bias"]),
        float(p["noise_sigma"]),
        float(p.get("tau", 1.0)),
        econ.RiskModel.cara(float(p["beta"])),
        int(p["n_max"]),
    )
    return [econ.write_tradeoff_csv(result, out / "tradeoff.csv")]


RUNNERS = {
    "aroc": _run_aroc,
    "platoon": _run_platoon,
    "chain": _run_chain,
    "contract": _run_contract,
    "insure": _run_insure,
    "tradeoff": _run_tradeoff,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(config_path, seed: int | None = None, out: str | None = None) -> list[Path]:
    """Run one scenario; returns the emitted CSV paths followed by the manifest."""
    sc = validate(load_config(config_path), seed, out)
    sc.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        paths = RUNNERS[sc.kind](sc.parameters, sc.seed, sc.output_dir)
    except AccountabilityError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for kind {sc.kind!r}: {exc}") from exc
    canonical = json.dumps(sc.parameters, sort_keys=True, separators=(",", ":"))
    manifest = {
        "kind": sc.kind,
        "seed": sc.seed,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "outputs": {p.name: _sha256(p) for p in paths},
    }
    mpath = sc.output_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return [*paths, mpath]


def list_kinds() -> str:
    lines = []
    for name, info in KINDS.items():
        lines.append(f"{name}{'  (stochastic: seed required)' if info.stochastic else ''}")
        lines.append(f"  required: {', '.join(info.required)}")
        if info.optional:
            lines.append(f"  optional: {', '.join(info.optional)}")
        for fname, header in info.outputs.items():
            lines.append(f"  -> {fname}: {header}")
    return "\n".join(lines)


def _u64(text: str) -> int:
    try:
        return check_seed(int(text))
    except (ValueError, AccountabilityError) as exc:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supplyacct", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")
    run.add_argument("--seed", type=_u64, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="override the output directory")
    sub.add_parser("kinds", help="list scenario kinds and their parameters")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "kinds":
        print(list_kinds())
        return EXIT_OK
    try:
        paths = run_scenario(args.config, args.seed, args.out)
    except ConfigParseError as exc:
        print(f"error: cannot parse {args.config}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DivergenceError, RiccatiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except AccountabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
