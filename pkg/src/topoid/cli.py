"""Command-line pipelines.

Every subcommand reads a JSON experiment config (``--config``) and writes
its artifacts into the output directory. Exit codes: 0 success, 1 a rank or
residual test failed, 2 bad usage or configuration.

Example config::

    {
      "network": {"builtin": "oscillator_ring", "params": {"N": 10}},
      "input": {"seed": 0, "r": 40, "source": "data"},
      "noise": {"bound": 1e-5, "seed": 1, "distribution": "normal"},
      "solver": {"method": "vectorized", "r": 40},
      "gamma": 0.5,
      "weight_bound": 1.0,
      "output": "out"
    }
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graph, io
from .errors import ComputationError, RankDeficientS, UsageError
from .identifiability import (
    check_homogeneous_siso,
    check_identifiability_full_excitation,
    check_identifiability_general,
    construct_indistinguishable,
    is_homogeneous_siso,
)
from .lti import Network, closed_loop, markov_exact, simulate
from .markov import DataSet, design_pe_input, estimate_markov, perturb_markov
from .sylvester import (
    SolveReport,
    build_node_systems,
    build_system,
    robustness_bound,
    solve_blockwise,
    solve_least_squares,
    threshold_topology,
)

log = logging.getLogger("topoid")

BUILTINS = {
    "oscillator_ring": lambda p: graph.make_oscillator_ring(
        int(p.get("N", 10)), excite_all=bool(p.get("excite_all", False)), diffusive=bool(p.get("diffusive", True))
    ),
    "example12": lambda p: graph.make_example12(p.get("Q")),
    "integrator_network": lambda p: graph.make_integrator_network(p["Q"], p.get("R"), p.get("S")),
}

DEFAULT_EXTRACTION_RTOL = 1e-9


@dataclass
class NoiseModel:
    bound: float
    seed: int
    distribution: str = "normal"


@dataclass
class ExperimentConfig:
    network: dict
    input: dict = field(default_factory=dict)
    noise: NoiseModel | None = None
    solver: dict = field(default_factory=dict)
    gamma: float | None = None
    weight_bound: float | None = None
    output: str = "out"
    evaluate: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if "network" not in d:
            raise UsageError("config needs a 'network' section")
        src = d["network"]
        if ("builtin" in src) == ("path" in src):
            raise UsageError("network section needs exactly one of 'builtin' or 'path'")
        noise = None
        if d.get("noise"):
            nz = d["noise"]
            if "seed" not in nz:
                raise UsageError("noise model needs a seed")
            noise = NoiseModel(float(nz["bound"]), int(nz["seed"]), nz.get("distribution", "normal"))
        method = d.get("solver", {}).get("method", "vectorized")
        if method not in ("vectorized", "blockwise"):
            raise UsageError(f"unknown solver method {method!r}")
        return cls(
            network=src,
            input=dict(d.get("input", {})),
            noise=noise,
            solver=dict(d.get("solver", {})),
            gamma=d.get("gamma"),
            weight_bound=d.get("weight_bound"),
            output=d.get("output", "out"),
            evaluate=dict(d.get("evaluate", {})),
        )

    def build_network(self, base_dir: Path) -> Network:
        src = self.network
        if "path" in src:
            net = io.load_network(base_dir / src["path"])
        else:
            name = src["builtin"]
            if name not in BUILTINS:
                raise UsageError(f"unknown builtin network {name!r}; choose from {sorted(BUILTINS)}")
            try:
                net = BUILTINS[name](src.get("params", {}))
            except KeyError as exc:
                raise UsageError(f"builtin {name!r} needs parameter {exc}") from exc
        changes = {}
        for key in ("Q", "R", "S"):
            if key in src:
                val = src[key]
                changes[key] = np.zeros_like(getattr(net, key)) if val == "zero" else np.asarray(val, dtype=float)
        return net.replace(**changes) if changes else net

    def seed(self) -> int:
        if "seed" not in self.input:
            raise UsageError("input design needs a seed")
        return int(self.input["seed"])


def _design_input(cfg: ExperimentConfig, net: Network, base_dir: Path) -> np.ndarray:
    if cfg.input.get("trajectory"):
        u, _ = io.read_trajectory(base_dir / cfg.input["trajectory"])
        if u.shape[0] == 0:
            raise UsageError("input trajectory is empty")
        return u
    if "length" in cfg.input:
        T = int(cfg.input["length"])
        if T <= 0:
            raise UsageError("input length must be positive")
        return np.random.default_rng(cfg.seed()).standard_normal((T, net.m))
    if "r" not in cfg.input:
        raise UsageError("input design needs 'r' (or 'length' or 'trajectory')")
    return design_pe_input(net.m, net.n, int(cfg.input["r"]), cfg.seed())


def cmd_simulate(cfg: ExperimentConfig, out: Path, base_dir: Path) -> None:
    net = cfg.build_network(base_dir)
    u = _design_input(cfg, net, base_dir)
    y = simulate(closed_loop(net), None, u)
    io.write_trajectory(out / "trajectory.csv", u, y)
    io.save_network(net, out / "network.json")
    log.info("simulated %d samples of a %d-state network", u.shape[0], net.n)


def _measured_markov(cfg: ExperimentConfig, net: Network, base_dir: Path, out: Path):
    if "r" not in cfg.input:
        raise UsageError("input section needs 'r'")
    r = int(cfg.input["r"])
    if cfg.input.get("source", "data") == "exact":
        return markov_exact(net, r, use_S=True)
    path = cfg.input.get("trajectory")
    if path:
        u, y = io.read_trajectory(base_dir / path)
        if y.shape[1] == 0:
            y = simulate(closed_loop(net), None, u)
    else:
        u = _design_input(cfg, net, base_dir)
        y = simulate(closed_loop(net), None, u)
        io.write_trajectory(out / "trajectory.csv", u, y)
    return estimate_markov(DataSet(u, y), net.n, r)


def cmd_estimate_markov(cfg: ExperimentConfig, out: Path, base_dir: Path) -> None:
    net = cfg.build_network(base_dir)
    seq = _measured_markov(cfg, net, base_dir, out)
    io.dump_json(io.markov_to_dict(seq), out / "markov.json")


def check_report(net: Network) -> dict:
    verdicts = []
    overall = None
    if is_homogeneous_siso(net):
        v = check_homogeneous_siso(net)
        verdicts.append(v.to_dict())
        overall = v.identifiable
        if v.identifiable is False:
            try:
                Qbar = construct_indistinguishable(net)
            except UsageError:
                Qbar = None
            if Qbar is not None:
                verdicts[-1]["indistinguishable_Q"] = Qbar.tolist()
    try:
        v = check_identifiability_general(net)
        verdicts.append(v.to_dict())
        if overall is None:
            overall = v.identifiable
    except RankDeficientS as exc:
        verdicts.append({"method": "general", "identifiable": None, "skipped": str(exc)})
    v = check_identifiability_full_excitation(net)
    verdicts.append(v.to_dict())
    if overall is None:
        overall = v.identifiable
    return {"identifiable": overall, "verdicts": verdicts}


def cmd_check(cfg: ExperimentConfig, out: Path, base_dir: Path) -> None:
    net = cfg.build_network(base_dir)
    report = check_report(net)
    io.dump_json(report, out / "identifiability.json")
    log.info("identifiable: %s", report["identifiable"])


def identify(net: Network, markov, cfg: ExperimentConfig, parallel: bool = False) -> tuple[dict, graph.Topology]:
    """Noise injection, Sylvester solve, error bound and thresholding."""
    deltas = None
    if cfg.noise is not None:
        markov, deltas = perturb_markov(markov, cfg.noise.bound, cfg.noise.seed, cfg.noise.distribution)
    r = cfg.solver.get("r")
    full = build_system(net, markov, r)
    if cfg.solver.get("method", "vectorized") == "blockwise":
        report = solve_blockwise(build_node_systems(net, markov, r), parallel=parallel)
    else:
        report = solve_least_squares(full)
    r = full.r
    if deltas is not None and cfg.weight_bound is not None and report.unique:
        dinf = [np.linalg.norm(d, np.inf) for d in deltas[1 : r + 1]]
        dtinf = [np.linalg.norm(d.T, np.inf) for d in deltas[:r]]
        report.bound = robustness_bound(report, dinf, float(cfg.weight_bound), full.L_blocks, dtinf)
    doc = report.to_dict()
    doc["r"] = r
    if cfg.gamma is not None:
        bound = report.bound if report.bound is not None else float("inf")
        Q_thr, valid = threshold_topology(report.Q_hat, float(cfg.gamma), bound)
        doc["threshold"] = {"gamma": float(cfg.gamma), "valid": valid}
        topo = graph.extract_topology(Q_thr, net.m_sizes, net.p_sizes)
    else:
        tol = DEFAULT_EXTRACTION_RTOL * max(1.0, float(np.max(np.abs(report.Q_hat))))
        topo = graph.extract_topology(report.Q_hat, net.m_sizes, net.p_sizes, tol)
    return doc, topo


def cmd_identify(cfg: ExperimentConfig, out: Path, base_dir: Path, parallel: bool = False) -> None:
    net = cfg.build_network(base_dir)
    markov = _measured_markov(cfg, net, base_dir, out)
    io.dump_json(io.markov_to_dict(markov), out / "markov.json")
    doc, topo = identify(net, markov, cfg, parallel)
    io.dump_json(doc, out / "solve_report.json")
    (out / "topology.csv").write_text(topo.to_edge_csv())
    (out / "topology.json").write_text(topo.to_json() + "\n")
    log.info("recovered %d edges (unique=%s)", len(topo.edges), doc["unique"])


def evaluate(truth: Network, estimate: dict, gamma: float | None = None) -> tuple[dict, str]:
    """Metrics and heatmap rows comparing an estimated ``Q`` with the true network."""
    rep = SolveReport.from_dict(estimate)
    m_sizes = tuple(rep.m_sizes) or tuple(truth.m_sizes)
    p_sizes = tuple(rep.p_sizes) or tuple(truth.p_sizes)
    true_topo = graph.network_topology(truth)
    if gamma is not None:
        Q_est, _ = threshold_topology(rep.Q_hat, gamma, rep.bound if rep.bound is not None else float("inf"))
        est_topo = graph.extract_topology(Q_est, m_sizes, p_sizes)
    else:
        tol = DEFAULT_EXTRACTION_RTOL * max(1.0, float(np.max(np.abs(rep.Q_hat))))
        est_topo = graph.extract_topology(rep.Q_hat, m_sizes, p_sizes, tol)
    metrics = graph.compare(true_topo, est_topo)
    metrics["missing_edges"] = [list(e) for e in metrics["missing_edges"]]
    metrics["spurious_edges"] = [list(e) for e in metrics["spurious_edges"]]
    metrics["max_abs_error"] = float(np.max(np.abs(rep.Q_hat - truth.Q)))
    rows = ["row,col,true,estimate,abs_error"]
    for i in range(truth.Q.shape[0]):
        for j in range(truth.Q.shape[1]):
            t, e = float(truth.Q[i, j]), float(rep.Q_hat[i, j])
            rows.append(f"{i},{j},{t!r},{e!r},{abs(t - e)!r}")
    return metrics, "\n".join(rows) + "\n"


def noise_sweep(truth: Network, levels, seed: int, r: int, gamma: float | None, weight_bound: float) -> str:
    """Error and bound against noise level; one seed shared by all levels."""
    exact = markov_exact(truth, r, use_S=True)
    rows = ["level,alpha,bound,max_abs_error,missing,spurious,precision,recall"]
    for level in levels:
        cfg = ExperimentConfig(
            network={}, noise=NoiseModel(float(level), seed), solver={"r": r}, gamma=gamma, weight_bound=weight_bound
        )
        doc, topo = identify(truth, exact, cfg)
        Q_hat = np.asarray(doc["Q_hat"]["data"]).reshape(doc["Q_hat"]["shape"])
        cmp = graph.compare(graph.network_topology(truth), topo)
        rows.append(
            ",".join(
                [
                    repr(float(level)), repr(doc["alpha"]), repr(doc["bound"]),
                    repr(float(np.max(np.abs(Q_hat - truth.Q)))),
                    str(len(cmp["missing_edges"])), str(len(cmp["spurious_edges"])),
                    repr(cmp["precision"]), repr(cmp["recall"]),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def cmd_evaluate(cfg: ExperimentConfig, out: Path, base_dir: Path, truth_path=None, estimate_path=None) -> None:
    ev = cfg.evaluate
    truth_path = truth_path or ev.get("truth")
    estimate_path = estimate_path or ev.get("estimate")
    if truth_path is None:
        raise UsageError("evaluate needs a truth network (--truth or evaluate.truth)")
    truth = io.load_network(base_dir / truth_path)
    if estimate_path is not None:
        metrics, heat = evaluate(truth, io.load_json(base_dir / estimate_path), cfg.gamma)
        io.dump_json(metrics, out / "metrics.json")
        (out / "heatmap.csv").write_text(heat)
    sweep = ev.get("sweep")
    if sweep:
        if "seed" not in sweep:
            raise UsageError("noise sweep needs a seed")
        table = noise_sweep(
            truth, sweep.get("levels", [1e-5, 1e-4, 1e-3, 1e-2]), int(sweep["seed"]),
            int(sweep.get("r", 2 * truth.n - 1)), cfg.gamma, float(cfg.weight_bound or 1.0),
        )
        (out / "sweep.csv").write_text(table)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topoid", description="Network topology identifiability and identification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "estimate-markov", "check", "identify", "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "evaluate", type=Path)
        p.add_argument("--seed", type=int, help="override the input design seed")
        p.add_argument("--output", type=Path, help="output directory (overrides config)")
        p.add_argument("--parallel", action="store_true", help="solve row blocks concurrently")
        if name == "evaluate":
            p.add_argument("--truth", type=Path)
            p.add_argument("--estimate", type=Path)
            p.add_argument("--gamma", type=float, help="smallest nonzero weight magnitude; thresholds at gamma/2")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.config is not None:
            cfg = ExperimentConfig.from_dict(io.load_json(args.config))
            base_dir = args.config.resolve().parent
        else:
            cfg = ExperimentConfig(network={})
            base_dir = Path.cwd()
        if args.seed is not None:
            cfg.input["seed"] = args.seed
        if getattr(args, "gamma", None) is not None:
            cfg.gamma = args.gamma
        out = args.output or (base_dir / cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out, base_dir)
        elif args.command == "estimate-markov":
            cmd_estimate_markov(cfg, out, base_dir)
        elif args.command == "check":
            cmd_check(cfg, out, base_dir)
        elif args.command == "identify":
            cmd_identify(cfg, out, base_dir, args.parallel)
        else:
            cmd_evaluate(
                cfg, out, base_dir,
                args.truth.resolve() if args.truth else None,
                args.estimate.resolve() if args.estimate else None,
            )
    except UsageError as exc:
        print(f"topoid: error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"topoid: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
