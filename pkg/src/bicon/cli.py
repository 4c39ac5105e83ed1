"""Command-line front end.

    bicon run <scenario.toml>
    bicon estimate <graph> --eigen-index K --gain k
    bicon check <graph> --epsilon eps
    bicon analyze <graph>

Exit codes: 0 success, 1 domain/file error, 2 usage or malformed scenario.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import estimator, graph, sim, spectral
from .errors import BiconError, ConfigurationError

log = logging.getLogger("bicon")


def fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return f"{float(x):#.12g}"


def _load_graph(path, fmt_: str, radius: float, sigma: float) -> graph.WeightedGraph:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    if fmt_ == "auto":
        fmt_ = "edges"
        for line in path.read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                parts = line.replace(",", " ").split()
                # positions have float coordinates; edge lists start with two integers
                if len(parts) == 2 and not all(p.lstrip("-").isdigit() for p in parts):
                    fmt_ = "positions"
                break
    if fmt_ == "positions":
        return graph.build_adjacency(graph.read_positions(path), graph.CommModel(radius, sigma))
    return graph.read_edge_list(path)


def _out_dir(args, name: str) -> Path:
    out = Path(args.out) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    path = Path(args.scenario)
    if not path.is_file():
        print(f"error: no such file: {path}", file=sys.stderr)
        return 1
    try:
        config = sim.load_scenario(path)
    except ConfigurationError as exc:
        print(f"error: malformed scenario: {exc}", file=sys.stderr)
        return 2
    ctrl = sim.ControllerLog()
    log_, traj = sim.run(config, ctrl)
    summary = sim.write_run(_out_dir(args, path.stem), config, log_, traj, ctrl)
    print(f"biconnected: {fmt(summary['final_biconnected'])}, connected: {fmt(summary['final_connected'])}, "
          f"λ₂={fmt(summary['final_lambda2'])}, λ₃={fmt(summary['final_lambda3'])}, "
          f"connectivity_lost_at={fmt(summary['connectivity_lost_at'])}, "
          f"biconnectivity_achieved_at={fmt(summary['biconnectivity_achieved_at'])}")
    return 0


def cmd_estimate(args) -> int:
    g = _load_graph(args.graph, args.format, args.radius, args.sigma)
    L = graph.laplacian(g)
    lam, _ = spectral.kth_eigenpair(L, args.eigen_index)
    seed = int(os.environ.get("BICON_SEED", args.seed))
    base = L
    if estimator.has_eigenvalue_ties(L):
        g = estimator.break_ties(g, seed)
        base = graph.laplacian(g)
        lam, _ = spectral.kth_eigenpair(base, args.eigen_index)
    _, ref = spectral.kth_eigenpair(base, args.eigen_index)
    sl = estimator.build_shifted(base, lam)
    init = estimator.initial_state(g.n, ref, args.gain, seed=seed)
    report = estimator.integrate(init, sl, g, args.duration, record_trajectory=args.trajectory)
    out = _out_dir(args, Path(args.graph).stem + f"-estimate-k{args.eigen_index}")
    vec = report.consensus_vector()
    result = {
        "eigen_index": args.eigen_index, "eigenvalue": lam, "gain": args.gain, "converged": report.converged,
        "max_angle": report.max_angle, "time_to_threshold": report.time_to_threshold, "t": report.t,
        "vector": vec.tolist(), "reference": estimator.normalize_sign(report.reference).tolist(),
    }
    (out / "estimate.json").write_text(json.dumps(result, indent=2) + "\n")
    if args.trajectory:
        estimator.write_trajectory_csv(report, out / "trajectory.csv")
    print(f"converged: {fmt(report.converged)}, λ{args.eigen_index}={fmt(lam)}, max_angle={fmt(report.max_angle)}, "
          f"t={fmt(report.t)}, v=[{', '.join(fmt(x) for x in vec)}]")
    return 0 if report.converged else 1


def cmd_check(args) -> int:
    g = _load_graph(args.graph, args.format, args.radius, args.sigma)
    verdicts = spectral.check_all_nodes(g, args.epsilon)
    out = _out_dir(args, Path(args.graph).stem + "-check")
    rows = [v.to_dict() for v in verdicts]
    (out / "verdicts.json").write_text(json.dumps(rows, indent=2) + "\n")
    with open(out / "verdicts.csv", "w") as fh:
        fh.write("focal,epsilon,lambda3,bound,passed,locally_biconnected\n")
        for v in verdicts:
            fh.write(f"{v.focal},{fmt(v.epsilon)},{fmt(v.lambda3)},{fmt(v.bound)},{fmt(v.passed)},"
                     f"{fmt(v.locally_biconnected)}\n")
    for v in verdicts:
        print(f"node {v.focal}: passed={fmt(v.passed)} locally_biconnected={fmt(v.locally_biconnected)} "
              f"λ₃={fmt(v.lambda3)} bound={fmt(v.bound)}")
    all_pass = all(v.passed for v in verdicts)
    print(f"all nodes pass: {fmt(all_pass)}, nodes passed: {sum(v.passed for v in verdicts)}/{g.n}")
    return 0


def cmd_analyze(args) -> int:
    g = _load_graph(args.graph, args.format, args.radius, args.sigma)
    status = graph.biconnectivity_status(g)
    connected = status not in ("disconnected",)
    cut = sorted(graph.articulation_points(g)) if connected else []
    vals = spectral.eigendecompose(graph.laplacian(g)).values
    out = _out_dir(args, Path(args.graph).stem + "-analyze")
    graph.write_edge_list(g, out / "graph.edges")
    result = {
        "n": g.n, "status": status, "connected": connected, "articulation_points": cut,
        "spectrum": vals.tolist(),
    }
    (out / "analysis.json").write_text(json.dumps(result, indent=2) + "\n")
    lam2 = vals[1] if g.n > 1 else None
    lam3 = vals[2] if g.n > 2 else None
    print(f"biconnected: {fmt(status == 'biconnected')}, status: {status}, articulation_points: {cut}, "
          f"λ₂={fmt(lam2)}, λ₃={fmt(lam3)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicon", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def graph_args(p):
        p.add_argument("graph", help="edge list ('i j weight') or position list ('x y')")
        p.add_argument("--format", choices=("auto", "edges", "positions"), default="auto")
        p.add_argument("--radius", type=float, default=0.5, help="R-disk radius for position lists")
        p.add_argument("--sigma", type=float, default=0.125, help="Gaussian scale for position lists")
        p.add_argument("--out", default="out")

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("estimate", help="run the eigenvector estimator on a static graph")
    graph_args(p)
    p.add_argument("--eigen-index", type=int, required=True, help="1-based index of the target eigenvalue")
    p.add_argument("--gain", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--trajectory", action="store_true", help="also write the per-step trajectory CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check", help="per-node spectral biconnectivity check")
    graph_args(p)
    p.add_argument("--epsilon", type=float, default=spectral.DEFAULT_EPSILON)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="articulation points and Laplacian spectrum")
    graph_args(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BiconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
