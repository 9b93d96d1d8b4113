"""Command line entry point.

Exit codes: 0 on success, 2 for bad input, 3 when a solver did not converge
(results are still written and flagged).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .entropy import integrate
from .exceptions import InputError, IOFailure, MaxIterationsExceeded, NumericalError, TransportError
from .fixtures import two_channel_bumps
from .graph import complete_graph, grid_graph, layered_product, path_graph
from .imaging import load_image, render_frames
from .solver import SolverConfig
from .transport import assemble, mutation_flux_mass, solve
from .validation import check_gamma, check_n_t, frame_times
from .w1 import w1_action, w1_graph

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3

_GRAPH_VARIANTS = {"w2a": "asymmetric-graph", "w2a-hat": "symmetric-graph"}


def _common(p):
    p.add_argument("--tol", type=float, default=1e-6, help="feasibility tolerance")
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS/FFT threads")
    p.add_argument("--output-dir", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecot", description="Transport distances on graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist-graph", help="W2-type distance between two graph densities")
    p.add_argument("graph")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--variant", choices=["w2a", "w2a-hat", "w2a-max"], default="w2a-hat")
    p.add_argument("--nt", type=int, default=32)
    _common(p)

    p = sub.add_parser("w1", help="W1 distance as a min-cost flow")
    p.add_argument("graph")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--dual-check", action="store_true", help="verify the dual certificate")
    p.add_argument("--action-check", action="store_true", help="cross-check with the action form")
    p.add_argument("--nt", type=int, default=16)
    _common(p)

    p = sub.add_parser("interp-vector", help="vector-valued interpolation on a 1-D or 2-D grid")
    p.add_argument("mu", nargs="?", help="vector density CSV (omit for the built-in bump fixture)")
    p.add_argument("nu", nargs="?")
    p.add_argument("--shape", default=None, help="grid shape, e.g. 32 or 16,16")
    p.add_argument("--h", type=float, default=None, help="grid spacing (default 1/longest side)")
    p.add_argument("--cells", type=int, default=32, help="cells of the built-in fixture")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--nt", type=int, default=16)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--variant", choices=["symmetric", "asymmetric"], default="symmetric")
    p.add_argument("--mutation-graph", default="complete")
    _common(p)

    p = sub.add_parser("interp-image", help="interpolate two RGB PNG images")
    p.add_argument("image0")
    p.add_argument("image1")
    p.add_argument("--gamma", type=float, default=0.001)
    p.add_argument("--nt", type=int, default=16)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--variant", choices=["symmetric", "asymmetric"], default="symmetric")
    p.add_argument("--mutation-graph", default="complete")
    p.add_argument("--with-endpoints", action="store_true", help="also render t=0 and t=1")
    p.add_argument("--scaling", choices=["source", "max"], default="source",
                   help="source: brightness of the inputs; max: brightest frame pixel maps to 255")
    _common(p)

    p = sub.add_parser("entropy-flow", help="integrate the entropy gradient flow")
    p.add_argument("graph")
    p.add_argument("rho")
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=1000)
    _common(p)
    return parser


def _config(args) -> SolverConfig:
    return SolverConfig(feasibility_tol=args.tol, max_iters=args.max_iters, seed=args.seed,
                        threads=args.threads)


def _mutation_graph(spec: str, M: int):
    if spec == "complete":
        return complete_graph(M)
    if spec == "path":
        return path_graph(M)
    g = io.read_graph(spec)
    if g.n != M:
        raise InputError(f"mutation graph has {g.n} nodes, need {M}")
    return g


def _emit(obj, out_dir: Path | None, name: str):
    text = json.dumps(obj, indent=2, sort_keys=True)
    print(text)
    if out_dir is not None:
        io.write_json(obj, out_dir / name)


def _cmd_dist_graph(args):
    g = io.read_graph(args.graph)
    mu, nu = io.read_density(args.mu), io.read_density(args.nu)
    cfg, n_t = _config(args), check_n_t(args.nt)
    if args.variant == "w2a-max":
        runs = [solve(assemble("asymmetric-graph", g, a, b, n_t=n_t), cfg) for a, b in ((mu, nu), (nu, mu))]
        report, traj = max(runs, key=lambda r: r[0].value)
        out = report.to_dict()
        out.update(variant="w2a-max", forward=runs[0][0].value, reverse=runs[1][0].value)
        converged = all(r[0].converged for r in runs)
    else:
        report, traj = solve(assemble(_GRAPH_VARIANTS[args.variant], g, mu, nu, n_t=n_t), cfg)
        out, converged = report.to_dict(), report.converged
    if args.output_dir is not None:
        io.write_trajectory(traj, report, args.output_dir / "trajectory")
    _emit(out, args.output_dir, "report.json")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def _cmd_w1(args):
    g = io.read_graph(args.graph)
    mu, nu = io.read_density(args.mu), io.read_density(args.nu)
    cfg = _config(args)
    res = w1_graph(g, None, mu, nu, cfg)
    out = res.to_dict()
    ok = res.converged
    if args.dual_check:
        slack = np.abs(g.D.T @ res.potentials) - res.costs
        out["dual_check"] = {
            "max_constraint_excess": float(max(0.0, slack.max())),
            "flow_residual": float(np.abs(g.D @ res.flow - (nu - mu)).max()),
            "gap": res.gap,
            "passed": bool(slack.max() <= 1e-12 and res.gap <= 1e-8),
        }
        ok = ok and out["dual_check"]["passed"]
    if args.action_check:
        value, stats = w1_action(g, None, mu, nu, check_n_t(args.nt), cfg)
        rel = abs(value - res.value) / max(res.value, 1e-300)
        out["action_check"] = {"value": value, "relative_difference": rel,
                               "passed": bool(rel <= 1e-3), **stats}
        ok = ok and stats["converged"]
    out_dir = args.output_dir or Path(".")
    out["flow_file"] = str(io.write_density(res.flow, out_dir / "flow.csv"))
    _emit(out, args.output_dir, "w1.json")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _interp_outputs(args, report, traj, shape, channels, render_png, extra, scale=None):
    out_dir = args.output_dir or Path(".")
    times = list(frame_times(args.frames))
    if render_png and getattr(args, "with_endpoints", False):
        times = [0.0] + times + [1.0]
    files = render_frames(traj, shape, out_dir / "frames", times, channels=channels,
                          extra={"report": report.to_dict()}, png=render_png, scale=scale)
    io.write_trajectory(traj, report, out_dir / "trajectory", channels=channels, extra=extra)
    summary = report.to_dict()
    summary.update(extra)
    summary["frames"] = [p.name for p in files if p.suffix in (".png", ".csv")]
    summary["output_dir"] = str(out_dir)
    _emit(summary, args.output_dir, "summary.json")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _cmd_interp_vector(args):
    gamma, n_t = check_gamma(args.gamma), check_n_t(args.nt)
    if args.mu is None:
        if args.nu is not None:
            raise InputError("give both densities or neither")
        geom, mu, nu = two_channel_bumps(args.cells)
        shape = (args.cells,)
    else:
        if args.nu is None:
            raise InputError("missing second density")
        mu, nu = io.read_density(args.mu), io.read_density(args.nu)
        if mu.ndim != 2 or mu.shape != nu.shape:
            raise InputError("vector densities need matching 'channels=M' files")
        M, n = mu.shape
        shape = tuple(int(s) for s in args.shape.split(",")) if args.shape else (n,)
        if int(np.prod(shape)) != n:
            raise InputError(f"grid shape {shape} does not match {n} nodes")
        h = args.h or 1.0 / max(shape)
        geom = layered_product(grid_graph(shape, h), _mutation_graph(args.mutation_graph, M), M)
    problem = assemble(args.variant, geom, mu, nu, gamma, n_t)
    report, traj = solve(problem, _config(args))
    M = geom.M
    extra = {
        "mutation_flux_mass": mutation_flux_mass(traj, problem),
        "channel_mass_start": traj.channel_masses(M)[0].tolist(),
        "channel_mass_end": traj.channel_masses(M)[-1].tolist(),
    }
    return _interp_outputs(args, report, traj, shape, M, False, extra)


def _cmd_interp_image(args):
    gamma, n_t = check_gamma(args.gamma), check_n_t(args.nt)
    a, b = load_image(args.image0), load_image(args.image1)
    if a.shape != b.shape:
        raise InputError(f"image sizes differ: {a.shape} vs {b.shape}")
    shape = a.shape
    geom = layered_product(grid_graph(shape, 1.0 / max(shape)), _mutation_graph(args.mutation_graph, 3), 3)
    problem = assemble(args.variant, geom, a.values, b.values, gamma, n_t)
    report, traj = solve(problem, _config(args))
    extra = {"image_totals": [a.total, b.total], "shape": list(shape),
             "mutation_flux_mass": mutation_flux_mass(traj, problem)}
    scale = 2.0 / (a.total + b.total) if args.scaling == "source" else None
    return _interp_outputs(args, report, traj, shape, 3, True, extra, scale)


def _cmd_entropy_flow(args):
    g = io.read_graph(args.graph)
    rho = io.read_density(args.rho)
    states = integrate(g, rho, args.h, args.steps)
    out_dir = args.output_dir or Path(".")
    path = io.write_flow_trajectory(states, out_dir / "entropy_flow.csv")
    last = states[-1]
    _emit({"t": last.t, "entropy": last.entropy, "rho": last.rho.tolist(), "steps": len(states) - 1,
           "csv": str(path)}, args.output_dir, "entropy_flow.json")
    return EXIT_OK


_COMMANDS = {
    "dist-graph": _cmd_dist_graph,
    "w1": _cmd_w1,
    "interp-vector": _cmd_interp_vector,
    "interp-image": _cmd_interp_image,
    "entropy-flow": _cmd_entropy_flow,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads), warnings.catch_warnings():
            warnings.simplefilter("ignore", MaxIterationsExceeded)
            return _COMMANDS[args.command](args)
    except (InputError, IOFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
