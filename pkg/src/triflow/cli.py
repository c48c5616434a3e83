"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 runtime failure (fold-over,
non-convergence, solver breakdown), 3 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .errors import (ConfigError, ConvergenceError, FoldOverError, MeshError, SolverError,
                     TriflowError)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("triflow")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(text=""):
    print(text, flush=True)


def cmd_simulate(args):
    from .cluster_mesh import build_reference_cluster, validate_mesh
    from .diagnostics_io import (append_series, append_timing, load_config,
                                 write_frame, write_resolved_config)
    from .nonlinear_stepper import fixed_point_step, init_state, record

    cfg = load_config(args.config)
    if args.output:
        cfg.output = args.output
    mesh = build_reference_cluster(cfg.cluster_spec())
    rep = validate_mesh(mesh)
    if not rep.ok:
        _out(str(rep))
        return EXIT_INVALID
    os.makedirs(cfg.output, exist_ok=True)
    write_resolved_config(cfg)
    series = os.path.join(cfg.output, "series.csv")
    timing = os.path.join(cfg.output, "timing.csv")
    for p in (series, timing):
        if os.path.exists(p):
            os.remove(p)
    st = init_state(mesh, cfg.physics(), cfg.weights)
    rec = record(st)
    append_series(rec, series)
    if cfg.frame_every:
        write_frame(st, os.path.join(cfg.output, "frame_00000.vtk"))
    first = rec
    try:
        for k in range(cfg.n_steps):
            r = fixed_point_step(st, full=cfg.full_iteration)
            rec = record(st, r)
            append_series(rec, series)
            append_timing(rec, timing)
            if cfg.frame_every and (k + 1) % cfg.frame_every == 0:
                write_frame(st, os.path.join(cfg.output, f"frame_{k + 1:05d}.vtk"))
    except (ConvergenceError, FoldOverError, SolverError) as exc:
        write_frame(st, os.path.join(cfg.output, "last_good.vtk"))
        _out(f"runtime failure at step {st.step + 1}: {exc}")
        return EXIT_RUNTIME
    write_frame(st, os.path.join(cfg.output, "final.vtk"))
    _out(f"steps: {st.step}  time: {st.time:.6g}  re-references: {st.rereferences}")
    _out(f"energy: {first.energy:.10g} -> {rec.energy:.10g}")
    _out(f"volumes: ({first.vol12:.10g}, {first.vol13:.10g}) -> ({rec.vol12:.10g}, {rec.vol13:.10g})")
    _out(f"angle error: {first.angle_error:.3e} -> {rec.angle_error:.3e}")
    _out(f"series: {series}")
    return EXIT_OK


def base_generator(name):
    """Unperturbed generator behind ``name``."""
    return {"perturbed-theta-network": "theta-network",
            "perturbed-double-bubble": "standard-double-bubble"}.get(name, name)


def _load_mesh_file(path):
    from .cluster_mesh import from_arrays, load_off_cluster

    if os.path.isdir(path):
        return load_off_cluster(path)
    with np.load(path) as z:
        data = [(z[f"X{i}"], z[f"E{i}"]) for i in range(3)]
        return from_arrays(int(z["dim"]), data, z["junction"])


def save_mesh(mesh, path):
    """Store a cluster as ``.npz`` (positions, elements, junction table)."""
    arrs = {f"X{i}": p.positions for i, p in enumerate(mesh.patches)}
    arrs.update({f"E{i}": p.elements for i, p in enumerate(mesh.patches)})
    np.savez(path, dim=mesh.dim, junction=mesh.junction.vids, **arrs)


def cmd_validate(args):
    from .cluster_mesh import build_reference_cluster, validate_mesh
    from .diagnostics_io import load_config
    from .graph_map import apply_graph, build_tangential_frame, perturbation_offsets
    from .verification import check_compatibility

    if args.target.endswith(".npz") or os.path.isdir(args.target):
        mesh = _load_mesh_file(args.target)
        gamma = tuple(args.gamma) if args.gamma else (1.0, 1.0, 1.0)
        ref, rho0 = mesh, [np.zeros(n) for n in mesh.sizes]
    else:
        cfg = load_config(args.target)
        gamma = cfg.gamma
        spec = cfg.cluster_spec()
        spec.generator = base_generator(spec.generator)
        ref = build_reference_cluster(spec)
        mesh = ref
        rho0 = [np.zeros(n) for n in ref.sizes]
        if cfg.generator.startswith("perturbed-"):
            rho0 = perturbation_offsets(ref, gamma, cfg.amplitude, cfg.seed,
                                        keep_junction=(ref.dim == 1), degree=cfg.degree)
            mesh = ref.with_positions(apply_graph(ref, build_tangential_frame(ref, gamma), rho0))
    rep = validate_mesh(mesh)
    _out(str(rep))
    if not rep.ok:
        return EXIT_INVALID
    gcc, acc = check_compatibility(ref, rho0, gamma)
    _out(str(gcc))
    _out(str(acc))
    if gcc.passed != acc.passed:
        _out("note: compatibility verdicts disagree")
    return EXIT_OK if gcc.passed and acc.passed else EXIT_INVALID


def cmd_linearize(args):
    from .cluster_mesh import build_reference_cluster
    from .diagnostics_io import load_config
    from .graph_map import smooth_admissible_perturbation
    from .verification import QUANTITIES, fd_check_linearization

    cfg = load_config(args.config)
    spec = cfg.cluster_spec()
    spec.generator = base_generator(spec.generator)
    mesh = build_reference_cluster(spec)
    rng = np.random.default_rng(cfg.seed)
    u = smooth_admissible_perturbation(mesh, cfg.gamma, rng, 1.0, degree=2)
    ok = True
    for which in QUANTITIES:
        tb = fd_check_linearization(which, mesh, u, gamma=cfg.gamma)
        _out(f"{which}: eps, |fd - formula|, |fd_k - fd_k+1|, order")
        for e, err, d, o in tb.rows():
            _out(f"  {e:10.3e}  {err:10.3e}  {d:10.3e}  {o:6.3f}")
        order = tb.asymptotic_order
        good = 1.7 <= order <= 2.3
        ok = ok and good
        _out(f"  observed order {order:.3f} {'pass' if good else 'fail'}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_lopatinskii(args):
    from .diagnostics_io import load_config
    from .verification import GAMMA_GRID, lopatinskii_sweep

    gammas = GAMMA_GRID
    if args.config:
        cfg = load_config(args.config)
        gammas = (tuple(cfg.gamma),) if not args.all else GAMMA_GRID + (tuple(cfg.gamma),)
    probes = lopatinskii_sweep(gammas)
    _out("gamma, lambda, |zeta|, min singular value")
    for p in probes:
        _out(f"  {p.gamma}  {p.lam!s:>8}  {p.zeta:5.2f}  {p.min_sv:.6e}")
    worst = min(p.min_sv for p in probes)
    _out(f"smallest singular value {worst:.6e} over {len(probes)} probes")
    return EXIT_OK if worst > 1e-6 else EXIT_INVALID


def cmd_energy(args):
    from .diagnostics_io import energy_report

    rep = energy_report(args.series, args.energy_tol, args.volume_tol)
    _out(str(rep))
    return EXIT_OK if rep.passed else EXIT_INVALID


def build_parser():
    p = _Parser(prog="triflow", description="Surface diffusion of triple-junction clusters.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("simulate", help="run the flow and write frames and series")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="override the output directory")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("validate", help="mesh invariants and compatibility reports")
    s.add_argument("target", help="config file, .npz mesh or directory of OFF patches")
    s.add_argument("--gamma", type=float, nargs=3, help="tensions for a .npz mesh")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("linearize-check", help="finite-difference linearization tables")
    s.add_argument("config")
    s.set_defaults(func=cmd_linearize)
    s = sub.add_parser("lopatinskii-check", help="boundary-condition probe sweep")
    s.add_argument("config", nargs="?")
    s.add_argument("--all", action="store_true", help="also sweep the built-in tension grid")
    s.set_defaults(func=cmd_lopatinskii)
    s = sub.add_parser("energy-report", help="monotonicity and conservation of a series")
    s.add_argument("series")
    s.add_argument("--energy-tol", type=float, default=1e-8)
    s.add_argument("--volume-tol", type=float, default=1e-2)
    s.set_defaults(func=cmd_energy)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    threads = os.environ.get("TRIFLOW_THREADS")
    if threads is not None and not (threads.isdigit() and int(threads) > 0):
        print(f"usage error: TRIFLOW_THREADS must be a positive integer, got {threads!r}",
              file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FoldOverError, ConvergenceError, SolverError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except MeshError as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TriflowError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
