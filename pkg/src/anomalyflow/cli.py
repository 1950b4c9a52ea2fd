"""Command line entry point: ``anomalyflow run | audit | thresholds | inspect``.

Exit codes: 0 success, 1 flow breakdown or failed audit, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, render_config
from .flow import CrossCheckError, FlowBreakdown, FlowConfig, PhiSource, run
from .forms import balanced_residual
from .identities import NOT_APPLICABLE, audit, check_chern_weil_preservation
from .initial import make_metric
from .lattice import AXIS_NAMES, GridSpec
from .monitor import MonitorSettings, alpha_thresholds, gronwall_check, make_monitor, measure_bounds
from .snapshot import SnapshotError, read_snapshot, save_snapshot

EXIT_OK, EXIT_BREAKDOWN, EXIT_USAGE = 0, 1, 2


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg.grid.N, cfg.grid.active_axes, cfg.grid.periods)


def initial_metric(cfg: RunConfig):
    ini = cfg.initial
    if ini.kind == "snapshot":
        return read_snapshot(ini.path).state.g
    return make_metric(ini.kind, _grid(cfg), ini.amplitude, ini.axes, ini.decay)


def flow_config(cfg: RunConfig, g0) -> FlowConfig:
    f = cfg.flow
    if f.phi_source == "constant_form":
        phi = PhiSource("constant_form", coefficients=np.array(f.phi_coefficients).reshape(3, 3))
    elif f.phi_source == "chern_weil_background":
        ref = g0 if f.phi_reference == "initial" else read_snapshot(f.phi_reference).state.g
        phi = PhiSource("chern_weil_background", reference=ref)
    else:
        phi = PhiSource()
    return FlowConfig(
        alpha_prime=f.alpha_prime,
        phi_source=phi,
        dt_initial=f.dt_initial,
        dt_safety=f.dt_safety,
        t_max=f.t_max,
        rhs_mode=f.rhs_mode,
        cross_check_tol=f.cross_check_tol,
        max_retries=f.max_retries,
    )


def execute(cfg: RunConfig, out_dir: Path | None = None, quiet: bool = False) -> int:
    """Run a configured flow, writing CSVs, snapshots and figures; returns an exit code."""
    from .diagnostics import DiagnosticsWriter

    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(render_config(cfg), encoding="utf-8")
    g0 = initial_metric(cfg)
    fc = flow_config(cfg, g0)
    settings = MonitorSettings(cfg.monitor.p, cfg.monitor.a0, cfg.monitor.cadence, cfg.monitor.max_order)
    snap_dir = out / "snapshots"
    if cfg.output.emit_snapshots:
        snap_dir.mkdir(exist_ok=True)
    reports = []

    def say(msg: str) -> None:
        if not quiet:
            print(msg)

    with DiagnosticsWriter(out, plot_data=cfg.output.emit_plot_data) as writer:

        def on_sample(state, report):
            reports.append(report)
            writer.write_monitor(report)
            if cfg.output.emit_snapshots:
                save_snapshot(state, snap_dir / f"step_{state.step_count:06d}.afl", fc.alpha_prime)
            say(
                f"t={state.t:.6g} step={state.step_count} B={report.bounds.B:.6g} "
                f"C0={report.bounds.C0:.6g} certificate={report.certificate.verdict}"
            )

        code = EXIT_OK
        final = None
        try:
            result = run(g0, fc, cfg.monitor.cadence, make_monitor(fc.alpha_prime, settings), on_sample)
            final = result.final
        except FlowBreakdown as exc:
            final = exc.state
            loc = exc.location if exc.location is not None else ()
            print(f"breakdown: {exc} (location {loc})", file=sys.stderr)
            code = EXIT_BREAKDOWN
        except CrossCheckError as exc:
            print(f"cross-check failure: {exc}", file=sys.stderr)
            code = EXIT_BREAKDOWN

        if reports:
            steps = final.step_count if final is not None else 0
            entry = check_chern_weil_preservation([r.balanced_residual for r in reports], steps)
            writer.write_identity(entry)
            if len({r.t for r in reports}) == len(reports):
                for q in ("G1", "G"):
                    ser = [(r.t, r.shi.lp_integrals[(q, r.shi.p)]) for r in reports]
                    writer.write_gronwall(gronwall_check(ser, "fitted", q, cfg.monitor.p))
        if final is not None and cfg.output.emit_snapshots:
            save_snapshot(final, out / "final.afl", fc.alpha_prime)

    if cfg.output.emit_figures and cfg.output.emit_plot_data:
        from .plotting import plot_monitor

        plot_monitor(out)
    if final is not None:
        say(f"finished at t={final.t:.6g} after {final.step_count} steps; output in {out}")
    return code


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return execute(cfg, Path(args.output) if args.output else None, args.quiet)
    except (SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def cmd_audit(args) -> int:
    if args.snapshot:
        try:
            g = read_snapshot(args.snapshot).state.g
        except (OSError, SnapshotError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        label = Path(args.snapshot).name
    else:
        grid = GridSpec(args.N, args.axes)
        try:
            g = make_metric(args.generator, grid, args.amplitude, args.axes, args.decay)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        label = f"{args.generator}(N={args.N}, amplitude={args.amplitude:g}, decay={args.decay:g})"
    report = audit(g, label, seed=args.seed, tol=args.tol)
    print(f"metric: {label}")
    print(f"balanced residual: {balanced_residual(g):.3e}")
    for e in report.entries:
        res = "n/a" if e.status == NOT_APPLICABLE else f"{e.residual:.3e}"
        print(f"{e.name:<20s} {e.status:<15s} residual={res:<10s} tol={e.tolerance:g} {e.note}")
    if args.output:
        from .diagnostics import write_identity_report
        from .plotting import plot_identities

        path = write_identity_report(args.output, report.entries)
        plot_identities(report.entries, Path(args.output) / "identities.png")
        print(f"wrote {path}")
    return EXIT_OK if report.ok else EXIT_BREAKDOWN


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _show(x: Fraction | None) -> str:
    if x is None:
        return "inf"
    return f"{x}  (~{float(x):.6e})"


def cmd_thresholds(args) -> int:
    try:
        rep = alpha_thresholds(args.a0, args.B, args.C0, args.p, args.alpha_prime, args.Bmin, args.Bmax)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"a0={rep.a0} B={rep.B} C0={rep.C0} p={rep.p}")
    if rep.flat:
        print("flat regime: all thresholds vacuously satisfied")
    print(f"mu = {_show(rep.mu)}")
    print(f"mu' = {_show(rep.mu_prime)}")
    for e in rep.entries:
        tag = "" if e.applies else "  [not applicable at this p]"
        verdict = "" if e.satisfied is None else f"  satisfied={e.satisfied}"
        print(f"{e.name:<20s} alpha' < {e.formula:<50s} = {_show(e.bound)}{verdict}{tag}")
    if rep.alpha_prime is not None:
        print(f"alpha'*C0^2 = {_show(rep.pi1_value)}  vs Pi1 = {_show(rep.pi1_bound)}  ok={rep.pi1_ok}")
        print(f"alpha'*C0   = {_show(rep.pi2_value)}  vs Pi2 = {_show(rep.pi2_bound)}  ok={rep.pi2_ok}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        snap = read_snapshot(args.snapshot)
    except (OSError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    grid = snap.grid
    s = snap.state
    lam = s.g.eigenvalues()
    b = measure_bounds(s, max_order=0)
    print(f"format version: {snap.version}")
    print(f"N: {grid.points_per_axis}")
    print(f"active axes: {', '.join(AXIS_NAMES[a] for a in grid.active_axes) or '(none)'}")
    print(f"periods: {', '.join(f'{p:g}' for p in grid.periods)}")
    print(f"t: {snap.t!r}")
    print(f"alpha_prime: {snap.alpha_prime!r}")
    print(f"eigenvalues of g: min {lam[..., 0].min():.6g}, max {lam[..., -1].max():.6g}")
    print(f"B: {b.B:.6g}  C0: {b.C0:.6g}")
    print(f"balanced residual: {balanced_residual(s.g):.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anomalyflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate the flow described by a config file")
    p.add_argument("config")
    p.add_argument("--output", "-o", help="output directory (overrides [output] directory)")
    p.add_argument("--quiet", "-q", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("audit", help="identity audit on a snapshot or generated metric")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--snapshot")
    src.add_argument("--generator", choices=["flat", "conformal", "kahler_potential", "balanced_psi"])
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--axes", nargs="+", default=["x1"])
    p.add_argument("--amplitude", type=float, default=0.01)
    p.add_argument("--decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("thresholds", help="exact alpha' thresholds for given bounds")
    p.add_argument("--a0", type=_fraction, default=Fraction(1))
    p.add_argument("--B", type=_fraction, required=True)
    p.add_argument("--C0", type=_fraction, required=True)
    p.add_argument("--p", type=_fraction, default=Fraction(3))
    p.add_argument("--alpha-prime", dest="alpha_prime", type=_fraction)
    p.add_argument("--Bmin", type=_fraction)
    p.add_argument("--Bmax", type=_fraction)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("inspect", help="summarise a snapshot file")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
