"""Command line entry point: ``simulate``, ``oracle``, ``check`` and ``compare``.

Exit codes: 0 success, 1 usage or configuration error, 2 a hard-assert
check failed, 3 numerical abort (partial outputs are flushed first).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dsmc, grid_oracle
from ._version import __version__
from .config import ConfigError, RunConfig, parse_config
from .diagnostics import (
    BoundsReport,
    check_conservation,
    check_cooling_time,
    check_entropy_growth,
    check_gain_bounds,
    check_loss_bound,
    check_pointwise_growth,
    check_weak_identities,
    compare_series,
    default_planes,
    fit_haff,
    fit_maxwellian_envelope,
)
from .ensemble import default_probes, read_snapshot, write_snapshot
from .kinematics import make_restitution
from .series import TimeSeries

log = logging.getLogger("granular_hs")

EXIT_OK, EXIT_USAGE, EXIT_HARD_FAIL, EXIT_ABORT = 0, 1, 2, 3


def _time_tag(t: float) -> str:
    return f"{t:.6f}".replace(".", "p")


def _write_meta(out: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    meta = {"code_version": __version__, "config": cfg.to_dict()}
    meta.update(extra or {})
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _prepare(args) -> tuple[RunConfig, Path]:
    cfg = parse_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed: must be at least 0")
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out_dir if args.out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _simulate(cfg: RunConfig, out: Path) -> TimeSeries:
    """Run DSMC into ``out``; on abort the partial series is written before re-raising."""
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)

    def sink(e):
        write_snapshot(e, snap_dir / f"snapshot_t{_time_tag(e.time)}.csv", alpha=cfg.alpha, seed=cfg.seed)

    probes = default_probes(cfg.seed)
    try:
        res = dsmc.run(cfg, probes=probes, snapshot_sink=sink)
    except dsmc.NumericalAbort as exc:
        if exc.partial is not None and len(exc.partial):
            exc.partial.write(out)
        _write_meta(out, cfg, {"kind": "dsmc", "aborted": str(exc)})
        raise
    res.series.write(out)
    _write_meta(out, cfg, {"kind": "dsmc", "dt_effective": res.series.config["dt_effective"]})
    return res.series


def _oracle(cfg: RunConfig, out: Path, dt: float | None = None, stem: str = "series"):
    snap_dir = out / "grids"
    snap_dir.mkdir(exist_ok=True)

    def sink(g):
        grid_oracle.write_grid(g, snap_dir / f"{stem}_grid_t{_time_tag(g.time)}.csv", alpha=cfg.alpha)

    ts, grids = grid_oracle.run_oracle(cfg, dt, snapshot_sink=sink)
    ts.write(out, stem)
    return ts, grids


def cmd_simulate(args) -> int:
    cfg, out = _prepare(args)
    ts = _simulate(cfg, out)
    log.info("wrote %s (%d output times, final energy %.6g)", out / "series.csv", len(ts), ts.energy[-1])
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg, out = _prepare(args)
    ts, _ = _oracle(cfg, out)
    _write_meta(out, cfg, {"kind": "oracle", "oracle_dt": cfg.oracle_dt})
    log.info("wrote %s (final energy %.8g)", out / "series.csv", ts.energy[-1])
    return EXIT_OK


def oracle_tolerance(coarse: TimeSeries, fine: TimeSeries) -> dict:
    """Step-halving error estimate ``|X_dt - X_{dt/2}|`` per output time."""
    tol = {"energy": np.abs(coarse.energy - fine.energy)}
    if "l12" in coarse.extra and "l12" in fine.extra:
        tol["l12"] = np.abs(coarse.extra["l12"] - fine.extra["l12"])
    return tol


def cmd_compare(args) -> int:
    cfg, out = _prepare(args)
    d = _simulate(cfg, out / "dsmc")
    o_dir = out / "oracle"
    o_dir.mkdir(exist_ok=True)
    coarse, _ = _oracle(cfg, o_dir, cfg.oracle_dt, "series_dt")
    fine, _ = _oracle(cfg, o_dir, cfg.oracle_dt / 2.0, "series")
    _write_meta(o_dir, cfg, {"kind": "oracle", "oracle_dt": cfg.oracle_dt / 2.0})
    report = BoundsReport().add(compare_series(d, fine, oracle_tolerance(coarse, fine)))
    _write_meta(out, cfg, {"kind": "compare"})
    return _emit(report, out, args.quiet)


def _emit(report: BoundsReport, out: Path | None, quiet: bool) -> int:
    if out is not None:
        (out / "report.json").write_text(report.to_json())
    if not quiet:
        sys.stdout.write(report.to_table())
    return EXIT_HARD_FAIL if report.hard_failures else EXIT_OK


def _sidecar_config(path: Path) -> dict:
    meta = path.parent / "meta.json"
    if meta.exists():
        m = json.loads(meta.read_text())
        cfg = m.get("config", {})
        return dict(cfg, count=cfg.get("particle_count"), kind=m.get("kind"))
    return {}


def checks_for_file(path: Path) -> list:
    """Pick the applicable checks from the header of ``path``."""
    with open(path) as fh:
        header = fh.readline().strip()
    if header.startswith("t,mass,"):
        ts = TimeSeries.read(path, _sidecar_config(path))
        alpha = ts.alpha if ts.alpha is not None else 1.0
        checks = check_conservation(ts) + [check_cooling_time(ts)]
        if ts.config.get("kind") != "oracle" and "entropy_se" in ts.extra:
            checks.append(check_entropy_growth(ts, alpha))
        if ts.probe_values is not None:
            checks += check_pointwise_growth(ts, alpha=alpha)
        if ts.times[-1] >= 10.0:
            checks.append(fit_haff(ts))
        return checks
    if header == "vx,vy,vz,w":
        e, _ = read_snapshot(path)
        return [fit_maxwellian_envelope(e)]
    if header == "ix,iy,iz,f":
        g, meta = grid_oracle.read_grid(path)
        r = make_restitution(meta.get("alpha", 1.0))
        gn = g.normalized()
        probes = default_probes(0)
        return (check_weak_identities(g, r)
                + [check_loss_bound(gn)]
                + check_gain_bounds(g, r, probes, default_planes()))
    raise ConfigError(f"{path}: unrecognised file header {header!r}")


def cmd_check(args) -> int:
    report = BoundsReport()
    for p in args.files:
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"{path}: file not found")
        report.add(checks_for_file(path))
    out = Path(args.out_dir) if args.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return _emit(report, out, args.quiet)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="granular-hs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out-dir", default=None, help="output directory")
    common.add_argument("--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("simulate", cmd_simulate, "run DSMC from a JSON config"),
        ("oracle", cmd_oracle, "run the deterministic grid solver"),
        ("compare", cmd_compare, "run both solvers and compare moments"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("config")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("check", parents=[common], help="run diagnostics on series, snapshot or grid files")
    sp.add_argument("files", nargs="+")
    sp.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except dsmc.NumericalAbort as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_ABORT
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
