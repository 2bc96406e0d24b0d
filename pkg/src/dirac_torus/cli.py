"""Command line: ``dirac-torus <verify|spectrum|solve|continue|export> --config PATH [--out DIR]``.

Exit codes: 0 ok, 2 configuration error, 3 verification failure, 4 solver failure.
Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .field import SpinorField, read_snapshot, write_snapshot
from .solver import SolverError, bound_report, prepare, run_continuation, solve_stage

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_SOLVER = 0, 2, 3, 4

DIAG_COLUMNS = ("stage", "eps", "level", "residual_dual", "F_int", "pert_int", "l2", "l3", "h1", "qbar",
                "c1", "c2")


class VerificationFailed(RuntimeError):
    pass


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def diagnostics_row(rec) -> list[str]:
    b = rec.bounds
    vals = (rec.stage, rec.eps, rec.level, rec.residual_dual, b["F_int"], b["pert_int"], b["l2"], b["l3"],
            b["h1"], b["qbar"], rec.c1, rec.c2)
    return [_fmt(v) for v in vals]


def write_diagnostics(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAG_COLUMNS)
        for rec in records:
            w.writerow(diagnostics_row(rec))


def write_manifest(out: Path, cfg: RunConfig, command: str, extra=None) -> None:
    import scipy

    man = {
        "command": command,
        "config_hash": cfg.hash,
        "seed": cfg["solver.seed"],
        "versions": {"dirac_torus": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    if extra:
        man.update(extra)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    (out / "config.resolved").write_text(cfg.canonical_text())


# -- subcommands -------------------------------------------------------------


def cmd_verify(cfg: RunConfig, out: Path) -> dict:
    from .verify import run_verification

    report = run_verification(cfg)
    (out / "verify.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, suite in report["suites"].items():
        print(f"{name:12s} {'PASS' if suite['passed'] else 'FAIL'}  {suite['summary']}")
    if not report["passed"]:
        raise VerificationFailed("failed suites: " + ", ".join(
            n for n, s in report["suites"].items() if not s["passed"]))
    return {"passed": True}


def cmd_spectrum(cfg: RunConfig, out: Path) -> dict:
    from .spectral import spectrum_rows, spectrum_table

    lat, m = cfg.lattice, cfg["params.m"]
    path = out / "spectrum.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n1", "n2", "n3", "mu_abs", "lambda"))
        for n1, n2, n3, mu, lam in spectrum_rows(lat, m):
            w.writerow((n1, n2, n3, repr(mu), repr(lam)))
    table = spectrum_table(lat, m)
    print(f"{len(table)} distinct eigenvalues; |lambda| >= {min(abs(v) for v, _ in table):.6g}")
    return {"distinct": len(table)}


def _write_records(out: Path, records) -> None:
    write_diagnostics(out / "diagnostics.csv", records)
    for rec in records:
        write_snapshot(out / f"stage_{rec.stage:02d}.snap", rec.field, rec.params.m, rec.params.a, rec.eps)


def _summary(records, model, setup) -> dict:
    final = records[-1]
    return {
        "c1": setup.c1, "c2": setup.c2, "c2_sample_max": setup.c2_sample_max,
        "R": setup.geometry.R, "r": setup.geometry.r, "neg_dim": setup.geometry.neg_dim,
        "boundary_max": setup.audit.max_J,
        "final": {"eps": final.eps, "level": final.level, "residual_dual": final.residual_dual,
                  "l2": final.bounds["l2"]},
        "bounds_ok": all(bound_report(r, model).passed for r in records),
        "levels_in_bracket": all(setup.c1 < r.level < setup.c2 for r in records),
    }


def cmd_solve(cfg: RunConfig, out: Path) -> dict:
    params, model = cfg.params(), cfg.model()
    setup = prepare(params, model, **cfg.prepare_kwargs())
    rec, flow = solve_stage(params, model, setup, cfg.flow_config(), cfg.newton_config())
    _write_records(out, [rec])
    summ = _summary([rec], model, setup)
    summ["flow_level"] = flow.level
    summ["flow_sweeps"] = flow.sweeps
    print(f"eps={rec.eps!r} level={rec.level!r} residual={rec.residual_dual:.3e} flow={flow.level!r}")
    return summ


def cmd_continue(cfg: RunConfig, out: Path) -> dict:
    params, model = cfg.params(), cfg.model()
    setup = prepare(params, model, **cfg.prepare_kwargs())

    def show(rec):
        print(f"stage {rec.stage:2d} eps={rec.eps:.6g} level={rec.level:.10g} "
              f"residual={rec.residual_dual:.3e} newton={rec.newton_iters}")

    records = run_continuation(params, model, cfg.schedule(), setup, cfg.flow_config(), cfg.newton_config(),
                               final_tol=cfg["solver.final_tol"], callback=show)
    _write_records(out, records)
    return _summary(records, model, setup)


def export_grid_csv(path, field: SpinorField) -> None:
    """One row per grid point: indices, coordinates, then (re, im) of the four components."""
    vals = field.values()
    theta = field.disc.coordinates()
    cols = ["i1", "i2", "i3", "theta1", "theta2", "theta3"]
    cols += [f"{p}{k}" for k in range(1, 5) for p in ("re", "im")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for idx in np.ndindex(*field.grid):
            v = vals[idx]
            row = [*idx, *(repr(float(t)) for t in theta[idx])]
            for k in range(4):
                row += [repr(float(v[k].real)), repr(float(v[k].imag))]
            w.writerow(row)


def read_grid_csv(path):
    """Inverse of :func:`export_grid_csv`: grid values, shape (N1, N2, N3, 4)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    shape = tuple(int(data[:, i].max()) + 1 for i in range(3))
    vals = data[:, 6::2] + 1j * data[:, 7::2]
    return vals.reshape(shape + (4,))


def cmd_export(cfg: RunConfig, out: Path, snapshot: str | None) -> dict:
    if snapshot is None:
        snaps = sorted(out.glob("stage_*.snap"))
        if not snaps:
            raise FileNotFoundError(f"no snapshot given and none found in {out}")
        snapshot = snaps[-1]
    snap = read_snapshot(snapshot)
    field = snap.field(cfg.lattice)
    target = out / (Path(snapshot).stem + ".grid.csv")
    export_grid_csv(target, field)
    print(f"wrote {target}")
    return {"snapshot": str(snapshot), "csv": str(target)}


# -- entry point -------------------------------------------------------------


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message, **extra}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirac-torus", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("verify", "spectrum", "solve", "continue", "export"))
    ap.add_argument("--config", required=True, help="flat section.key = value file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--snapshot", help="export: snapshot to convert (default: last stage in --out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, "config", str(err), errors=err.errors)
    except OSError as err:
        return _fail(EXIT_CONFIG, "config", f"cannot read config: {err}")
    out = Path(args.out or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "verify":
            extra = cmd_verify(cfg, out)
        elif args.command == "spectrum":
            extra = cmd_spectrum(cfg, out)
        elif args.command == "solve":
            extra = cmd_solve(cfg, out)
        elif args.command == "continue":
            extra = cmd_continue(cfg, out)
        else:
            extra = cmd_export(cfg, out, args.snapshot)
    except VerificationFailed as err:
        write_manifest(out, cfg, args.command, {"status": "verification_failed"})
        return _fail(EXIT_VERIFY, "verification", str(err))
    except SolverError as err:
        write_manifest(out, cfg, args.command, {"status": "solver_failed"})
        return _fail(EXIT_SOLVER, type(err).__name__, str(err), last_good_eps=err.last_good_eps)
    except (OSError, ValueError) as err:
        return _fail(EXIT_SOLVER, type(err).__name__, str(err))
    write_manifest(out, cfg, args.command, {"status": "ok", "result": extra})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
