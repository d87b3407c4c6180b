"""Command-line front end.

    aps-dirac {solve,green,study,validate,spectrum} --config run.toml [--out DIR] [--serial]

Exit codes: 0 ok, 2 config, 3 standing assumptions, 4 boundary kernel,
5 solver, 6 failed run-time assertion.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_config
from .errors import ApsDiracError, ConfigError
from .snapshot import export_snapshot

EXIT_ASSERTION = 6
SEED_ENV = "APS_DIRAC_SEED"

log = logging.getLogger("apsdirac")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _versions() -> dict:
    import scipy

    return {"apsdirac": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def _cmd_solve(cfg, out: Path, seed: int, serial: bool) -> dict:
    from .runner import run_solve

    run = run_solve(cfg, seed)
    res, mesh, summary = run["result"], run["mesh"], run["summary"]
    formats = set(cfg.output.formats)
    er = summary.pop("energy_series", None)
    sr = summary.pop("support_series", None)
    if "csv" in formats:
        write_csv(out / "diagnostics.csv", ("t", "norm", "flux", "source_norm"),
                  zip(res.times, res.norms, res.flux, res.source_norms))
        if er is not None:
            write_csv(out / "energy.csv", ("t", "F", "source_integral", "margin"),
                      zip(er.times, er.F, er.source_integral, er.margins))
        if sr is not None:
            write_csv(out / "support.csv", ("t", "cone", "collar", "outside", "leakage"),
                      zip(sr.times, sr.mass_cone, sr.mass_collar, sr.mass_outside, sr.leakage))
    if "snapshot" in formats:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        fields = res.physical if res.physical is not None else res.reduced
        for j, (t, u) in enumerate(zip(res.times, fields)):
            export_snapshot(u, snap / f"psi_{j:05d}.snap", mesh, float(t))
    summary["mesh_hash"] = mesh.mesh_hash()
    return summary


def _cmd_green(cfg, out: Path, seed: int, serial: bool) -> dict:
    from .runner import run_green

    return run_green(cfg)


def _cmd_study(cfg, out: Path, seed: int, serial: bool) -> dict:
    from .runner import run_study

    rep = run_study(cfg, parallel=cfg.output.parallel and not serial)
    rep["passed"] = rep["orders_finite"]
    return rep


def _cmd_validate(cfg, out: Path, seed: int, serial: bool) -> dict:
    from .runner import run_validate

    return run_validate(cfg)


def _cmd_spectrum(cfg, out: Path, seed: int, serial: bool) -> dict:
    from .runner import run_spectrum

    sp = run_spectrum(cfg)
    write_csv(out / "spectrum.csv", ("component", "mode", "eigenvalue"), sp["boundary"])
    write_csv(out / "dirac_spectrum.csv", ("index", "eigenvalue"), enumerate(sp["dirac"]))
    return {"hermiticity_residual": sp["hermiticity_residual"], "n_boundary": len(sp["boundary"]),
            "n_dirac": len(sp["dirac"])}


COMMANDS = {
    "solve": _cmd_solve,
    "green": _cmd_green,
    "study": _cmd_study,
    "validate": _cmd_validate,
    "spectrum": _cmd_spectrum,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aps-dirac", description="Dirac Cauchy problems with APS/MIT boundaries")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        s.add_argument("--out", type=Path, default=None, help="output directory (default: [output].directory)")
        s.add_argument("--serial", action="store_true", help="disable parallel execution")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    try:
        cfg = parse_config(text)
        seed = _seed()
        out = args.out if args.out is not None else Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", {
            "command": args.command,
            "config": cfg.to_dict(),
            "config_text": text,
            "seed": seed,
            "serial": bool(args.serial),
            "versions": _versions(),
        })
        report = COMMANDS[args.command](cfg, out, seed, args.serial)
    except ApsDiracError as exc:
        for line in getattr(exc, "errors", None) or [str(exc)]:
            print(f"error: {line}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # numerical layers raise plain ValueError for inconsistent inputs
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    write_json(out / "report.json", report)
    if cfg.output.assertions and report.get("passed") is False:
        print("error: run-time assertion failed; see report.json", file=sys.stderr)
        return EXIT_ASSERTION
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
