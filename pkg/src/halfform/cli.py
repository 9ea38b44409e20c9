"""Command-line driver: pointwise identity checks, theorem sweeps, plot export."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import asymptotics as asy
from . import pointwise_core as pc

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CONFIG_KEYS = {"experiments", "output_dir", "seed", "format", "parallelism"}
EXPERIMENT_KEYS = {"id", "family", "params", "k_list", "tolerances"}
SHIPPED = ("theorems_all",)

# tolerances of the pointwise identity suite
POINTWISE_TOL = {
    "cocycle": 1e-10,
    "degenerate": 1e-12,
    "conjugation": 1e-10,
    "sqrt_square": 1e-10,
    "det_identity": 1e-8,
}


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, complex):
        return "%.17g%+.17gj" % (v.real, v.imag)
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_table(path: Path, rows: list[dict], fmt: str) -> None:
    cols = []
    for r in rows:
        for key in r:
            if key not in cols:
                cols.append(key)
    if fmt == "json":
        path.write_text(json.dumps(_jsonable(rows), indent=1, sort_keys=False) + "\n")
        return
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def read_table(path: Path) -> list[dict]:
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        if not isinstance(data, list):
            raise ValueError("table document must be a list of rows")
        return data
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


# --- verify-pointwise ------------------------------------------------------------

def pointwise_trial(rng: np.random.Generator, n: int) -> dict:
    a, b, c, d = (pc.random_structure(rng, n) for _ in range(4))
    z = pc.zeta
    zbcd, zacd, zabd, zabc = z(b, c, d), z(a, c, d), z(a, b, d), z(a, b, c)
    cocycle = max(abs(zbcd.zeta / zacd.zeta * zabd.zeta / zabc.zeta - 1),
                  abs(zbcd.sqrt_zeta / zacd.sqrt_zeta * zabd.sqrt_zeta / zabc.sqrt_zeta - 1))
    degenerate = max(abs(w - 1) for zz in (z(a, b, b), z(a, a, b)) for w in (zz.zeta, zz.sqrt_zeta))
    conjugation = abs(np.conj(zabc.zeta) - z(c, b, a).zeta) / abs(zabc.zeta)
    sqrt_square = abs(zabc.sqrt_zeta**2 - zabc.zeta) / abs(zabc.zeta)
    det_sq, _ = pc.det_half_identity(a, b, c)
    return {"n": n, "cocycle": cocycle, "degenerate": degenerate, "conjugation": conjugation,
            "sqrt_square": sqrt_square, "det_identity": det_sq,
            "_structures": [s.mu for s in (a, b, c, d)]}


def cmd_verify_pointwise(trials: int, max_dim: int, seed: int, out: Path | None = None,
                         stream=None) -> int:
    stream = stream or sys.stdout
    if trials < 1:
        raise UsageError("--trials must be at least 1")
    if not 1 <= max_dim <= 4:
        raise UsageError("--max-dim must lie in 1..4")
    rng = np.random.default_rng(seed)
    rows, failures = [], []
    for t in range(trials):
        n = int(rng.integers(1, max_dim + 1))
        row = pointwise_trial(rng, n)
        mus = row.pop("_structures")
        bad = [key for key, tol in POINTWISE_TOL.items() if not row[key] <= tol]
        if bad:
            failures.append({"trial": t, "n": n, "violations": bad, "structures": _jsonable(mus)})
        rows.append({"trial": t, **row})
    for key, tol in POINTWISE_TOL.items():
        worst = max(r[key] for r in rows)
        status = "PASS" if worst <= tol else "FAIL"
        print(f"{status} {key:13s} max={worst:.3e} tol={tol:.0e}", file=stream)
    print(f"{len(rows)} trials, {len(failures)} failing", file=stream)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "pointwise_report.csv", rows, "csv")
        if failures:
            (out / "pointwise_failures.json").write_text(json.dumps(failures, indent=1) + "\n")
    elif failures:
        print(json.dumps(failures[:5]), file=stream)
    return EXIT_OK if not failures else EXIT_FAIL


# --- run ---------------------------------------------------------------------------

def _resolve_config(path: str) -> tuple[Path | None, str]:
    p = Path(path)
    if p.exists():
        return p, p.read_text()
    name = p.stem if p.suffix == ".json" else p.name
    if name in SHIPPED:
        text = resources.files("halfform").joinpath("configs", f"{name}.json").read_text()
        return None, text
    raise UsageError(f"config file not found: {path}")


def parse_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    exps = cfg.get("experiments")
    if not isinstance(exps, list) or not exps:
        raise UsageError("config field 'experiments' must be a non-empty list")
    parsed, seen = [], set()
    for i, e in enumerate(exps):
        if not isinstance(e, dict):
            raise UsageError(f"experiments[{i}] must be an object")
        bad = set(e) - EXPERIMENT_KEYS
        if bad:
            raise UsageError(f"experiments[{i}]: unknown keys {sorted(bad)}")
        if "id" not in e or "family" not in e:
            raise UsageError(f"experiments[{i}]: 'id' and 'family' are required")
        if e["id"] in seen:
            raise UsageError(f"experiments[{i}]: duplicate id {e['id']!r}")
        seen.add(e["id"])
        try:
            parsed.append(asy.Experiment(str(e["id"]), e["family"], dict(e.get("params", {})),
                                         tuple(e.get("k_list", ())), dict(e.get("tolerances", {}))))
        except (ValueError, TypeError) as exc:
            raise UsageError(f"experiments[{i}] ({e.get('id')}): {exc}") from exc
    fmt = cfg.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise UsageError("config field 'format' must be csv or json")
    seed = cfg.get("seed", 42)
    if not isinstance(seed, int) or seed < 0:
        raise UsageError("config field 'seed' must be an unsigned integer")
    par = cfg.get("parallelism", 1)
    if not isinstance(par, int) or par < 1:
        raise UsageError("config field 'parallelism' must be a positive integer")
    return {"experiments": parsed, "output_dir": cfg.get("output_dir"), "seed": seed,
            "format": fmt, "parallelism": par}


def manifest(config_text: str, seed: int) -> dict:
    return {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": seed,
        "versions": {"halfform": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }


def cmd_run(config: str, out: str | None = None, seed: int | None = None, fmt: str | None = None,
            jobs: int | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    _, text = _resolve_config(config)
    cfg = parse_config(text)
    seed = cfg["seed"] if seed is None else seed
    fmt = fmt or cfg["format"]
    jobs = jobs or cfg["parallelism"]
    out_dir = Path(out or os.environ.get("HALFFORM_OUT") or cfg["output_dir"] or "results")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"output directory not writable: {exc}") from exc
    np.random.seed(seed)  # no experiment draws randomness; fixed for completeness
    records = []
    for exp in cfg["experiments"]:
        table = asy.run(exp, jobs)
        write_table(out_dir / f"{exp.id}.{fmt}", table, fmt)
        rec = asy.judge(exp, table)
        records.append(rec)
        tag = "PASS" if rec["pass"] else "FAIL"
        slope = rec.get("slope")
        extra = f"slope={slope:.3f}" if isinstance(slope, float) and math.isfinite(slope) else rec["reason"]
        print(f"{tag} {exp.id} ({exp.family}) {extra}", file=stream)
    if fmt == "json":
        (out_dir / "summary.json").write_text(json.dumps(_jsonable(records), indent=1) + "\n")
    else:
        flat = [{k: (json.dumps(_jsonable(v)) if isinstance(v, (list, dict)) else v) for k, v in r.items()}
                for r in records]
        write_table(out_dir / "summary.csv", flat, "csv")
    (out_dir / "manifest.json").write_text(json.dumps(manifest(text, seed), indent=1, sort_keys=True) + "\n")
    return EXIT_OK if all(r["pass"] for r in records) else EXIT_FAIL


# --- export-plot --------------------------------------------------------------------

def cmd_export_plot(table: str, out: str) -> int:
    path = Path(table)
    if not path.exists():
        print(f"table not found: {table}", file=sys.stderr)
        return EXIT_FAIL
    try:
        rows = read_table(path)
        ks = np.array([float(r["k"]) for r in rows])
        ds = np.array([float(r["defect"]) for r in rows])
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"unreadable table: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if len(rows) == 0 or not (np.all(np.isfinite(ks)) and np.all(np.isfinite(ds))):
        print("table has missing or NaN values", file=sys.stderr)
        return EXIT_FAIL
    floored = ds < asy.ZERO_FLOOR
    shown = np.where(floored, asy.ZERO_FLOOR, ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            fit = asy.fit_rate(list(ks), list(ds))
        except asy.InsufficientData:
            fit = None
    if fit is None or fit.exact:
        line = np.full(len(ks), math.log10(asy.ZERO_FLOOR) if fit is not None else math.nan)
    else:
        line = (fit.intercept + fit.slope * np.log(ks)) / math.log(10)
    header = ["log10_k", "log10_defect", "fit_log10_defect"] + (["comment"] if floored.any() else [])
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ks)):
            row = [_fmt(math.log10(ks[i])), _fmt(math.log10(shown[i])), _fmt(float(line[i]))]
            if floored.any():
                row.append(f"floored at {asy.ZERO_FLOOR:g}" if floored[i] else "")
            w.writerow(row)
    return EXIT_OK


# --- entry point ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="halfform", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("verify-pointwise", help="random checks of the pointwise half-form identities")
    v.add_argument("--trials", type=int, default=500)
    v.add_argument("--max-dim", type=int, default=3)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--out", default=None)
    r = sub.add_parser("run", help="run the experiments of a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--format", choices=("csv", "json"), default=None)
    r.add_argument("--jobs", type=int, default=None)
    e = sub.add_parser("export-plot", help="log-log columns for an experiment table")
    e.add_argument("table")
    e.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-pointwise":
            out = args.out or os.environ.get("HALFFORM_OUT")
            return cmd_verify_pointwise(args.trials, args.max_dim, args.seed, Path(out) if out else None)
        if args.command == "run":
            if args.jobs is not None and args.jobs < 1:
                raise UsageError("--jobs must be positive")
            if args.seed is not None and args.seed < 0:
                raise UsageError("--seed must be non-negative")
            return cmd_run(args.config, args.out, args.seed, args.format, args.jobs)
        return cmd_export_plot(args.table, args.out)
    except UsageError as exc:
        print(f"halfform: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except asy.ModelError as exc:
        print(f"halfform: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
