"""Command-line entry point.

Every command resolves a :class:`RunConfig` (defaults, then an optional JSON
config file, then flags), runs, and writes a report whose only
non-deterministic field is ``timestamp``.  Exit status is 0 iff every pass
criterion of the invoked command holds.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, streams
from . import asymptotics as asy
from . import cov_kernels as ck
from . import ensemble_io, limit_theorems as lt, sampler
from .errors import ConfigurationError, DomainError, ParameterError
from .hermite import PolyFunction
from .reports import SCHEMA_VERSION, fmt17, to_csv, to_json, write_atomic

COMMANDS = ("cov", "simulate", "decomposition-check", "thm21", "asymptotics", "limit-theorem", "lemma62", "report-all")
OUTPUT_ENV = "BIFBM_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "bifbm-reports"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3

DEFAULTS = {
    "common": {"H": 0.6, "K": 0.8, "format": "json", "workers": 1},
    "cov": {"kernel": "bifbm", "s": 1.0, "t": 2.0, "hurst": None},
    "simulate": {"kernel": "bifbm", "grid": "1:64", "paths": 1000, "hurst": None, "ensemble_format": "csv", "include_origin": False},
    "decomposition-check": {"grid": "1,2,3", "paths": 200_000},
    "thm21": {"grid": "1,2,4", "sweep": "1e1,1e2,1e3,1e4,1e5,1e6", "max_distance": 1e-3},
    "asymptotics": {"target": "all", "sweep": "1e2,1e3,1e4,1e5,1e6", "t": 1.0, "n": 1, "a": 1, "constant": "nominal"},
    "limit-theorem": {"H": 0.8, "K": 0.75, "which": "both", "f": "hermite:0,1,0.5", "n_values": "128,256,512", "t_grid": "0.25,0.5,0.75,1.0", "paths": 20_000},
    "lemma62": {"H": 0.8, "K": 0.75, "pairs": "1:1,1:2,0.5:2", "rel_tol": 1e-4},
    "report-all": {"paths": 200_000, "lt_paths": 20_000},
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict
    seed: int
    options: dict = field(default_factory=dict)
    output: Optional[str] = None
    format: str = "json"
    workers: int = 1

    @property
    def model(self) -> ck.ModelParams:
        return ck.ModelParams(self.params["H"], self.params["K"])

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def parse_floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def parse_grid(text) -> list:
    """``"1:64"`` (integers), ``"a:b:n"`` (n evenly spaced) or ``"0.5,1,2"``."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text)
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) == 2:
            return list(np.arange(parts[0], parts[1] + 0.5, 1.0))
        if len(parts) == 3:
            return list(np.linspace(parts[0], parts[1], int(parts[2])))
        raise UsageError(f"bad grid {text!r}")
    return parse_floats(text)


def parse_pairs(text):
    if isinstance(text, (list, tuple)):
        return [tuple(map(float, p)) for p in text]
    return [tuple(float(v) for v in item.split(":")) for item in str(text).split(",")]


def _common(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--H", type=float, default=d, help="Hurst-type parameter H in (0,1)")
    parser.add_argument("--K", type=float, default=d, help="parameter K in (0,1]")
    parser.add_argument("--seed", type=int, default=d, help="unsigned 64-bit seed (random if absent)")
    parser.add_argument("--config", default=d, help="JSON config file; flags override its values")
    parser.add_argument("--output", default=d, help=f"report path or directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    parser.add_argument("--format", choices=("json", "csv"), default=d)
    parser.add_argument("--workers", type=int, default=d)
    parser.add_argument("--error-json", action="store_true", default=d, help="print errors as JSON on stderr")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="bifbm", description="Numerical checks for bifractional Brownian motion.", argument_default=S)
    _common(parser, suppress=True)
    parser.add_argument("--version", action="version", version=f"bifbm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=S)
        _common(sp, suppress=True)
        return sp

    sp = add("cov", "evaluate a covariance kernel")
    sp.add_argument("--kernel", choices=[k.value for k in ck.KernelName])
    sp.add_argument("--s", type=float)
    sp.add_argument("--t", type=float)
    sp.add_argument("--hurst", type=float)

    sp = add("simulate", "sample paths and export them")
    sp.add_argument("--kernel", choices=[k.value for k in ck.KernelName])
    sp.add_argument("--grid")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--hurst", type=float)
    sp.add_argument("--ensemble-format", dest="ensemble_format", choices=("csv", "binary"))
    sp.add_argument("--include-origin", dest="include_origin", action="store_true")

    sp = add("decomposition-check", "Monte Carlo check of C1 X + B = C2 fBm")
    sp.add_argument("--grid")
    sp.add_argument("--paths", type=int)

    sp = add("thm21", "distance of increment covariance to the fBm limit along h")
    sp.add_argument("--grid")
    sp.add_argument("--sweep")
    sp.add_argument("--max-distance", dest="max_distance", type=float)

    sp = add("asymptotics", "rate experiments")
    sp.add_argument("--target", choices=("prop22", "thm31", "thm41", "all"))
    sp.add_argument("--sweep")
    sp.add_argument("--t", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int)
    sp.add_argument("--constant", choices=asy.CONSTANTS)

    sp = add("limit-theorem", "partial sums of the correlated Gaussian sequence")
    sp.add_argument("--which", choices=("prop61", "prop62", "both"))
    sp.add_argument("--f", help="functional, e.g. 'hermite:0,1,0.5' or 'poly:0,1,0,1'")
    sp.add_argument("--n-values", dest="n_values")
    sp.add_argument("--t-grid", dest="t_grid")
    sp.add_argument("--paths", type=int)

    sp = add("lemma62", "double integral of the density against the closed form")
    sp.add_argument("--pairs", help="comma-separated t:s pairs")
    sp.add_argument("--rel-tol", dest="rel_tol", type=float)

    sp = add("report-all", "run every check")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--lt-paths", dest="lt_paths", type=int)
    return parser


def _check_writable(path: Path):
    probe = path
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if probe.is_file() and probe != path:
        raise UsageError(f"output path {path} is not writable ({probe} is a file)")
    if probe.is_file():
        probe = probe.parent
    if not os.access(probe, os.W_OK):
        raise UsageError(f"output path {path} is not writable")


def _validate(command, H, K):
    try:
        p = ck.ModelParams(H, K)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    if command == "limit-theorem" or command == "lemma62":
        problems = []
        if p.K >= 1:
            problems.append(f"K < 1 (got K={p.K})")
        if not p.lrd:
            problems.append(f"2HK > 1 (got 2HK={2 * p.HK:.6g})")
        if problems:
            raise UsageError(f"{command} requires " + " and ".join(problems))
    if command == "decomposition-check" and p.K >= 1:
        raise UsageError(f"decomposition-check requires K < 1 (X^K is undefined at K=1), got K={p.K}")


def parse_config(argv) -> RunConfig:
    """Resolve defaults, config file and flags (flags win) into a RunConfig."""
    parser = build_parser()
    ns = vars(parser.parse_args([str(a) for a in argv]))
    command = ns.pop("command")
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    merged = dict(DEFAULTS["common"])
    merged.update(DEFAULTS[command])
    cfg_path = ns.pop("config", None)
    if cfg_path:
        with open(cfg_path) as fh:
            file_cfg = json.load(fh)
        if "params" in file_cfg:
            file_cfg = {**file_cfg.pop("params"), **file_cfg}
        if "options" in file_cfg:
            file_cfg = {**file_cfg.pop("options"), **file_cfg}
        file_cfg.pop("command", None)
        merged.update(file_cfg)
    merged.update(ns)

    H, K = merged.pop("H"), merged.pop("K")
    _validate(command, H, K)
    seed = merged.pop("seed", None)
    if seed is None:
        seed = streams.fresh_seed()
        print(f"seed: {seed}", file=sys.stderr)
    try:
        seed = streams.check_seed(seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    fmt = merged.pop("format")
    workers = int(merged.pop("workers"))
    merged.pop("error_json", None)
    output = merged.pop("output", None)
    if output is not None:
        _check_writable(Path(output))
    elif command != "cov":
        _check_writable(Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_DIR)))
    return RunConfig(command=command, params={"H": float(H), "K": float(K)}, seed=seed, options=merged, output=output, format=fmt, workers=workers)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_cov(cfg):
    o = cfg.options
    name = ck.KernelName(o["kernel"])
    if name in (ck.KernelName.FBM_ONE_SIDED, ck.KernelName.FBM_TWO_SIDED):
        kern = ck.make_kernel(name, hurst=o["hurst"] if o["hurst"] is not None else cfg.params["H"])
    else:
        kern = ck.make_kernel(name, H=cfg.params["H"], K=cfg.params["K"])
    value = float(kern(o["s"], o["t"]))
    print(fmt17(value))
    result = {"kernel": kern.describe(), "s": o["s"], "t": o["t"], "value": value}
    return True, result, [("cov", ["s", "t", "value"], [[fmt17(o["s"]), fmt17(o["t"]), fmt17(value)]])], None


def _cmd_simulate(cfg):
    o = cfg.options
    name = ck.KernelName(o["kernel"])
    if name in (ck.KernelName.FBM_ONE_SIDED, ck.KernelName.FBM_TWO_SIDED):
        kern = ck.make_kernel(name, hurst=o["hurst"] if o["hurst"] is not None else cfg.params["H"])
    else:
        kern = ck.make_kernel(name, H=cfg.params["H"], K=cfg.params["K"])
    grid = sampler.TimeGrid(parse_grid(o["grid"]), include_origin=bool(o["include_origin"]))
    ens = sampler.sample_process(kern, grid, o["paths"], cfg.seed, workers=cfg.workers)
    result = {"kernel": kern.describe(), "grid": grid.to_dict(), "shape": list(ens.values.shape), "jitter": ens.jitter}
    return True, result, [], ens


def _thm21(p, grid_pts, sweep, max_distance):
    grid = sampler.TimeGrid(grid_pts)
    d = [sampler.increment_kernel_distance(p, h, grid) for h in sweep]
    decreasing = all(b <= a + 1e-12 for a, b in zip(d, d[1:]))
    ok = decreasing and d[-1] <= max_distance
    return ok, {"h": list(sweep), "distance": d, "decreasing": decreasing, "max_distance": max_distance, "pass": ok}


def _cmd_thm21(cfg):
    o = cfg.options
    ok, res = _thm21(cfg.model, parse_grid(o["grid"]), parse_floats(o["sweep"]), o["max_distance"])
    rows = [[fmt17(h), fmt17(v)] for h, v in zip(res["h"], res["distance"])]
    return ok, res, [("thm21", ["h", "distance"], rows)], None


def _asymptotics(p, o):
    targets = ["prop22", "thm31", "thm41"] if o["target"] == "all" else [o["target"]]
    if p.K >= 1:
        skipped = [t for t in targets if t in ("prop22", "thm31")]
        targets = [t for t in targets if t not in skipped]
    else:
        skipped = []
    reports = {t: asy.rate_experiment(t, p, parse_floats(o["sweep"]), t=o["t"], n=o["n"], a=o["a"], constant=o["constant"]) for t in targets}
    res = {t: r.to_dict() for t, r in reports.items()}
    for t in skipped:
        res[t] = {"skipped": "requires K < 1"}
    tables = [(t, *r.csv_rows()) for t, r in reports.items()]
    return all(r.passed for r in reports.values()), res, tables


def _cmd_asymptotics(cfg):
    ok, res, tables = _asymptotics(cfg.model, cfg.options)
    return ok, res, tables, None


def _report_tables(name, rep):
    header, rows = rep.csv_rows()
    return [(name, header, rows)]


def _cmd_decomposition(cfg):
    o = cfg.options
    rep = sampler.decomposition_mc_check(cfg.model, sampler.TimeGrid(parse_grid(o["grid"])), o["paths"], cfg.seed, cfg.workers)
    return rep.passed, rep.to_dict(), _report_tables("decomposition", rep), None


def _limit(p, o, seed, workers):
    n_values = tuple(int(v) for v in parse_floats(o["n_values"]))
    t_grid = tuple(parse_floats(o["t_grid"]))
    res, tables, ok = {}, [], True
    if o["which"] in ("prop61", "both"):
        rep = lt.prop61_experiment(p, n_values, t_grid, o["paths"], seed, workers)
        res["prop61"] = rep.to_dict()
        tables += _report_tables("prop61", rep)
        ok &= rep.passed
    if o["which"] in ("prop62", "both"):
        rep = lt.prop62_experiment(p, PolyFunction.parse(o["f"]), 8, n_values, t_grid, o["paths"], seed, workers)
        res["prop62"] = rep.to_dict()
        tables += _report_tables("prop62", rep)
        ok &= rep.passed
    return ok, res, tables


def _cmd_limit(cfg):
    ok, res, tables = _limit(cfg.model, cfg.options, cfg.seed, cfg.workers)
    return ok, res, tables, None


def _lemma62(p, pairs, rel_tol):
    out, ok = [], True
    for t, s in pairs:
        try:
            num, closed, gap = lt.lemma62_quadrature(p, t, s, rel_tol)
            out.append({"t": t, "s": s, "numeric": num, "closed_form": closed, "rel_gap": gap, "pass": True})
        except lt.QuadratureError as exc:
            ok = False
            out.append({"t": t, "s": s, "rel_gap": exc.achieved_gap, "pass": False})
    return ok, {"rel_tol": rel_tol, "pairs": out}


def _cmd_lemma62(cfg):
    o = cfg.options
    ok, res = _lemma62(cfg.model, parse_pairs(o["pairs"]), o["rel_tol"])
    rows = [[fmt17(r["t"]), fmt17(r["s"]), fmt17(r.get("numeric", float("nan"))), fmt17(r.get("closed_form", float("nan"))), fmt17(r["rel_gap"])] for r in res["pairs"]]
    return ok, res, [("lemma62", ["t", "s", "numeric", "closed_form", "rel_gap"], rows)], None


def _identities(p):
    """Exact identity residuals on a fixed deterministic grid."""
    s = np.linspace(0.2, 10.0, 50)
    S, T = np.meshgrid(s, s)
    out = {}
    R = np.asarray(ck.bifbm_cov(p, S, T))
    inc_var = np.asarray(ck.bifbm_cov(p, T, T)) + np.asarray(ck.bifbm_cov(p, S, S)) - 2 * R
    d = np.abs(T - S) ** (2 * p.HK)
    off = S != T
    lo = 2.0 ** (-p.K) * d[off] * (1 - 1e-12)
    hi = 2.0 ** (1 - p.K) * d[off] * (1 + 1e-12)
    out["quasi_helix"] = bool(np.all(lo <= inc_var[off]) and np.all(inc_var[off] <= hi))
    if p.K < 1:
        res = np.abs(np.asarray(ck.decomposition_residual(p, S, T))) / (1 + np.abs(R))
        out["decomposition_max_rel_residual"] = float(res.max())
        out["decomposition"] = bool(res.max() <= ck.REL_TOL)
        r51 = np.abs(np.asarray(ck.prop51_residual(p.K, S, T)))
        out["odd_even_max_residual"] = float(r51.max())
        out["odd_even"] = bool(r51.max() <= ck.REL_TOL * (1 + np.abs(np.asarray(ck.odd_even_cov(p.K, "odd", S, T)))).min())
    a = np.arange(0, 20)[:, None]
    n = np.arange(1, 20)[None, :]
    direct = (
        np.asarray(ck.bifbm_cov(p, a + 1, a + n + 1)) - np.asarray(ck.bifbm_cov(p, a + 1, a + n))
        - np.asarray(ck.bifbm_cov(p, a, a + n + 1)) + np.asarray(ck.bifbm_cov(p, a, a + n))
    )
    nc = np.asarray(ck.noise_cov(p, a, n))
    err = float(np.max(np.abs(nc - direct) / (ck.ABS_FLOOR + np.abs(direct))))
    out["noise_bilinear_max_rel_error"] = err
    out["noise_bilinear"] = bool(np.all(np.abs(nc - direct) <= ck.REL_TOL * np.abs(direct) + ck.ABS_FLOOR))
    checks = [v for k, v in out.items() if isinstance(v, bool)]
    return all(checks), out


def _cmd_report_all(cfg):
    p = cfg.model
    o = cfg.options
    sections, tables, verdicts = {}, [], {}

    ok, sections["identities"] = _identities(p)
    verdicts["identities"] = ok

    ok, sections["thm21"] = _thm21(p, [1.0, 2.0, 4.0], [10.0**k for k in range(1, 7)], 1e-3)
    verdicts["thm21"] = ok if p.K < 1 else True

    asy_opts = dict(DEFAULTS["asymptotics"])
    ok, sections["asymptotics"], t = _asymptotics(p, asy_opts)
    verdicts["asymptotics"] = ok
    tables += t
    if p.K < 1:
        taylor = dict(asy_opts, constant="taylor", target="all")
        _, sections["asymptotics_taylor_constants"], _ = _asymptotics(p, taylor)

    sums = asy.noise_partial_sums(p, 1, [10**3, 10**5])
    sections["lrd"] = {"class": asy.lrd_classify(p).value, "dominant_term": asy.dominant_term_class(p).value, "partial_sums": {"N": [10**3, 10**5], "a": 1, "values": sums.tolist()}}

    if p.K < 1:
        rep = sampler.decomposition_mc_check(p, sampler.TimeGrid([1.0, 2.0, 3.0]), o["paths"], cfg.seed, cfg.workers)
        sections["decomposition_mc"] = rep.to_dict()
        verdicts["decomposition_mc"] = rep.passed
        tables += _report_tables("decomposition", rep)
        levels = sampler.quadrature_refinement(p.K, [(s, t) for s in (0.5, 1, 2) for t in (0.5, 1, 2)])
        errs = [lv["max_rel_error"] for lv in levels]
        qok = errs[-1] <= 0.01 and all(b < a for a, b in zip(errs, errs[1:]))
        sections["xk_quadrature"] = {"levels": levels, "pass": qok}
        verdicts["xk_quadrature"] = qok
    else:
        sections["decomposition_mc"] = {"skipped": "requires K < 1"}

    if p.K < 1 and p.lrd:
        lt_opts = dict(DEFAULTS["limit-theorem"], paths=o["lt_paths"])
        ok, sections["limit_theorems"], t = _limit(p, lt_opts, cfg.seed, cfg.workers)
        verdicts["limit_theorems"] = ok
        tables += t
        ok, sections["lemma62"] = _lemma62(p, parse_pairs(DEFAULTS["lemma62"]["pairs"]), DEFAULTS["lemma62"]["rel_tol"])
        verdicts["lemma62"] = ok
    else:
        reason = "requires K < 1 and 2HK > 1"
        sections["limit_theorems"] = {"skipped": reason}
        sections["lemma62"] = {"skipped": reason}
    sections["verdicts"] = verdicts
    return all(verdicts.values()), sections, tables, None


HANDLERS = {
    "cov": _cmd_cov,
    "simulate": _cmd_simulate,
    "decomposition-check": _cmd_decomposition,
    "thm21": _cmd_thm21,
    "asymptotics": _cmd_asymptotics,
    "limit-theorem": _cmd_limit,
    "lemma62": _cmd_lemma62,
    "report-all": _cmd_report_all,
}


# ---------------------------------------------------------------------------
# running and writing
# ---------------------------------------------------------------------------


def _output_target(cfg) -> Path:
    if cfg.output is not None:
        path = Path(cfg.output)
        if path.suffix:
            return path
        return path / f"{cfg.command}.{cfg.format}"
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_DIR)) / f"{cfg.command}.{cfg.format}"


def envelope(cfg, passed, results, started, wall):
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "bifbm", "version": __version__},
        "command": cfg.command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "passed": bool(passed),
        "results": results,
        "timestamp": {"started_utc": started, "wall_time_seconds": wall},
    }


def run(cfg: RunConfig):
    """Execute ``cfg``; returns (exit_status, list of written paths)."""
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    passed, results, tables, ensemble = HANDLERS[cfg.command](cfg)
    wall = time.perf_counter() - t0
    written = []
    if cfg.command == "cov" and cfg.output is None:
        return (EXIT_OK if passed else EXIT_FAIL), written

    target = _output_target(cfg)
    doc = envelope(cfg, passed, results, started, wall)
    if ensemble is not None:
        kind = cfg.options["ensemble_format"]
        ens_path = target.with_suffix(".csv" if kind == "csv" else ".bin")
        if kind == "csv":
            ensemble_io.write_csv(ensemble, ens_path)
        else:
            ensemble_io.write_binary(ensemble, ens_path)
        written.append(ens_path)
        doc["results"]["ensemble_file"] = ens_path.name
        target = target.with_name(target.stem + ".meta.json")
        written.append(write_atomic(target, to_json(doc)))
    elif cfg.format == "json":
        written.append(write_atomic(target.with_suffix(".json"), to_json(doc)))
    else:
        for name, header, rows in tables:
            stem = target.stem if len(tables) == 1 else f"{target.stem}-{name}"
            written.append(write_atomic(target.with_name(stem + ".csv"), to_csv(header, rows)))
        meta = dict(doc)
        meta["results"] = {"tables": [p.name for p in written]}
        written.append(write_atomic(target.with_name(target.stem + ".meta.json"), to_json(meta)))
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    print(f"{cfg.command}: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return (EXIT_OK if passed else EXIT_FAIL), written


def _emit_error(exc, as_json, code):
    if as_json:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc), "exit_status": code}}), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--error-json" in argv
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    except (UsageError, ParameterError, DomainError, ConfigurationError, OSError, json.JSONDecodeError) as exc:
        return _emit_error(exc, as_json, EXIT_USAGE)
    try:
        status, _ = run(cfg)
    except Exception as exc:  # any module error -> nonzero exit
        return _emit_error(exc, as_json, EXIT_ERROR)
    return status


if __name__ == "__main__":
    sys.exit(main())
