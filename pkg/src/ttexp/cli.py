"""Command-line interface: ``exp``, ``benchmark`` and ``inspect``.

Exit codes: 0 success, 1 input error, 2 non-convergence (outputs are still
written). Settings are taken from command-line flags, then the JSON config,
then defaults.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from dataclasses import fields
from pathlib import Path


from . import io as ttio
from .als import SolveConfig, scaled_exp_tt
from .benchmarks import BENCHMARK_DEFAULTS, BENCHMARKS, ROW_COLUMNS, run_benchmark
from .galerkin import ExponentTT
from .tt import TTOperator, norm, tt_dofs

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

SOLVE_KEYS = tuple(f.name for f in fields(SolveConfig))
EXP_KEYS = {"input", "output", "y0", "spatial", "format"} | set(SOLVE_KEYS)


class InputError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {p}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"{p}: config must be a JSON object")
    return cfg


def _merge(cfg: dict, args, keys=("seed", "format")) -> dict:
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _check_keys(cfg: dict, allowed, where: str):
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise InputError(f"unknown {where} keys: {', '.join(sorted(unknown))}")


def _fmt(cfg) -> str:
    f = cfg.get("format", "json")
    if f not in ("json", "csv"):
        raise InputError(f"unknown format {f!r}; expected json or csv")
    return f


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def cmd_exp(args) -> int:
    cfg = _merge(_load_config(args.config), args)
    if args.input is not None:
        cfg["input"] = args.input
    if args.out is not None:
        cfg["output"] = args.out
    _check_keys(cfg, EXP_KEYS, "exp config")
    fmt = _fmt(cfg)
    if "input" not in cfg:
        raise InputError("no input exponent given (config key 'input' or positional argument)")
    try:
        h = ttio.load(cfg["input"])
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    except ttio.TTFormatError as exc:
        raise InputError(str(exc)) from exc
    if isinstance(h, TTOperator):
        raise InputError(f"{cfg['input']}: expected a TT tensor, found an operator")
    try:
        solve = SolveConfig(**{k: cfg[k] for k in SOLVE_KEYS if k in cfg})
        exponent = ExponentTT(h, cfg.get("y0"), bool(cfg.get("spatial", False)))
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid settings: {exc}") from exc
    u, report = scaled_exp_tt(exponent, solve.d_a, config=solve)
    out = Path(cfg.get("output", "result.tt.json"))
    ttio.save(u, out)
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2)
        out.with_name(out.name + ".report.json").write_text(text)
    else:
        text = _csv_text(("sweep", "normal_res", "time_ms"), report.trace_rows())
        out.with_name(out.name + ".trace.csv").write_text(text)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def benchmark_document(result, seed: int, timing: bool = True) -> dict:
    """JSON-ready report of a benchmark run."""
    cols = list(ROW_COLUMNS)
    rows = [list(r) for r in result.rows]
    if not timing:
        cols = cols[:-1]
        rows = [r[:-1] for r in rows]
    return {
        "benchmark": result.name,
        "seed": seed,
        "param_name": result.param_name,
        "columns": cols,
        "rows": rows,
        "solve": [r.to_dict(timing=timing) for r in result.reports],
        "errors": [e.to_dict() for e in result.errors],
        "extra": result.extra,
        "converged": result.converged,
    }


def cmd_benchmark(args) -> int:
    cfg = _merge(_load_config(args.config), args)
    if args.name is not None:
        cfg["benchmark"] = args.name
    name = cfg.pop("benchmark", None)
    if name not in BENCHMARKS:
        raise InputError(f"unknown benchmark {name!r}; available: {', '.join(sorted(BENCHMARKS))}")
    fmt = _fmt(cfg)
    cfg.pop("format", None)
    seed = int(cfg.pop("seed", 0))
    grid_csv = cfg.pop("grid_csv", None)
    _check_keys(cfg, BENCHMARK_DEFAULTS[name], f"{name} benchmark")
    try:
        result = run_benchmark(name, cfg, seed)
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"invalid benchmark settings: {exc}") from exc
    if fmt == "json":
        text = json.dumps(benchmark_document(result, seed), indent=2)
    else:
        header = [result.param_name] + list(ROW_COLUMNS[1:])
        text = _csv_text(header, result.rows)
    if args.out is not None:
        Path(args.out).write_text(text)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if grid_csv is not None and result.grid is not None:
        Path(grid_csv).write_text(_csv_text(("x1", "x2"), result.grid.points.tolist()))
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def inspect_document(t) -> dict:
    if isinstance(t, TTOperator):
        return {"kind": "operator", "order": t.order, "dims": list(t.row_dims),
                "col_dims": list(t.col_dims), "ranks": list(t.ranks), "max_rank": t.max_rank}
    return {"kind": "tensor", "order": t.order, "dims": list(t.dims), "ranks": list(t.ranks),
            "max_rank": t.max_rank, "dofs": tt_dofs(t), "norm": norm(t)}


def cmd_inspect(args) -> int:
    cfg = _merge(_load_config(args.config), args, keys=("format",))
    if args.path is not None:
        cfg["input"] = args.path
    _check_keys(cfg, {"input", "format", "seed"}, "inspect config")
    fmt = _fmt(cfg)
    if "input" not in cfg:
        raise InputError("no TT file given")
    try:
        t = ttio.load(cfg["input"])
    except (FileNotFoundError, ttio.TTFormatError) as exc:
        raise InputError(str(exc)) from exc
    doc = inspect_document(t)
    if fmt == "json":
        text = json.dumps(doc, indent=2)
    else:
        text = _csv_text(list(doc), [[json.dumps(v) if isinstance(v, list) else v for v in doc.values()]])
    if args.out is not None:
        Path(args.out).write_text(text)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttexp", description="Low-rank TT approximation of exp(h).")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=int, help="random seed (non-negative)")
    common.add_argument("--format", choices=("json", "csv"), help="report format")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("exp", parents=[common], help="exponentiate a TT exponent file")
    p.add_argument("input", nargs="?", help="TT exponent file (overrides config 'input')")
    p.set_defaults(func=cmd_exp)
    p = sub.add_parser("benchmark", parents=[common], help="run a named benchmark")
    p.add_argument("name", nargs="?", help=f"one of {', '.join(sorted(BENCHMARKS))}")
    p.set_defaults(func=cmd_benchmark)
    p = sub.add_parser("inspect", parents=[common], help="print rank profile of a TT file")
    p.add_argument("path", nargs="?", help="TT file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
