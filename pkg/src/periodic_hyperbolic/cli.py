"""Command-line front end.

Usage::

    periodic-hyperbolic {validate,resonance,solve,kernel,sweep} CONFIG
        [--out PATH] [--json PATH] [--compare-manufactured] [--grid NXxNT]

Exit codes: 0 ok, 1 parse/config error, 2 assumption failure,
3 divergence or resonance, 4 size guard.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import re
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import expr
from .diagnostics import EpsFamily, ManufacturedProblem, kernel_dimension, manufacture, sweep_epsilon
from .problem import COEFFICIENT_NAMES, GridSpec, ProblemSpec, _round_floats, validate
from .resonance import analyze
from .solver import DiscreteOperators, ResonanceError, SolveOptions, assemble_dense, solve

EXIT_OK, EXIT_CONFIG, EXIT_INVALID, EXIT_DIVERGED, EXIT_SIZE = 0, 1, 2, 3, 4
DEFAULTS = {"a": "1", "a1": "0", "a2": "0", "a3": "0", "f": "0", "r0": "1", "r1": "1"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: ProblemSpec
    grid: GridSpec
    opts: SolveOptions
    manufactured: ManufacturedProblem | None = None
    eps: tuple[float, ...] | None = None


def _unquote(raw: str) -> tuple[str, int]:
    """Strip one pair of double quotes; also return the offset of the body in the stripped value."""
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] == '"':
        return value[1:-1], 1
    return value, 0


def _value_offset(text: str, section: str, key: str) -> int:
    """Byte offset of the first character of the value of ``key`` in ``section`` (0 if not found)."""
    current, pos = None, 0
    for line in text.encode().splitlines(keepends=True):
        s = line.decode()
        head = re.match(r"\s*\[([^\]]+)\]", s)
        if head:
            current = head.group(1).strip()
        elif current == section:
            m = re.match(rf"\s*{re.escape(key)}\s*[=:]\s*", s, re.IGNORECASE)
            if m:
                return pos + len(s[: m.end()].encode())
        pos += len(line)
    return 0


def _parse_expr(text, section, key, raw, consts):
    body, lead = _unquote(raw)
    try:
        return expr.parse(body, consts)
    except expr.ExprSyntaxError as err:
        offset = _value_offset(text, section, key) + lead + err.offset
        raise ConfigError(f"[{section}] {key}: {err.args[0]} (byte offset {offset} in file)") from None


def _number(section, key, raw, kind=float):
    try:
        return kind(_unquote(raw)[0])
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None


def load_config(path: str, grid_override: str | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except (OSError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    if not parser.has_section("problem"):
        raise ConfigError("missing [problem] section")

    prob = parser["problem"]
    unknown = set(prob) - set(COEFFICIENT_NAMES) - {"t", "k"}
    if unknown:
        raise ConfigError(f"[problem] unknown keys: {', '.join(sorted(unknown))}")
    T = _number("problem", "T", prob.get("T", "1"))
    k = _number("problem", "k", prob.get("k", "1"), int)
    consts = {"T": T}
    trees = {
        name: _parse_expr(text, "problem", name, prob.get(name, f'"{DEFAULTS[name]}"'), consts)
        for name in COEFFICIENT_NAMES
    }

    if grid_override:
        try:
            grid = GridSpec.parse(grid_override)
        except ValueError as err:
            raise ConfigError(str(err)) from None
    else:
        if not parser.has_section("grid"):
            raise ConfigError("missing [grid] section")
        g = parser["grid"]
        for key in ("nx", "nt"):
            if key not in g:
                raise ConfigError(f"[grid] missing key {key}")
        try:
            grid = GridSpec(_number("grid", "nx", g["nx"], int), _number("grid", "nt", g["nt"], int))
        except ValueError as err:
            raise ConfigError(f"[grid] {err}") from None

    opts_kw = {}
    if parser.has_section("solve"):
        names = {f.name: f.type for f in fields(SolveOptions)}
        for key, raw in parser["solve"].items():
            if key not in names:
                raise ConfigError(f"[solve] unknown key {key}")
            value = _unquote(raw)[0]
            if key == "strategy":
                opts_kw[key] = value
            elif key == "second_iterate":
                opts_kw[key] = parser["solve"].getboolean(key)
            elif key == "max_iter":
                opts_kw[key] = _number("solve", key, raw, int)
            else:
                opts_kw[key] = _number("solve", key, raw)
    try:
        opts = SolveOptions(**opts_kw)
    except ValueError as err:
        raise ConfigError(f"[solve] {err}") from None

    try:
        spec = ProblemSpec(**trees, T=T, k=k)
    except ValueError as err:
        raise ConfigError(f"[problem] {err}") from None

    manufactured = None
    if parser.has_section("manufactured"):
        sec = parser["manufactured"]
        if "w_star" not in sec:
            raise ConfigError("[manufactured] missing key w_star")
        w_star = _parse_expr(text, "manufactured", "w_star", sec["w_star"], consts)
        manufactured = (w_star, trees)

    eps = None
    if parser.has_section("sweep"):
        raw = parser["sweep"].get("eps")
        if raw is None:
            raise ConfigError("[sweep] missing key eps")
        try:
            eps = tuple(float(v) for v in _unquote(raw)[0].split(","))
        except ValueError:
            raise ConfigError(f"[sweep] eps: expected a comma-separated list, got {raw!r}") from None

    cfg = RunConfig(spec=spec, grid=grid, opts=opts, eps=eps)
    if manufactured is not None:
        w_star, trees = manufactured
        try:
            cfg.manufactured = manufacture(
                w_star, trees["a"], trees["a1"], trees["a2"], trees["a3"], T=T, k=k, grid=grid
            )
        except ValueError as err:
            raise _Invalid(f"manufactured problem: {err}") from None
        cfg.spec = cfg.manufactured.spec
    return cfg


class _Invalid(Exception):
    pass


def _dumps(payload: dict) -> str:
    return json.dumps(_round_floats(payload), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit_json(payload: dict, path: str | None, echo: bool = False):
    text = _dumps(payload)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    if echo or not path:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig, args) -> int:
    report = validate(cfg.spec, cfg.grid)
    _emit_json(report.to_dict(), args.json, echo=True)
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_INVALID


def _require_valid(cfg: RunConfig) -> int | None:
    report = validate(cfg.spec, cfg.grid)
    if not report.passed:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    return None


def cmd_resonance(cfg: RunConfig, args) -> int:
    if (code := _require_valid(cfg)) is not None:
        return code
    report = analyze(cfg.spec, cfg.grid)
    print(report.table())
    if args.json:
        _emit_json(report.to_dict(), args.json)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    if (code := _require_valid(cfg)) is not None:
        return code
    ops = DiscreteOperators(cfg.spec, cfg.grid)
    try:
        result = solve(cfg.spec, cfg.grid, cfg.opts, ops=ops)
    except MemoryError as err:
        print(f"size guard: {err}", file=sys.stderr)
        return EXIT_SIZE
    except ResonanceError as err:
        failed = analyze(cfg.spec, cfg.grid).failed_conditions()
        print(f"resonance: {err}; failed conditions: {', '.join(failed) or 'none'}", file=sys.stderr)
        return EXIT_DIVERGED
    payload = {"grid": f"{cfg.grid.nx}x{cfg.grid.nt}", "problem": cfg.spec.to_dict(), "result": result.summary()}
    if args.compare_manufactured:
        if cfg.manufactured is None:
            print("--compare-manufactured needs a [manufactured] section", file=sys.stderr)
            return EXIT_CONFIG
        exact = cfg.manufactured.exact(cfg.grid)
        err = float(np.max(np.abs(result.w.values - exact)))
        rel = err / float(np.max(np.abs(exact)))
        payload["manufactured"] = {"sup_error": err, "sup_relative_error": rel}
        print(f"sup error vs manufactured solution: {err:.17g} (relative {rel:.17g})")
    print(f"converged: {result.converged}  iterations: {result.iterations}  strategy: {result.strategy_used}")
    if args.out:
        _write_solution(args.out, cfg, result)
    if args.json:
        _emit_json(payload, args.json)
    if not result.converged:
        failed = analyze(cfg.spec, cfg.grid).failed_conditions()
        print(f"divergence: iteration did not converge; failed conditions: {', '.join(failed) or 'none'}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _write_solution(path: str, cfg: RunConfig, result):
    X, Tm = cfg.grid.mesh(cfg.spec.T)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "w", "u1", "u2"])
        u = result.u.values
        cols = (X, Tm, result.w.values, u[0], u[1])
        for row in zip(*(c.ravel() for c in cols)):
            writer.writerow([f"{v:.17g}" for v in row])


def cmd_kernel(cfg: RunConfig, args) -> int:
    if (code := _require_valid(cfg)) is not None:
        return code
    try:
        ops = DiscreteOperators(cfg.spec, cfg.grid)
        dim, tail = kernel_dimension(assemble_dense(ops))
    except MemoryError as err:
        print(f"size guard: {err}", file=sys.stderr)
        return EXIT_SIZE
    print(f"kernel dimension: {dim}")
    print("smallest singular values: " + " ".join(f"{v:.6e}" for v in tail))
    if args.json:
        _emit_json({"kernel_dimension": dim, "smallest_singular_values": [float(v) for v in tail]}, args.json)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.eps is None:
        print("sweep needs a [sweep] section with an eps list", file=sys.stderr)
        return EXIT_CONFIG
    try:
        family = EpsFamily(cfg.spec, cfg.eps)
    except ValueError as err:
        print(f"[sweep] {err}", file=sys.stderr)
        return EXIT_CONFIG
    for e in family.eps:
        if (code := _require_valid(_with_eps(cfg, e))) is not None:
            return code
    try:
        result = sweep_epsilon(family, cfg.grid, cfg.opts)
    except ResonanceError as err:
        print(f"resonance: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    print("eps,sup_err,deriv_est")
    for row in result.rows():
        print(",".join(f"{v:.17g}" for v in row))
    tol = 10 * cfg.opts.tol_abs
    if result.max_pairwise_diff <= tol:
        print(f"max pairwise diff ≤ tol ({result.max_pairwise_diff:.3e} ≤ {tol:.3e})")
    else:
        print(f"max pairwise diff {result.max_pairwise_diff:.3e}")
    if result.richardson_rel_diff is not None:
        verdict = "consistent" if result.richardson_consistent else "inconsistent"
        print(f"richardson: {verdict} (relative step change {result.richardson_rel_diff:.3e})")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eps", "sup_err", "deriv_est"])
            for row in result.rows():
                writer.writerow([f"{v:.17g}" for v in row])
    if args.json:
        _emit_json(result.to_dict(), args.json)
    return EXIT_OK


def _with_eps(cfg: RunConfig, e: float) -> RunConfig:
    return RunConfig(cfg.spec.with_eps(e), cfg.grid, cfg.opts, cfg.manufactured, cfg.eps)


COMMANDS = {
    "validate": cmd_validate,
    "resonance": cmd_resonance,
    "solve": cmd_solve,
    "kernel": cmd_kernel,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodic-hyperbolic", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config")
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--json", help="JSON report path")
    parser.add_argument("--compare-manufactured", action="store_true")
    parser.add_argument("--grid", help="override the grid, e.g. 64x64")
    return parser


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _ArgumentParser
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return int(stop.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config, args.grid)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _Invalid as err:
        print(f"violation: {err}", file=sys.stderr)
        return EXIT_INVALID
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    raise SystemExit(main())
