"""Command-line front end: simulate, criteria, examples, sweep.

Exit codes: 0 success (or an oscillation verdict), 1 inconclusive verdict or
a failing example, 2 any error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import classify_trajectory
from .config import RunConfig, build_config, initial_data, load_config, parse_config_text
from .criteria import OverallVerdict, overall
from .equation import (
    exact_alt_solution,
    first_order_residual_seq,
    residual_seq,
    simulate,
    simulate_first_order,
    z_seq,
)
from .errors import ConfigError, NeutralOscError, SimulationOverflow

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2

FIXTURES = ("eeq1.1", "eeq1.2", "eeq1.3", "eeq1.4", "eeq1.5")
SWEEP_PARAMS = ("L", "rho", "ell", "m", "q_scale")
RESIDUAL_STEPS = 200
RESIDUAL_REL_TOL = 1e-9

SIMULATE_HEADER = ["r", "k", "x", "z", "residual"]
CRITERIA_HEADER = ["id", "applicable", "threshold", "estimate_kind", "estimate", "margin", "verdict"]
SWEEP_HEADER = ["param_value", "conclusion", "holding_ids"]
EXAMPLES_HEADER = ["name", "ell", "variant", "residual_max", "residual_ok", "conclusion", "passed"]


def fmt(v) -> str:
    """Shortest round-trip text for floats; blank for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _writer(buf):
    return csv.writer(buf, lineterminator="\n")


def _write_out(path: Optional[str], text: str) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise ConfigError(f"unknown example {name!r}; choose from {', '.join(FIXTURES)} or all")
    return Path(str(resources.files("neutral_osc") / "fixtures" / (name.replace(".", "_") + ".cfg")))


def provenance(cfg: RunConfig) -> str:
    flags = " ".join(f"{k}={'default' if v is None else v if isinstance(v, str) else fmt(v)}"
                     for k, v in cfg.flags().items())
    return f"config sha256={cfg.sha256} version={__version__} flags: {flags}"


# -- simulate ---------------------------------------------------------------

def _simulate_rows(cfg: RunConfig, x) -> list[list[str]]:
    eq = cfg.equation
    if cfg.mode == "first_order":
        z = None
        res = first_order_residual_seq(eq, x) if len(x) > eq.rho + 1 else None
    else:
        z = z_seq(eq, x) if len(x) > abs(eq.shift_s) else None
        try:
            res = residual_seq(eq, x)
        except NeutralOscError:
            res = None
    rows = []
    for r, k, xv in zip(x.steps(), x.points(), x.values):
        zv = z[int(r)] if z is not None and z.r_min <= r <= z.r_max else None
        rv = res[int(r)] if res is not None and res.r_min <= r <= res.r_max else None
        rows.append([fmt(int(r)), fmt(k), fmt(xv), fmt(zv), fmt(rv)])
    return rows


def _run_sim(cfg: RunConfig, steps: int):
    init = initial_data(cfg)
    if cfg.mode == "first_order":
        return simulate_first_order(cfg.equation, init, steps)
    return simulate(cfg.equation, init, steps)


def cmd_simulate(cfg: RunConfig, n_steps: Optional[int], out: Optional[str]) -> int:
    steps = cfg.analysis.steps if n_steps is None else n_steps
    print(provenance(cfg))
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(SIMULATE_HEADER)
    try:
        x = _run_sim(cfg, steps)
    except SimulationOverflow as exc:
        if exc.partial is not None:
            w.writerows(_simulate_rows(cfg, exc.partial))
        w.writerow([f"#truncated at step {exc.step}: {exc}"])
        _write_out(out, buf.getvalue())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    w.writerows(_simulate_rows(cfg, x))
    _write_out(out, buf.getvalue())
    window = min(cfg.analysis.window, len(x))
    if window >= 4:
        v = classify_trajectory(x, window)
        print(f"trajectory: {v.kind} ({v.sign_change_count} sign changes in the last "
              f"{v.window} samples, last at step {v.last_sign_change_step})")
    else:
        print("trajectory: too short to classify")
    return EXIT_OK


# -- criteria ---------------------------------------------------------------

def criteria_rows(verdict: OverallVerdict) -> list[list[str]]:
    rows = []
    for r in verdict.reports:
        rows.append([str(r.id), fmt(r.applicable), fmt(r.threshold) if r.applicable else "",
                     r.estimate_kind, fmt(r.estimate_value), fmt(r.margin), r.verdict])
    return rows


def print_verdict(verdict: OverallVerdict) -> None:
    dc = verdict.delta_class
    print(f"conclusion: {verdict.describe()}")
    if dc is not None:
        print(f"delta series: {dc.kind}; shift regime: {verdict.shift_regime}")
    for r in verdict.reports:
        if not r.applicable:
            continue
        est = r.estimate_kind or "-"
        val = fmt(r.estimate_value) or "-"
        print(f"  {str(r.id):<11} {r.verdict:<12} estimate {est} {val} vs threshold {fmt(r.threshold)}")
        for note in r.notes:
            print(f"      note: {note}")
    for note in verdict.notes:
        print(f"  note: {note}")


def cmd_criteria(cfg: RunConfig, horizon: Optional[int], out: Optional[str]) -> int:
    h = cfg.analysis.horizon if horizon is None else horizon
    print(provenance(cfg))
    for wmsg in cfg.warnings:
        print(f"warning: {wmsg}")
    verdict = overall(cfg.equation, h, cfg.analysis.options)
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(CRITERIA_HEADER)
    w.writerows(criteria_rows(verdict))
    _write_out(out, buf.getvalue())
    print_verdict(verdict)
    return EXIT_OK if verdict.oscillatory else EXIT_INCONCLUSIVE


# -- examples ---------------------------------------------------------------

def example_residual(cfg: RunConfig, steps: int = RESIDUAL_STEPS) -> tuple[float, bool]:
    """Largest residual of the alternating solution, and whether it is within tolerance."""
    eq = cfg.equation
    lo = min(eq.shift_s, -eq.rho, 0)
    hi = steps + eq.m + max(eq.shift_s, 0)
    x = exact_alt_solution(eq.lattice, hi - lo + 1, lo)
    res = residual_seq(eq, x)
    qmax = float(np.max(np.abs(eq.q_at(eq.lattice.base + np.arange(steps) * eq.ell))))
    worst = float(np.max(np.abs(res.values)))
    return worst, worst <= RESIDUAL_REL_TOL * max(qmax, 1.0)


def run_example(name: str, ell: Optional[float] = None, variant: Optional[str] = None):
    path = fixture_path(name)
    overrides = {} if ell is None else {"ell": ell}
    text = path.read_text(encoding="utf-8")
    if variant is not None and "q_corrected" in text:
        text = _set_variant(text, variant)
    cfg = build_config(parse_config_text(text), overrides, source=text, path=str(path))
    worst, ok = example_residual(cfg)
    verdict = overall(cfg.equation, cfg.analysis.horizon, cfg.analysis.options)
    return cfg, worst, ok, verdict


def _set_variant(text: str, variant: str) -> str:
    lines = []
    seen = False
    for line in text.splitlines():
        if line.split("#", 1)[0].strip().startswith("variant"):
            line = f"variant = {variant}"
            seen = True
        lines.append(line)
    if not seen:
        idx = lines.index("[equation]") + 1
        lines.insert(idx, f"variant = {variant}")
    return "\n".join(lines) + "\n"


def cmd_examples(name: str, ell: Optional[float], variant: Optional[str], out: Optional[str]) -> int:
    names = FIXTURES if name == "all" else (name,)
    for n in names:
        fixture_path(n)
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(EXAMPLES_HEADER)
    all_pass = True
    print(f"{'example':<8} {'ell':>4} {'variant':<10} {'max residual':>14}  {'residual':<8} conclusion")
    for n in names:
        cfg, worst, ok, verdict = run_example(n, ell, variant)
        var = cfg.raw.get("equation", {}).get("variant", ("displayed", None))[0]
        passed = ok and verdict.oscillatory
        all_pass &= passed
        print(f"{n:<8} {fmt(cfg.equation.ell):>4} {var:<10} {worst:>14.3e}  "
              f"{'pass' if ok else 'FAIL':<8} {verdict.describe()}  [{'PASS' if passed else 'FAIL'}]")
        w.writerow([n, fmt(cfg.equation.ell), var, fmt(worst), fmt(ok), verdict.describe(),
                    fmt(passed)])
    _write_out(out, buf.getvalue())
    return EXIT_OK if all_pass else EXIT_INCONCLUSIVE


# -- sweep ------------------------------------------------------------------

def _parse_values(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_sweep(config_path: str, param: str, values: Sequence[str], horizon: Optional[int],
              out: Optional[str]) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {param!r}")
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(SWEEP_HEADER)
    had_error = False
    for token in values:
        try:
            value = float(token)
            cfg = load_config(config_path, {param: value})
            h = cfg.analysis.horizon if horizon is None else horizon
            verdict = overall(cfg.equation, h, cfg.analysis.options)
            holding = sorted(str(r.id) for r in verdict.reports if r.verdict == "Holds")
            row = [token, verdict.conclusion, ";".join(holding)]
        except (ValueError, NeutralOscError) as exc:
            had_error = True
            row = [token, "Error", str(exc)]
        w.writerow(row)
        print(f"{param}={row[0]}: {row[1]} {row[2]}")
    _write_out(out, buf.getvalue())
    return EXIT_ERROR if had_error else EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neutral-osc",
                                 description="Oscillation experiments for neutral difference equations.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate from the config's initial data")
    s.add_argument("--config", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--out")

    c = sub.add_parser("criteria", help="evaluate the oscillation criteria")
    c.add_argument("--config", required=True)
    c.add_argument("--horizon", type=int)
    c.add_argument("--out")

    e = sub.add_parser("examples", help="check the bundled example equations")
    e.add_argument("name", nargs="?", default="all")
    e.add_argument("--ell", type=float)
    e.add_argument("--variant", choices=("displayed", "corrected"))
    e.add_argument("--out")

    w = sub.add_parser("sweep", help="re-run the criteria over a parameter grid")
    w.add_argument("--config", required=True)
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True)
    w.add_argument("--horizon", type=int)
    w.add_argument("--out")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(load_config(args.config), args.steps, args.out)
        if args.command == "criteria":
            return cmd_criteria(load_config(args.config), args.horizon, args.out)
        if args.command == "examples":
            return cmd_examples(args.name, args.ell, args.variant, args.out)
        return cmd_sweep(args.config, args.param, _parse_values(args.values), args.horizon,
                         args.out)
    except (OSError, NeutralOscError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
