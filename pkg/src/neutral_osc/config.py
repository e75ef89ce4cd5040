"""Run configuration files.

A config is an INI-style file with three sections::

    [equation]
    m = 4
    ell = 1
    rho = 3
    tau_shift = 2
    a = k
    p = 1
    q = 2^m*(2*k+ell)
    k_start = 3*ell

    [analysis]
    horizon = 4000

    [init]
    generator = alt_exact

Coefficients use the grammar of :mod:`neutral_osc.coeff`.  ``#`` starts a
comment anywhere on a line.  Duplicate and unknown keys are errors.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .coeff import BinOp, Expr, Num, Var, Pow, eval_coeff, parse_coeff
from .criteria import DEFAULT_HORIZON, CriteriaOptions, p_bar
from .equation import (
    FirstOrderEquation,
    NeutralEquation,
    Nonlinearity,
    exact_alt_solution,
    first_order_window,
    required_window,
)
from .errors import CoeffSyntaxError, ConfigError, NeutralOscError
from .lattice import LatticeSeq

SECTIONS = ("equation", "analysis", "init")

NEUTRAL_KEYS = {"mode", "m", "ell", "rho", "tau_shift", "a", "p", "q", "f_kind", "L",
                "k_start", "variant", "q_corrected", "note"}
FIRST_ORDER_KEYS = {"mode", "ell", "rho", "p", "L", "k_start", "note"}
ANALYSIS_KEYS = {"horizon", "window", "steps", "margin", "t35_direction",
                 "t318_plain_factorial", "l29_step_exponent", "lambda", "delta_terms"}
INIT_KEYS = {"generator", "value", "slope", "values"}
GENERATORS = ("alt_exact", "constant", "ramp", "explicit")

DEFAULT_WINDOW = 64
DEFAULT_STEPS = 200


@dataclass(frozen=True)
class AnalysisSettings:
    horizon: int = DEFAULT_HORIZON
    window: int = DEFAULT_WINDOW
    steps: int = DEFAULT_STEPS
    options: CriteriaOptions = field(default_factory=CriteriaOptions)


@dataclass(frozen=True)
class InitSpec:
    generator: str = "alt_exact"
    value: float = 1.0
    slope: float = 0.0
    values: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    mode: str
    equation: Union[NeutralEquation, FirstOrderEquation]
    analysis: AnalysisSettings
    init: InitSpec
    raw: dict
    sha256: str
    warnings: tuple[str, ...] = ()
    path: Optional[str] = None

    def flags(self) -> dict:
        return self.analysis.options.flags()


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line of its first definition."""
    out = {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[([^\]]+)\]", body)
        if m:
            section = m.group(1).strip()
            continue
        if "=" in body and section is not None:
            out.setdefault((section, body.split("=", 1)[0].strip()), n)
    return out


def parse_config_text(text: str) -> dict:
    """Split config text into ``{section: {key: (value, line)}}``."""
    cp = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        strict=True, interpolation=None, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected 'key = value')", lineno) from None
    lines = _key_lines(text)
    raw = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))
        raw[sec] = {k: (v.strip(), lines.get((sec, k))) for k, v in cp.items(sec)}
    return raw


def _get(raw, sec, key, default=None):
    entry = raw.get(sec, {}).get(key)
    return (default, None) if entry is None else entry


def _number(raw, sec, key, default, kind=float):
    text, line = _get(raw, sec, key)
    if text is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r} in [{sec}]")
        return default
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {text!r}", line) from None
    if kind is int:
        if not v.is_integer():
            raise ConfigError(f"{key} must be an integer, got {text!r}", line)
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite", line)
    return v


def _bool(raw, sec, key, default=False) -> bool:
    text, line = _get(raw, sec, key)
    if text is None:
        return default
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key} must be true or false, got {text!r}", line)


def _coeff(raw, sec, key, required=True) -> Optional[Expr]:
    text, line = _get(raw, sec, key)
    if text is None:
        if required:
            raise ConfigError(f"missing required key {key!r} in [{sec}]")
        return None
    try:
        return parse_coeff(text)
    except CoeffSyntaxError as exc:
        raise ConfigError(f"{key}: {exc}", line) from None


def _uses_k(e: Expr) -> bool:
    if isinstance(e, Var):
        return e.name == "k"
    if isinstance(e, Pow):
        return _uses_k(e.base)
    if isinstance(e, BinOp):
        return _uses_k(e.left) or _uses_k(e.right)
    return False


def _k_start(raw, ell: float, m: int) -> float:
    e = _coeff(raw, "equation", "k_start", required=False)
    if e is None:
        return 0.0
    if _uses_k(e):
        raise ConfigError("k_start may depend on ell and m but not on k",
                          _get(raw, "equation", "k_start")[1])
    return float(eval_coeff(e, 0.0, ell, m))


def _check_keys(raw, sec, allowed):
    for key, (_, line) in raw.get(sec, {}).items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{sec}]", line)


def build_config(raw: dict, overrides: Optional[dict] = None, source: str = "",
                 path: Optional[str] = None) -> RunConfig:
    """Turn parsed sections into a validated :class:`RunConfig`.

    ``overrides`` replaces equation parameters by name (``L``, ``rho``,
    ``ell``, ``m``) or scales q (``q_scale``) after parsing; used by sweeps.
    """
    overrides = dict(overrides or {})
    raw = {sec: dict(v) for sec, v in raw.items()}
    for name in ("L", "rho", "ell", "m"):
        if name in overrides:
            raw.setdefault("equation", {})[name] = (repr(overrides.pop(name)), None)
    q_scale = overrides.pop("q_scale", None)
    if overrides:
        raise ConfigError(f"cannot override {sorted(overrides)}")

    mode, line = _get(raw, "equation", "mode", "neutral")
    if mode not in ("neutral", "first_order"):
        raise ConfigError(f"mode must be neutral or first_order, got {mode!r}", line)
    _check_keys(raw, "equation", NEUTRAL_KEYS if mode == "neutral" else FIRST_ORDER_KEYS)
    _check_keys(raw, "analysis", ANALYSIS_KEYS)
    _check_keys(raw, "init", INIT_KEYS)

    analysis = _analysis(raw)
    warnings = []
    try:
        if mode == "neutral":
            eq = _neutral(raw, q_scale)
            eq.validate_horizon(0, analysis.horizon - 1)
            _, notes = p_bar(eq, analysis.horizon)
            warnings.extend(notes)
        else:
            eq = _first_order(raw, q_scale)
            eq.validate_horizon(0, analysis.horizon - 1)
    except ConfigError:
        raise
    except (NeutralOscError, ValueError) as exc:
        raise ConfigError(f"invalid equation: {exc}") from None
    init = _init(raw)
    sha = hashlib.sha256(source.encode("utf-8")).hexdigest()
    return RunConfig(mode, eq, analysis, init, raw, sha, tuple(warnings), path)


def _scaled(e: Expr, q_scale) -> Expr:
    return e if q_scale is None else BinOp("*", Num(float(q_scale)), e)


def _neutral(raw, q_scale) -> NeutralEquation:
    m = _number(raw, "equation", "m", None, int)
    ell = _number(raw, "equation", "ell", None)
    rho = _number(raw, "equation", "rho", None, int)
    s = _number(raw, "equation", "tau_shift", None, int)
    variant, vline = _get(raw, "equation", "variant", "displayed")
    if variant not in ("displayed", "corrected"):
        raise ConfigError(f"variant must be displayed or corrected, got {variant!r}", vline)
    q = _coeff(raw, "equation", "q")
    if variant == "corrected":
        q = _coeff(raw, "equation", "q_corrected", required=False)
        if q is None:
            raise ConfigError("variant = corrected needs a q_corrected key", vline)
    kind, _ = _get(raw, "equation", "f_kind", "linear")
    L = _number(raw, "equation", "L", 1.0)
    try:
        f = Nonlinearity(kind, L)
    except ValueError as exc:
        raise ConfigError(str(exc), _get(raw, "equation", "f_kind")[1]) from None
    return NeutralEquation(m=m, ell=ell, rho=rho, shift_s=s,
                           a=_coeff(raw, "equation", "a"), p=_coeff(raw, "equation", "p"),
                           q=_scaled(q, q_scale), f=f, k_start=_k_start(raw, ell, m))


def _first_order(raw, q_scale) -> FirstOrderEquation:
    ell = _number(raw, "equation", "ell", None)
    rho = _number(raw, "equation", "rho", None, int)
    return FirstOrderEquation(ell=ell, rho=rho,
                              coef=_scaled(_coeff(raw, "equation", "p"), q_scale),
                              k_start=_k_start(raw, ell, 1),
                              L=_number(raw, "equation", "L", 1.0))


def _analysis(raw) -> AnalysisSettings:
    horizon = _number(raw, "analysis", "horizon", DEFAULT_HORIZON, int)
    window = _number(raw, "analysis", "window", DEFAULT_WINDOW, int)
    steps = _number(raw, "analysis", "steps", DEFAULT_STEPS, int)
    for name, v, lo in (("horizon", horizon, 32), ("window", window, 4), ("steps", steps, 0)):
        if v < lo:
            raise ConfigError(f"{name} must be >= {lo}, got {v}", _get(raw, "analysis", name)[1])
    lam_text, lam_line = _get(raw, "analysis", "lambda", "default")
    lam = None if lam_text == "default" else _number(raw, "analysis", "lambda", None)
    t35, _ = _get(raw, "analysis", "t35_direction", "mirror")
    try:
        opts = CriteriaOptions(
            lam=lam, t35_direction=t35,
            t318_plain_factorial=_bool(raw, "analysis", "t318_plain_factorial"),
            l29_step_exponent=_bool(raw, "analysis", "l29_step_exponent"),
            margin=_number(raw, "analysis", "margin", 0.05),
            delta_terms=_number(raw, "analysis", "delta_terms", 100_000, int))
    except ValueError as exc:
        raise ConfigError(str(exc), lam_line) from None
    return AnalysisSettings(horizon, window, steps, opts)


def _init(raw) -> InitSpec:
    gen, line = _get(raw, "init", "generator", None)
    values_text, vline = _get(raw, "init", "values")
    if gen is None:
        gen = "explicit" if values_text is not None else "alt_exact"
    if gen not in GENERATORS:
        raise ConfigError(f"generator must be one of {GENERATORS}, got {gen!r}", line)
    values: tuple[float, ...] = ()
    if gen == "explicit":
        if values_text is None:
            raise ConfigError("explicit initial data needs a values key", line)
        try:
            values = tuple(float(v) for v in values_text.split(",") if v.strip())
        except ValueError:
            raise ConfigError("values must be a comma-separated list of numbers", vline) from None
    return InitSpec(gen, _number(raw, "init", "value", 1.0), _number(raw, "init", "slope", 0.0),
                    values)


def load_config(path: Union[str, Path], overrides: Optional[dict] = None) -> RunConfig:
    """Read, parse and validate a config file."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    return build_config(parse_config_text(text), overrides, source=text, path=str(p))


def load_config_text(text: str, overrides: Optional[dict] = None) -> RunConfig:
    return build_config(parse_config_text(text), overrides, source=text)


def initial_window(cfg: RunConfig) -> tuple[int, int]:
    if cfg.mode == "first_order":
        return first_order_window(cfg.equation)
    return required_window(cfg.equation)


def initial_data(cfg: RunConfig) -> LatticeSeq:
    """The initial segment the simulator needs, built from the [init] block."""
    lo, hi = initial_window(cfg)
    n = hi - lo + 1
    lat = cfg.equation.lattice
    spec = cfg.init
    if spec.generator == "alt_exact":
        return exact_alt_solution(lat, n, lo)
    if spec.generator == "constant":
        return LatticeSeq(lat, lo, np.full(n, spec.value))
    if spec.generator == "ramp":
        return LatticeSeq(lat, lo, spec.value + spec.slope * np.arange(n))
    if len(spec.values) != n:
        raise ConfigError(f"explicit initial data needs {n} values (steps {lo}..{hi}), "
                          f"got {len(spec.values)}")
    return LatticeSeq(lat, lo, np.array(spec.values))
