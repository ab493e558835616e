"""Scenario files: a small INI dialect read with :mod:`configparser`.

Example::

    [model]
    preset = baseline_corrected
    kappa_fxi = 0.7
    shock_persistences.policy = 0.8

    [shock.1]
    target = policy
    size = 1.0
    timing = 0

    [solver]
    horizon = 200

    [simulate]
    n_draws = 2000
    seed = 7
    std.fx = 0.02

    [sweep]
    axis = cbi
    grid = 0.2, 0.5, 0.8

    [output]
    dir = out
    format = both

Floats are written with ``repr`` so a file produced by :func:`to_text` reads
back to bit-identical values.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .calibration import Preset, preset, preset_names
from .errors import ConfigError, InvalidParams, InvalidShock, KisBlockError
from .model import B_REF, SHOCK_TARGETS, ModelParams, ShockSpec, structural_adjust
from .solver import SolveConfig
from .stochastic import DEFAULT_SHOCK_STDS, SimConfig

FORMATS = ("csv", "json", "both")
_SECTIONS = {"model", "solver", "simulate", "sweep", "output"}
_SOLVER_KEYS = {"horizon": int, "tol": float, "max_iter": int, "damping": float,
                "check_determinacy": bool, "stall_iter": int}
_SIM_KEYS = {"n_draws": int, "sim_length": int, "burn_in": int, "seed": int, "chunk_draws": int}
_SHOCK_KEYS = {"target", "size", "timing", "persistence"}
STRUCTURAL_KEYS = ("d_dollar", "b_debt")


@dataclass
class ScenarioConfig:
    preset_name: str = "baseline_corrected"
    overrides: dict[str, float] = field(default_factory=dict)
    shocks: list[ShockSpec] = field(default_factory=list)
    solver: SolveConfig = field(default_factory=SolveConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sweep_axis: str | None = None
    sweep_grid: list[float] = field(default_factory=list)
    out_dir: str = "out"
    fmt: str = "both"

    def base_preset(self) -> Preset:
        return preset(self.preset_name)

    def params(self) -> ModelParams:
        return apply_overrides(self.base_preset().params, self.overrides)


def _is_param_key(key: str) -> bool:
    if key.startswith("shock_persistences."):
        return key.split(".", 1)[1] in SHOCK_TARGETS
    return key in ModelParams.scalar_names()


def apply_overrides(params: ModelParams, overrides: Mapping[str, float]) -> ModelParams:
    """Apply ``key = value`` overrides to ``params``.

    A ``d_dollar`` or ``b_debt`` value that differs from the base runs through
    :func:`structural_adjust` after the plain overrides, so pass-through, FX
    intervention and the debt premium move with it.  The dollarization map is
    not invertible once intervention saturates, so changing ``d_dollar``
    requires an undollarized base.
    """
    scalars: dict = {}
    pers: dict[str, float] = {}
    structural: dict[str, float] = {}
    for key, value in overrides.items():
        if key.startswith("shock_persistences."):
            target = key.split(".", 1)[1]
            if target not in SHOCK_TARGETS:
                raise InvalidParams(f"unknown shock target in {key!r}")
            pers[target] = value
        elif key in STRUCTURAL_KEYS and value != getattr(params, key):
            structural[key] = value
        elif key in ModelParams.scalar_names():
            scalars[key] = value
        else:
            raise InvalidParams(f"unknown parameter {key!r}")
    if pers:
        scalars["shock_persistences"] = pers
    out = params.replace(**scalars) if scalars else params
    if "d_dollar" in structural:
        if params.d_dollar != 0.0:
            raise InvalidParams(f"d_dollar override needs an undollarized base (base has d_dollar={params.d_dollar})")
        out = structural_adjust(out, structural["d_dollar"], structural.get("b_debt"))
    elif "b_debt" in structural:
        b = structural["b_debt"]
        if b < 0.0:
            raise InvalidParams(f"b_debt must be non-negative, got {b}")
        out = out.replace(b_debt=b, lending_premium=out.risk_b * max(0.0, b - B_REF))
    return out


def _locations(text: str) -> dict[tuple[str, str], tuple[int, int]]:
    """1-based (line, column of the value) for every key, by section."""
    where: dict[tuple[str, str], tuple[int, int]] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where[(section, "")] = (lineno, line.index("[") + 1)
            continue
        m = re.match(r"\s*([^=:]+?)\s*[=:]\s*", line)
        if m:
            where[(section, m.group(1).strip())] = (lineno, m.end() + 1)
    return where


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int(raw: str) -> int:
    value = float(raw)
    if value != int(value):
        raise ValueError(f"expected an integer, got {raw!r}")
    return int(value)


def _convert(kind, raw: str):
    if kind is bool:
        return _parse_bool(raw)
    if kind is int:
        return _parse_int(raw)
    return float(raw)


def parse_text(text: str) -> ScenarioConfig:
    """Parse scenario text; every failure is a :class:`ConfigError` with the
    offending line and column when one can be identified."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str  # parameter names are case-sensitive (psi_L)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"key outside any section: {exc.line.strip()!r}", exc.lineno, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse line: {line.strip()!r}", lineno, 1) from None
    where = _locations(text)

    def fail(section: str, key: str, message: str):
        line, col = where.get((section, key), where.get((section, ""), (None, None)))
        raise ConfigError(message, line, col)

    def get(section: str, key: str, kind):
        raw = parser.get(section, key)
        try:
            return _convert(kind, raw)
        except ValueError as exc:
            fail(section, key, f"[{section}] {key}: {exc}")

    cfg = ScenarioConfig()
    for section in parser.sections():
        if section not in _SECTIONS and not re.fullmatch(r"shock(\.\w+)?", section):
            fail(section, "", f"unknown section [{section}]")

    if parser.has_section("model"):
        for key in parser.options("model"):
            if key == "preset":
                cfg.preset_name = parser.get("model", key).strip()
                try:
                    preset(cfg.preset_name)
                except KisBlockError as exc:
                    fail("model", key, str(exc.args[0]))
            elif _is_param_key(key):
                cfg.overrides[key] = get("model", key, float)
            else:
                fail("model", key, f"unknown parameter {key!r}")

    for section in parser.sections():
        if not section.startswith("shock"):
            continue
        opts = dict(parser.items(section))
        for key in opts:
            if key not in _SHOCK_KEYS:
                fail(section, key, f"unknown shock field {key!r}")
        if "target" not in opts or "size" not in opts:
            fail(section, "", f"[{section}] needs both target and size")
        try:
            cfg.shocks.append(ShockSpec(
                target=opts["target"].strip(), size=get(section, "size", float),
                timing=get(section, "timing", int) if "timing" in opts else 0,
                persistence=get(section, "persistence", float) if "persistence" in opts else None))
        except InvalidShock as exc:
            fail(section, "target" if "target" in str(exc) else "", str(exc))

    solver_kw: dict = {}
    if parser.has_section("solver"):
        for key in parser.options("solver"):
            if key not in _SOLVER_KEYS:
                fail("solver", key, f"unknown solver setting {key!r}")
            solver_kw[key] = get("solver", key, _SOLVER_KEYS[key])
    try:
        cfg.solver = SolveConfig(**solver_kw)
    except ValueError as exc:
        fail("solver", "", str(exc))

    sim_kw: dict = {}
    stds: dict[str, float] | None = None
    if parser.has_section("simulate"):
        for key in parser.options("simulate"):
            if key.startswith("std."):
                if key[4:] not in SHOCK_TARGETS:
                    fail("simulate", key, f"unknown shock target {key[4:]!r}")
                stds = stds if stds is not None else {}
                stds[key[4:]] = get("simulate", key, float)
            elif key in _SIM_KEYS:
                sim_kw[key] = get("simulate", key, _SIM_KEYS[key])
            else:
                fail("simulate", key, f"unknown simulation setting {key!r}")
    sim_kw["shock_stds"] = stds if stds is not None else dict(DEFAULT_SHOCK_STDS)
    try:
        cfg.sim = SimConfig(**sim_kw)
    except ValueError as exc:
        fail("simulate", "", str(exc))

    if parser.has_section("sweep"):
        for key in parser.options("sweep"):
            if key not in ("axis", "grid"):
                fail("sweep", key, f"unknown sweep setting {key!r}")
        axis = parser.get("sweep", "axis", fallback="").strip()
        if not _is_param_key(axis):
            fail("sweep", "axis", f"sweep axis {axis!r} is not a model parameter")
        try:
            grid = [float(v) for v in parser.get("sweep", "grid", fallback="").split(",") if v.strip()]
        except ValueError as exc:
            fail("sweep", "grid", f"bad sweep grid: {exc}")
        if not grid:
            fail("sweep", "grid", "sweep grid is empty")
        cfg.sweep_axis, cfg.sweep_grid = axis, grid

    if parser.has_section("output"):
        for key in parser.options("output"):
            if key not in ("dir", "format"):
                fail("output", key, f"unknown output setting {key!r}")
        cfg.out_dir = parser.get("output", "dir", fallback=cfg.out_dir).strip()
        cfg.fmt = parser.get("output", "format", fallback=cfg.fmt).strip()
        if cfg.fmt not in FORMATS:
            fail("output", "format", f"format must be one of {FORMATS}, got {cfg.fmt!r}")

    # validate overrides against the parameter invariants before any run
    try:
        cfg.params()
    except InvalidParams as exc:
        bad = next((k for k in cfg.overrides if k in str(exc)), "")
        fail("model", bad, str(exc))
    return cfg


def read_file(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config {path!r} is not UTF-8: {exc.reason}") from None
    return parse_text(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def params_lines(params: ModelParams, base: ModelParams | None = None) -> list[str]:
    """``key = value`` lines for every parameter (or only those differing from ``base``)."""
    lines = []
    for name in ModelParams.scalar_names():
        v = getattr(params, name)
        if base is None or v != getattr(base, name):
            lines.append(f"{name} = {_fmt(v)}")
    for target in SHOCK_TARGETS:
        v = params.shock_persistences[target]
        if base is None or v != base.shock_persistences[target]:
            lines.append(f"shock_persistences.{target} = {_fmt(v)}")
    return lines


def to_text(cfg: ScenarioConfig, shocks: Sequence[ShockSpec] | None = None) -> str:
    """Canonical text of a scenario; parses back to an equal scenario."""
    out = ["[model]", f"preset = {cfg.preset_name}"]
    out += [f"{k} = {_fmt(float(v))}" for k, v in cfg.overrides.items()]
    for n, s in enumerate(cfg.shocks if shocks is None else shocks, start=1):
        out += ["", f"[shock.{n}]", f"target = {s.target}", f"size = {_fmt(s.size)}",
                f"timing = {s.timing}"]
        if s.persistence is not None:
            out.append(f"persistence = {_fmt(s.persistence)}")
    out += ["", "[solver]"] + [f"{k} = {_fmt(v)}" for k, v in cfg.solver.to_dict().items()
                               if k != "terminal"]
    sim = cfg.sim.to_dict()
    stds = sim.pop("shock_stds")
    out += ["", "[simulate]"] + [f"{k} = {_fmt(v)}" for k, v in sim.items()]
    out += [f"std.{k} = {_fmt(v)}" for k, v in stds.items()]
    if cfg.sweep_axis is not None:
        out += ["", "[sweep]", f"axis = {cfg.sweep_axis}",
                "grid = " + ", ".join(_fmt(float(v)) for v in cfg.sweep_grid)]
    out += ["", "[output]", f"dir = {cfg.out_dir}", f"format = {cfg.fmt}", ""]
    return "\n".join(out)


def preset_text(p: Preset) -> str:
    """A scenario file that pins every parameter of ``p`` explicitly."""
    # pin against the preset itself when registered so structural keys read
    # back as unchanged rather than being mapped a second time
    base = p.name if p.name in preset_names() else "baseline_corrected"
    lines = [f"# {p.name}: {p.description}" if p.description else f"# {p.name}", "[model]",
             f"preset = {base}"]
    for line in params_lines(p.params):
        key = line.split(" = ", 1)[0]
        lines.append(f"{line}  # {p.provenance[key]}")
    return "\n".join(lines) + "\n"
