"""Command-line front end.

Verbs: ``irf``, ``simulate``, ``sweep``, ``presets``, ``fit``.  Exit codes:
0 success, 2 configuration error, 3 solver error, 4 infeasible fit.  Every
failure prints a one-line JSON object to stderr (and to ``error.json`` in the
output directory when one is set).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from . import calibration as cal
from . import config as cfgmod
from .config import ScenarioConfig
from .errors import ConfigError, FitError, InfeasibleTargets, KisBlockError, SolverError
from .irf import IrfSummary, run_irf
from .model import SHOCK_TARGETS, ShockSpec
from .solver import SolveReport, StatePath
from .stochastic import simulate_moments

IRF_COLUMNS = ("period", "y_gap", "pi", "price_level", "i_pol", "shadow_rate", "r_lend", "r_dep",
               "spread", "ds", "tau", "mb", "zlb", "depreciation")
SWEEP_COLUMNS = ("index", "axis", "value", "status", "peak_y", "peak_y_period", "peak_p",
                 "peak_p_period", "sacrifice_ratio", "var_pi", "var_ds", "var_y", "mean_mb", "error")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("kisblock")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _num(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def irf_csv(path: StatePath) -> str:
    rows = []
    for t in range(path.horizon):
        rows.append((t, float(path.y_gap[t]), float(path.pi[t]), float(path.price_level[t]),
                     float(path.i_pol[t]), float(path.shadow_rate[t]), float(path.r_lend[t]),
                     float(path.r_dep[t]), float(path.spread[t]), float(path.ds[t]),
                     float(path.tau_term[t]), float(path.mb[t]), bool(path.zlb[t]),
                     bool(path.depreciation[t])))
    return _csv_text(IRF_COLUMNS, rows)


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------


def _parse_set(items: Sequence[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        try:
            out[key] = float(raw)
        except ValueError:
            raise ConfigError(f"--set {key}: expected a number, got {raw!r}") from None
    return out


def _parse_shock(item: str) -> ShockSpec:
    parts = item.split(":")
    if len(parts) not in (2, 3, 4):
        raise ConfigError(f"--shock expects TARGET:SIZE[:TIMING[:PERSISTENCE]], got {item!r}")
    try:
        return ShockSpec(parts[0], float(parts[1]), int(parts[2]) if len(parts) > 2 else 0,
                         float(parts[3]) if len(parts) > 3 else None)
    except ValueError as exc:
        raise ConfigError(f"--shock {item!r}: {exc}") from None


def build_scenario(args) -> ScenarioConfig:
    if args.config:
        sc = cfgmod.read_file(args.config)
    else:
        sc = ScenarioConfig()
        # without a file, the default experiment is a 100 bp policy shock
        sc.shocks = [ShockSpec("policy", 1.0)]
    if args.preset:
        sc.preset_name = args.preset
        cal.preset(args.preset)
    if getattr(args, "shock", None):
        sc.shocks = [_parse_shock(s) for s in args.shock]
    sc.overrides.update(_parse_set(args.set or []))
    if args.out:
        sc.out_dir = args.out
    if args.format:
        sc.fmt = args.format
    if args.seed is not None:
        sc.sim = type(sc.sim)(**{**sc.sim.to_dict(), "seed": args.seed})
    if getattr(args, "axis", None):
        sc.sweep_axis = args.axis
    if getattr(args, "grid", None):
        try:
            sc.sweep_grid = [float(v) for v in args.grid.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"--grid: {exc}") from None
    # round-trip through the canonical text so overrides are validated once
    return cfgmod.parse_text(cfgmod.to_text(sc))


def _provenance(sc: ScenarioConfig) -> dict[str, str]:
    prov = dict(sc.base_preset().provenance)
    for key in sc.overrides:
        prov[key] = "override"
    return prov


def _summary_doc(sc: ScenarioConfig, summary: IrfSummary, report: SolveReport) -> dict:
    return {
        "tool": "kisblock",
        "version": __version__,
        "irf": summary.to_dict(),
        "solve": report.to_dict(),
        "preset": sc.preset_name,
        "provenance": _provenance(sc),
        "params": sc.params().to_dict(),
        "config": cfgmod.to_text(sc),
    }


def _wants(sc: ScenarioConfig, kind: str) -> bool:
    return sc.fmt == "both" or sc.fmt == kind


def run_scenario(sc: ScenarioConfig, out: Path, *, moments: bool = False) -> dict:
    """Solve one scenario and write its artifacts into ``out``."""
    params = sc.params()
    path, summary, report = run_irf(params, sc.shocks, sc.solver)
    result: dict = {"summary": summary, "report": report}
    if _wants(sc, "csv"):
        write_atomic(out / "irf.csv", irf_csv(path))
    if _wants(sc, "json"):
        write_atomic(out / "summary.json", _json_text(_summary_doc(sc, summary, report)))
    write_atomic(out / "scenario.ini", cfgmod.to_text(sc))
    if moments:
        rep = simulate_moments(params, sc.sim)
        result["moments"] = rep
        if _wants(sc, "json"):
            write_atomic(out / "moments.json", _json_text(
                {"tool": "kisblock", "version": __version__, "moments": rep.to_dict(),
                 "preset": sc.preset_name, "sim": sc.sim.to_dict(), "config": cfgmod.to_text(sc)}))
    return result


def run_sweep(sc: ScenarioConfig, out: Path) -> list[dict]:
    if not sc.sweep_axis or not sc.sweep_grid:
        raise ConfigError("sweep needs an axis and a non-empty grid ([sweep] section or --axis/--grid)")
    rows = []
    for k, value in enumerate(sc.sweep_grid):
        point = ScenarioConfig(**{**sc.__dict__, "overrides": {**sc.overrides, sc.sweep_axis: value}})
        row = dict.fromkeys(SWEEP_COLUMNS, None)
        row.update(index=k, axis=sc.sweep_axis, value=value)
        try:
            res = run_scenario(point, out / f"point_{k:03d}", moments=True)
            s, m = res["summary"], res["moments"]
            row.update(status="ok", peak_y=s.peak_y, peak_y_period=s.peak_y_period, peak_p=s.peak_p,
                       peak_p_period=s.peak_p_period, sacrifice_ratio=s.sacrifice_ratio,
                       var_pi=m.var_pi, var_ds=m.var_ds, var_y=m.var_y, mean_mb=m.mean_mb)
        except (SolverError, KisBlockError) as exc:
            row.update(status=type(exc).__name__, error=str(exc))
            log.warning("sweep point %d (%s=%r) failed: %s", k, sc.sweep_axis, value, exc)
        rows.append(row)
    write_atomic(out / "sweep_summary.csv",
                 _csv_text(SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows]))
    return rows


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------


def _cmd_irf(args) -> int:
    sc = build_scenario(args)
    res = run_scenario(sc, Path(sc.out_dir))
    print(_json_text({"irf": res["summary"].to_dict(), "out": sc.out_dir}), end="")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    sc = build_scenario(args)
    res = run_scenario(sc, Path(sc.out_dir), moments=True)
    print(_json_text({"moments": res["moments"].to_dict(), "out": sc.out_dir}), end="")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sc = build_scenario(args)
    rows = run_sweep(sc, Path(sc.out_dir))
    ok = sum(r["status"] == "ok" for r in rows)
    print(_json_text({"points": len(rows), "ok": ok, "out": sc.out_dir}), end="")
    return EXIT_OK


def _cmd_presets(args) -> int:
    listing = []
    for name, p in cal.registry().items():
        listing.append({"name": name, "description": p.description})
        if args.out:
            write_atomic(Path(args.out) / f"{name}.ini", cfgmod.preset_text(p))
    print(_json_text({"presets": listing}), end="")
    return EXIT_OK


def _cmd_fit(args) -> int:
    name = args.preset or "baseline_corrected"
    if name not in cal.FIT_FREE:
        raise ConfigError(f"no fit targets for preset {name!r}; fittable: {', '.join(cal.FIT_FREE)}")
    base = cal.unfitted(name)
    overrides = _parse_set(args.set or [])
    if overrides:
        base = cal.Preset(name, cfgmod.apply_overrides(base.params, overrides), base.provenance,
                          base.description)
    result = cal.fit_to_targets(base, cal.TARGETS[name], cal.FIT_FREE[name])
    out = Path(args.out or "out")
    doc = {"tool": "kisblock", "version": __version__, **result.to_dict(),
           "target": {k: (list(v) if isinstance(v, tuple) else v)
                      for k, v in cal.TARGETS[name].__dict__.items()},
           "free": list(cal.FIT_FREE[name])}
    write_atomic(out / "fit.json", _json_text(doc))
    write_atomic(out / f"{name}_fitted.ini", cfgmod.preset_text(result.preset))
    print(_json_text(doc), end="")
    if not result.feasible:
        raise InfeasibleTargets(f"fit for {name!r} did not meet every target (loss {result.loss:.4g})",
                                result)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--preset", metavar="NAME")
    common.add_argument("--set", action="append", metavar="KEY=VALUE")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=cfgmod.FORMATS)
    common.add_argument("--log-level", default="WARNING")

    p = argparse.ArgumentParser(prog="kisblock", description="Open-economy monetary block simulator")
    p.add_argument("--version", action="version", version=f"kisblock {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    shock_help = f"TARGET:SIZE[:TIMING[:PERSISTENCE]], TARGET in {', '.join(SHOCK_TARGETS)}"
    for verb in ("irf", "simulate"):
        sp = sub.add_parser(verb, parents=[common])
        sp.add_argument("--shock", action="append", help=shock_help)
    sp = sub.add_parser("sweep", parents=[common])
    sp.add_argument("--shock", action="append", help=shock_help)
    sp.add_argument("--axis")
    sp.add_argument("--grid", help="comma-separated values")
    sub.add_parser("presets", parents=[common])
    sub.add_parser("fit", parents=[common])
    return p


_VERBS = {"irf": _cmd_irf, "simulate": _cmd_simulate, "sweep": _cmd_sweep,
          "presets": _cmd_presets, "fit": _cmd_fit}


def _error_payload(exc: Exception) -> dict:
    if isinstance(exc, ConfigError):
        return exc.to_dict()
    payload = {"error": type(exc).__name__, "message": str(exc)}
    determinacy = getattr(exc, "determinacy", None)
    if determinacy is not None:
        payload["determinacy"] = determinacy
    return payload


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _VERBS[args.verb](args)
    except InfeasibleTargets as exc:
        code, payload = EXIT_INFEASIBLE, _error_payload(exc)
    except (SolverError, FitError) as exc:
        code, payload = EXIT_SOLVER, _error_payload(exc)
    except KisBlockError as exc:
        code, payload = EXIT_CONFIG, _error_payload(exc)
        if not isinstance(exc, ConfigError):
            payload = {"error": "ConfigError", "message": str(exc.args[0]) if exc.args else str(exc),
                       "line": None, "column": None}
    text = json.dumps(payload)
    print(text, file=sys.stderr)
    if getattr(args, "out", None):
        try:
            write_atomic(Path(args.out) / "error.json", text + "\n")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
