"""``kaonbell`` command line: eval, scan, optimize, simulate, constants.

Exit codes: 0 success, 2 configuration or I/O error, 3 violation found under
``eval --assert-violation``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from kaonbell.config import PRESETS, QUESTIONS, ConfigError, RunConfig, load_config
from kaonbell.observables import psi_minus
from kaonbell.physics import PICTURES, load_constants
from kaonbell.simulate import (
    efficiency_folded,
    estimate_s,
    generate_events,
    s_from_probs,
    setting_probabilities,
)
from kaonbell.witness import (
    ch_function,
    fingerprint,
    optimize_times,
    s_function,
    time_scan,
    violation,
)

log = logging.getLogger("kaonbell")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3


def sig9(obj: Any) -> Any:
    """Round every float to 9 significant digits for output."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: sig9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig9(v) for v in obj]
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(sig9(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"output: cannot write {path}: {exc.strerror}") from None


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.constants:
        try:
            cfg.constants = load_constants(args.constants)
        except OSError as exc:
            raise ConfigError(f"constants: cannot read {args.constants}: {exc.strerror}") from None
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"constants: {exc}") from None
    if args.doubled_oscillation:
        cfg.constants = cfg.constants.doubled_oscillation()
    if args.picture:
        cfg.picture = args.picture
    preset = getattr(args, "preset", None)
    if preset:
        p = PRESETS[preset]
        cfg.times = tuple(p["times"])
        cfg.questions = (QUESTIONS[p["question"]],) * 4
        cfg.scan = replace(cfg.scan, axis=p["axis"], lo=p["lo"], hi=p["hi"], step=p["step"])
    if args.question:
        cfg.questions = (QUESTIONS[args.question],) * 4
    if args.times is not None:
        cfg.times = tuple(args.times)
    for attr, target, key in (
        ("axis", cfg.scan, "axis"), ("lo", cfg.scan, "lo"), ("hi", cfg.scan, "hi"),
        ("step", cfg.scan, "step"), ("workers", cfg.scan, "workers"),
        ("box", cfg.optimize, "box"), ("objective", cfg.optimize, "objective"),
        ("events", cfg.mc, "events"), ("seed", cfg.mc, "seed"),
        ("efficiency_a", cfg.mc, "efficiency_a"), ("efficiency_b", cfg.mc, "efficiency_b"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(target, key, value)
    if args.out:
        cfg.out = args.out
    if args.format:
        cfg.format = args.format
    return cfg.validate()


def _header(cfg: RunConfig, command: str) -> dict:
    setting = cfg.setting()
    return {
        "command": command,
        "picture": cfg.picture,
        "constants": cfg.constants.to_dict(),
        "setting": setting.to_dict(),
        "fingerprint": fingerprint(cfg.constants, setting, picture=cfg.picture),
    }


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    setting, rho = cfg.setting(), psi_minus()
    result = violation(setting, rho, cfg.constants, cfg.picture)
    ch, ch_min, ch_max = ch_function(setting, rho, cfg.constants, cfg.picture)
    out = _header(cfg, "eval")
    out.update(result.to_dict())
    out["ch"] = {"value": ch, "sep_min": ch_min, "sep_max": ch_max}
    _emit(dump_json(out), cfg.out)
    if args.assert_violation and result.delta_min < -args.tol:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_scan(cfg: RunConfig, args: argparse.Namespace) -> int:
    result = time_scan(
        cfg.setting(), cfg.scan.axis, cfg.scan.lo, cfg.scan.hi, cfg.scan.step,
        psi_minus(), cfg.constants, cfg.picture, workers=cfg.scan.workers,
    )
    sidecar = _header(cfg, "scan")
    sidecar.update(
        {"axis": list(result.axis), "lo": cfg.scan.lo, "hi": cfg.scan.hi, "step": cfg.scan.step,
         "scan_fingerprint": result.fingerprint}
    )
    if (cfg.format or "csv") == "json":
        sidecar["points"] = result.to_json()["points"]
        _emit(dump_json(sidecar), cfg.out)
        return EXIT_OK
    _emit(result.to_csv(), cfg.out)
    if cfg.out:
        _emit(dump_json(sidecar), cfg.out + ".json")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, args: argparse.Namespace) -> int:
    objective = cfg.optimize.objective
    if args.doubled_oscillation and args.objective is None:
        objective = "chsh"
    res = optimize_times(
        cfg.optimize.box, psi_minus(), cfg.constants, cfg.picture,
        question=cfg.questions[0], objective=objective,
    )
    out = _header(cfg, "optimize")
    out.update(
        {
            "box": cfg.optimize.box,
            "objective": objective,
            "best_times": list(res.setting.times),
            "best_value": res.value,
            "abs_s_state": abs(res.witness.s_state),
            "exceeds_chsh_bound": abs(res.witness.s_state) > 2.0,
            "restarts": res.restarts,
        }
    )
    out.update(res.witness.to_dict())
    _emit(dump_json(out), cfg.out)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    setting, rho, c, mc = cfg.setting(), psi_minus(), cfg.constants, cfg.mc
    events = generate_events(
        setting, rho, c, mc.events, mc.seed, mc.efficiency_a, mc.efficiency_b, picture=cfg.picture
    )
    probs = setting_probabilities(setting, rho, c, cfg.picture)
    folded = {k: efficiency_folded(p, mc.efficiency_a, mc.efficiency_b) for k, p in probs.items()}
    summary = _header(cfg, "simulate")
    summary.update(
        {
            "seed": mc.seed,
            "n_events": mc.events,
            "efficiency_a": mc.efficiency_a,
            "efficiency_b": mc.efficiency_b,
            "s_analytic": s_function(setting, rho, c, cfg.picture),
            "s_analytic_with_efficiency": s_from_probs(folded),
        }
    )
    try:
        est = estimate_s(events)
    except ValueError as exc:
        log.warning("%s", exc)
        summary.update({"s_hat": None, "stderr": None, "warning": str(exc)})
    else:
        summary.update(
            {
                "s_hat": est.s_hat,
                "stderr": est.stderr,
                "tallies": est.counts_dict(),
                "deviation_in_stderr": (
                    (est.s_hat - summary["s_analytic_with_efficiency"]) / est.stderr
                    if est.stderr > 0 else None
                ),
            }
        )
    if cfg.out:
        _emit(events.to_csv(), cfg.out)
        _emit(dump_json(summary), cfg.out + ".summary.json")
    else:
        _emit(dump_json(summary), None)
    return EXIT_OK


def cmd_constants(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = {"constants": cfg.constants.to_dict(), "picture": cfg.picture,
           "fingerprint": fingerprint(cfg.constants, picture=cfg.picture)}
    _emit(dump_json(out), cfg.out)
    return EXIT_OK


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--constants", help="constants JSON {gamma_l, delta_m, eps_re, eps_im}")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--question", choices=sorted(QUESTIONS), help="question for all four slots")
    common.add_argument("--picture", choices=PICTURES)
    common.add_argument("--times", type=float, nargs=4, metavar=("TN", "TM", "TNP", "TMP"))
    common.add_argument(
        "--doubled-oscillation", action="store_true", help="counterfactual: double delta_m"
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kaonbell", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="S, separable bounds and violation")
    p.add_argument("--assert-violation", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("scan", parents=[common], help="witness along one (or tied) time slots")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--axis", help="slot(s) to vary, e.g. n or m+nprime")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("optimize", parents=[common], help="search measurement times in a box")
    p.add_argument("--box", type=float)
    p.add_argument("--objective", choices=("violation", "chsh"))
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo event generation")
    p.add_argument("--events", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--efficiency-a", type=_unit_interval)
    p.add_argument("--efficiency-b", type=_unit_interval)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("constants", parents=[common], help="print resolved physical constants")
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"kaonbell: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"kaonbell: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
