"""Run configuration for the command-line front end.

A config file is a JSON object; every section is optional and unknown keys
are rejected::

    {
      "constants": {"gamma_l": 0.00175, "delta_m": 0.4736, "eps_re": 0.00166, "eps_im": 0},
      "picture": "effective",
      "question": "k0bar",
      "times": [0, 1.34, 1.34, 2.80],
      "questions": ["k0bar", "k0bar", "k0bar", "k0bar"],
      "scan": {"axis": "n", "lo": 0, "hi": 1.6, "step": 0.02},
      "optimize": {"box": 5, "objective": "violation"},
      "mc": {"events": 1000000, "seed": 1, "efficiency_a": 1, "efficiency_b": 1},
      "output": {"path": "scan.csv", "format": "csv"}
    }

``times`` and ``questions`` are ordered (n, m, n', m').
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from kaonbell.physics import (
    K0,
    K0BAR,
    PICTURES,
    PhysicalConstants,
    Quasispin,
    constants_from_mapping,
)
from kaonbell.witness import MAX_BOX, REFERENCE_TIMES, BellSetting, parse_axis

QUESTIONS = {"k0": K0, "k0bar": K0BAR}

PRESETS = {
    "early-window": {
        "times": [0.0, 1.34, 1.34, 2.80], "question": "k0bar",
        "axis": "n", "lo": 0.0, "hi": 1.6, "step": 0.02,
    },
    # With Re eps > 0 the late-time effect shows up for the K0 question.
    "late-window": {
        "times": [4.48, 4.81, 4.81, 0.0], "question": "k0",
        "axis": "mprime", "lo": 0.0, "hi": 100.0, "step": 0.5,
    },
}

_TOP_KEYS = {"constants", "picture", "question", "questions", "times", "scan", "optimize", "mc", "output"}
_SECTION_KEYS = {
    "scan": {"axis", "lo", "hi", "step", "workers"},
    "optimize": {"box", "objective"},
    "mc": {"events", "seed", "efficiency_a", "efficiency_b"},
    "output": {"path", "format"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _number(value: Any, name: str, *, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a finite number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return float(value)


def _integer(value: Any, name: str, *, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name}: expected an integer >= {minimum}, got {value!r}")
    return value


def _question(value: Any, name: str) -> Quasispin:
    try:
        return QUESTIONS[str(value).lower()]
    except KeyError:
        raise ConfigError(f"{name}: expected one of {sorted(QUESTIONS)}, got {value!r}") from None


@dataclass
class ScanSpec:
    axis: str = "n"
    lo: float = 0.0
    hi: float = 1.6
    step: float = 0.02
    workers: int = 1


@dataclass
class OptimizeSpec:
    box: float = 5.0
    objective: str = "violation"


@dataclass
class MCSpec:
    events: int = 1_000_000
    seed: int = 1
    efficiency_a: float = 1.0
    efficiency_b: float = 1.0


@dataclass
class RunConfig:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    picture: str = "effective"
    times: tuple[float, float, float, float] = REFERENCE_TIMES
    questions: tuple[Quasispin, Quasispin, Quasispin, Quasispin] = (K0BAR,) * 4
    scan: ScanSpec = field(default_factory=ScanSpec)
    optimize: OptimizeSpec = field(default_factory=OptimizeSpec)
    mc: MCSpec = field(default_factory=MCSpec)
    out: str | None = None
    format: str | None = None

    def setting(self) -> BellSetting:
        return BellSetting.from_times(*self.times, question=self.questions)

    def validate(self) -> "RunConfig":
        if self.picture not in PICTURES:
            raise ConfigError(f"picture: expected one of {PICTURES}, got {self.picture!r}")
        if len(self.times) != 4:
            raise ConfigError("times: expected four values (n, m, n', m')")
        for slot, t in zip(("t_n", "t_m", "t_nprime", "t_mprime"), self.times):
            _number(t, f"times.{slot}", minimum=0.0)
        try:
            parse_axis(self.scan.axis)
        except ValueError as exc:
            raise ConfigError(f"scan.axis: {exc}") from None
        _number(self.scan.lo, "scan.lo", minimum=0.0)
        _number(self.scan.hi, "scan.hi")
        if self.scan.hi < self.scan.lo:
            raise ConfigError(f"scan.hi: empty range [{self.scan.lo}, {self.scan.hi}]")
        if _number(self.scan.step, "scan.step") <= 0:
            raise ConfigError(f"scan.step: must be > 0, got {self.scan.step}")
        _integer(self.scan.workers, "scan.workers", minimum=1)
        box = _number(self.optimize.box, "optimize.box", minimum=0.0)
        if box > MAX_BOX:
            raise ConfigError(f"optimize.box: must be <= {MAX_BOX}, got {box}")
        if self.optimize.objective not in ("violation", "chsh"):
            raise ConfigError(f"optimize.objective: expected violation|chsh, got {self.optimize.objective!r}")
        _integer(self.mc.events, "mc.events", minimum=1)
        if _integer(self.mc.seed, "mc.seed", minimum=0) >= 2**64:
            raise ConfigError("mc.seed: must fit in an unsigned 64-bit integer")
        for name in ("efficiency_a", "efficiency_b"):
            value = _number(getattr(self.mc, name), f"mc.{name}")
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"mc.{name}: must lie in (0, 1], got {value}")
        if self.format not in (None, "csv", "json"):
            raise ConfigError(f"output.format: expected csv|json, got {self.format!r}")
        return self


def _check_keys(data: dict, allowed: set[str], prefix: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        where = f"{prefix}." if prefix else ""
        raise ConfigError(f"unknown config key(s): {', '.join(where + k for k in unknown)}")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    _check_keys(data, _TOP_KEYS, "")
    cfg = RunConfig()
    if "constants" in data:
        if not isinstance(data["constants"], dict):
            raise ConfigError("constants: expected an object")
        try:
            cfg.constants = constants_from_mapping(data["constants"])
        except ValueError as exc:
            raise ConfigError(f"constants: {exc}") from None
    if "picture" in data:
        cfg.picture = data["picture"]
    if "question" in data:
        cfg.questions = (_question(data["question"], "question"),) * 4
    if "questions" in data:
        qs = data["questions"]
        if not isinstance(qs, list) or len(qs) != 4:
            raise ConfigError("questions: expected a list of four entries")
        cfg.questions = tuple(_question(q, f"questions[{i}]") for i, q in enumerate(qs))
    if "times" in data:
        ts = data["times"]
        if not isinstance(ts, list) or len(ts) != 4:
            raise ConfigError("times: expected a list of four numbers")
        cfg.times = tuple(_number(t, f"times[{i}]", minimum=0.0) for i, t in enumerate(ts))
    for section, target in (("scan", cfg.scan), ("optimize", cfg.optimize), ("mc", cfg.mc)):
        if section in data:
            if not isinstance(data[section], dict):
                raise ConfigError(f"{section}: expected an object")
            _check_keys(data[section], _SECTION_KEYS[section], section)
            for key, value in data[section].items():
                setattr(target, key, value)
    if "output" in data:
        if not isinstance(data["output"], dict):
            raise ConfigError("output: expected an object")
        _check_keys(data["output"], _SECTION_KEYS["output"], "output")
        cfg.out = data["output"].get("path")
        cfg.format = data["output"].get("format")
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc.msg})") from None
    return config_from_dict(data)
