"""Experiment configuration: JSON schema, presets and validation."""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources

from . import gates
from .controls import ControlModel, full_layout
from .optimize import CostWeights, StepPolicy

SCHEMA_VERSION = 1
SEED_ENV = "QSL_FORGE_SEED"


class ConfigError(ValueError):
    pass


def reference_values() -> dict:
    with resources.files("qsl_forge.data").joinpath("reference_values.json").open(encoding="utf-8") as fh:
        return json.load(fh)


_TOP_KEYS = {"schema_version", "gate", "control", "weights", "optimizer", "iterations", "budget",
             "n_t", "t_f", "step", "crab", "post", "rng_seed", "output_dir", "table"}
_STEP_KEYS = {"mode", "epsilon0", "growth", "growth_every", "shrink", "reject", "min_epsilon"}
_CRAB_KEYS = {"n_modes", "method", "fine_n_t", "a0"}
_POST_KEYS = {"smooth_block", "fine_dt"}


@dataclass
class ExperimentConfig:
    gates: list[str]
    control: object = "full16"
    weights: tuple[float, float] = (0.0, 0.0)
    optimizer: str = "pmp"
    iterations: int = 200
    budget: int = 20000
    n_t: int = 1000
    t_f: float = 1.0
    step: dict = field(default_factory=dict)
    crab: dict = field(default_factory=dict)
    post: dict = field(default_factory=dict)
    rng_seed: int = 0
    output_dir: str = "results"
    table: str | None = None

    # -- derived objects -------------------------------------------------

    def model(self) -> ControlModel:
        if self.control == "full16":
            return ControlModel.full(4)
        if self.control == "limited7":
            return ControlModel.limited7()
        mask = self.control
        return ControlModel.from_active_names(int(mask.get("dim", 4)), mask["active"], mask.get("frozen"))

    def cost_weights(self) -> CostWeights:
        return CostWeights(*self.weights)

    def step_policy(self) -> StepPolicy:
        return StepPolicy(**self.step)

    def for_gate(self, name: str) -> dict:
        """Normalized single-gate view, echoed into result files."""
        d = asdict(self)
        d.pop("gates")
        d.pop("output_dir")  # results stay byte-identical wherever they are written
        d["gate"] = name
        d["weights"] = list(self.weights)
        d["schema_version"] = SCHEMA_VERSION
        return d


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _int(raw, key, lo=None):
    v = raw[key]
    _require(isinstance(v, int) and not isinstance(v, bool), f"{key} must be an integer")
    if lo is not None:
        _require(v >= lo, f"{key} must be >= {lo}")
    return v


def preset(table: str) -> dict:
    """Raw config dict reproducing one reference table."""
    tables = reference_values()["tables"]
    if str(table) not in tables:
        raise ConfigError(f"unknown table {table!r}; known: {', '.join(tables)}")
    raw = copy.deepcopy(tables[str(table)]["config"])
    raw.update(schema_version=SCHEMA_VERSION, gate=list(gates.TABLE_GATES), table=str(table))
    return raw


def from_dict(raw: dict, env=None) -> ExperimentConfig:
    env = os.environ if env is None else env
    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require(raw.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    _require("gate" in raw, "config needs a 'gate' (name or list of names)")

    names = raw["gate"] if isinstance(raw["gate"], list) else [raw["gate"]]
    _require(names, "gate list is empty")
    try:
        names = [gates.canonical_name(str(n)) for n in names]
    except KeyError as e:
        raise ConfigError(e.args[0]) from None

    cfg = ExperimentConfig(gates=names)
    optimizer = raw.get("optimizer", "pmp")
    _require(optimizer in ("pmp", "crab"), f"optimizer must be 'pmp' or 'crab', got {optimizer!r}")
    cfg.optimizer = optimizer
    cfg.n_t = 100 if optimizer == "crab" else 1000

    control = raw.get("control", "full16")
    if isinstance(control, dict):
        _require(set(control) <= {"active", "frozen", "dim"}, "custom control takes active/frozen/dim")
        _require(isinstance(control.get("active"), list) and control["active"],
                 "custom control needs a non-empty 'active' list")
        known = {c.name for c in full_layout(int(control.get("dim", 4)))}
        bad = set(control["active"]) - known
        _require(not bad, f"unknown coupling names {sorted(bad)}")
    else:
        _require(control in ("full16", "limited7"), f"control must be full16, limited7 or a mask, got {control!r}")
    cfg.control = control

    w = raw.get("weights", [0.0, 0.0])
    _require(isinstance(w, (list, tuple)) and len(w) == 2, "weights must be [p1, p2]")
    try:
        w = (float(w[0]), float(w[1]))
    except (TypeError, ValueError):
        raise ConfigError("weights must be numbers") from None
    _require(all(math.isfinite(x) and x >= 0 for x in w), "weights must be finite and >= 0")
    cfg.weights = w

    if "iterations" in raw:
        cfg.iterations = _int(raw, "iterations", 1)
    if "budget" in raw:
        cfg.budget = _int(raw, "budget", 0)
    if "n_t" in raw:
        cfg.n_t = _int(raw, "n_t", 1)
    if "rng_seed" in raw:
        cfg.rng_seed = _int(raw, "rng_seed")
    if "t_f" in raw:
        _require(isinstance(raw["t_f"], (int, float)) and raw["t_f"] > 0, "t_f must be positive")
        cfg.t_f = float(raw["t_f"])

    for key, allowed in (("step", _STEP_KEYS), ("crab", _CRAB_KEYS), ("post", _POST_KEYS)):
        sub = raw.get(key, {})
        _require(isinstance(sub, dict), f"{key} must be an object")
        bad = set(sub) - allowed
        _require(not bad, f"unknown {key} keys: {sorted(bad)}")
        setattr(cfg, key, dict(sub))
    try:
        cfg.step_policy()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"step: {e}") from None
    if "method" in cfg.crab:
        _require(cfg.crab["method"] in ("powell", "nelder-mead"), "crab.method must be powell or nelder-mead")
    if "n_modes" in cfg.crab:
        _require(isinstance(cfg.crab["n_modes"], int) and cfg.crab["n_modes"] >= 1, "crab.n_modes must be >= 1")

    cfg.output_dir = str(raw.get("output_dir", "results"))
    cfg.table = None if raw.get("table") is None else str(raw["table"])

    seed = env.get(SEED_ENV)
    if seed not in (None, ""):
        try:
            cfg.rng_seed = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
    return cfg


def load(path, env=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    return from_dict(raw, env)
