"""Scenario configuration: one human-editable YAML tree per experiment.

A config file has five sections (market, mc, strategy, outputs, plus the
experiment name) and optional experiment-specific blocks.  Scalars promote
to vectors or scalar-times-identity matrices where shapes allow, and
delta_t accepts fractions like "1/252" for readability.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ModelError
from .params import MarketParams
from .strategies import (
    ConstantWeightStrategy,
    LogOptimalStrategy,
    RandomBoundedStrategy,
    Strategy,
    ZeroStrategy,
)

__all__ = [
    "McConfig",
    "StrategyConfig",
    "OutputConfig",
    "CostSweepConfig",
    "ScenarioConfig",
    "load_config",
    "config_from_dict",
    "build_strategy",
]

EXPERIMENTS = (
    "simulate",
    "backtest",
    "verify-measure",
    "duality-report",
    "cost-sweep",
    "optimality-probe",
)


@dataclass
class McConfig:
    n_paths: int = 1000
    seed: int = 0
    workers: int = 0          # 0 means: environment variable or serial


@dataclass
class StrategyConfig:
    policy: str = "log_optimal"
    mode: str = "soft_threshold"
    x0: float = 1_000_000.0
    theta_max: float = 10.0
    h_window: int = 20
    p_cov0: object = None
    caps: object = None
    gearing: object = None
    integer_contracts: bool = False
    literal_product: bool = False
    const_weights: object = None
    bound: float = 1.0
    seed: int = 0


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: tuple = ("csv", "json")


@dataclass
class CostSweepConfig:
    delta_ts: tuple = (1.0 / 52, 1.0 / 252, 1.0 / 2520)
    P_prev: float = 10.0
    P_now: float = 12.0


@dataclass
class ScenarioConfig:
    experiment: str
    market: MarketParams
    mc: McConfig
    strategy: StrategyConfig
    outputs: OutputConfig
    cost_sweep: CostSweepConfig
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        """Stable hash of the resolved config, excluding runtime-only fields.

        Worker count and the output directory do not influence any number
        an experiment produces, so they stay outside the hash and rerun
        artifacts remain byte-identical when only those vary.
        """
        resolved = json.loads(json.dumps(self.raw, sort_keys=True))
        resolved.get("mc", {}).pop("workers", None)
        resolved.get("outputs", {}).pop("dir", None)
        canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _parse_delta_t(value) -> float:
    if isinstance(value, str):
        parts = value.split("/")
        if len(parts) == 2:
            try:
                return float(parts[0]) / float(parts[1])
            except ValueError:
                pass
        raise ConfigError(f"market.delta_t: cannot parse {value!r}")
    return float(value)


def _section(tree: dict, name: str) -> dict:
    sub = tree.get(name, {})
    if sub is None:
        sub = {}
    if not isinstance(sub, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sub


def _coerce_numbers(value):
    """Turn numeric-looking strings into floats, recursively through lists.

    YAML 1.1 only recognizes scientific notation with an explicit sign
    ("1.0e+6"), so values like "1.0e6" arrive as strings; non-numeric
    strings pass through untouched.
    """
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, list):
        return [_coerce_numbers(v) for v in value]
    return value


_INT_FIELDS = {"n_paths", "seed", "workers", "h_window", "lag"}


def _build_dataclass(cls, data: dict, section: str):
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        value = _coerce_numbers(value)
        if key in _INT_FIELDS and value is not None:
            value = int(value)
        if isinstance(value, list):
            value = tuple(value) if key in ("formats", "delta_ts") else value
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(tree: dict) -> ScenarioConfig:
    """Validate a parsed config tree and fill defaults."""
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")

    experiment = tree.get("experiment", "simulate")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}"
        )

    mkt = dict(_section(tree, "market"))
    if "d" not in mkt:
        raise ConfigError("market.d is required")
    if "delta_t" in mkt:
        mkt["delta_t"] = _parse_delta_t(mkt["delta_t"])
    for key, value in list(mkt.items()):
        if key not in ("d", "n_steps", "delta_t"):
            mkt[key] = _coerce_numbers(value)
    mkt["d"] = int(mkt["d"])
    if "n_steps" in mkt:
        mkt["n_steps"] = int(_coerce_numbers(mkt["n_steps"]))
    defaults = {
        "n_steps": 252,
        "delta_t": 1.0 / 252,
        "sigma": 0.2,
        "rho": 1.0,
        "alpha": 0.0,
        "varsigma": 0.0,
        "f": 1.0,
        "c_spread": 0.0,
        "m": 0.0,
        "r": 0.0,
        "k": 1.0,
        "F0": 100.0,
        "beta0": 0.0,
    }
    for key, value in defaults.items():
        mkt.setdefault(key, value)
    try:
        market = MarketParams(**mkt)
    except TypeError as exc:
        raise ConfigError(f"market section: {exc}") from None
    except ModelError as exc:
        raise ConfigError(f"market section: {exc}") from None

    mc = _build_dataclass(McConfig, _section(tree, "mc"), "mc")
    if mc.n_paths < 1:
        raise ConfigError("mc.n_paths must be positive")
    strategy = _build_dataclass(StrategyConfig, _section(tree, "strategy"), "strategy")
    if strategy.policy not in ("zero", "constant", "random", "log_optimal"):
        raise ConfigError(f"strategy.policy unknown: {strategy.policy!r}")
    if strategy.mode not in ("zero_cost", "soft_threshold", "literal"):
        raise ConfigError(f"strategy.mode unknown: {strategy.mode!r}")
    if strategy.x0 < 0:
        raise ConfigError("strategy.x0 must be nonnegative")
    if strategy.theta_max <= 0:
        raise ConfigError("strategy.theta_max must be positive")
    outputs = _build_dataclass(OutputConfig, _section(tree, "outputs"), "outputs")
    sweep = _build_dataclass(CostSweepConfig, _section(tree, "cost_sweep"), "cost_sweep")
    if any(dt <= 0 for dt in sweep.delta_ts):
        raise ConfigError("cost_sweep.delta_ts must be positive")

    raw = {
        "experiment": experiment,
        "market": {k: _jsonable(v) for k, v in mkt.items()},
        "mc": {"n_paths": mc.n_paths, "seed": mc.seed, "workers": mc.workers},
        "strategy": {k: _jsonable(getattr(strategy, k)) for k in strategy.__dataclass_fields__},
        "outputs": {"dir": outputs.dir, "formats": list(outputs.formats)},
        "cost_sweep": {
            "delta_ts": list(sweep.delta_ts),
            "P_prev": sweep.P_prev,
            "P_now": sweep.P_now,
        },
    }
    return ScenarioConfig(
        experiment=experiment,
        market=market,
        mc=mc,
        strategy=strategy,
        outputs=outputs,
        cost_sweep=sweep,
        raw=raw,
    )


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    return value


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a YAML config file.

    Parse errors surface with the line and column reported by the loader;
    validation errors name the offending section and field.
    """
    text = Path(path).read_text()
    try:
        tree = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {path}{where}: {exc.problem}") from None
    return config_from_dict(tree or {})


def build_strategy(cfg: ScenarioConfig) -> Strategy:
    """Instantiate the configured trading policy."""
    s = cfg.strategy
    if s.policy == "zero":
        return ZeroStrategy()
    if s.policy == "constant":
        if s.const_weights is None:
            raise ConfigError("strategy.const_weights is required for the constant policy")
        return ConstantWeightStrategy(s.const_weights)
    if s.policy == "random":
        return RandomBoundedStrategy(bound=s.bound, seed=s.seed)
    return LogOptimalStrategy(mode=s.mode, literal_product=s.literal_product)
