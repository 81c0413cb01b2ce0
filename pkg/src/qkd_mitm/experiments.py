"""Monte Carlo harness: run many seeded sessions, aggregate, emit CSV.

Plan files are JSON::

    {
      "name": "list-sweep",
      "config": {"m_bits": 8, "r_bits": 4, "n_bits": 2, "num_qubits": 8},
      "adversary": "list:0",
      "trials": 10000,
      "seed": 0,
      "sweep": {"parameter": "list_size", "values": [0, 4, 8, 12, 16]}
    }

``config`` takes the keyword arguments of :meth:`ProtocolConfig.build`
(``countermeasures`` as a list).  Trial ``i`` runs with session seed and
adversary seed ``seed + i``.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .adversary import AdversaryStrategy
from .auth import WEGMAN_CARTER, Bounds, analytic_bounds
from .errors import ConfigError, ContractViolation, GuardRefused
from .hash_core import ball_coverage, fiber_size
from .protocol import ABORTED_AUTH, ABORTED_QBER, ProtocolConfig, run_session

__all__ = [
    "ExperimentPlan",
    "ExperimentRow",
    "ExperimentResult",
    "CSV_COLUMNS",
    "run_trials",
    "emit_csv",
    "read_csv",
    "binomial_halfwidth",
]

SWEEPABLE = ("list_size", "max_radius", "n_bits", "r_bits", "m_bits", "auth_mode", "scheme",
             "countermeasures", "channel_error_rate")

CONFIG_KEYS = ("m_bits", "r_bits", "n_bits", "scheme", "public_hash", "num_qubits", "auth_mode",
               "channel_error_rate", "qber_abort_threshold", "ec_block_bits", "sifted_key_bits",
               "pa_security_margin_bits", "countermeasures", "key_pool_bits")


def binomial_halfwidth(successes: int, n: int, sigmas: float = 3.0) -> float:
    """``sigmas`` binomial standard deviations of the success fraction (0 when n = 0)."""
    if n <= 0:
        return 0.0
    p = successes / n
    return sigmas * math.sqrt(p * (1 - p) / n)


def build_config(params: dict, seed: int = 0) -> ProtocolConfig:
    unknown = set(params) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = dict(params)
    if "countermeasures" in kwargs:
        kwargs["countermeasures"] = frozenset(kwargs["countermeasures"])
    try:
        return ProtocolConfig.build(seed=seed, **kwargs)
    except ConfigError:
        raise
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ExperimentPlan:
    config: dict
    adversary: str = "absent"
    trials: int = 1000
    seed: int = 0
    name: str = "experiment"
    eve_bases: str = "random"
    sweep_parameter: Optional[str] = None
    sweep_values: tuple = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.seed < 1 << 63:
            raise ConfigError("seed must be a nonnegative 63-bit integer")
        if self.sweep_parameter is not None:
            if self.sweep_parameter not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {self.sweep_parameter!r}; choose from {SWEEPABLE}")
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
        # report bad configurations before any trial runs
        for point in self.points():
            self.materialize(point)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentPlan:
        allowed = {"name", "config", "adversary", "trials", "seed", "sweep", "eve_bases"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown plan keys {sorted(unknown)}")
        sweep = data.get("sweep") or {}
        if sweep and set(sweep) != {"parameter", "values"}:
            raise ConfigError("sweep needs exactly 'parameter' and 'values'")
        return cls(
            config=dict(data.get("config", {})),
            adversary=data.get("adversary", "absent"),
            trials=int(data.get("trials", 1000)),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "experiment")),
            eve_bases=data.get("eve_bases", "random"),
            sweep_parameter=sweep.get("parameter"),
            sweep_values=tuple(tuple(v) if isinstance(v, list) else v
                               for v in sweep.get("values", ())),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentPlan:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read plan {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"plan {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"plan {path} must hold a JSON object")
        return cls.from_dict(data)

    def points(self) -> list:
        return list(self.sweep_values) if self.sweep_parameter else [None]

    def materialize(self, value) -> tuple[ProtocolConfig, AdversaryStrategy]:
        params = dict(self.config)
        strategy = AdversaryStrategy.parse(self.adversary, seed=self.seed)
        strategy = replace(strategy, eve_bases=self.eve_bases)
        p = self.sweep_parameter
        if p == "list_size":
            strategy = replace(strategy, list_size=int(value))
        elif p == "max_radius":
            strategy = replace(strategy, max_radius=int(value))
        elif p is not None:
            params[p] = list(value) if p == "countermeasures" else value
        return build_config(params, self.seed), strategy


@dataclass
class _Counts:
    trials: int = 0
    completed: int = 0
    mitm_completed: int = 0
    sifting_success: int = 0
    tag_attempts: int = 0
    tag_accepts: int = 0
    opportunities: int = 0
    successes: int = 0
    detected: int = 0
    auth_aborts: int = 0
    qber_aborts: int = 0
    qber_sum: float = 0.0
    qber_count: int = 0
    key_consumed: int = 0

    def merge(self, other: _Counts) -> _Counts:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


def _run_one(args) -> _Counts:
    config, strategy, seed = args
    out = run_session(config.with_seed(seed),
                      strategy.with_seed(seed) if strategy.kind != "absent" else None)
    c = _Counts(trials=1)
    c.completed = int(out.completed)
    c.mitm_completed = int(out.mitm_completed)
    c.sifting_success = int(out.sifting_forged)
    c.tag_attempts = out.forgeries_attempted
    c.tag_accepts = out.forgeries_accepted
    c.opportunities = out.eve_opportunities
    c.successes = out.eve_successes
    c.detected = int(out.check_detected)
    c.auth_aborts = int(out.status == ABORTED_AUTH)
    c.qber_aborts = int(out.status == ABORTED_QBER)
    if out.qber_estimate is not None:
        c.qber_sum = out.qber_estimate
        c.qber_count = 1
    c.key_consumed = out.alice_key_consumed
    return c


def _run_batch(args) -> _Counts:
    config, strategy, seeds = args
    total = _Counts()
    for s in seeds:
        total.merge(_run_one((config, strategy, s)))
    return total


CSV_COLUMNS = (
    "name", "sweep_parameter", "sweep_value", "scheme", "adversary", "auth_mode", "trials",
    "completion_rate", "completion_ci",
    "mitm_completion_rate", "mitm_completion_ci",
    "sifting_success_rate", "sifting_success_ci",
    "forgery_opportunities", "forgery_accept_rate", "forgery_accept_ci",
    "tag_forgeries", "tag_accept_rate", "tag_accept_ci",
    "detection_rate", "detection_ci",
    "auth_abort_rate", "qber_abort_rate", "mean_qber", "mean_key_consumed",
    "eps1", "eps2", "eps",
)
_TEXT = {"name", "sweep_parameter", "sweep_value", "scheme", "adversary", "auth_mode"}
_INTS = {"trials", "forgery_opportunities", "tag_forgeries"}


@dataclass(frozen=True)
class ExperimentRow:
    values: dict

    def __getitem__(self, key: str) -> Any:
        return self.values[key]


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    rows: list = field(default_factory=list)

    def table(self) -> list[dict]:
        """Rows as they appear in CSV (numbers rounded to 6 significant digits)."""
        return [{k: _round(row.values[k]) if k not in _TEXT else row.values[k]
                 for k in CSV_COLUMNS} for row in self.rows]


def _round(v):
    if isinstance(v, int):
        return v
    return float(f"{v:.6g}")


def _analytic(config: ProtocolConfig, strategy: AdversaryStrategy):
    scheme = config.scheme
    mode, budget = strategy.effective_mode
    if strategy.kind in ("absent", "guess_tag") or scheme.kind == WEGMAN_CARTER:
        model = ("list", 0)
    elif strategy.kind == "fixed_message":
        model = "fixed_message"
    elif mode == "list":
        model = ("list", min(budget, 1 << config.space.r_bits))
    elif mode == "ball_search":
        model = ("list", ball_coverage(scheme.f, min(budget, config.space.m_bits)))
    else:
        model = ("list", 1 << config.space.r_bits)
    try:
        return analytic_bounds(scheme, model)
    except GuardRefused:
        # closed forms only; no exhaustive scan for large spaces
        eps2 = 2.0 ** -config.space.n_bits
        if model == "fixed_message":
            return Bounds(fiber_size(scheme.f) / 2.0 ** config.space.m_bits, eps2)
        return Bounds(model[1] / 2.0 ** config.space.r_bits, eps2)


def _rate(k: int, n: int) -> float:
    return k / n if n else 0.0


def run_trials(plan: ExperimentPlan, jobs: int = 1) -> ExperimentResult:
    """Run ``plan.trials`` sessions per sweep point; deterministic for a given plan."""
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    result = ExperimentResult(plan)
    seeds = [plan.seed + i for i in range(plan.trials)]
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for value in plan.points():
            config, strategy = plan.materialize(value)
            if pool is None:
                counts = _run_batch((config, strategy, seeds))
            else:
                size = max(1, -(-len(seeds) // (4 * jobs)))
                batches = [(config, strategy, seeds[i:i + size]) for i in range(0, len(seeds), size)]
                counts = _Counts()
                for part in pool.map(_run_batch, batches):
                    counts.merge(part)
            result.rows.append(_row(plan, value, config, strategy, counts))
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def _row(plan, value, config, strategy, c: _Counts) -> ExperimentRow:
    n = c.trials
    bounds = _analytic(config, strategy)
    if isinstance(value, (tuple, list)):
        shown = "+".join(str(v) for v in value) or "none"
    else:
        shown = "" if value is None else str(value)
    values = {
        "name": plan.name,
        "sweep_parameter": plan.sweep_parameter or "",
        "sweep_value": shown,
        "scheme": config.scheme.kind,
        "adversary": strategy.describe(),
        "auth_mode": config.auth_mode,
        "trials": n,
        "completion_rate": _rate(c.completed, n),
        "completion_ci": binomial_halfwidth(c.completed, n),
        "mitm_completion_rate": _rate(c.mitm_completed, n),
        "mitm_completion_ci": binomial_halfwidth(c.mitm_completed, n),
        "sifting_success_rate": _rate(c.sifting_success, n),
        "sifting_success_ci": binomial_halfwidth(c.sifting_success, n),
        "forgery_opportunities": c.opportunities,
        "forgery_accept_rate": _rate(c.successes, c.opportunities),
        "forgery_accept_ci": binomial_halfwidth(c.successes, c.opportunities),
        "tag_forgeries": c.tag_attempts,
        "tag_accept_rate": _rate(c.tag_accepts, c.tag_attempts),
        "tag_accept_ci": binomial_halfwidth(c.tag_accepts, c.tag_attempts),
        "detection_rate": _rate(c.detected, n),
        "detection_ci": binomial_halfwidth(c.detected, n),
        "auth_abort_rate": _rate(c.auth_aborts, n),
        "qber_abort_rate": _rate(c.qber_aborts, n),
        "mean_qber": c.qber_sum / c.qber_count if c.qber_count else 0.0,
        "mean_key_consumed": c.key_consumed / n,
        "eps1": bounds.eps1,
        "eps2": bounds.eps2,
        "eps": bounds.eps,
    }
    return ExperimentRow(values)


def _fmt(key: str, v) -> str:
    if key in _TEXT:
        return str(v)
    if key in _INTS:
        return str(int(v))
    return f"{v:.6g}"


def emit_csv(result: ExperimentResult, path: str | Path) -> Path:
    """Write one row per configuration under the fixed :data:`CSV_COLUMNS` header."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in result.rows:
                writer.writerow([_fmt(k, row.values[k]) for k in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ConfigError(f"{path} does not have the documented header")
            rows = []
            for raw in reader:
                rows.append({k: raw[k] if k in _TEXT else (int(raw[k]) if k in _INTS
                                                           else float(raw[k]))
                             for k in CSV_COLUMNS})
            return rows
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def slope_intercept(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Ordinary least-squares line through the points."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx
