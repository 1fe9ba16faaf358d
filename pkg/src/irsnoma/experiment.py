"""Monte-Carlo experiment specs, trial records and summaries."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .pipeline import LABELS, THREE_STEP, run_algorithm
from .scenario import SystemConfig, db_to_linear, dbm_to_watts, sample_channels
from .subsolvers import SolverError

SWEEP_VARIABLES = ("n_elements", "p_max_dbm", "n_channels", "irs_x_coordinate")

# keys accepted in each section of a spec file; everything else is an error
_SCENARIO_KEYS = {
    "n_channels", "n_users", "per_channel_cap", "r_min", "total_bandwidth", "bs_pos",
    "irs_pos", "user_center", "user_radius", "pl_exp_bs_user", "pl_exp_bs_irs",
    "pl_exp_irs_user", "n_elements", "min_distance", "p_max", "noise_power", "rician_factor",
}
_CONVERTED = {"p_max_dbm": ("p_max", dbm_to_watts), "noise_power_dbm": ("noise_power", dbm_to_watts),
              "rician_factor_db": ("rician_factor", db_to_linear)}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SystemConfig)} - _SCENARIO_KEYS - {"seed"}
_EXPERIMENT_KEYS = {"sweep", "values", "algorithms", "trials", "seed", "out"}


class SpecError(ValueError):
    """Invalid experiment specification."""


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig
    sweep: str = "n_elements"
    values: tuple[float, ...] = (8,)
    algorithms: tuple[str, ...] = (THREE_STEP,)
    trials: int = 50
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise SpecError(f"sweep must be one of {', '.join(SWEEP_VARIABLES)}, got {self.sweep!r}")
        if not self.values:
            raise SpecError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise SpecError("sweep values must be strictly increasing")
        if self.trials < 1:
            raise SpecError("trials must be at least 1")
        unknown = [a for a in self.algorithms if a not in LABELS]
        if unknown or not self.algorithms:
            raise SpecError(f"unknown algorithm(s) {unknown}; expected labels from {', '.join(LABELS)}")
        for v in self.values:
            self.config_at(v)

    def config_at(self, value) -> SystemConfig:
        """The scenario at one sweep point."""
        cfg = self.config
        try:
            if self.sweep == "n_elements":
                return cfg.replace(n_elements=_as_int(value, "n_elements"))
            if self.sweep == "p_max_dbm":
                return cfg.replace(p_max=dbm_to_watts(float(value)))
            if self.sweep == "n_channels":
                n = _as_int(value, "n_channels")
                return cfg.replace(n_channels=n, n_users=n * cfg.per_channel_cap)
            return placement_config(cfg, float(value))
        except ValueError as exc:
            raise SpecError(f"sweep value {value!r}: {exc}") from exc

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


def _as_int(value, name) -> int:
    if int(value) != value:
        raise SpecError(f"{name} must be an integer, got {value!r}")
    return int(value)


def placement_config(config: SystemConfig, x: float) -> SystemConfig:
    """IRS on the BS-user axis: BS at the origin, IRS at (x, 0, 0), users
    around (50, 0, 0), both reflection-path exponents 2.5."""
    return config.replace(
        bs_pos=(0.0, 0.0, 0.0), irs_pos=(x, 0.0, 0.0), user_center=(50.0, 0.0, 0.0),
        pl_exp_bs_irs=2.5, pl_exp_irs_user=2.5,
    )


def parse_spec(text: str) -> ExperimentSpec:
    """Build a spec from a TOML document with ``scenario``, ``solver`` and
    ``experiment`` sections (dotted keys or tables)."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"not valid TOML: {exc}") from exc
    extra = set(doc) - {"scenario", "solver", "experiment"}
    if extra:
        raise SpecError(f"unknown section(s): {', '.join(sorted(extra))}")
    changes = {}
    for section, allowed in (("scenario", _SCENARIO_KEYS | set(_CONVERTED)), ("solver", _SOLVER_KEYS)):
        for key, value in doc.get(section, {}).items():
            if key not in allowed:
                raise SpecError(f"unknown key {section}.{key}")
            if key in _CONVERTED:
                name, conv = _CONVERTED[key]
                changes[name] = conv(float(value))
            elif isinstance(value, list):
                changes[key] = tuple(value)
            else:
                changes[key] = value
    exp = doc.get("experiment", {})
    bad = set(exp) - _EXPERIMENT_KEYS
    if bad:
        raise SpecError(f"unknown key(s) experiment.{', experiment.'.join(sorted(bad))}")
    try:
        config = SystemConfig(**changes)
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from exc
    kwargs = {"config": config}
    if "sweep" in exp:
        kwargs["sweep"] = str(exp["sweep"])
    if "values" in exp:
        kwargs["values"] = tuple(exp["values"])
    elif kwargs.get("sweep", "n_elements") == "n_elements":
        kwargs["values"] = (config.n_elements,)
    else:
        raise SpecError("experiment.values is required for this sweep")
    if "algorithms" in exp:
        kwargs["algorithms"] = tuple(exp["algorithms"])
    for key in ("trials", "seed"):
        if key in exp:
            kwargs[key] = int(exp[key])
    if "out" in exp:
        kwargs["out"] = str(exp["out"])
    return ExperimentSpec(**kwargs)


def load_spec(path: str | Path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"))


@dataclass
class TrialRecord:
    sweep: str
    value: float
    trial: int
    seed: int
    algorithm: str
    throughput: float
    feasible: bool
    iterations: int
    wall_time: float
    rates: list[list[float]] = field(default_factory=list)
    error: str = ""

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def run_experiment(spec: ExperimentSpec) -> Iterator[TrialRecord]:
    """Yield one record per (sweep value, trial, algorithm).

    All algorithms at a given (value, trial) see the same channel draw,
    seeded with ``spec.seed + trial``. Solver failures inside a trial are
    recorded as infeasible with the message in ``error``.
    """
    for value in spec.values:
        cfg = spec.config_at(value)
        for trial in range(spec.trials):
            seed = spec.seed + trial
            chan = sample_channels(cfg, seed)
            for label in spec.algorithms:
                start = time.perf_counter()
                try:
                    sol = run_algorithm(label, chan, cfg, seed)
                    rec = TrialRecord(spec.sweep, value, trial, seed, label, sol.throughput,
                                      sol.feasible, sol.iterations, 0.0, sol.rates.tolist())
                except SolverError as exc:
                    rec = TrialRecord(spec.sweep, value, trial, seed, label, math.nan, False, 0, 0.0,
                                      error=f"{type(exc).__name__}: {exc}")
                rec.wall_time = time.perf_counter() - start
                yield rec


def write_records(records: Iterable[TrialRecord], stream: IO[str]) -> int:
    """Write JSON lines, flushing after each record. Returns the count."""
    count = 0
    for rec in records:
        stream.write(rec.to_json() + "\n")
        stream.flush()
        count += 1
    return count


def read_records(stream: IO[str]) -> list[TrialRecord]:
    out = []
    for line in stream:
        line = line.strip()
        if line:
            out.append(TrialRecord(**json.loads(line)))
    return out


@dataclass(frozen=True)
class SummaryRow:
    value: float
    algorithm: str
    trials: int
    feasible: int
    mean: float
    std: float
    infeasible_rate: float


def summarize(records: Iterable[TrialRecord]) -> list[SummaryRow]:
    """Mean and population standard deviation of throughput over feasible
    trials, per (sweep value, algorithm). Cells with no feasible trial get
    NaN statistics and an infeasibility rate of 1."""
    cells: dict[tuple[float, str], list[TrialRecord]] = {}
    for rec in records:
        cells.setdefault((rec.value, rec.algorithm), []).append(rec)
    if not cells:
        raise ValueError("no records to summarize")
    rows = []
    for (value, label), recs in cells.items():
        ok = np.array([r.throughput for r in recs if r.feasible], float)
        mean = float(ok.mean()) if ok.size else math.nan
        std = float(ok.std()) if ok.size else math.nan
        rows.append(SummaryRow(value, label, len(recs), int(ok.size), mean, std, 1.0 - ok.size / len(recs)))
    return rows


def summary_csv(rows: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in dataclasses.fields(SummaryRow)]
    writer.writerow(names)
    for row in rows:
        writer.writerow([getattr(row, n) for n in names])
    return buf.getvalue()
