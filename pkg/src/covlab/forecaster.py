"""Forecasts of the coverage event at different information levels, and their scores.

A forecaster sees one of three things about a trial:

* ``DESIGN_ONLY`` -- the procedure alone; forecasts its design coverage.
* ``ANCILLARY`` -- the procedure plus an ancillary statistic of the sample
  (uniform-pair range; for the trivial procedure, whether the line or the
  empty set came out). Not available for the z interval.
* ``FULL_OUTCOME`` -- oracle access to the indicator itself.

Scores follow the loss convention (lower is better). Log scores clamp
forecasts to ``[LOG_EPS, 1 - LOG_EPS]``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from covlab import microstate as ms
from covlab import procedures as pr
from covlab.procedures import ContractError, ProcedureSpec

LOG_EPS = 1e-12


class InformationLevel(enum.IntEnum):
    DESIGN_ONLY = 0
    ANCILLARY = 1
    FULL_OUTCOME = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "InformationLevel":
        key = text.strip().upper().replace("-", "_")
        aliases = {"DESIGN": "DESIGN_ONLY", "FULL": "FULL_OUTCOME", "ORACLE": "FULL_OUTCOME"}
        try:
            return cls[aliases.get(key, key)]
        except KeyError:
            raise ContractError(f"unknown information level {text!r}") from None


def levels_for(spec: ProcedureSpec) -> tuple[InformationLevel, ...]:
    if isinstance(spec.family, pr.ZKnownSigma):
        return (InformationLevel.DESIGN_ONLY, InformationLevel.FULL_OUTCOME)
    return tuple(InformationLevel)


@dataclass(frozen=True)
class ForecastRecord:
    index: int
    p: float
    z: int
    level: InformationLevel

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ContractError(f"forecast {self.p} outside [0, 1]")
        if self.z not in (0, 1):
            raise ContractError(f"outcome must be 0 or 1, got {self.z}")


@dataclass(frozen=True)
class ForecastStream:
    """Column layout of a forecast/outcome sequence."""

    p: np.ndarray
    z: np.ndarray
    level: InformationLevel | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        z = np.asarray(self.z)
        if p.shape != z.shape or p.ndim != 1:
            raise ContractError("forecasts and outcomes must be 1-d arrays of equal length")
        if np.any(~((p >= 0) & (p <= 1))):
            raise ContractError("forecasts must lie in [0, 1]")
        if np.any((z != 0) & (z != 1)):
            raise ContractError("outcomes must be 0 or 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z.astype(np.uint8))

    def __len__(self):
        return len(self.p)

    def records(self) -> list[ForecastRecord]:
        return [ForecastRecord(i + 1, float(p), int(z), self.level) for i, (p, z) in enumerate(zip(self.p, self.z))]


def as_stream(records) -> ForecastStream:
    if isinstance(records, ForecastStream):
        return records
    records = list(records)
    levels = {r.level for r in records}
    level = levels.pop() if len(levels) == 1 else None
    return ForecastStream(np.array([r.p for r in records], dtype=np.float64),
                          np.array([r.z for r in records], dtype=np.uint8), level)


# forecasting ----------------------------------------------------------------------------


def _check_level(level: InformationLevel, spec: ProcedureSpec):
    if level not in levels_for(spec):
        raise ContractError(f"level {level.label} is not available for {spec.name}")


def forecast(level: InformationLevel, spec: ProcedureSpec, trial: ms.TrialRecord) -> float:
    _check_level(level, spec)
    if level == InformationLevel.DESIGN_ONLY:
        return pr.analytic_coverage(spec)
    if level == InformationLevel.FULL_OUTCOME:
        return float(trial.z)
    if isinstance(spec.family, pr.UniformPair):
        return pr.conditional_coverage_given_ancillary(spec, trial.sample)
    return 1.0 if trial.interval.kind == pr.IntervalKind.WHOLE_LINE else 0.0


def forecast_block(level: InformationLevel, spec: ProcedureSpec, block: ms.TrialBlock) -> np.ndarray:
    _check_level(level, spec)
    if level == InformationLevel.DESIGN_ONLY:
        return np.full(len(block), pr.analytic_coverage(spec))
    if level == InformationLevel.FULL_OUTCOME:
        return block.z.astype(np.float64)
    if isinstance(spec.family, pr.UniformPair):
        return ms.conditional_coverage_block(spec, block)
    return (block.intervals.kind == pr.IntervalKind.WHOLE_LINE).astype(np.float64)


def forecast_run(level: InformationLevel, run: ms.MicrostateRun) -> ForecastStream:
    _check_level(level, run.spec)
    ps, zs = [], []
    for block in run.blocks():
        ps.append(forecast_block(level, run.spec, block))
        zs.append(block.z)
    return ForecastStream(np.concatenate(ps), np.concatenate(zs), level)


# scoring ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreReport:
    rule: str  # "brier" | "log"
    mean_score: float
    n: int
    level: InformationLevel | None = None

    def to_dict(self) -> dict:
        return {"rule": self.rule, "mean_score": self.mean_score, "n": self.n,
                "level": self.level.label if self.level is not None else None}


def brier_terms(p, z):
    return (np.asarray(p, dtype=np.float64) - z) ** 2


def log_terms(p, z):
    p = np.clip(np.asarray(p, dtype=np.float64), LOG_EPS, 1 - LOG_EPS)
    z = np.asarray(z)
    return -np.where(z == 1, np.log(p), np.log1p(-p))


RULES = {"brier": brier_terms, "log": log_terms}


def _score(rule, records) -> ScoreReport:
    stream = as_stream(records)
    if not len(stream):
        raise ContractError("cannot score an empty forecast sequence")
    terms = RULES[rule](stream.p, stream.z)
    return ScoreReport(rule, float(terms.mean()), len(stream), stream.level)


def brier_score(records) -> ScoreReport:
    """Mean squared difference between forecast and outcome."""
    return _score("brier", records)


def log_score(records) -> ScoreReport:
    """Mean negative log-likelihood (nats) of the outcomes, forecasts clamped."""
    return _score("log", records)


@dataclass
class ScoreAccumulator:
    """Mergeable running sum of score terms."""

    rule: str
    n: int = 0
    total: float = 0.0

    def push(self, p, z) -> "ScoreAccumulator":
        terms = RULES[self.rule](p, z)
        self.n += terms.size
        self.total += float(terms.sum())
        return self

    def merge(self, other: "ScoreAccumulator") -> "ScoreAccumulator":
        if other.rule != self.rule:
            raise ContractError("cannot merge accumulators for different rules")
        return ScoreAccumulator(self.rule, self.n + other.n, self.total + other.total)

    @property
    def mean(self) -> float:
        return self.total / self.n


def expected_score(rule: str, q: float, p) -> np.ndarray:
    """Expected score of forecast ``p`` when the event has probability ``q``."""
    p = np.asarray(p, dtype=np.float64)
    return q * RULES[rule](p, np.ones_like(p)) + (1 - q) * RULES[rule](p, np.zeros_like(p))


def propriety_grid_check(q: float, grid: Sequence[float], rule: str = "brier") -> float:
    """Grid point minimizing the expected score under outcome probability ``q``."""
    if not 0 <= q <= 1:
        raise ContractError(f"q must lie in [0, 1], got {q}")
    grid = np.asarray(grid, dtype=np.float64)
    if not np.any(grid == q):
        raise ContractError("grid must contain q")
    return float(grid[int(np.argmin(expected_score(rule, q, grid)))])


# calibration -------------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    n: int
    mean_forecast: float | None
    frequency: float | None
    band: float | None  # 4 * sqrt(sum p(1-p)) / n

    @property
    def gap(self) -> float | None:
        if self.n == 0:
            return None
        return abs(self.mean_forecast - self.frequency)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n": self.n, "mean_forecast": self.mean_forecast,
                "frequency": self.frequency, "band": self.band}


@dataclass(frozen=True)
class CalibrationTable:
    bins: tuple[CalibrationBin, ...]

    @property
    def n(self) -> int:
        return sum(b.n for b in self.bins)

    def occupied(self) -> list[CalibrationBin]:
        return [b for b in self.bins if b.n]

    def within_bands(self) -> bool:
        return all(b.gap <= b.band for b in self.occupied())

    def to_dict(self) -> dict:
        return {"n": self.n, "bins": [b.to_dict() for b in self.bins]}


def calibration_table(records, n_bins: int = 10) -> CalibrationTable:
    """Equal-width reliability bins ``[k/m, (k+1)/m)``, the last one closed."""
    if n_bins < 1:
        raise ContractError(f"n_bins must be >= 1, got {n_bins}")
    stream = as_stream(records)
    idx = np.minimum((stream.p * n_bins).astype(np.int64), n_bins - 1)
    bins = []
    for k in range(n_bins):
        mask = idx == k
        n = int(mask.sum())
        if n:
            p, z = stream.p[mask], stream.z[mask]
            mf, fr = float(p.mean()), float(z.mean())
            bw = 4.0 * math.sqrt(float((p * (1 - p)).sum())) / n
        else:
            mf = fr = bw = None
        bins.append(CalibrationBin(k / n_bins, (k + 1) / n_bins, n, mf, fr, bw))
    return CalibrationTable(tuple(bins))


# information ladder ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelScores:
    level: InformationLevel
    brier: ScoreReport
    log: ScoreReport


@dataclass(frozen=True)
class LadderReport:
    levels: tuple[LevelScores, ...]
    # paired difference of Brier terms, coarser minus finer, for adjacent levels
    gaps: tuple[tuple[str, str, float, float], ...]  # (coarse, fine, mean diff, 4-sigma band)

    @property
    def monotone(self) -> bool:
        scores = [ls.brier.mean_score for ls in self.levels]
        return all(a >= b for a, b in zip(scores, scores[1:]))

    def strict(self, coarse: InformationLevel, fine: InformationLevel) -> bool:
        for c, f, diff, bw in self.gaps:
            if c == coarse.label and f == fine.label:
                return diff > bw
        raise KeyError((coarse, fine))

    def to_dict(self) -> dict:
        return {
            "levels": [{"level": ls.level.label, "brier": ls.brier.mean_score, "log": ls.log.mean_score,
                        "n": ls.brier.n} for ls in self.levels],
            "gaps": [{"coarse": c, "fine": f, "mean_difference": d, "band": b} for c, f, d, b in self.gaps],
            "monotone": self.monotone,
        }


def compare_levels(spec: ProcedureSpec, theta: float, seed: int, n_trials: int, workers: int = 1) -> LadderReport:
    """Score every available level on the same trial stream (paired comparison)."""
    run = ms.run_stream(spec, theta, seed, n_trials, workers)
    levels = levels_for(spec)
    streams = {lv: forecast_run(lv, run) for lv in levels}
    out = []
    for lv in levels:
        out.append(LevelScores(lv, brier_score(streams[lv]), log_score(streams[lv])))
    gaps = []
    for coarse, fine in zip(levels, levels[1:]):
        d = brier_terms(streams[coarse].p, streams[coarse].z) - brier_terms(streams[fine].p, streams[fine].z)
        bw = 4.0 * float(d.std()) / math.sqrt(len(d))
        gaps.append((coarse.label, fine.label, float(d.mean()), bw))
    return LadderReport(tuple(out), tuple(gaps))


# CSV interchange --------------------------------------------------------------------------------

CSV_COLUMNS = ("index", "p", "z", "level")


def read_forecast_csv(path) -> list[ForecastRecord]:
    """Read ``index,p,z,level`` rows (header required)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(CSV_COLUMNS) - set(reader.fieldnames):
            raise ContractError(f"{path}: header must contain columns {', '.join(CSV_COLUMNS)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(ForecastRecord(int(row["index"]), float(row["p"]), int(row["z"]),
                                              InformationLevel.parse(row["level"])))
            except (ValueError, TypeError) as exc:
                raise ContractError(f"{path}:{lineno}: {exc}") from None
    return records


def write_forecast_csv(path, records: Iterable[ForecastRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.index, repr(r.p), r.z, r.level.label])
