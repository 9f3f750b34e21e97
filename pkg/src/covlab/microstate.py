"""Finite prefixes of i.i.d. trial streams and the experiments run on them.

A run is fully determined by ``(spec, theta, seed, n_trials)``: trial ``i``
draws only from the counter-based stream ``(seed, i)`` (see
:mod:`covlab.kernels`), so block size and worker count never change a result.
Trials are generated block by block; the per-trial coverage indicators and
conditional coverages are kept as flat arrays, everything else is streamed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np

from covlab import procedures as pr
from covlab.procedures import ContractError, ProcedureSpec

DEFAULT_BLOCK = 1 << 16


def band(p: float, n: int, k: float = 4.0) -> float:
    """Half-width ``k * sqrt(p(1-p)/n)`` of the binomial acceptance band."""
    return k * math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class TrialRecord:
    index: int  # 1-based
    sample: pr.Sample
    interval: pr.IntervalRealization
    z: int


@dataclass(frozen=True)
class TrialBlock:
    start: int  # 0-based index of the first trial
    samples: np.ndarray
    intervals: pr.IntervalBatch
    z: np.ndarray

    def __len__(self):
        return len(self.z)


def generate_block(spec: ProcedureSpec, theta: float, seed: int, start: int, count: int,
                   grid: float | None = None) -> TrialBlock:
    samples = pr.draw_samples(spec, theta, seed, start, count)
    intervals = pr.build_intervals_batch(spec, samples, grid)
    return TrialBlock(start, samples, intervals, pr.coverage_batch(intervals, theta))


def conditional_coverage_block(spec: ProcedureSpec, block: TrialBlock) -> np.ndarray:
    """Per-trial coverage given the finest non-trivial statistic this package knows.

    Uniform pair: given the range. Other families: the indicator itself.
    """
    if isinstance(spec.family, pr.UniformPair):
        r = np.abs(block.samples[:, 0] - block.samples[:, 1])
        return pr.conditional_coverage_from_range(spec.family.c, r)
    return block.z.astype(np.float64)


@dataclass
class MicrostateRun:
    spec: ProcedureSpec
    theta: float
    seed: int
    n_trials: int
    workers: int = 1
    block_size: int = DEFAULT_BLOCK
    grid: float | None = field(default=None)

    def __post_init__(self):
        if self.n_trials < 1:
            raise ContractError(f"n_trials must be >= 1, got {self.n_trials}")
        if not math.isfinite(self.theta):
            raise ContractError(f"theta must be finite, got {self.theta}")
        if self.workers < 1 or self.block_size < 1:
            raise ContractError("workers and block_size must be >= 1")

    def _starts(self):
        return range(0, self.n_trials, self.block_size)

    def _make(self, start):
        count = min(self.block_size, self.n_trials - start)
        return generate_block(self.spec, self.theta, self.seed, start, count, self.grid)

    def blocks(self) -> Iterator[TrialBlock]:
        """Trial blocks in index order; generated concurrently when ``workers > 1``."""
        if self.workers == 1:
            for start in self._starts():
                yield self._make(start)
            return
        with ThreadPoolExecutor(self.workers) as pool:
            # map preserves submission order
            yield from pool.map(self._make, self._starts())

    def records(self) -> Iterator[TrialRecord]:
        for block in self.blocks():
            for j in range(len(block)):
                yield TrialRecord(
                    block.start + j + 1,
                    pr.Sample(tuple(float(v) for v in block.samples[j]), self.spec),
                    block.intervals[j],
                    int(block.z[j]),
                )

    @cached_property
    def _arrays(self):
        zs, conds = [], []
        for block in self.blocks():
            zs.append(block.z)
            conds.append(conditional_coverage_block(self.spec, block))
        return np.concatenate(zs), np.concatenate(conds)

    @property
    def z(self) -> np.ndarray:
        """Coverage indicators, uint8, one per trial."""
        return self._arrays[0]

    @property
    def conditional(self) -> np.ndarray:
        return self._arrays[1]

    def describe(self) -> dict:
        out = {
            "procedure": self.spec.to_dict(),
            "theta": self.theta,
            "seed": self.seed,
            "n_trials": self.n_trials,
        }
        if self.grid is not None:
            out["grid_width"] = self.grid
        return out


def run_stream(spec: ProcedureSpec, theta: float, seed: int, n_trials: int, workers: int = 1,
               block_size: int = DEFAULT_BLOCK) -> MicrostateRun:
    return MicrostateRun(spec, float(theta), int(seed), int(n_trials), workers, block_size)


# aggregates ------------------------------------------------------------------------


@dataclass
class CoverageTally:
    """Mergeable coverage summary: counts merge exactly, sums up to rounding."""

    n: int = 0
    covered: int = 0
    conditional_sum: float = 0.0

    @classmethod
    def from_block(cls, spec, block):
        return cls(len(block), int(block.z.sum()), float(conditional_coverage_block(spec, block).sum()))

    def merge(self, other: "CoverageTally") -> "CoverageTally":
        return CoverageTally(self.n + other.n, self.covered + other.covered,
                             self.conditional_sum + other.conditional_sum)

    @property
    def mean(self) -> float:
        return self.covered / self.n

    @property
    def conditional_mean(self) -> float:
        return self.conditional_sum / self.n


# experiments -----------------------------------------------------------------------


def slln_trace(run: MicrostateRun, checkpoints) -> list[tuple[int, float]]:
    """Running coverage fraction after each checkpoint trial count."""
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints:
        raise ContractError("checkpoints must be non-empty")
    if checkpoints != sorted(checkpoints) or checkpoints[0] < 1 or checkpoints[-1] > run.n_trials:
        raise ContractError(f"checkpoints must be sorted within [1, {run.n_trials}], got {checkpoints}")
    cum = np.cumsum(run.z, dtype=np.int64)
    return [(c, int(cum[c - 1]) / c) for c in checkpoints]


@dataclass(frozen=True)
class IteratedExpectation:
    design_mean: float
    conditional_mean: float
    design_var: float
    conditional_var: float


def iterated_expectation_check(run: MicrostateRun) -> IteratedExpectation:
    z = run.z.astype(np.float64)
    cond = run.conditional
    return IteratedExpectation(float(z.mean()), float(cond.mean()), float(z.var()), float(cond.var()))


@dataclass(frozen=True)
class PairCoverage:
    n_pairs: int
    both: float
    first_covered_pairs: int
    second_given_first_covered: float | None
    first_missed_pairs: int
    both_given_first_missed: float | None


def pair_coverage(run: MicrostateRun) -> PairCoverage:
    """Coverage over non-overlapping consecutive pairs (1, 2), (3, 4), ..."""
    if run.n_trials < 2:
        raise ContractError("pair coverage needs at least two trials")
    n_pairs = run.n_trials // 2
    z = run.z[: 2 * n_pairs].reshape(n_pairs, 2).astype(bool)
    first, second = z[:, 0], z[:, 1]
    both = first & second
    n_hit = int(first.sum())
    n_miss = n_pairs - n_hit
    return PairCoverage(
        n_pairs,
        int(both.sum()) / n_pairs,
        n_hit,
        int(both[first].sum()) / n_hit if n_hit else None,
        n_miss,
        int(both[~first].sum()) / n_miss if n_miss else None,
    )


@dataclass(frozen=True)
class BatchCounts:
    batch_size: int
    counts: np.ndarray

    @property
    def n_batches(self) -> int:
        return len(self.counts)

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    def histogram(self) -> dict[int, int]:
        values, freq = np.unique(self.counts, return_counts=True)
        return {int(v): int(f) for v, f in zip(values, freq)}


def batch_coverage_count(run: MicrostateRun, batch_size: int) -> BatchCounts:
    """Number of covering intervals in each consecutive batch."""
    if batch_size < 1 or run.n_trials % batch_size:
        raise ContractError(f"batch size {batch_size} must divide n_trials={run.n_trials}")
    counts = run.z.reshape(-1, batch_size).sum(axis=1, dtype=np.int64)
    return BatchCounts(batch_size, counts)


@dataclass(frozen=True)
class RecurrenceReport:
    target: tuple[float, float] | None
    hit_count: int
    n_trials: int
    design_mass: float
    checkpoint_hits: tuple[tuple[int, int], ...]
    distinct_values: int
    repeats: int  # n_trials - distinct_values

    def to_dict(self) -> dict:
        return {
            "target": list(self.target) if self.target else None,
            "hit_count": self.hit_count,
            "n_trials": self.n_trials,
            "design_mass": self.design_mass,
            "checkpoint_hits": [list(x) for x in self.checkpoint_hits],
            "distinct_values": self.distinct_values,
            "repeats": self.repeats,
        }


def recurrence_experiment(spec: ProcedureSpec, theta: float, grid_width: float | None, seed: int,
                          n_trials: int, target_center: float | None = None,
                          workers: int = 1) -> RecurrenceReport:
    """Count exact recurrences of one interval value under grid rounding.

    The data are rounded to multiples of ``grid_width`` before the z interval
    is built, so interval centers live on the lattice ``grid_width * k / n``.
    The target is the lattice interval whose center is nearest
    ``target_center`` (default ``theta``). ``grid_width=None`` runs the
    continuous case, where only exact repeats of any value are counted.
    Hits are reported at ``n_trials // 2`` and ``n_trials``.
    """
    if not isinstance(spec.family, pr.ZKnownSigma):
        raise ContractError("recurrence experiment needs a z_known_sigma spec")
    if grid_width is not None and not grid_width > 0:
        raise ContractError(f"grid width must be positive, got {grid_width}")
    run = MicrostateRun(spec, float(theta), int(seed), int(n_trials), workers, grid=grid_width)
    lowers, uppers = [], []
    for block in run.blocks():
        lowers.append(block.intervals.lower)
        uppers.append(block.intervals.upper)
    lower, upper = np.concatenate(lowers), np.concatenate(uppers)
    pairs = np.stack([lower, upper], axis=1)
    distinct = len(np.unique(pairs, axis=0))

    target = None
    hit_count = 0
    checkpoints = sorted({max(1, n_trials // 2), n_trials})
    checkpoint_hits = tuple((c, 0) for c in checkpoints)
    if grid_width is not None:
        n = spec.family.n
        center = theta if target_center is None else target_center
        k = int(round(n * center / grid_width))
        # same float operations as build_intervals_batch, so endpoints match bitwise
        c = grid_width * np.array([k], dtype=np.int64) / n
        h = pr.half_width(spec)
        target = (float((c - h)[0]), float((c + h)[0]))
        hits = (lower == target[0]) & (upper == target[1])
        cum = np.cumsum(hits, dtype=np.int64)
        hit_count = int(cum[-1])
        checkpoint_hits = tuple((c, int(cum[c - 1])) for c in checkpoints)
    return RecurrenceReport(target, hit_count, n_trials, hit_count / n_trials,
                            checkpoint_hits, distinct, n_trials - distinct)
