"""Confidence procedures with known coverage, and their coverage indicators.

Three families are available:

* :class:`ZKnownSigma` -- the textbook ``xbar +/- z * sigma / sqrt(n)`` interval
  for a normal mean with known ``sigma``.
* :class:`Trivial` -- a randomized procedure that returns the whole real line
  with probability ``1 - alpha`` and the empty set otherwise.
* :class:`UniformPair` -- two draws from ``Uniform(theta - 1/2, theta + 1/2)``,
  interval ``midpoint +/- c``. Its coverage is ``4c(1 - c)`` and, given the
  observed range ``r``, ``min(1, 2c / (1 - r))``; the range is ancillary, so
  the realized interval carries information about its own coverage.

Scalar functions work on one :class:`Sample`; the ``*_batch`` variants work
on 2-d arrays of samples (one row per trial) and are what the simulators use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Union

import numpy as np

from covlab import kernels


class ContractError(ValueError):
    """Arguments violate an operation's preconditions."""


def normal_quantile(p: float) -> float:
    """Standard normal quantile (Wichura AS241 via :class:`statistics.NormalDist`)."""
    return NormalDist().inv_cdf(p)


# procedure specs -----------------------------------------------------------------


@dataclass(frozen=True)
class ZKnownSigma:
    sigma: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ContractError(f"sigma must be a positive finite number, got {self.sigma}")
        if int(self.n) != self.n or self.n < 1:
            raise ContractError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True)
class Trivial:
    pass


@dataclass(frozen=True)
class UniformPair:
    c: float

    def __post_init__(self):
        if not (0 < self.c < 0.5):
            raise ContractError(f"c must lie in (0, 1/2), got {self.c}")

    @staticmethod
    def calibrated_c(alpha: float) -> float:
        """Half-width with ``4c(1 - c) = 1 - alpha``."""
        return (1.0 - math.sqrt(alpha)) / 2.0


Family = Union[ZKnownSigma, Trivial, UniformPair]

FAMILY_NAMES = {ZKnownSigma: "z_known_sigma", Trivial: "trivial", UniformPair: "uniform_pair"}


@dataclass(frozen=True)
class ProcedureSpec:
    family: Family
    alpha: float = 0.05

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not isinstance(self.family, tuple(FAMILY_NAMES)):
            raise ContractError(f"unknown procedure family {self.family!r}")

    @classmethod
    def z(cls, sigma=1.0, n=1, alpha=0.05):
        return cls(ZKnownSigma(sigma, n), alpha)

    @classmethod
    def trivial(cls, alpha=0.05):
        return cls(Trivial(), alpha)

    @classmethod
    def uniform_pair(cls, alpha=0.05, c=None):
        """Uniform-pair procedure; ``c`` defaults to the value calibrated to ``alpha``."""
        if c is None:
            c = UniformPair.calibrated_c(alpha)
        return cls(UniformPair(c), alpha)

    @property
    def name(self) -> str:
        return FAMILY_NAMES[type(self.family)]

    @property
    def sample_size(self) -> int:
        fam = self.family
        if isinstance(fam, ZKnownSigma):
            return fam.n
        if isinstance(fam, UniformPair):
            return 2
        return 1

    def to_dict(self) -> dict:
        out = {"family": self.name, "alpha": self.alpha}
        if isinstance(self.family, ZKnownSigma):
            out.update(sigma=self.family.sigma, n=self.family.n)
        elif isinstance(self.family, UniformPair):
            out["c"] = self.family.c
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProcedureSpec":
        data = dict(data)
        family = data.pop("family", None)
        alpha = float(data.pop("alpha", 0.05))
        allowed = {"z_known_sigma": {"sigma", "n"}, "trivial": set(), "uniform_pair": {"c"}}
        if family not in allowed:
            raise ContractError(f"unknown procedure family {family!r}; choose from {sorted(allowed)}")
        extra = set(data) - allowed[family]
        if extra:
            raise ContractError(f"unexpected keys for {family}: {sorted(extra)}")
        if family == "z_known_sigma":
            return cls.z(float(data.get("sigma", 1.0)), data.get("n", 1), alpha)
        if family == "uniform_pair":
            c = data.get("c")
            return cls.uniform_pair(alpha, None if c is None else float(c))
        return cls.trivial(alpha)


# realized intervals ------------------------------------------------------------------


class IntervalKind(enum.IntEnum):
    BOUNDED = 0
    WHOLE_LINE = 1
    EMPTY = 2


@dataclass(frozen=True)
class IntervalRealization:
    kind: IntervalKind
    lower: float = math.nan
    upper: float = math.nan

    def __post_init__(self):
        if self.kind == IntervalKind.BOUNDED and not self.lower <= self.upper:
            raise ContractError(f"bounded interval needs lower <= upper, got [{self.lower}, {self.upper}]")

    @classmethod
    def bounded(cls, lower, upper):
        return cls(IntervalKind.BOUNDED, float(lower), float(upper))

    @classmethod
    def whole_line(cls):
        return cls(IntervalKind.WHOLE_LINE, -math.inf, math.inf)

    @classmethod
    def empty(cls):
        return cls(IntervalKind.EMPTY)

    def covers(self, theta: float) -> bool:
        if self.kind == IntervalKind.WHOLE_LINE:
            return True
        if self.kind == IntervalKind.EMPTY:
            return False
        return self.lower <= theta <= self.upper

    def to_dict(self) -> dict:
        if self.kind == IntervalKind.BOUNDED:
            return {"kind": "bounded", "lower": self.lower, "upper": self.upper}
        return {"kind": self.kind.name.lower()}


@dataclass(frozen=True)
class Sample:
    values: tuple[float, ...]
    spec: ProcedureSpec = field(compare=False)

    def __post_init__(self):
        if len(self.values) != self.spec.sample_size:
            raise ContractError(
                f"{self.spec.name} expects {self.spec.sample_size} values, got {len(self.values)}"
            )


@dataclass(frozen=True)
class IntervalBatch:
    """Column layout of many realized intervals."""

    kind: np.ndarray  # int8, IntervalKind values
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self):
        return len(self.kind)

    def __getitem__(self, i) -> IntervalRealization:
        kind = IntervalKind(int(self.kind[i]))
        if kind == IntervalKind.BOUNDED:
            return IntervalRealization.bounded(self.lower[i], self.upper[i])
        if kind == IntervalKind.WHOLE_LINE:
            return IntervalRealization.whole_line()
        return IntervalRealization.empty()


# streams and sampling ----------------------------------------------------------------


@dataclass(frozen=True)
class TrialStream:
    """Random-stream handle for one trial: ``(master_seed, trial_index)``, 0-based."""

    seed: int
    index: int

    def uniforms(self, k: int) -> np.ndarray:
        return kernels.uniform_block(kernels.seed_key(self.seed), self.index, 1, k)[0]

    def normals(self, k: int) -> np.ndarray:
        return kernels.normal_block(kernels.seed_key(self.seed), self.index, 1, k)[0]


def draw_samples(spec: ProcedureSpec, theta: float, seed: int, start: int, count: int) -> np.ndarray:
    """Samples for trials ``start .. start+count-1`` as a ``(count, sample_size)`` array."""
    key = kernels.seed_key(seed)
    fam = spec.family
    if isinstance(fam, ZKnownSigma):
        return theta + fam.sigma * kernels.normal_block(key, start, count, fam.n)
    u = kernels.uniform_block(key, start, count, spec.sample_size)
    if isinstance(fam, UniformPair):
        return (theta - 0.5) + u
    return u


def draw_sample(spec: ProcedureSpec, theta: float, stream: TrialStream) -> Sample:
    row = draw_samples(spec, theta, stream.seed, stream.index, 1)[0]
    return Sample(tuple(float(v) for v in row), spec)


def half_width(spec: ProcedureSpec) -> float:
    fam = spec.family
    if isinstance(fam, ZKnownSigma):
        return normal_quantile(1 - spec.alpha / 2) * fam.sigma / math.sqrt(fam.n)
    if isinstance(fam, UniformPair):
        return fam.c
    raise ContractError(f"{spec.name} has no half-width")


def grid_sums(samples: np.ndarray, grid: float) -> np.ndarray:
    """Per-trial sum of grid indices after rounding each value to the grid."""
    return np.rint(samples / grid).astype(np.int64).sum(axis=1)


def build_intervals_batch(spec: ProcedureSpec, samples: np.ndarray, grid: float | None = None) -> IntervalBatch:
    """Vectorized :func:`build_interval`.

    With ``grid`` set (z-interval only) each observation is rounded to the
    nearest multiple of ``grid`` first, and the center is computed from the
    integer sum of grid indices so equal rounded samples give bit-equal
    endpoints.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != spec.sample_size:
        raise ContractError(f"{spec.name} expects samples of shape (k, {spec.sample_size}), got {samples.shape}")
    count = samples.shape[0]
    fam = spec.family
    if grid is not None and not isinstance(fam, ZKnownSigma):
        raise ContractError("grid rounding is only defined for the z interval")
    if isinstance(fam, Trivial):
        kind = np.where(samples[:, 0] < 1 - spec.alpha, IntervalKind.WHOLE_LINE, IntervalKind.EMPTY).astype(np.int8)
        nan = np.full(count, np.nan)
        lower = np.where(kind == IntervalKind.WHOLE_LINE, -np.inf, nan)
        upper = np.where(kind == IntervalKind.WHOLE_LINE, np.inf, nan)
        return IntervalBatch(kind, lower, upper)
    if isinstance(fam, ZKnownSigma):
        if grid is None:
            center = samples.mean(axis=1)
        else:
            if not grid > 0:
                raise ContractError(f"grid width must be positive, got {grid}")
            center = grid * grid_sums(samples, grid) / fam.n
    else:
        center = 0.5 * (samples[:, 0] + samples[:, 1])
    h = half_width(spec)
    return IntervalBatch(np.zeros(count, dtype=np.int8), center - h, center + h)


def build_interval(spec: ProcedureSpec, sample: Sample) -> IntervalRealization:
    if sample.spec != spec:
        raise ContractError(f"sample was drawn for {sample.spec.name}, not {spec.name}")
    return build_intervals_batch(spec, np.array([sample.values]))[0]


def coverage_batch(intervals: IntervalBatch, theta: float) -> np.ndarray:
    """Coverage indicators as a uint8 array."""
    bounded = (intervals.lower <= theta) & (theta <= intervals.upper)
    z = np.where(intervals.kind == IntervalKind.BOUNDED, bounded, intervals.kind == IntervalKind.WHOLE_LINE)
    return z.astype(np.uint8)


def coverage_indicator(interval: IntervalRealization, theta: float) -> int:
    return int(interval.covers(theta))


def analytic_coverage(spec: ProcedureSpec) -> float:
    """Design-level coverage probability."""
    if isinstance(spec.family, UniformPair):
        c = spec.family.c
        return 4 * c * (1 - c)
    return 1 - spec.alpha


def conditional_coverage_from_range(c: float, r):
    """``min(1, 2c / (1 - r))``, vectorized over ``r``; requires ``0 <= r < 1``."""
    r = np.asarray(r, dtype=np.float64)
    if np.any((r < 0) | (r >= 1)):
        raise ContractError("range must lie in [0, 1) for a uniform pair")
    slack = 1.0 - r
    with np.errstate(divide="ignore"):
        out = np.where(2 * c >= slack, 1.0, 2 * c / slack)
    return out if out.ndim else float(out)


def conditional_coverage_given_ancillary(spec: ProcedureSpec, sample: Sample) -> float:
    """Coverage probability given the observed range of a uniform pair."""
    if not isinstance(spec.family, UniformPair):
        raise ContractError(f"ancillary conditioning needs a uniform_pair spec, got {spec.name}")
    if len(sample.values) != 2:
        raise ContractError("uniform pair sample must have exactly two values")
    r = abs(sample.values[0] - sample.values[1])
    if r >= 1:
        raise ContractError(f"range {r} is outside the support of a uniform pair")
    return conditional_coverage_from_range(spec.family.c, r)
