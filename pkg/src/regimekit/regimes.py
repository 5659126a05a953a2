"""Instantaneous-energy regimes, regime years and threshold sensitivity.

Energy is the sum of squared first-layer instantaneous amplitudes, divided by
its maximum. With ``mu`` and ``sigma`` the mean and sample standard deviation
of the normalised series, a day is Extreme when ``E > mu + b sigma``, High
when ``mu + a sigma < E <= mu + b sigma`` and Normal otherwise.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_float
from .emd import Decomposition, InstantSeries, direct_quadrature
from .exceptions import AllZeroEnergyError, EmptyDecompositionError, InvalidGridError

REGIMES = ("Normal", "High", "Extreme")
NORMAL, HIGH, EXTREME = range(3)
BASELINE = (1.0, 6.0)
DEFAULT_GRID = tuple((a, b) for a in (0.75, 1.0, 1.25) for b in (4.5, 6.0, 7.5))


def _years(dates) -> NDArray[np.int64]:
    return np.asarray(dates, dtype="datetime64[Y]").astype(np.int64) + 1970


@dataclass(frozen=True)
class EnergySeries:
    dates: NDArray[np.datetime64]
    e: NDArray[np.float64]
    mu: float
    sigma: float
    raw_max: float = 1.0

    def __len__(self):
        return len(self.e)

    @classmethod
    def from_values(cls, e, dates=None, raw_max: float = 1.0) -> "EnergySeries":
        """Wrap an already-normalised energy series and compute its moments."""
        e = as_1d_float(e, name="energy")
        if dates is None:
            dates = np.arange(e.size).astype("datetime64[D]")
        sigma = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
        return cls(np.asarray(dates, dtype="datetime64[D]"), e, float(np.mean(e)), sigma, raw_max)


def instantaneous_energy(d: Decomposition | list[InstantSeries], dates=None) -> EnergySeries:
    """Max-normalised ``sum_j IA_j(t)^2`` from direct-quadrature amplitudes.

    ``d`` is either a decomposition (demodulated here) or the per-IMF
    :class:`InstantSeries` already computed from one.
    """
    if isinstance(d, Decomposition):
        inst = [direct_quadrature(c) for c in d.imfs]
    else:
        inst = list(d)
    if not inst:
        raise EmptyDecompositionError("the decomposition has no IMFs")
    raw = np.zeros_like(inst[0].amplitude)
    for q in inst:
        raw = raw + q.amplitude ** 2
    peak = float(raw.max())
    if not peak > 0:
        raise AllZeroEnergyError("instantaneous energy is zero everywhere")
    e = raw / peak
    return EnergySeries.from_values(e, dates, peak)


@dataclass(frozen=True)
class RegimeLabeling:
    dates: NDArray[np.datetime64]
    labels: NDArray[np.int8]
    tau1: float
    tau2: float
    energy: NDArray[np.float64] | None = None

    def __len__(self):
        return len(self.labels)

    @property
    def names(self) -> list[str]:
        return [REGIMES[k] for k in self.labels]

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.labels == k)) for k, name in enumerate(REGIMES)}

    def to_csv(self, path) -> None:
        e = self.energy if self.energy is not None else np.full(len(self), np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "energy", "label"])
            for d, v, k in zip(self.dates, e, self.labels):
                w.writerow([str(d), f"{v:.17g}", REGIMES[k]])

    @classmethod
    def from_csv(cls, path, tau1: float = float("nan"), tau2: float = float("nan")) -> "RegimeLabeling":
        dates, e, labels = [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                dates.append(np.datetime64(row["date"], "D"))
                e.append(float(row["energy"]))
                labels.append(REGIMES.index(row["label"]))
        return cls(np.array(dates, dtype="datetime64[D]"), np.array(labels, dtype=np.int8),
                   tau1, tau2, np.array(e, dtype=np.float64))


def _check_pair(a, b):
    if not a < b:
        raise InvalidGridError(f"need a < b, got a={a}, b={b}")


def classify_regimes(e: EnergySeries, a: float = 1.0, b: float = 6.0) -> RegimeLabeling:
    _check_pair(a, b)
    tau1 = e.mu + a * e.sigma
    tau2 = e.mu + b * e.sigma
    labels = np.full(len(e), NORMAL, dtype=np.int8)
    labels[e.e > tau1] = HIGH
    labels[e.e > tau2] = EXTREME
    return RegimeLabeling(e.dates, labels, float(tau1), float(tau2), e.e)


@dataclass(frozen=True)
class RegimeYears:
    extreme: frozenset[int] = frozenset()
    high: frozenset[int] = frozenset()
    normal: frozenset[int] = frozenset()

    def get(self, regime: str) -> frozenset[int]:
        return getattr(self, regime.lower())

    def as_dict(self) -> dict[str, list[int]]:
        return {name: sorted(self.get(name)) for name in reversed(REGIMES)}


def regime_years(l: RegimeLabeling) -> RegimeYears:
    """Calendar years with at least one day in each regime; Extreme > High > Normal."""
    years = _years(l.dates)
    found = [set(years[l.labels == k].tolist()) for k in range(3)]
    extreme = found[EXTREME]
    high = found[HIGH] - extreme
    normal = found[NORMAL] - extreme - high
    return RegimeYears(frozenset(extreme), frozenset(high), frozenset(normal))


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def representative_years(group: list[RegimeYears], per_regime_count: int = 2) -> dict[str, list[int]]:
    """Years shared by every index in a group, per regime.

    When fewer than ``per_regime_count`` years are common to all indices the
    set is topped up with the most frequent remaining years across the group
    (ties go to the earlier year); a larger intersection is returned whole.
    """
    if not group:
        raise ValueError("representative_years needs at least one index")
    out = {}
    for name in reversed(REGIMES):
        sets = [ry.get(name) for ry in group]
        chosen = set.intersection(*map(set, sets))
        if len(chosen) < per_regime_count:
            freq = Counter(y for s in sets for y in s)
            ranked = sorted((y for y in freq if y not in chosen), key=lambda y: (-freq[y], y))
            chosen |= set(ranked[:per_regime_count - len(chosen)])
        out[name] = sorted(chosen)
    return out


@dataclass
class SensitivityEntry:
    years: dict[str, list[int]]
    jaccard: dict[str, float]


@dataclass
class SensitivityReport:
    entries: dict[tuple[float, float], SensitivityEntry]
    baseline: tuple[float, float] = BASELINE
    per_index: dict[str, dict[tuple[float, float], RegimeYears]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {_key(ab): {name: {"years": entry.years[name], "jaccard": entry.jaccard[name]}
                           for name in reversed(REGIMES)}
                for ab, entry in self.entries.items()}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _key(ab) -> str:
    return f"a={ab[0]:g},b={ab[1]:g}"


def _validated_grid(grid):
    grid = [(float(a), float(b)) for a, b in grid]
    for a, b in grid:
        _check_pair(a, b)
    if BASELINE not in grid:
        grid.insert(0, BASELINE)
    return grid


def _report(sets_by_cell: dict) -> dict:
    base = sets_by_cell[BASELINE]
    return {ab: SensitivityEntry(years, {name: jaccard(years[name], base[name]) for name in years})
            for ab, years in sets_by_cell.items()}


def threshold_sensitivity(e: EnergySeries, grid=DEFAULT_GRID) -> SensitivityReport:
    """Regime years of one index for every ``(a, b)`` cell, compared with the baseline."""
    cells = {ab: regime_years(classify_regimes(e, *ab)).as_dict() for ab in _validated_grid(grid)}
    return SensitivityReport(_report(cells))


def panel_sensitivity(energies: dict[str, EnergySeries], grid=DEFAULT_GRID,
                      per_regime_count: int = 2) -> SensitivityReport:
    """Group-level representative years for every ``(a, b)`` cell, compared with the baseline."""
    cells, per_index = {}, {}
    for ab in _validated_grid(grid):
        ry = {t: regime_years(classify_regimes(e, *ab)) for t, e in energies.items()}
        for t, years in ry.items():
            per_index.setdefault(t, {})[ab] = years
        cells[ab] = representative_years(list(ry.values()), per_regime_count)
    return SensitivityReport(_report(cells), per_index=per_index)


class RegimeClassifier(BaseEstimator):
    """Learn ``mu + a sigma`` / ``mu + b sigma`` cutoffs from an energy series.

    ``predict`` returns codes 0 (Normal), 1 (High), 2 (Extreme).
    """

    def __init__(self, a=1.0, b=6.0):
        self.a = a
        self.b = b

    def fit(self, X, y=None):
        _check_pair(self.a, self.b)
        e = X if isinstance(X, EnergySeries) else EnergySeries.from_values(X)
        self.mu_ = e.mu
        self.sigma_ = e.sigma
        self.tau1_ = e.mu + self.a * e.sigma
        self.tau2_ = e.mu + self.b * e.sigma
        return self

    def predict(self, X):
        check_is_fitted(self, "tau1_")
        v = X.e if isinstance(X, EnergySeries) else as_1d_float(X, name="energy")
        out = np.full(v.size, NORMAL, dtype=np.int8)
        out[v > self.tau1_] = HIGH
        out[v > self.tau2_] = EXTREME
        return out
