"""BDS test of the iid null hypothesis.

The correlation integral counts embedded pairs whose sup-norm separation is
``<= r`` (the indicator is closed at zero). ``C(1, r)`` and the triple
estimator ``K`` are computed on the same ``M = N - (m-1) t`` leading
observations that seed the ``m``-histories.

``K`` is the average over unordered triples ``i < j < k`` of the symmetrised
chain product ``(I_ij I_jk + I_ik I_kj + I_ji I_ik) / 3``; summing chains by
their middle point reduces it to ``sum_j d_j (d_j - 1) / (M (M-1) (M-2))``
where ``d_j`` is the number of neighbours of point ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from ._validation import as_1d_float
from .exceptions import DegenerateVarianceError, SeriesTooShortError

DEFAULT_DIMENSIONS = (2, 3)


@dataclass(frozen=True)
class BdsConfig:
    m: int = 2
    eps_factor: float = 0.5
    t_lag: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"embedding dimension must be an integer >= 2, got {self.m}")
        if not self.eps_factor > 0:
            raise ValueError(f"eps_factor must be > 0, got {self.eps_factor}")
        if int(self.t_lag) != self.t_lag or self.t_lag < 1:
            raise ValueError(f"t_lag must be an integer >= 1, got {self.t_lag}")


@dataclass(frozen=True)
class BdsResult:
    m: int
    epsilon: float
    c1: float
    cm: float
    k: float
    sigma: float
    statistic: float
    p_value: float


def _n_embedded(n, m, t_lag):
    M = n - (m - 1) * t_lag
    if M < 2:
        raise SeriesTooShortError(
            f"series of length {n} gives {M} embedded points for m={m}, t={t_lag}; need >= 2")
    return M


def _indicator_matrix(x, r):
    """``I[i, j] = |x_i - x_j| <= r`` as a uint8 matrix."""
    return (np.abs(x[:, None] - x[None, :]) <= r).astype(np.uint8)


def _embedded_indicator(base, m, t_lag, M):
    out = base[:M, :M].copy()
    for k in range(1, m):
        s = k * t_lag
        out &= base[s:s + M, s:s + M]
    return out


def _pair_fraction(ind):
    M = ind.shape[0]
    # upper triangle without the diagonal; int64 to avoid uint8 overflow
    pairs = (int(ind.sum(dtype=np.int64)) - M) // 2
    return 2.0 * pairs / (M * (M - 1))


def correlation_integral(x, m: int, r: float, t_lag: int = 1) -> float:
    """Fraction of embedded point pairs within sup-norm distance ``r``."""
    x = as_1d_float(x)
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    M = _n_embedded(x.size, m, t_lag)
    base = _indicator_matrix(x, r)
    return _pair_fraction(_embedded_indicator(base, m, t_lag, M))


def _k_estimate(ind):
    M = ind.shape[0]
    if M < 3:
        raise SeriesTooShortError("K needs at least 3 points")
    d = ind.sum(axis=1, dtype=np.int64) - 1
    return float(np.sum(d * (d - 1))) / (M * (M - 1) * (M - 2))


def bds_variance(c: float, k: float, m: int) -> float:
    """Asymptotic variance of ``sqrt(M) (C(m) - C(1)^m)`` under the iid null."""
    tail = sum(k ** (m - j) * c ** (2 * j) for j in range(1, m))
    return 4.0 * (k ** m + 2.0 * tail + (m - 1) ** 2 * c ** (2 * m)
                  - m ** 2 * k * c ** (2 * m - 2))


def _bds_from_base(base, M, cfg, epsilon, tol):
    ind1 = base[:M, :M]
    c1 = _pair_fraction(ind1)
    k = _k_estimate(ind1)
    cm = _pair_fraction(_embedded_indicator(base, cfg.m, cfg.t_lag, M))
    var = bds_variance(c1, k, cfg.m)
    if not var > tol ** 2:
        raise DegenerateVarianceError(
            f"BDS variance {var:.3g} is not positive for m={cfg.m} (constant or near-constant series?)")
    sigma = float(np.sqrt(var))
    stat = np.sqrt(M) * (cm - c1 ** cfg.m) / sigma
    p = float(2.0 * stats.norm.sf(abs(stat)))
    return BdsResult(cfg.m, float(epsilon), c1, cm, k, sigma, float(stat), p)


def bds_statistic(x, cfg: BdsConfig = BdsConfig(), epsilon: float | None = None,
                  tol: float = 1e-12) -> BdsResult:
    """Standardised BDS statistic and its two-sided normal p-value.

    ``epsilon`` defaults to ``cfg.eps_factor`` times the sample standard
    deviation (``ddof=1``) of ``x``.
    """
    x = as_1d_float(x)
    M = _n_embedded(x.size, cfg.m, cfg.t_lag)
    if M < 3:
        raise SeriesTooShortError("BDS needs at least 3 embedded points")
    if epsilon is None:
        epsilon = cfg.eps_factor * float(np.std(x, ddof=1))
    base = _indicator_matrix(x, epsilon)
    return _bds_from_base(base, M, cfg, epsilon, tol)


def bds_suite(r, dimensions=DEFAULT_DIMENSIONS, eps_factor: float = 0.5,
              t_lag: int = 1) -> list[BdsResult]:
    """BDS results for each embedding dimension at ``eps = eps_factor * std``."""
    x = as_1d_float(getattr(r, "r", r))
    epsilon = eps_factor * float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    base = _indicator_matrix(x, epsilon)
    out = []
    for m in dimensions:
        cfg = BdsConfig(m=m, eps_factor=eps_factor, t_lag=t_lag)
        M = _n_embedded(x.size, m, t_lag)
        out.append(_bds_from_base(base, M, cfg, epsilon, 1e-12))
    return out


def embed(x, m: int, t_lag: int = 1) -> NDArray[np.float64]:
    """Delay-embedding matrix of shape ``(M, m)``."""
    x = as_1d_float(x)
    M = _n_embedded(x.size, m, t_lag)
    return np.stack([x[k * t_lag:k * t_lag + M] for k in range(m)], axis=1)
