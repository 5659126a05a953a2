"""Empirical mode decomposition, masking EMD and direct-quadrature demodulation.

Envelopes are natural cubic splines through extrema, with two extrema
mirrored past each end of the signal (Rilling-style symmetric boundary) so
the spline does not swing at the edges. Sifting stops on the S-number rule:
``s_number`` consecutive sifts with unchanged extrema and zero-crossing
counts that differ by at most one, or after ``max_sifts`` sifts.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_1d_float
from .exceptions import DataError, NormalizationFailure, TooFewExtremaWarning

MIN_LENGTH = 8
MASK_FREQ_FACTOR = 1.0
MASK_AMP_FACTOR = 1.6


class TooShortError(DataError):
    pass


@dataclass(frozen=True)
class SiftOptions:
    s_number: int = 4
    max_sifts: int = 50
    n_mirror: int = 2
    max_imfs: int | None = None
    mask_freq_factor: float = MASK_FREQ_FACTOR
    mask_amp_factor: float = MASK_AMP_FACTOR
    refine_extrema: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass
class Decomposition:
    imfs: list[NDArray[np.float64]]
    residual: NDArray[np.float64]
    options: dict = field(default_factory=dict)

    @property
    def n_imfs(self):
        return len(self.imfs)

    def reconstruct(self) -> NDArray[np.float64]:
        total = self.residual.copy()
        for imf in self.imfs:
            total = total + imf
        return total

    def as_array(self) -> NDArray[np.float64]:
        """``(n_samples, n_imfs + 1)`` with the residual in the last column."""
        return np.column_stack(self.imfs + [self.residual])

    def to_csv(self, path, options_path=None):
        cols = [f"imf{j + 1}" for j in range(self.n_imfs)] + ["residual"]
        data = self.as_array()
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        if options_path is not None:
            with open(options_path, "w") as fh:
                json.dump(self.options, fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, path, options_path=None) -> "Decomposition":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        options = {}
        if options_path is not None:
            with open(options_path) as fh:
                options = json.load(fh)
        return cls([data[:, j].copy() for j in range(data.shape[1] - 1)], data[:, -1].copy(), options)


@dataclass
class InstantSeries:
    amplitude: NDArray[np.float64]
    phase: NDArray[np.float64]
    frequency: NDArray[np.float64]
    n_clamped: int = 0
    n_iterations: int = 0


# extrema and zero crossings -------------------------------------------------

def find_extrema(x) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Indices of interior local maxima and minima; a flat run counts once, at its middle."""
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    s = np.sign(d[nz])
    turn = np.flatnonzero(s[:-1] != s[1:])
    idx = (nz[turn] + 1 + nz[turn + 1]) // 2
    return idx[s[turn] > 0], idx[s[turn] < 0]


def count_zero_crossings(x) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[:-1] != s[1:]))


def _sinusoid_fit(x, idx):
    """Sub-sample crest position and value at extrema ``idx``.

    Three samples ``y_k = A cos(w (k - d))`` around an extremum give
    ``cos w = (y_-1 + y_1) / (2 y_0)``, ``A sin(w d) = (y_1 - y_-1) / (2 sin w)``
    and ``A cos(w d) = y_0``. Estimates are kept within half a sample of the
    grid extremum and within ``[|y0|, |y0| / cos(w/2)]`` in magnitude; where
    the fit does not apply the grid sample is returned unchanged.
    """
    idx = np.asarray(idx, dtype=np.intp)
    pos = idx.astype(np.float64)
    val = x[idx].astype(np.float64)
    inner = (idx > 0) & (idx < x.size - 1) & (val != 0)
    if not np.any(inner):
        return pos, val
    i = idx[inner]
    ym, y0, yp = x[i - 1], x[i], x[i + 1]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cw = (ym + yp) / (2.0 * y0)
        good = (cw > -1.0) & (cw < 1.0)
        w = np.arccos(np.clip(cw, -1.0, 1.0))
        b = (yp - ym) / (2.0 * np.sin(w))
        mag = np.sqrt(y0 ** 2 + b ** 2)
        hi = np.abs(y0) / np.maximum(np.cos(w / 2.0), 0.5)
        d = np.arctan(b / y0) / w
    good &= np.isfinite(mag) & np.isfinite(d)
    mag = np.where(good, np.clip(mag, np.abs(y0), hi), np.abs(y0))
    d = np.where(good, np.clip(d, -0.49, 0.49), 0.0)
    pos[inner] = i + d
    val[inner] = np.sign(y0) * mag
    return pos, val


def _mirror_knots(x, imax, imin, nb, refine=False):
    """Extend maxima/minima index lists with mirrored points past both ends.

    Returns ``(t_max, v_max, t_min, v_min)`` as float knot positions and
    values. With ``refine`` the interior extrema are moved to their
    sub-sample crests (see :func:`_sinusoid_fit`).
    """
    n = x.size
    last = n - 1
    imax = list(imax)
    imin = list(imin)

    pos = {0: 0.0, last: float(last)}
    val = {0: float(x[0]), last: float(x[last])}
    for group in (imax, imin):
        if refine:
            p, v = _sinusoid_fit(x, group)
        else:
            p, v = np.asarray(group, dtype=np.float64), x[np.asarray(group, dtype=np.intp)]
        pos.update(zip(group, p.tolist()))
        val.update(zip(group, v.tolist()))

    if imax[0] < imin[0]:
        if x[0] > x[imin[0]]:
            lmax, lmin, lsym = imax[1:nb + 1][::-1], imin[:nb][::-1], imax[0]
        else:
            lmax, lmin, lsym = imax[:nb][::-1], imin[:nb - 1][::-1] + [0], 0
    else:
        if x[0] < x[imax[0]]:
            lmax, lmin, lsym = imax[:nb][::-1], imin[1:nb + 1][::-1], imin[0]
        else:
            lmax, lmin, lsym = imax[:nb - 1][::-1] + [0], imin[:nb][::-1], 0

    if imax[-1] < imin[-1]:
        if x[-1] < x[imax[-1]]:
            rmax, rmin, rsym = imax[-nb:][::-1], imin[-nb - 1:-1][::-1], imin[-1]
        else:
            rmax, rmin, rsym = [last] + imax[-nb + 1:][::-1] if nb > 1 else [last], imin[-nb:][::-1], last
    else:
        if x[-1] > x[imin[-1]]:
            rmax, rmin, rsym = imax[-nb - 1:-1][::-1], imin[-nb:][::-1], imax[-1]
        else:
            rmax, rmin, rsym = imax[-nb:][::-1], [last] + imin[-nb + 1:][::-1] if nb > 1 else [last], last

    def _mirror(sym, idx):
        return [2 * pos[sym] - pos[i] for i in idx]

    tlmax, tlmin = _mirror(lsym, lmax), _mirror(lsym, lmin)
    # mirrored points must reach past the start; otherwise mirror about the endpoint
    if (tlmax and tlmax[0] > 0) or (tlmin and tlmin[0] > 0) or not tlmax or not tlmin:
        if lsym != 0:
            if lsym == imax[0]:
                lmax = imax[:nb][::-1]
            else:
                lmin = imin[:nb][::-1]
            lsym = 0
            tlmax, tlmin = _mirror(lsym, lmax), _mirror(lsym, lmin)

    trmax, trmin = _mirror(rsym, rmax), _mirror(rsym, rmin)
    if (trmax and trmax[-1] < last) or (trmin and trmin[-1] < last) or not trmax or not trmin:
        if rsym != last:
            if rsym == imax[-1]:
                rmax = imax[-nb:][::-1]
            else:
                rmin = imin[-nb:][::-1]
            rsym = last
            trmax, trmin = _mirror(rsym, rmax), _mirror(rsym, rmin)

    def _assemble(tl, il, core, tr, ir):
        t = np.array(tl + [pos[i] for i in core] + tr, dtype=np.float64)
        v = np.array([val[i] for i in il + list(core) + ir], dtype=np.float64)
        order = np.argsort(t, kind="stable")
        t, v = t[order], v[order]
        keep = np.concatenate([[True], np.diff(t) > 0])
        return t[keep], v[keep]

    t_max, v_max = _assemble(tlmax, lmax, imax, trmax, rmax)
    t_min, v_min = _assemble(tlmin, lmin, imin, trmin, rmin)
    return t_max, v_max, t_min, v_min


def _spline(t_knots, values, n):
    grid = np.arange(n, dtype=np.float64)
    if t_knots.size == 1:
        return np.full(n, values[0])
    return CubicSpline(t_knots, values, bc_type="natural")(grid)


def _mean_envelope(h, imax, imin, n_mirror, refine=False):
    t_max, v_max, t_min, v_min = _mirror_knots(h, imax, imin, n_mirror, refine)
    upper = _spline(t_max, v_max, h.size)
    lower = _spline(t_min, v_min, h.size)
    return 0.5 * (upper + lower)


def _can_sift(h):
    imax, imin = find_extrema(h)
    return imax.size >= 1 and imin.size >= 1 and imax.size + imin.size >= 3, imax, imin


def sift(x, opts: SiftOptions = SiftOptions()) -> NDArray[np.float64]:
    """Extract one IMF from ``x`` (returns ``x`` unchanged when it cannot be sifted).

    Stops on the S-number rule or after ``max_sifts``; a candidate that still
    breaks ``|extrema - zero crossings| <= 1`` at the cap is sifted further
    until it is an IMF, up to ``10 * max_sifts``.
    """
    h = np.array(x, dtype=np.float64)
    prev = None
    streak = 0
    for n in range(10 * opts.max_sifts):
        ok, imax, imin = _can_sift(h)
        if not ok:
            break
        h = h - _mean_envelope(h, imax, imin, opts.n_mirror, opts.refine_extrema)
        imax, imin = find_extrema(h)
        counts = (imax.size + imin.size, count_zero_crossings(h))
        is_imf = abs(counts[0] - counts[1]) <= 1
        if is_imf and counts == prev:
            streak += 1
            if streak >= opts.s_number:
                break
        else:
            streak = 0
        prev = counts
        if n + 1 >= opts.max_sifts and is_imf:
            break
    return h


def _check_signal(x):
    x = as_1d_float(x, name="signal")
    if x.size < MIN_LENGTH:
        raise TooShortError(f"need at least {MIN_LENGTH} samples, got {x.size}")
    return x


NULL_TOL = 1e-10


def _is_null(r, scale):
    return not np.any(np.abs(r) > NULL_TOL * max(scale, np.finfo(float).tiny))


def emd_decompose(x, opts: SiftOptions = SiftOptions()) -> Decomposition:
    """Plain EMD; IMFs are ordered fastest first and ``x == sum(imfs) + residual``."""
    x = _check_signal(x)
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    cap = opts.max_imfs if opts.max_imfs is not None else int(np.log2(x.size)) + 1
    imfs = []
    r = x.copy()
    while len(imfs) < cap and not _is_null(r, scale):
        if not _can_sift(r)[0]:
            break
        imf = sift(r, opts)
        if _is_null(imf, scale):
            # only round-off left to oscillate around the trend
            break
        imfs.append(imf)
        r = r - imf
    meta = {"method": "emd", **opts.to_dict()}
    return Decomposition(imfs, r, meta)


def zero_crossing_frequency(x) -> float:
    """Mean frequency (cycles/sample) implied by the zero-crossing count."""
    x = np.asarray(x, dtype=np.float64)
    return count_zero_crossings(x) / (2.0 * x.size)


def default_mask(x, opts: SiftOptions = SiftOptions()) -> tuple[float, float]:
    """Mask from the first plain IMF of ``x``.

    Frequency is ``opts.mask_freq_factor`` times that IMF's zero-crossing
    frequency, amplitude ``opts.mask_amp_factor`` times ``std(x)``. A mask
    much faster than the target component lets sifting split it between
    two IMFs, so the frequency factor defaults to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    f = opts.mask_freq_factor * zero_crossing_frequency(sift(x, opts))
    f = min(max(f, 1.0 / x.size), 0.45)
    return f, opts.mask_amp_factor * float(np.std(x))


def masking_emd(x, mask_freq: float | None = None, mask_amp: float | None = None,
                opts: SiftOptions = SiftOptions()) -> Decomposition:
    """EMD where each IMF is the average of the first IMFs of ``r + s`` and ``r - s``.

    ``s = mask_amp * sin(2 pi mask_freq t)``. The given mask is used for the
    first IMF; later levels and any omitted parameter use :func:`default_mask`
    on the current remainder.
    """
    x = _check_signal(x)
    if mask_freq is not None and not 0 < mask_freq < 0.5:
        raise ValueError(f"mask_freq must lie in (0, 0.5), got {mask_freq}")
    scale = float(np.max(np.abs(x)))
    cap = opts.max_imfs if opts.max_imfs is not None else int(np.log2(x.size)) + 1
    t = np.arange(x.size, dtype=np.float64)
    imfs, masks = [], []
    r = x.copy()
    while len(imfs) < cap and not _is_null(r, scale):
        if not _can_sift(r)[0]:
            break
        f_est, a_est = default_mask(r, opts)
        f = mask_freq if (not imfs and mask_freq is not None) else f_est
        a = mask_amp if (not imfs and mask_amp is not None) else a_est
        s = a * np.sin(2.0 * np.pi * f * t)
        imf = 0.5 * (sift(r + s, opts) + sift(r - s, opts))
        if _is_null(imf, scale) or count_zero_crossings(imf) < 2:
            # a component that no longer oscillates about zero belongs to the trend
            break
        imfs.append(imf)
        masks.append([f, a])
        r = r - imf
    meta = {"method": "masking_emd", "masks": masks, **opts.to_dict()}
    return Decomposition(imfs, r, meta)


# envelopes and demodulation ----------------------------------------------------

def amplitude_envelope(c, n_mirror: int = 2) -> NDArray[np.float64]:
    """Natural cubic spline through the maxima of ``|c|``, floored at zero.

    With fewer than two maxima the envelope falls back to the constant
    ``max |c|`` and a :class:`TooFewExtremaWarning` is emitted.
    """
    c = as_1d_float(c, name="imf")
    a = np.abs(c)
    idx, _ = find_extrema(a)
    if idx.size < 2:
        warnings.warn("fewer than 2 maxima of |c|; using a constant envelope",
                      TooFewExtremaWarning, stacklevel=2)
        return np.full(c.size, float(a.max()) if a.size else 0.0)
    # crests of |c| are crests of c, located to sub-sample accuracy
    pos, peaks = _sinusoid_fit(c, idx)
    peaks = np.abs(peaks)
    n = c.size
    last = n - 1
    k = min(n_mirror, idx.size)
    t = np.concatenate([-pos[:k][::-1], pos, 2 * last - pos[-k:][::-1]])
    v = np.concatenate([peaks[:k][::-1], peaks, peaks[-k:][::-1]])
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]
    keep = np.concatenate([[True], np.diff(t) > 0])
    env = _spline(t[keep], v[keep], n)
    return np.maximum(env, 0.0)


def direct_quadrature(c, max_iter: int = 10, tol: float = 1e-6) -> InstantSeries:
    """Instantaneous amplitude, phase and frequency of an IMF.

    The IMF is divided by its envelope (floored at ``|F|`` so a spline that
    dips under the data cannot inflate ``F``) until ``max |F| <= 1 + tol``;
    the product of the envelopes is the amplitude. With ``F = cos(theta)`` the
    quadrature ``sin(theta) = -sign(dF/dt) sqrt(1 - F^2)`` fixes the
    quadrant, the phase is unwrapped, and the frequency (cycles/sample) is
    its centred difference over ``2 pi``, clamped at zero.
    """
    c = as_1d_float(c, name="imf")
    amp = np.ones(c.size)
    F = c.copy()
    n_iter = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooFewExtremaWarning)
        for n_iter in range(1, max_iter + 1):
            # where the spline cuts under the data, divide by the data itself
            env = np.maximum(amplitude_envelope(F), np.abs(F))
            safe = np.where(env > 0, env, 1.0)
            F = np.where(env > 0, F / safe, 0.0)
            amp = amp * env
            if not np.all(np.isfinite(F)):
                raise NormalizationFailure("envelope division produced non-finite values")
            if np.max(np.abs(F), initial=0.0) <= 1.0 + tol:
                break
    F = np.clip(F, -1.0, 1.0)
    slope = np.gradient(F) if F.size > 1 else np.zeros_like(F)
    quad = -np.sign(slope) * np.sqrt(1.0 - F ** 2)
    phase = np.unwrap(np.arctan2(quad, F))
    freq = np.gradient(phase) / (2.0 * np.pi) if phase.size > 1 else np.zeros_like(phase)
    neg = freq < 0
    freq = np.where(neg, 0.0, freq)
    return InstantSeries(amp, phase, freq, int(np.count_nonzero(neg)), n_iter)


class EMD(TransformerMixin, BaseEstimator):
    """Transformer form of EMD.

    ``transform`` maps a 1-D signal to an ``(n_samples, n_imfs + 1)`` array
    of IMFs followed by the residual; ``decomposition_`` keeps the last
    result. Set ``mask_freq`` (or ``masking=True``) to use masking EMD.
    """

    def __init__(self, s_number=4, max_sifts=50, n_mirror=2, max_imfs=None,
                 masking=False, mask_freq=None, mask_amp=None):
        self.s_number = s_number
        self.max_sifts = max_sifts
        self.n_mirror = n_mirror
        self.max_imfs = max_imfs
        self.masking = masking
        self.mask_freq = mask_freq
        self.mask_amp = mask_amp

    def _opts(self):
        return SiftOptions(self.s_number, self.max_sifts, self.n_mirror, self.max_imfs)

    def fit(self, X, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        if self.masking or self.mask_freq is not None:
            d = masking_emd(X, self.mask_freq, self.mask_amp, self._opts())
        else:
            d = emd_decompose(X, self._opts())
        self.decomposition_ = d
        return d.as_array()
