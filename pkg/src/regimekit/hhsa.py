"""Holo-Hilbert spectral analysis: second-layer decomposition and 2-D spectra.

The envelope ``a_j(t)`` of each first-layer IMF is itself decomposed by
masking EMD into second-layer IMFs ``c_jk`` plus a trend ``Q_j``. Direct
quadrature on each ``c_jk`` gives its amplitude ``a_jk(t)`` and the
amplitude-modulation frequency ``w_am(t)``; the carrier frequency ``w_c(t)``
comes from the first-layer IMF. Integrating ``a_jk(t)^2 / T`` over a window
on a log-spaced ``(w_am, w_c)`` grid gives the 2-D spectrum.

Frequencies are in cycles per sample (cycles per trading day for daily data).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .emd import (
    Decomposition,
    InstantSeries,
    SiftOptions,
    amplitude_envelope,
    direct_quadrature,
    emd_decompose,
    masking_emd,
)
from .exceptions import EmptyWindowError, TooFewExtremaWarning, ZeroEnergyError

DEFAULT_BINS = 64
F_MAX = 0.5


@dataclass
class EnvelopeLayer:
    """Second-layer decomposition of one first-layer envelope."""

    envelope: NDArray[np.float64]
    imfs: list[NDArray[np.float64]]
    trend: NDArray[np.float64]
    inst: list[InstantSeries]
    envelope_fallback: bool = False

    def reconstruct(self) -> NDArray[np.float64]:
        total = self.trend.copy()
        for c in self.imfs:
            total = total + c
        return total


@dataclass
class SecondLayer:
    layers: list[EnvelopeLayer]

    @property
    def n_pairs(self) -> int:
        return sum(len(layer.imfs) for layer in self.layers)

    @property
    def n_clamped(self) -> int:
        return sum(q.n_clamped for layer in self.layers for q in layer.inst)

    @property
    def n_envelope_fallbacks(self) -> int:
        return sum(layer.envelope_fallback for layer in self.layers)


def second_layer(d: Decomposition, opts: SiftOptions = SiftOptions()) -> SecondLayer:
    """Masking-EMD every first-layer envelope and demodulate the results."""
    layers = []
    for imf in d.imfs:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TooFewExtremaWarning)
            env = amplitude_envelope(imf, n_mirror=opts.n_mirror)
        fallback = any(issubclass(w.category, TooFewExtremaWarning) for w in caught)
        sub = masking_emd(env, opts=opts)
        inst = [direct_quadrature(c) for c in sub.imfs]
        layers.append(EnvelopeLayer(env, sub.imfs, sub.residual, inst, fallback))
    return SecondLayer(layers)


@dataclass
class HolospectralAnalysis:
    """Both layers for one series, computed once and sliced into windows."""

    first: Decomposition
    first_inst: list[InstantSeries]
    second: SecondLayer
    dates: NDArray[np.datetime64] | None = None


def analyze(x, opts: SiftOptions = SiftOptions(), dates=None) -> HolospectralAnalysis:
    d = emd_decompose(x, opts)
    inst = [direct_quadrature(c) for c in d.imfs]
    return HolospectralAnalysis(d, inst, second_layer(d, opts),
                                None if dates is None else np.asarray(dates, dtype="datetime64[D]"))


def log_edges(n_samples: int, n_bins: int = DEFAULT_BINS, f_max: float = F_MAX) -> NDArray[np.float64]:
    """``n_bins + 1`` log-spaced edges on ``[1/n_samples, f_max]``."""
    if n_samples < 2:
        raise EmptyWindowError("a spectrum window needs at least 2 samples")
    return np.geomspace(1.0 / n_samples, f_max, n_bins + 1)


OUT_OF_RANGE = ("drop", "clip")


def _bin_index(f, edges):
    return np.clip(np.searchsorted(edges, f, side="right") - 1, 0, edges.size - 2)


def _in_range(fa, fc, edges, out_of_range):
    """Samples that enter the spectrum.

    ``"drop"`` keeps only samples whose two frequencies lie on the grid; a
    modulation slower than one cycle per window cannot be resolved inside
    it. ``"clip"`` keeps everything, piling out-of-range samples (and
    clamped zeros) into the edge bins so that no energy is lost.
    """
    if out_of_range == "clip":
        return np.ones(fa.shape, dtype=bool)
    if out_of_range != "drop":
        raise ValueError(f"out_of_range must be one of {OUT_OF_RANGE}, got {out_of_range!r}")
    lo, hi = edges[0], edges[-1]
    return (fa >= lo) & (fa <= hi) & (fc >= lo) & (fc <= hi)


def window_mask(n: int, window=None, dates=None) -> NDArray[np.bool_]:
    """Boolean sample mask from ``None``, a slice, a boolean mask, a calendar
    year (with ``dates``) or a ``(start, end)`` date pair, inclusive."""
    if window is None:
        mask = np.ones(n, dtype=bool)
    elif isinstance(window, slice):
        mask = np.zeros(n, dtype=bool)
        mask[window] = True
    elif isinstance(window, (int, np.integer)):
        if dates is None:
            raise ValueError("a calendar-year window needs dates")
        years = np.asarray(dates, dtype="datetime64[Y]").astype(int) + 1970
        mask = years == int(window)
    elif isinstance(window, tuple) and len(window) == 2:
        if dates is None:
            raise ValueError("a date-range window needs dates")
        d = np.asarray(dates, dtype="datetime64[D]")
        mask = (d >= np.datetime64(window[0], "D")) & (d <= np.datetime64(window[1], "D"))
    else:
        mask = np.asarray(window, dtype=bool)
        if mask.shape != (n,):
            raise ValueError(f"window mask must have shape ({n},)")
    if not mask.any():
        raise EmptyWindowError(f"window {window!r} selects no samples")
    return mask


@dataclass
class HoloSpectrum:
    """Time-averaged modulation energy on a ``(w_am, w_c)`` grid.

    ``energy[i, j]`` is the energy whose modulation frequency falls in
    ``am_edges[i:i+2]`` and whose carrier frequency falls in ``c_edges[j:j+2]``.
    """

    am_edges: NDArray[np.float64]
    c_edges: NDArray[np.float64]
    energy: NDArray[np.float64]
    n_samples: int
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.energy.sum())

    @property
    def am_centers(self) -> NDArray[np.float64]:
        return np.sqrt(self.am_edges[:-1] * self.am_edges[1:])

    @property
    def c_centers(self) -> NDArray[np.float64]:
        return np.sqrt(self.c_edges[:-1] * self.c_edges[1:])

    def peak(self) -> tuple[float, float, float]:
        """``(w_am, w_c, energy)`` at the largest cell (geometric bin centres)."""
        i, j = np.unravel_index(int(np.argmax(self.energy)), self.energy.shape)
        return float(self.am_centers[i]), float(self.c_centers[j]), float(self.energy[i, j])

    def to_csv(self, path, meta_path=None) -> None:
        """Two edge rows (``c_edges``, ``am_edges``) followed by one row per
        modulation bin; ``meta_path`` receives window and unit metadata."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["c_edges"] + [f"{v:.17g}" for v in self.c_edges])
            w.writerow(["am_edges"] + [f"{v:.17g}" for v in self.am_edges])
            for i, row in enumerate(self.energy):
                w.writerow([f"am{i}"] + [f"{v:.17g}" for v in row])
        if meta_path is not None:
            with open(meta_path, "w") as fh:
                json.dump(self.meta_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")

    def meta_dict(self) -> dict:
        return {"n_samples": self.n_samples, "units": "cycles per sample",
                "axes": ["omega_am", "omega_c"], **self.meta}

    @classmethod
    def from_csv(cls, path, meta_path=None) -> "HoloSpectrum":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        c_edges = np.array(rows[0][1:], dtype=np.float64)
        am_edges = np.array(rows[1][1:], dtype=np.float64)
        energy = np.array([r[1:] for r in rows[2:]], dtype=np.float64)
        meta = {}
        n = 0
        if meta_path is not None:
            with open(meta_path) as fh:
                meta = json.load(fh)
            n = int(meta.pop("n_samples", 0))
            meta.pop("units", None)
            meta.pop("axes", None)
        return cls(am_edges, c_edges, energy, n, meta)


def _pairs(sl: SecondLayer, first: list[InstantSeries]):
    if len(first) != len(sl.layers):
        raise ValueError(f"{len(first)} first-layer series for {len(sl.layers)} envelopes")
    for j, layer in enumerate(sl.layers):
        for q in layer.inst:
            yield first[j], q


def holo_spectrum(sl: SecondLayer, first: list[InstantSeries], window=None, dates=None,
                  n_bins: int = DEFAULT_BINS, f_max: float = F_MAX,
                  out_of_range: str = "drop") -> HoloSpectrum:
    """Deposit ``a_jk(t)^2 / T`` into the ``(w_am(t), w_c(t))`` cell for every
    sample ``t`` of the window, where ``T`` is the window length.

    Samples off the ``[1/T, f_max]`` grid are dropped or clipped into the edge
    bins according to ``out_of_range``; ``meta["dropped_energy"]`` records the
    energy left out.
    """
    n = first[0].amplitude.size if first else 0
    if n == 0:
        raise EmptyWindowError("no first-layer IMFs to build a spectrum from")
    mask = window_mask(n, window, dates)
    T = int(mask.sum())
    edges = log_edges(T, n_bins, f_max)
    energy = np.zeros((n_bins, n_bins))
    dropped = 0.0
    for carrier, mod in _pairs(sl, first):
        e = mod.amplitude[mask] ** 2 / T
        fa = mod.frequency[mask]
        fc = carrier.frequency[mask]
        keep = _in_range(fa, fc, edges, out_of_range)
        dropped += float(e[~keep].sum())
        np.add.at(energy, (_bin_index(fa[keep], edges), _bin_index(fc[keep], edges)), e[keep])
    meta = {"window": _describe(window), "out_of_range": out_of_range, "dropped_energy": dropped}
    return HoloSpectrum(edges, edges.copy(), energy, T, meta)


def _describe(window):
    if window is None:
        return "all"
    if isinstance(window, (int, np.integer)):
        return int(window)
    if isinstance(window, tuple):
        return [str(w) for w in window]
    if isinstance(window, slice):
        return [window.start, window.stop]
    return "mask"


def weighted_percentile(values, weights, q: float) -> float:
    """Smallest value whose cumulative weight reaches ``q`` (0..100) percent."""
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise ZeroEnergyError("percentile weights sum to zero")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, q / 100.0 * cum[-1], side="left"))
    return float(v[order][min(k, v.size - 1)])


@dataclass(frozen=True)
class RegimeProfile:
    pame: float
    wc95: float
    wam95: float


def regime_profile(h: HoloSpectrum, sl: SecondLayer, first: list[InstantSeries],
                   window=None, dates=None, q: float = 95.0) -> RegimeProfile:
    """Peak cell energy and energy-weighted upper percentiles of ``w_c`` and ``w_am``.

    ``window`` must select the same samples the spectrum was built on; the
    percentiles use the samples the spectrum kept.
    """
    if not h.total > 0:
        raise ZeroEnergyError("the spectrum holds no modulation energy")
    n = first[0].amplitude.size
    mask = window_mask(n, window, dates)
    mode = h.meta.get("out_of_range", "clip")
    wc, wam, e = [], [], []
    for carrier, mod in _pairs(sl, first):
        fa = mod.frequency[mask]
        fc = carrier.frequency[mask]
        keep = _in_range(fa, fc, h.am_edges, mode)
        e.append(mod.amplitude[mask][keep] ** 2)
        wc.append(fc[keep])
        wam.append(fa[keep])
    e = np.concatenate(e)
    return RegimeProfile(float(h.energy.max()),
                         weighted_percentile(np.concatenate(wc), e, q),
                         weighted_percentile(np.concatenate(wam), e, q))


def profile_window(a: HolospectralAnalysis, window=None, n_bins: int = DEFAULT_BINS,
                   f_max: float = F_MAX, out_of_range: str = "drop") -> tuple[HoloSpectrum, RegimeProfile]:
    h = holo_spectrum(a.second, a.first_inst, window, a.dates, n_bins, f_max, out_of_range)
    return h, regime_profile(h, a.second, a.first_inst, window, a.dates)


def write_profiles(path, rows) -> None:
    """``rows`` of ``(ticker, regime, RegimeProfile)`` as ``ticker,regime,pame,wc95,wam95``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "regime", "pame", "wc95", "wam95"])
        for ticker, regime, p in rows:
            w.writerow([ticker, regime, f"{p.pame:.17g}", f"{p.wc95:.17g}", f"{p.wam95:.17g}"])


def read_profiles(path) -> list[tuple[str, str, RegimeProfile]]:
    with open(path, newline="") as fh:
        return [(r["ticker"], r["regime"],
                 RegimeProfile(float(r["pame"]), float(r["wc95"]), float(r["wam95"])))
                for r in csv.DictReader(fh)]
