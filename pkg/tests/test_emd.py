import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from regimekit.emd import (
    EMD,
    Decomposition,
    SiftOptions,
    TooShortError,
    amplitude_envelope,
    count_zero_crossings,
    direct_quadrature,
    emd_decompose,
    find_extrema,
    masking_emd,
    sift,
)
from regimekit.exceptions import NonFiniteInputError, TooFewExtremaWarning

t = np.arange(1000.0)
INTERIOR = slice(100, 900)


def corr(a, b):
    return float(np.corrcoef(a, b)[0, 1])


def is_imf(c):
    imax, imin = find_extrema(c)
    return abs(imax.size + imin.size - count_zero_crossings(c)) <= 1


# plain EMD --------------------------------------------------------------------

def test_zero_signal():
    d = emd_decompose(np.zeros(64))
    assert d.imfs == []
    assert np.all(d.residual == 0)


def test_constant_signal():
    d = emd_decompose(np.full(64, 3.0))
    assert d.imfs == []


def test_single_tone():
    x = np.cos(2 * np.pi * 0.05 * t)
    d = emd_decompose(x)
    energy = [np.sum(c ** 2) for c in d.imfs]
    dominant = d.imfs[int(np.argmax(energy))]
    assert corr(dominant, x) > 0.99


def test_two_tone_separation():
    fast = np.cos(2 * np.pi * 0.2 * t)
    slow = np.cos(2 * np.pi * 0.02 * t)
    d = emd_decompose(fast + slow)
    assert corr(d.imfs[0][INTERIOR], fast[INTERIOR]) > 0.95
    assert corr(d.imfs[1][INTERIOR], slow[INTERIOR]) > 0.95


def test_too_short_and_non_finite():
    with pytest.raises(TooShortError):
        emd_decompose(np.arange(5.0))
    x = np.ones(20)
    x[3] = np.nan
    with pytest.raises(NonFiniteInputError):
        emd_decompose(x)


def test_imfs_satisfy_extrema_rule_on_returns():
    rng = np.random.default_rng(4)
    x = rng.standard_t(4, 2000) * 0.01
    d = emd_decompose(x)
    assert d.n_imfs >= 5
    assert all(is_imf(c) for c in d.imfs)
    np.testing.assert_allclose(d.reconstruct(), x, rtol=0, atol=1e-8 * np.abs(x).max())


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(16, 300), elements=st.floats(-1e3, 1e3)))
def test_completeness(x):
    d = emd_decompose(x)
    scale = max(np.abs(x).max(), 1e-300)
    assert np.max(np.abs(d.reconstruct() - x)) <= 1e-8 * scale
    assert d.as_array().shape == (x.size, d.n_imfs + 1)


def test_sift_stops_when_not_siftable():
    x = np.linspace(0, 1, 50)
    assert np.array_equal(sift(x), x)


def test_decomposition_csv_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(size=200)
    d = emd_decompose(x)
    d.to_csv(tmp_path / "d.csv", tmp_path / "d.json")
    back = Decomposition.from_csv(tmp_path / "d.csv", tmp_path / "d.json")
    assert back.n_imfs == d.n_imfs
    for a, b in zip(back.imfs, d.imfs):
        assert np.array_equal(a, b)
    assert np.array_equal(back.residual, d.residual)
    assert back.options["s_number"] == 4
    assert (tmp_path / "d.csv").read_text().splitlines()[0].startswith("imf1,")


def test_estimator_transform():
    x = np.cos(2 * np.pi * 0.2 * t) + np.cos(2 * np.pi * 0.02 * t)
    out = EMD().fit_transform(x)
    assert out.shape[0] == t.size
    np.testing.assert_allclose(out.sum(axis=1), x, atol=1e-10)
    assert EMD(masking=True).fit_transform(x).shape[0] == t.size


# envelope ---------------------------------------------------------------------

def test_constant_amplitude_envelope():
    env = amplitude_envelope(0.5 * np.cos(2 * np.pi * 0.2 * t))
    np.testing.assert_allclose(env[INTERIOR], 0.5, rtol=0.02)


def test_zero_envelope_falls_back():
    with pytest.warns(TooFewExtremaWarning):
        env = amplitude_envelope(np.zeros(50))
    assert np.all(env == 0)


def test_am_envelope_tracks_modulation():
    a = 1 + 0.5 * np.cos(2 * np.pi * 0.01 * t)
    env = amplitude_envelope(a * np.cos(2 * np.pi * 0.2 * t))
    rmse = np.sqrt(np.mean((env[INTERIOR] - a[INTERIOR]) ** 2))
    assert rmse < 0.05 * a.mean()
    assert np.all(env >= 0)


# direct quadrature --------------------------------------------------------------

def test_dq_pure_tone():
    q = direct_quadrature(np.cos(2 * np.pi * 0.1 * t))
    np.testing.assert_allclose(q.frequency[INTERIOR], 0.1, rtol=0.05)
    np.testing.assert_allclose(q.amplitude[INTERIOR], 1.0, rtol=0.02)
    assert abs(q.frequency[INTERIOR].mean() - 0.1) < 0.005


@pytest.mark.parametrize("k", [0.01, 3.0, 250.0])
def test_dq_homogeneity(k):
    c = np.cos(2 * np.pi * 0.07 * t) * (1 + 0.3 * np.sin(2 * np.pi * 0.003 * t))
    a = direct_quadrature(c)
    b = direct_quadrature(k * c)
    np.testing.assert_allclose(b.amplitude, k * a.amplitude, rtol=1e-6)
    np.testing.assert_allclose(b.frequency, a.frequency, atol=1e-6)


def test_dq_chirp():
    f = 0.05 + 0.1 * t / t[-1]
    phase = 2 * np.pi * np.cumsum(f)
    q = direct_quadrature(np.cos(phase))
    err = np.abs(q.frequency[INTERIOR] - f[INTERIOR]) / f[INTERIOR]
    assert err.mean() < 0.10


def test_dq_outputs_are_valid():
    x = np.random.default_rng(9).normal(size=500)
    for c in emd_decompose(x).imfs:
        q = direct_quadrature(c)
        assert np.all(q.amplitude >= 0)
        assert np.all(q.frequency >= 0)
        assert q.amplitude.shape == c.shape
        assert q.n_iterations <= 10


# masking EMD --------------------------------------------------------------------

def test_masking_zero_signal():
    d = masking_emd(np.zeros(100))
    assert d.imfs == []


def test_masking_rejects_bad_frequency():
    with pytest.raises(ValueError):
        masking_emd(np.random.default_rng(0).normal(size=100), mask_freq=0.6)


def test_masking_suppresses_mode_mixing():
    tt = np.arange(1200.0)
    window = (tt >= 400) & (tt < 800)
    fast = np.where(window, np.cos(2 * np.pi * 0.1 * tt), 0.0)
    x = fast + np.cos(2 * np.pi * 0.01 * tt)

    def leak(c):
        return np.sum(c[~window] ** 2) / np.sum(c[window] ** 2)

    masked = masking_emd(x).imfs[0]
    plain = emd_decompose(x).imfs[0]
    assert leak(masked) < 0.10
    assert leak(plain) > leak(masked)


def test_masking_clean_tone_is_no_op():
    x = np.cos(2 * np.pi * 0.05 * t)
    assert corr(masking_emd(x).imfs[0], emd_decompose(x).imfs[0]) > 0.99


def test_masking_completeness_and_imf_rule():
    x = np.random.default_rng(12).normal(size=800).cumsum()
    d = masking_emd(x)
    np.testing.assert_allclose(d.reconstruct(), x, atol=1e-8 * np.abs(x).max())
    assert d.options["method"] == "masking_emd"


def test_sift_options_serialise():
    o = SiftOptions(max_imfs=3)
    assert o.to_dict()["max_imfs"] == 3
    assert emd_decompose(np.random.default_rng(1).normal(size=400), o).n_imfs <= 3


def test_no_warnings_on_regular_input():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        direct_quadrature(np.sin(2 * np.pi * 0.03 * t))
