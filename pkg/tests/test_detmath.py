"""Deterministic math kernels vs libm/scipy oracles."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from clipcodec import detmath


def test_exp_matches_libm():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.uniform(-700, 700, 3000),
                        rng.uniform(-2, 2, 3000),
                        [0.0, 1.0, -1.0, 709.0, -745.0]])
    ref = np.exp(x)
    rel = np.abs(detmath.exp(x) - ref) / np.maximum(ref, 1e-300)
    assert rel.max() < 1e-14


def test_exp_edges():
    assert detmath.exp(800.0) == np.inf
    assert detmath.exp(-800.0) == 0.0
    assert np.isnan(detmath.exp(np.nan))


def test_log_matches_libm():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.uniform(1e-12, 1e12, 3000),
                        rng.uniform(0.5, 2.0, 3000), [1.0]])
    ref = np.log(x)
    err = np.abs(detmath.log(x) - ref) / np.maximum(np.abs(ref), 1.0)
    assert err.max() < 1e-14
    assert detmath.log(0.0) == -np.inf
    assert np.isnan(detmath.log(-1.0))


def test_trig_matches_libm():
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.uniform(-1e4, 1e4, 4000),
                        rng.uniform(-np.pi, np.pi, 2000),
                        [0.0, np.pi / 2, np.pi, 2 ** 8 * np.pi]])
    assert np.abs(detmath.sin(x) - np.sin(x)).max() < 1e-12
    assert np.abs(detmath.cos(x) - np.cos(x)).max() < 1e-12


def test_erf_matches_libm():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.uniform(-6, 6, 4000),
                        [0.0, 0.46875, -0.46875, 4.0, -4.0, 10.0, 27.0]])
    ref = np.array([math.erf(v) for v in x])
    assert np.abs(detmath.erf(x) - ref).max() < 5e-15


def test_erfc_relative_accuracy_in_tail():
    x = np.linspace(0.5, 25.0, 500)
    ref = np.array([math.erfc(v) for v in x])
    rel = np.abs(detmath.erfc(x) - ref) / ref
    assert rel.max() < 1e-12


def test_norm_cdf_vs_scipy():
    rng = np.random.default_rng(4)
    z = rng.uniform(-8, 8, 3000)
    rel = np.abs(detmath.norm_cdf(z) - norm.cdf(z)) \
        / np.maximum(norm.cdf(z), 1e-300)
    assert rel.max() < 1e-12


def test_norm_cdf_diff_reflection():
    # mass must be identical for mirrored intervals and never negative
    lo, hi = 3.0, 4.5
    a = detmath.norm_cdf_diff(lo, hi)
    b = detmath.norm_cdf_diff(-hi, -lo)
    assert a == b
    assert detmath.norm_cdf_diff(5.0, 5.0) == 0.0


def test_symbol_zero_mass_bits():
    # frozen oracle: -log2(Phi(0.5) - Phi(-0.5)) computed with scipy
    oracle = -math.log2(norm.cdf(0.5) - norm.cdf(-0.5))
    ours = float(-detmath.log2(detmath.norm_cdf_diff(-0.5, 0.5)))
    assert oracle == pytest.approx(1.3848665342909896, abs=1e-12)
    assert ours == pytest.approx(oracle, abs=1e-12)


def test_sigmoid_stable_both_tails():
    assert detmath.sigmoid(0.0) == 0.5
    assert detmath.sigmoid(50.0) == pytest.approx(1.0)
    assert detmath.sigmoid(-50.0) == pytest.approx(1.928749847963918e-22,
                                                   rel=1e-12)


def test_round_half_away():
    x = np.array([0.5, -0.5, 1.5, -1.5, 0.49999, -0.49999, 2.5, 0.6, -1.3])
    expect = np.array([1.0, -1.0, 2.0, -2.0, 0.0, -0.0, 3.0, 1.0, -1.0])
    assert np.array_equal(detmath.round_half_away(x), expect)


def test_kernels_are_reproducible():
    # identical inputs -> identical bits, twice in one process
    rng = np.random.default_rng(5)
    x = rng.uniform(-30, 30, 1000)
    for fn in (detmath.exp, detmath.sin, detmath.cos, detmath.erf,
               detmath.erfc, detmath.sigmoid):
        a, b = fn(x), fn(x)
        assert np.array_equal(a, b)
    y = rng.uniform(1e-6, 1e6, 1000)
    assert np.array_equal(detmath.log(y), detmath.log(y))
