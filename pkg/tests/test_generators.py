import math

import numpy as np
import pytest
from scipy.special import expit

from predinfo.core import make_rng_stream
from predinfo.errors import InvalidParameterError, NotPositiveDefiniteError
from predinfo.generators import (KERNEL_KINDS, IsingConfig, KernelSpec, gram_matrix, kernel_value, sample_ar1_vector,
                                 sample_ar_process, sample_gp, sample_ising_chain)


def lag1_corr(x):
    x = np.asarray(x).ravel()
    return float(np.corrcoef(x[:-1], x[1:])[0, 1])


def test_kernel_examples():
    ar = KernelSpec("AR")
    assert kernel_value(ar, 3, 3) == pytest.approx(0.25)
    assert kernel_value(ar, 4, 5) == pytest.approx(0.20)
    assert kernel_value(KernelSpec("SquaredExp"), 0, 2) == pytest.approx(math.exp(-0.5))


@pytest.mark.parametrize("kind", KERNEL_KINDS)
def test_kernel_symmetry_and_diagonal(kind, rng):
    spec = KernelSpec(kind)
    a, b = rng.integers(0, 200, size=(2, 1000))
    np.testing.assert_array_equal(kernel_value(spec, a, b), kernel_value(spec, b, a))
    np.testing.assert_allclose(kernel_value(spec, a, a), spec.sigma**2)
    g = gram_matrix(spec, 30)
    np.testing.assert_array_equal(g, g.T)


def test_kernel_spec_defaults_and_validation():
    assert KernelSpec("Periodic").period == 2.0
    assert KernelSpec("LocallyPeriodic").decay == 10.0
    assert KernelSpec("AR", rho=0.9).sigma == 0.5
    for bad in (dict(kind="ARR"), dict(kind="AR", rho=1.0), dict(kind="AR", sigma=0.0),
                dict(kind="Matern32", lengthscale=-1.0), dict(kind="Periodic", period=0.0)):
        with pytest.raises(InvalidParameterError):
            KernelSpec(**bad)
    assert KernelSpec("AR").scaled(2.0).sigma == 1.0


def test_gp_single_point_variance():
    spec = KernelSpec("Matern52", sigma=1.5)
    ds = sample_gp(spec, 1, 100_000, 1, make_rng_stream(0, "gp1"))[0]
    np.testing.assert_allclose(ds.values.var(), 2.25, rtol=0.05)


def test_gp_degenerate_sigma():
    ds = sample_gp(KernelSpec("SquaredExp", sigma=1e-8), 20, 2, 3, make_rng_stream(0, "tiny"))
    assert len(ds) == 3
    assert all(np.abs(d.values).max() < 1e-6 for d in ds)


def test_gp_ar_kernel_lag1_correlation():
    seqs = sample_gp(KernelSpec("AR", rho=0.8), 50, 1, 10_000, make_rng_stream(0, "ar-gp"))
    x = np.stack([s.values[:, 0] for s in seqs])
    corr = np.corrcoef(x[:, 10], x[:, 11])[0, 1]
    assert abs(corr - 0.8) < 0.05


def test_gp_squared_exponential_needs_jitter_or_fails():
    # long SE Gram matrices are numerically singular; the ladder either rescues or raises clearly
    spec = KernelSpec("SquaredExp", lengthscale=20.0)
    try:
        ds = sample_gp(spec, 200, 1, 1, make_rng_stream(0, "se"))[0]
        assert ds.params["jitter"] > 0
    except NotPositiveDefiniteError as exc:
        assert exc.block == "gram"


def test_ar_process_near_zero_rho_is_white():
    ds = sample_ar_process(3, 1e-9, 100_000, 1, make_rng_stream(0, "white"))
    assert abs(lag1_corr(ds.values)) < 0.02


def test_ar1_process_conditional_variance():
    rho = 0.8
    ds = sample_ar_process(1, rho, 1_000_000, 1, make_rng_stream(0, "ar1p"))
    x = ds.values[:, 0]
    resid = x[1:] - rho * x[:-1]
    np.testing.assert_allclose(resid.var(), 1 - rho**2, rtol=0.02)


def test_ar_process_shape_and_initial_rows():
    ds = sample_ar_process(5, 0.8, 2000, 3, make_rng_stream(0, "ar5"))
    assert ds.values.shape == (2000, 3)
    many = np.stack([sample_ar_process(5, 0.8, 6, 3, make_rng_stream(s, "init")).values[:5] for s in range(2000)])
    np.testing.assert_allclose(many.var(), 1.0, rtol=0.05)
    with pytest.raises(InvalidParameterError):
        sample_ar_process(5, 1.0, 100, 1, make_rng_stream(0, "x"))
    with pytest.raises(InvalidParameterError):
        sample_ar_process(5, 0.5, 5, 1, make_rng_stream(0, "x"))


def test_ar_process_stationarity_proxy():
    ds = sample_ar_process(5, 0.8, 1_000_000, 1, make_rng_stream(0, "halves"))
    a, b = ds.values[:500_000, 0], ds.values[500_000:, 0]
    np.testing.assert_allclose(a.var(), b.var(), rtol=0.05)
    assert abs(a.mean() - b.mean()) < 0.05


def test_ar1_vector_properties():
    white = sample_ar1_vector(0.0, 100_000, 2, make_rng_stream(0, "w"))
    assert abs(lag1_corr(white.values[:, 0])) < 0.02
    ds = sample_ar1_vector(0.8, 1_000_000, 1, make_rng_stream(0, "c"))
    assert abs(lag1_corr(ds.values) - 0.8) < 0.02
    wide = sample_ar1_vector(0.9, 200_000, 5, make_rng_stream(0, "v"))
    np.testing.assert_allclose(wide.values.var(axis=0), 1.0, rtol=0.05)
    with pytest.raises(InvalidParameterError):
        sample_ar1_vector(1.0, 10, 1, make_rng_stream(0, "x"))


def test_ising_zero_coupling_is_uniform():
    ds, _ = sample_ising_chain(IsingConfig(100_000, 100_000, coupling_override=0.0), make_rng_stream(0, "j0"))
    x = ds.values[:, 0]
    assert abs(np.mean(x[1:] > 0) - 0.5) < 0.01


def test_ising_large_coupling_persists():
    ds, _ = sample_ising_chain(IsingConfig(100_000, 100_000, coupling_override=10.0), make_rng_stream(0, "j10"))
    x = ds.values[:, 0]
    assert np.mean(x[1:] == x[:-1]) > 0.999


def test_ising_transition_frequency_matches_coupling():
    ds, j = sample_ising_chain(IsingConfig(1_000_000, 1_000_000, seed=3), make_rng_stream(3, "fixed"))
    assert j.shape == (1,)
    x = ds.values[:, 0]
    np.testing.assert_allclose(np.mean(x[1:] == x[:-1]), expit(2 * j[0]), atol=0.005)


@pytest.mark.parametrize("coupling", [-0.8, 0.3, 1.0])
def test_ising_long_run_marginal_is_balanced(coupling):
    cfg = IsingConfig(1_000_000, 1_000_000, coupling_override=coupling)
    ds, _ = sample_ising_chain(cfg, make_rng_stream(0, f"marginal/{coupling}"))
    assert abs(np.mean(ds.values > 0) - 0.5) < 0.01


def test_ising_blocks_and_remainder():
    cfg = IsingConfig(25, 10)
    ds, j = sample_ising_chain(cfg, make_rng_stream(0, "blocks"))
    assert cfg.n_blocks == 3 and j.shape == (3,)
    assert ds.n == 25 and set(np.unique(ds.values)) <= {-1.0, 1.0}
    with pytest.raises(InvalidParameterError):
        IsingConfig(10, 11)
    with pytest.raises(InvalidParameterError):
        IsingConfig(1, 1)
