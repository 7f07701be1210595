import math

import numpy as np
import pytest
from scipy.linalg import toeplitz

from predinfo.core import SequenceDataset, make_rng_stream
from predinfo.errors import InvalidParameterError, NotPositiveDefiniteError, SequenceTooShortError
from predinfo.generators import KERNEL_KINDS, KernelSpec, gram_matrix, sample_ar_process
from predinfo.oracles import (LOG_2PIE, ar1_ipred_exact, ar_autocovariance, ar_entropy_rate_limit,
                              ar_process_conditional_entropy, ar_process_ipred, gaussian_evorate_closed_form,
                              gaussian_ipred_closed_form, ipred_from_gram, markov_ipred_flatness_check,
                              ridge_entropy_rate, theoretical_learning_curve)

AR = KernelSpec("AR", rho=0.8, sigma=0.5)


def test_closed_form_table_values():
    assert gaussian_ipred_closed_form(AR, 30, 40, 1) == pytest.approx(0.51, abs=0.005)
    assert gaussian_ipred_closed_form(AR, 30, 40, 5) == pytest.approx(2.55, abs=0.03)
    assert gaussian_ipred_closed_form(KernelSpec("AR", rho=0.9), 30, 40, 1) == pytest.approx(0.83, abs=0.01)


def test_white_noise_kernel_has_no_predictive_information():
    assert abs(gaussian_ipred_closed_form(KernelSpec("AR", rho=1e-12), 10, 10)) < 1e-6


def test_ar1_exact_values():
    assert ar1_ipred_exact(0.0) == 0.0
    assert ar1_ipred_exact(0.8) == pytest.approx(0.5108, abs=1e-4)
    assert ar1_ipred_exact(0.5) == pytest.approx(0.1438, abs=1e-4)
    assert ar1_ipred_exact(0.8, 3) == pytest.approx(3 * ar1_ipred_exact(0.8))
    with pytest.raises(InvalidParameterError):
        ar1_ipred_exact(1.0)


def test_markov_flatness():
    assert markov_ipred_flatness_check(AR, 1, range(1, 11), 10) < 1e-8
    assert markov_ipred_flatness_check(KernelSpec("AR", rho=1e-12), 1, range(1, 11), 10) < 1e-8
    assert markov_ipred_flatness_check(KernelSpec("SquaredExp"), 1, range(1, 11), 10) > 0.01
    with pytest.raises(InvalidParameterError):
        markov_ipred_flatness_check(AR, 2, [1, 2], 5)


@pytest.mark.parametrize("kind", ["AR", "Matern32", "Matern52", "RationalQuadratic", "LocallyPeriodic"])
def test_closed_form_invariants(kind):
    spec = KernelSpec(kind)
    vals = {(k, kp): gaussian_ipred_closed_form(spec, k, kp) for k in range(1, 7) for kp in range(1, 7)}
    assert min(vals.values()) >= -1e-9
    for (k, kp), v in vals.items():
        if k < 6:
            assert vals[(k + 1, kp)] >= v - 1e-9
        if kp < 6:
            assert vals[(k, kp + 1)] >= v - 1e-9
    assert gaussian_ipred_closed_form(spec.scaled(3.7), 4, 5) == pytest.approx(
        gaussian_ipred_closed_form(spec, 4, 5), abs=1e-8)


def test_dropping_a_past_coordinate_cannot_add_information():
    spec = KernelSpec("Matern32")
    g = gram_matrix(spec, 12)
    full = ipred_from_gram(g, 6, 6)
    shrunk = ipred_from_gram(g[1:, 1:], 5, 6)  # oldest past value removed
    assert shrunk <= full + 1e-9


def test_evorate_identity(rng):
    for _ in range(10):
        kind = KERNEL_KINDS[rng.integers(0, 3)] if rng.random() < 0.5 else "RationalQuadratic"
        k = int(rng.integers(1, 12))
        spec = KernelSpec(kind)
        assert gaussian_evorate_closed_form(spec, k) == pytest.approx(
            gaussian_ipred_closed_form(spec, k, 1), abs=1e-9)


def test_singular_gram_names_block():
    # a periodic kernel with period 1 makes every time index identical
    spec = KernelSpec("Periodic", period=1.0)
    with pytest.raises(NotPositiveDefiniteError) as info:
        gaussian_ipred_closed_form(spec, 3, 3, jitter_ladder=())
    assert info.value.block == "past"


def test_ar_autocovariance_against_brute_force():
    p, rho = 3, 0.7
    gamma = ar_autocovariance(p, rho, 12)
    phi = np.full(p, rho / p)
    # gamma must satisfy the Yule-Walker equations at every lag >= 1 and the variance equation at 0
    for h in range(1, 13):
        assert gamma[h] == pytest.approx(sum(phi[j] * gamma[abs(h - j - 1)] for j in range(p)), abs=1e-12)
    assert gamma[0] == pytest.approx(sum(phi[j] * gamma[j + 1] for j in range(p)) + 1 - rho**2, abs=1e-12)
    sim = sample_ar_process(p, rho, 400_000, 1, make_rng_stream(0, "yw")).values[1000:, 0]
    emp = [np.mean(sim[: len(sim) - h] * sim[h:]) for h in range(4)]
    np.testing.assert_allclose(emp, gamma[:4], atol=0.02)


def test_ar_process_oracles_are_consistent():
    # for k' >= p the finite-window difference equals the conditional-entropy gap
    p, rho, d = 4, 0.8, 2
    for k in range(1, 7):
        lam = ar_process_ipred(p, rho, k + 1, 10, d) - ar_process_ipred(p, rho, k, 10, d)
        gap = ar_process_conditional_entropy(p, rho, k, d) - ar_entropy_rate_limit(rho, d)
        assert lam == pytest.approx(gap, abs=1e-9)
    assert ar_process_conditional_entropy(p, rho, p, d) == pytest.approx(ar_entropy_rate_limit(rho, d), abs=1e-12)
    assert ar_process_ipred(1, rho, 3, 5) == pytest.approx(ar1_ipred_exact(rho), abs=1e-10)


def test_ridge_entropy_rate_iid():
    x = make_rng_stream(0, "iid3").standard_normal((100_000, 3))
    assert ridge_entropy_rate(SequenceDataset(x), 1) == pytest.approx(1.5 * LOG_2PIE, abs=0.02)


def test_ridge_entropy_rate_ar5():
    ds = sample_ar_process(5, 0.8, 100_000, 3, make_rng_stream(0, "ridge-ar5"))
    target = 1.5 * math.log(2 * math.pi * math.e * 0.36)
    assert target == pytest.approx(2.7244, abs=1e-4)
    assert ridge_entropy_rate(ds, 5) == pytest.approx(target, abs=0.05)


def test_ridge_entropy_rate_errors():
    with pytest.raises(NotPositiveDefiniteError):
        ridge_entropy_rate(SequenceDataset(np.ones((500, 2))), 2)
    with pytest.raises(SequenceTooShortError):
        ridge_entropy_rate(SequenceDataset(np.zeros((12, 3))), 2)


def test_theoretical_learning_curve():
    ds = sample_ar_process(5, 0.8, 100_000, 3, make_rng_stream(1, "tlc"))
    curve = theoretical_learning_curve(ds, 5, 0.8, range(1, 9))
    assert curve[0].lambda_tilde > 0.02
    assert all(abs(e.lambda_tilde) <= 0.02 for e in curve if e.k >= 5)
    assert curve[0].l0 == pytest.approx(ar_entropy_rate_limit(0.8, 3))
    iid = SequenceDataset(make_rng_stream(0, "tlc-iid").standard_normal((50_000, 2)))
    assert all(abs(e.lambda_tilde) < 0.02 for e in theoretical_learning_curve(iid, 0, 0.0, range(1, 5)))


def test_gram_oracle_matches_toeplitz_construction():
    acov = AR.sigma**2 * AR.rho ** np.arange(8)
    assert ipred_from_gram(toeplitz(acov), 3, 5) == pytest.approx(gaussian_ipred_closed_form(AR, 3, 5), abs=1e-12)
