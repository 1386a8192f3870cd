import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionphoton.model import IonCavityParams
from ionphoton.quantum import thermal_populations
from ionphoton.ramsey import Fringe, default_phases, sample_projection_noise, simulate_fringe
from ionphoton.reconstruction import (
    DriveParams,
    PhotonDistribution,
    ReconstructionError,
    binomial_log_likelihood,
    displaced_thermal,
    log_likelihood,
    mandel_q,
    monte_carlo_uncertainty,
    nelder_mead,
    phase_resolution,
    reconstruct,
    sso,
)

P = IonCavityParams()


def distributions(n_max=9):
    return st.lists(st.floats(0, 1), min_size=n_max + 1, max_size=n_max + 1).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: PhotonDistribution(np.array(v) / sum(v))
    )


# ---------------------------------------------------------------- Nelder-Mead


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_nelder_mead_convex_quadratic(x0, y0):
    res = nelder_mead(
        lambda x: (x[0] - 1) ** 2 + 10 * (x[1] - 2) ** 2, [x0, y0], [1.0, 1.0], f_tol=1e-16, x_tol=1e-9, max_iter=2000
    )
    assert res.converged
    assert res.x == pytest.approx([1.0, 2.0], abs=1e-6)


def test_nelder_mead_flags_iteration_limit():
    res = nelder_mead(lambda x: (x[0] - 1) ** 2 + 10 * (x[1] - 2) ** 2, [-10, 10], [1, 1], max_iter=5)
    assert not res.converged
    assert res.iterations == 5


def test_nelder_mead_respects_lower_bound():
    res = nelder_mead(lambda x: (x[0] + 3) ** 2, [2.0], [1.0], lower=[0.0], f_tol=1e-14, x_tol=1e-10, max_iter=500)
    assert res.x[0] == pytest.approx(0.0, abs=1e-8)


# ---------------------------------------------------------------- likelihood


def test_log_likelihood_saturated_match_is_zero():
    f = np.array([0.0, 1.0, 1.0, 0.0])
    assert binomial_log_likelihood(f, f) == pytest.approx(0.0, abs=1e-10)


def test_log_likelihood_half_fringe():
    # the formula sum f log P + (1 - f) log(1 - P) at f = P = 1/2 over 51 points
    value = binomial_log_likelihood(np.full(51, 0.5), np.full(51, 0.5))
    assert value == pytest.approx(51 * math.log(0.5))


def test_log_likelihood_clamps_impossible_points():
    value = binomial_log_likelihood([1.0], [0.0])
    assert value == pytest.approx(math.log(1e-12))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.001, 0.999)), min_size=4, max_size=40), st.randoms())
def test_log_likelihood_permutation_invariant(pairs, rnd):
    f, p = map(np.array, zip(*pairs))
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    assert binomial_log_likelihood(f[perm], p[perm]) == pytest.approx(binomial_log_likelihood(f, p), rel=1e-12)


def test_true_drive_maximises_noiseless_likelihood_on_grid():
    truth = DriveParams.from_photon_numbers(0.5, 0.3, P)
    fr = simulate_fringe(truth.apply(P), backend="eliminated")
    best = log_likelihood(fr, truth, P)
    for a in np.linspace(0.8, 1.2, 21):
        for b in np.linspace(0.8, 1.2, 21):
            other = DriveParams(truth.eta * a, truth.delta_n * b)
            assert log_likelihood(fr, other, P) <= best + 1e-9


# ---------------------------------------------------------------- distributions


def test_mandel_q_oracles():
    poisson = displaced_thermal(1.0, 0.0, 9)
    assert mandel_q(poisson) == pytest.approx(0.0, abs=1e-4)
    thermal = PhotonDistribution(thermal_populations(60, 0.5) / thermal_populations(60, 0.5).sum())
    assert mandel_q(thermal) == pytest.approx(0.5, abs=1e-4)
    assert mandel_q(displaced_thermal(0.0, 0.0, 9)) is None


@pytest.mark.parametrize("n_coh,n_th", [(0.64, 0.44), (0.3, 0.2), (1.0, 0.1)])
def test_displaced_thermal_moments(n_coh, n_th):
    d = displaced_thermal(n_coh, n_th, 60)
    assert d.mean == pytest.approx(n_coh + n_th, rel=1e-9)
    assert mandel_q(d) == pytest.approx((2 * n_coh * n_th + n_th**2) / (n_coh + n_th), rel=1e-8)


def test_displaced_thermal_limits():
    assert np.allclose(displaced_thermal(0.0, 0.7, 80).p[:10], thermal_populations(80, 0.7)[:10])
    lam = 1.3
    pois = [math.exp(-lam) * lam**k / math.factorial(k) for k in range(10)]
    assert np.allclose(displaced_thermal(lam, 0.0, 40).p[:10], pois)


def test_distribution_validation():
    with pytest.raises(ValueError):
        PhotonDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        PhotonDistribution(np.array([1.2, -0.2]))
    assert not PhotonDistribution(np.array([0.5, 0.49, 0.01])).accepted


@settings(max_examples=50, deadline=None)
@given(distributions(), distributions())
def test_sso_symmetric_and_bounded(a, b):
    assert sso(a, b) == sso(b, a)
    assert 0.0 <= sso(a, b) <= 1.0
    assert sso(a, a) == pytest.approx(1.0, abs=1e-12)


def test_sso_disjoint_supports():
    a = PhotonDistribution(np.array([1.0, 0.0, 0.0]))
    b = PhotonDistribution(np.array([0.0, 0.5, 0.5]))
    assert sso(a, b) == 0.0
    with pytest.raises(ValueError):
        sso(a, PhotonDistribution(np.array([0.5, 0.5])))


# ---------------------------------------------------------------- reconstruction


def test_noiseless_round_trip():
    truth = DriveParams.from_photon_numbers(0.5, 0.3, P)
    fr = simulate_fringe(truth.apply(P), backend="eliminated")
    res = reconstruct(fr, P)
    assert res.converged
    assert res.drive.eta == pytest.approx(truth.eta, rel=5e-3)
    assert res.drive.delta_n == pytest.approx(truth.delta_n, rel=5e-3)
    assert abs(res.distribution.p.sum() - 1) < 1e-6
    assert res.n_coh == pytest.approx(0.5, rel=1e-2)
    d = res.to_dict()
    assert set(d) >= {"eta_rad_s", "delta_n_rad_s", "n_coh", "n_th", "p_n", "mean_n", "mandel_q", "log_likelihood",
                      "seed", "iterations", "converged"}


def test_reconstruct_rejects_flat_fringe():
    with pytest.raises(ReconstructionError):
        reconstruct(Fringe(default_phases(), np.full(51, 0.4)), P)


def test_monte_carlo_vanishes_for_huge_trials():
    truth = DriveParams.from_photon_numbers(0.8, 0.0, P)
    fr = simulate_fringe(truth.apply(P), backend="eliminated", trials=10**6)
    res = reconstruct(fr, P, init=truth)
    unc = monte_carlo_uncertainty(fr, res, P, seed=1, min_samples=4, batch=2, max_samples=6)
    assert unc.delta_eta < 0.01 * res.drive.eta
    assert unc.samples >= 4 and unc.failures == 0


def test_monte_carlo_independent_of_worker_count():
    truth = DriveParams.from_photon_numbers(0.6, 0.3, P)
    fr = sample_projection_noise(simulate_fringe(truth.apply(P), backend="eliminated"), seed=2)
    res = reconstruct(fr, P, init=truth)
    kw = dict(seed=4, min_samples=4, batch=2, max_samples=4, spot_every=2)
    one = monte_carlo_uncertainty(fr, res, P, workers=1, **kw).to_dict()
    two = monte_carlo_uncertainty(fr, res, P, workers=2, **kw).to_dict()
    assert one == two
    assert one["spot_checks"] == 2
    assert one["spot_check_max_deviation"] < 1e-3


@pytest.fixture(scope="module")
def mixed_bootstrap():
    truth = DriveParams.from_photon_numbers(0.6, 0.4, P)
    fr = simulate_fringe(truth.apply(P), backend="eliminated")
    res = reconstruct(fr, P, init=truth)
    unc = monte_carlo_uncertainty(fr, res, P, seed=11, min_samples=40, batch=20, max_samples=40)
    return res, unc


def test_bootstrap_mean_photon_number_consistent_with_optimum(mixed_bootstrap):
    res, unc = mixed_bootstrap
    se = unc.mean_n_std / math.sqrt(unc.samples)
    # bootstrap statistics are in bare-cavity photon numbers n_coh + n_th
    assert abs(unc.mean_n_mean - (res.n_coh + res.n_th)) <= 3 * se
    lo, hi = unc.mean_n_bounds
    assert lo < res.mean_n < hi


@pytest.mark.xfail(
    reason="the (eta, delta_n) bootstrap is skewed along the nearly flat coherent/thermal valley; "
    "its mean sits several standard errors above eta_opt",
    strict=False,
)
def test_bootstrap_mean_eta_within_one_standard_error(mixed_bootstrap):
    res, unc = mixed_bootstrap
    assert abs(unc.eta_mean - res.drive.eta) <= unc.delta_eta / math.sqrt(unc.samples)


def test_phase_resolution_small_run():
    res = phase_resolution(P, repetitions=2000, seed=3, backend="eliminated")
    assert res.repetitions + res.failures == 2000
    assert res.delta_phi == pytest.approx(0.011, rel=0.15)
    with pytest.raises(ValueError):
        phase_resolution(P, repetitions=10)
