import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionphoton.model import IonCavityParams, expected_phase_shift
from ionphoton.ramsey import (
    CoherenceModel,
    FitError,
    Fringe,
    PulseSpec,
    default_phases,
    fit_fringe,
    fit_phases_batch,
    fit_sinusoid,
    point_rng,
    read_fringe_csv,
    recalculated_offset,
    sample_projection_noise,
    simulate_fringe,
    simulate_ion_drive_fringe,
    simulate_point,
    write_fringe_csv,
)


def test_pulse_is_unitary_and_leaves_spectators():
    u = PulseSpec(phase=0.7).unitary("D")
    assert np.allclose(u @ u.conj().T, np.eye(4))
    assert u[2, 2] == 1 and u[3, 3] == 1


def test_default_phase_grid():
    ph = default_phases()
    assert ph.size == 51 and ph[0] == 0 and ph[-1] < 2


def test_fringe_validation():
    with pytest.raises(ValueError):
        Fringe(np.arange(3.0), np.full(3, 0.5))
    with pytest.raises(ValueError):
        Fringe(np.arange(5.0), np.full(5, 1.5))
    with pytest.raises(ValueError):
        Fringe(np.arange(5.0), np.full(5, 0.5), trials=0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(-0.99, 0.99), st.floats(0.3, 0.6))
def test_sinusoid_fit_recovers_parameters(amp, phi0, off):
    ph = default_phases()
    data = off + amp * np.cos(np.pi * (ph - phi0))
    params, _, _ = fit_sinusoid(ph, data)
    fitted = off + params[0] * np.cos(np.pi * (ph - params[1]))
    assert np.allclose(fitted, data, atol=1e-10)
    assert params[2] == pytest.approx(off, abs=1e-10)


def test_fit_reports_branch_nearest_hint():
    ph = default_phases()
    fr = Fringe(ph, 0.5 + 0.4 * np.cos(np.pi * (ph - 1.1)))
    assert fit_fringe(fr, phase_hint=1.0).phase_shift == pytest.approx(1.1)
    assert fit_fringe(fr, phase_hint=-1.0).phase_shift == pytest.approx(-0.9)


def test_fit_rejects_constant_fringe():
    with pytest.raises(FitError):
        fit_fringe(Fringe(default_phases(), np.full(51, 0.4)))


def test_batch_fit_matches_single_fits():
    ph = default_phases()
    rng = np.random.default_rng(1)
    data = np.clip(0.45 + 0.4 * np.cos(np.pi * (ph - 0.6)) + 0.02 * rng.normal(size=(5, 51)), 0, 1)
    batch = fit_phases_batch(ph, data, phase_hint=0.6)
    single = [fit_fringe(Fringe(ph, d), phase_hint=0.6).phase_shift for d in data]
    assert np.allclose(batch, single, atol=1e-10)


def test_vacuum_fringe_contrast_and_offset():
    fit = fit_fringe(simulate_fringe(IonCavityParams()))
    assert fit.contrast == pytest.approx(0.99, abs=1e-6)
    assert fit.offset == pytest.approx(0.4915, abs=1e-6)
    assert abs(fit.phase_shift) < 1e-6


def test_phase_shift_grows_with_photon_number():
    p = IonCavityParams()
    shifts = [
        fit_fringe(simulate_fringe(p.with_drive(n)), phase_hint=expected_phase_shift(n, p) / math.pi).phase_shift
        for n in (0.0, 0.5, 1.0)
    ]
    assert shifts[0] < shifts[1] < shifts[2]


def test_fast_and_checked_paths_agree():
    p = IonCavityParams().with_drive(0.6, 0.3)
    a = simulate_fringe(p, check=True).p_D
    b = simulate_fringe(p, check=False).p_D
    assert np.max(np.abs(a - b)) < 1e-10
    assert simulate_point(p, 0.0) == pytest.approx(a[0], abs=1e-12)


def test_dephasing_coherence_mode_sets_vacuum_contrast():
    coh = CoherenceModel(mode="dephasing")
    fit = fit_fringe(simulate_fringe(IonCavityParams(), coh=coh))
    assert fit.contrast == pytest.approx(0.99, abs=1e-3)


def test_ion_drive_keeps_contrast_above_cavity_drive():
    p = IonCavityParams()
    per_photon = expected_phase_shift(1.0, p) / math.pi
    n = 0.6 / per_photon
    cav = fit_fringe(simulate_fringe(p.with_drive(n)), phase_hint=0.6)
    rabi = p.g * math.sqrt(n)
    ion = fit_fringe(simulate_ion_drive_fringe(p, rabi), phase_hint=0.6)
    assert ion.contrast > cav.contrast


def test_recalculated_offset_decreases_with_n():
    p = IonCavityParams()
    assert recalculated_offset(0.0, p) == pytest.approx(0.4915)
    assert recalculated_offset(1.6, p) < recalculated_offset(0.8, p) < 0.4915


def test_projection_noise_is_reproducible_and_index_separated():
    fr = simulate_fringe(IonCavityParams().with_drive(0.8))
    a = sample_projection_noise(fr, seed=5, index=0)
    b = sample_projection_noise(fr, seed=5, index=0)
    c = sample_projection_noise(fr, seed=5, index=1)
    assert np.array_equal(a.p_D, b.p_D)
    assert not np.array_equal(a.p_D, c.p_D)
    assert np.allclose(a.p_D * 250, np.round(a.p_D * 250))


def test_point_rng_independent_of_call_order():
    x = point_rng(3, 7).random()
    point_rng(3, 1).random()
    assert point_rng(3, 7).random() == x


def test_projection_noise_statistics():
    fr = Fringe(default_phases(), np.full(51, 0.3), trials=100)
    samples = np.array([sample_projection_noise(fr, seed=0, index=i).p_D for i in range(400)])
    assert samples.mean() == pytest.approx(0.3, abs=0.005)
    assert samples.var() == pytest.approx(0.3 * 0.7 / 100, rel=0.05)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=30), st.integers(1, 10_000))
def test_csv_round_trip_is_lossless(values, trials):
    path = Path(tempfile.mkdtemp()) / "f.csv"
    fr = Fringe(np.linspace(0, 2, len(values), endpoint=False), np.array(values), trials)
    write_fringe_csv(path, fr, exact=np.array(values), comments=["seed=1"])
    back = read_fringe_csv(path)
    assert np.array_equal(back.phases, fr.phases)
    assert np.array_equal(back.p_D, fr.p_D)
    assert back.trials == trials


def test_malformed_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("phase_pi,p_D,trials\n0,abc,250\n")
    with pytest.raises(ValueError, match="malformed"):
        read_fringe_csv(path)
    path.write_text("x,y\n")
    with pytest.raises(ValueError, match="header"):
        read_fringe_csv(path)
