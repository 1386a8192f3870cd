import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionphoton.lindblad import (
    CollapseChannel,
    LindbladGenerator,
    StepTooLargeError,
    evolve,
    evolve_elements,
    lindblad_rhs,
    liouvillian,
    steady_state,
    step_count,
)
from ionphoton.quantum import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    check_density_matrix,
    fock_annihilation,
    hermiticity_error,
    jacobi_eigvalsh,
    thermal_populations,
)

QUBIT = HilbertSpace((2,))
LOWER = Operator(QUBIT, np.array([[0, 1], [0, 0]]))  # |0><1|


def excited():
    return DensityMatrix(QUBIT, np.diag([0.0, 1.0]))


def cavity(n_max=12):
    space = HilbertSpace((n_max + 1,))
    return space, Operator(space, fock_annihilation(n_max))


def vacuum(space):
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[0, 0] = 1
    return DensityMatrix(space, m)


def test_spontaneous_decay_is_exponential():
    gamma = 1e6
    gen = LindbladGenerator(Operator(QUBIT, np.zeros((2, 2))), (CollapseChannel(LOWER, gamma),))
    for t in (0.2e-6, 1e-6, 3e-6):
        rho = evolve(gen, excited(), t)
        assert rho.matrix[1, 1].real == pytest.approx(math.exp(-gamma * t), rel=1e-9)


def test_driven_damped_cavity_reaches_coherent_amplitude():
    space, a = cavity()
    kappa, eta, delta = 1.0e5, 0.7e5, 0.5e5
    h = delta * (a.dag() @ a) + eta * (a + a.dag())
    gen = LindbladGenerator(h, (CollapseChannel(a, 2 * kappa),))
    ss = steady_state(gen, horizon=400 / kappa, settle_tol=1e-11)
    assert ss.converged
    alpha = -1j * eta / (kappa + 1j * delta)
    assert np.trace(ss.rho.matrix @ a.matrix) == pytest.approx(alpha, abs=1e-8)
    n = np.real(np.trace(ss.rho.matrix @ (a.dag() @ a).matrix))
    assert n == pytest.approx(eta**2 / (kappa**2 + delta**2), rel=1e-6)


def test_incoherent_drive_gives_bose_einstein_distribution():
    space, a = cavity(20)
    kappa = 1e5
    gen = LindbladGenerator(
        Operator(space, np.zeros((space.dim, space.dim))),
        (CollapseChannel(a, 2 * kappa),),
        incoherent_rate=0.5 * kappa,
        incoherent_mode=a,
    )
    ss = steady_state(gen, horizon=400 / kappa, settle_tol=1e-12)
    p = np.real(np.diag(ss.rho.matrix))
    ref = thermal_populations(20, 0.5)
    assert np.allclose(p[:8], ref[:8], rtol=1e-6)


def test_steady_state_reports_non_convergence():
    space, a = cavity(6)
    gen = LindbladGenerator(0 * (a.dag() @ a), (CollapseChannel(a, 2e3),))
    m = np.zeros((7, 7))
    m[6, 6] = 1
    ss = steady_state(gen, horizon=1e-4, settle_tol=1e-14, rho0=DensityMatrix(space, m), interval=1e-4)
    assert not ss.converged
    assert "not settled" in ss.diagnostic


def _rabi_generator():
    h = Operator(QUBIT, np.array([[0.0, 1.0], [1.0, 0.3]]))
    return LindbladGenerator(h, (CollapseChannel(LOWER, 0.2),))


def test_propagator_equals_stepwise():
    gen = _rabi_generator()
    a = evolve(gen, excited(), 3.0, step=0.05, method="propagator").matrix
    b = evolve(gen, excited(), 3.0, step=0.05, method="stepwise").matrix
    assert np.max(np.abs(a - b)) < 1e-13


def test_rk4_is_fourth_order():
    gen = _rabi_generator()
    ref = evolve(gen, excited(), 2.0, step=0.1 / 64).matrix
    e1 = np.max(np.abs(evolve(gen, excited(), 2.0, step=0.1).matrix - ref))
    e2 = np.max(np.abs(evolve(gen, excited(), 2.0, step=0.05).matrix - ref))
    assert 12 <= e1 / e2 <= 20


def test_rhs_matches_liouvillian():
    gen = _rabi_generator()
    rho = np.array([[0.3, 0.1 + 0.2j], [0.1 - 0.2j, 0.7]])
    vec = liouvillian(gen) @ rho.reshape(-1)
    assert np.allclose(vec.reshape(2, 2), lindblad_rhs(gen, rho))


def test_step_limit_enforced():
    gen = _rabi_generator()
    with pytest.raises(StepTooLargeError):
        evolve(gen, excited(), 1.0, step=10 * gen.max_step())


def test_step_count_tiles_duration():
    n, h = step_count(1.0, 0.3)
    assert n == 4 and n * h == pytest.approx(1.0)


def test_rejects_non_hermitian_hamiltonian():
    with pytest.raises(ValueError):
        LindbladGenerator(Operator(QUBIT, np.array([[0, 1], [0, 0]])))


def test_evolve_elements_exact_on_observed_block():
    space, a = cavity(5)
    h = 1e5 * (a + a.dag()) + 3e4 * (a.dag() @ a)
    gen = LindbladGenerator(h, (CollapseChannel(a, 2e5),))
    rho0 = vacuum(space)
    full = evolve(gen, rho0, 2e-5).matrix
    mask = np.zeros((6, 6), dtype=bool)
    mask[np.diag_indices(6)] = True
    part = evolve_elements(gen, rho0, 2e-5, mask)
    assert np.allclose(np.diag(part), np.diag(full), atol=1e-14)
    assert np.all(part[~mask] == 0)


@settings(max_examples=20, deadline=None)
@given(
    st.floats(0.0, 2.0),
    st.floats(-1.0, 1.0),
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.5),
)
def test_evolution_preserves_state_invariants(eta, delta, kappa, dn):
    space, a = cavity(6)
    h = delta * (a.dag() @ a) + eta * (a + a.dag())
    gen = LindbladGenerator(h, (CollapseChannel(a, 2 * kappa),), incoherent_rate=dn, incoherent_mode=a)
    # drive-dominated toy model: size the step by the row-sum bound on |H_eff|
    scale = np.max(np.abs(h.matrix).sum(axis=1)) + gen.frequency_scale
    rho = evolve(gen, vacuum(space), 2.0, step=0.02 / scale)
    m = rho.matrix
    assert abs(np.trace(m) - 1) <= 1e-8
    assert hermiticity_error(m) <= 1e-10
    assert jacobi_eigvalsh(m)[0] >= -1e-8
    check_density_matrix(m)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.sampled_from(["DP", "DpPp"]))
def test_ion_cavity_model_invariants_hold_at_default_step(n_coh, n_th, transition):
    from ionphoton.model import IonCavityParams, build_generator
    from ionphoton.quantum import HilbertSpace as HS

    p = IonCavityParams(transition=transition, T=5e-6).with_drive(n_coh, n_th)
    gen = build_generator(p)
    space = HS.atom_cavity(p.n_max)
    ket = np.zeros(space.dim)
    ket[0] = ket[(p.n_max + 1)] = 1 / np.sqrt(2)
    rho = evolve(gen, DensityMatrix.from_ket(space, ket), p.T)
    m = rho.matrix
    assert abs(np.trace(m) - 1) <= 1e-8
    assert hermiticity_error(m) <= 1e-10
    assert jacobi_eigvalsh(m)[0] >= -1e-8
