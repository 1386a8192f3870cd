import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionphoton.quantum import (
    ATOM_DIM,
    DensityMatrix,
    HilbertSpace,
    InvariantError,
    Operator,
    atomic_operator,
    cavity_annihilation,
    check_density_matrix,
    coherent_ket,
    embed,
    expectation,
    fock_annihilation,
    jacobi_eigvalsh,
    level_index,
    partial_trace,
    partial_trace_matrix,
    thermal_populations,
)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = a @ a.conj().T
    return m / np.trace(m)


def test_atom_cavity_dimension():
    space = HilbertSpace.atom_cavity(9)
    assert space.subsystem_dims == (ATOM_DIM, 10)
    assert space.dim == 40


def test_space_rejects_empty_factor():
    with pytest.raises(ValueError):
        HilbertSpace((4, 0))


@given(st.integers(1, 15))
def test_annihilation_commutator(n_max):
    a = fock_annihilation(n_max)
    comm = a @ a.conj().T - a.conj().T @ a
    expected = np.eye(n_max + 1)
    expected[-1, -1] = -n_max  # truncation edge
    assert np.allclose(comm, expected)


def test_annihilation_lowers_fock_state():
    a = fock_annihilation(5)
    ket = np.zeros(6)
    ket[3] = 1
    out = a @ ket
    assert out[2] == pytest.approx(math.sqrt(3))
    assert np.count_nonzero(out) == 1


def test_level_aliases_share_slots():
    assert level_index("Dp") == level_index("D") == 1
    assert level_index("Pp") == level_index("P") == 2
    assert level_index("Sp") == 3
    with pytest.raises(ValueError):
        level_index("X")


def test_atomic_operator_maps_from_to():
    space = HilbertSpace.atom_cavity(2)
    op = atomic_operator(space, "D", "P")
    ket = np.zeros(space.dim)
    ket[1 * 3 + 1] = 1  # |D, 1>
    out = op.matrix @ ket
    assert out[2 * 3 + 1] == 1
    assert np.count_nonzero(out) == 1


def test_cavity_annihilation_acts_on_last_factor():
    space = HilbertSpace.atom_cavity(3)
    a = cavity_annihilation(space)
    assert np.allclose(a.matrix, np.kron(np.eye(4), fock_annihilation(3)))


def test_embed_checks_shapes():
    space = HilbertSpace((2, 3))
    with pytest.raises(ValueError):
        embed(space, np.eye(3), 0)
    with pytest.raises(IndexError):
        embed(space, np.eye(2), 2)


def test_operator_space_mismatch():
    a = Operator(HilbertSpace((2,)), np.eye(2))
    b = Operator(HilbertSpace((3,)), np.eye(3))
    with pytest.raises(ValueError):
        a @ b


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_jacobi_matches_reference_eigenvalues(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = a + a.conj().T
    assert np.allclose(jacobi_eigvalsh(h), np.linalg.eigvalsh(h), atol=1e-10)


def test_check_density_matrix_failures():
    good = np.diag([0.5, 0.5]).astype(complex)
    check_density_matrix(good)
    with pytest.raises(InvariantError, match="Hermitian"):
        check_density_matrix(good + np.array([[0, 1e-6], [0, 0]]))
    with pytest.raises(InvariantError, match="trace"):
        check_density_matrix(np.diag([0.5, 0.6]).astype(complex))
    with pytest.raises(InvariantError, match="negative"):
        check_density_matrix(np.diag([1.1, -0.1]).astype(complex))


def test_density_matrix_validates_unless_disabled():
    space = HilbertSpace((2,))
    with pytest.raises(InvariantError):
        DensityMatrix(space, np.diag([1.0, 1.0]))
    rho = DensityMatrix(space, np.diag([1.0, 1.0]), check=False)
    assert rho.trace == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_partial_trace_of_product_state(d1, d2, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(rng, d1), random_density(rng, d2)
    space = HilbertSpace((d1, d2))
    rho = DensityMatrix(space, np.kron(r1, r2))
    assert np.allclose(partial_trace(rho, 0).matrix, r1)
    assert np.allclose(partial_trace(rho, 1).matrix, r2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_trace_preserves_trace_and_positivity(seed):
    rng = np.random.default_rng(seed)
    m = random_density(rng, 12, rank=3)
    red = partial_trace_matrix(m, (3, 4), 1)
    assert np.trace(red) == pytest.approx(1.0)
    check_density_matrix(red)


def test_expectation_of_number_operator():
    space = HilbertSpace.atom_cavity(4)
    a = cavity_annihilation(space)
    ket = np.zeros(space.dim)
    ket[3] = 1  # |S, 3>
    rho = DensityMatrix.from_ket(space, ket)
    assert expectation(rho, a.dag() @ a) == pytest.approx(3)


@given(st.floats(0, 1.5))
def test_coherent_state_statistics(alpha):
    ket = coherent_ket(30, alpha)
    p = np.abs(ket) ** 2
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(np.arange(31), p) == pytest.approx(alpha**2, abs=1e-10)


@given(st.one_of(st.just(0.0), st.floats(1e-3, 2)))
def test_thermal_populations_are_bose_einstein(n_bar):
    p = thermal_populations(200, n_bar)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.dot(np.arange(201), p) == pytest.approx(n_bar, abs=1e-8)
    if n_bar > 0:
        ratios = p[1:10] / p[:9]
        assert np.allclose(ratios, n_bar / (1 + n_bar))
