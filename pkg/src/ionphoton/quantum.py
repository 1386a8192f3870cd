"""Dense operator algebra on a small composite Hilbert space.

The space used throughout the package is ``[atom, cavity]`` with four atomic
levels and a Fock ladder truncated at ``n_max``. Everything here is plain
numpy; matrices are complex128 and never mutated after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, prod

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_FLOOR = -1e-8

# Level slots on the atomic factor. The primed transition reuses the D and P
# slots, so one Hamiltonian builder serves both.
LEVELS = {
    "S": 0,
    "D": 1,
    "P": 2,
    "Sp": 3,
    "Dp": 1,
    "Pp": 2,
    "S'": 3,
    "D'": 1,
    "P'": 2,
    "S′": 3,
    "D′": 1,
    "P′": 2,
}
ATOM_DIM = 4


class InvariantError(ValueError):
    """A density matrix failed a Hermiticity, trace or positivity check."""


@dataclass(frozen=True)
class HilbertSpace:
    subsystem_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dims must be positive, got {self.subsystem_dims}")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def dim(self) -> int:
        return prod(self.subsystem_dims)

    @property
    def n_factors(self) -> int:
        return len(self.subsystem_dims)

    @classmethod
    def atom_cavity(cls, n_max: int) -> "HilbertSpace":
        return cls((ATOM_DIM, n_max + 1))


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, scalar * self.matrix)

    __rmul__ = __mul__

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermiticity_error(self.matrix) <= tol


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated state. Pass ``check=False`` only on hot paths that validate later."""

    space: HilbertSpace
    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.check:
            check_density_matrix(m)

    @classmethod
    def from_ket(cls, space: HilbertSpace, ket: np.ndarray) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex).ravel()
        return cls(space, np.outer(ket, ket.conj()))

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


def _same_space(a: HilbertSpace, b: HilbertSpace) -> None:
    if a != b:
        raise ValueError(f"space mismatch: {a.subsystem_dims} vs {b.subsystem_dims}")


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def jacobi_eigvalsh(h: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations.

    The complex matrix is embedded as the real symmetric ``[[Re, -Im], [Im, Re]]``
    whose spectrum is that of ``h`` with every eigenvalue doubled. Rotations are
    applied in round-robin order so that each round is a set of disjoint
    pivots, which lets one round be a single orthogonal similarity.

    Returns
    -------
    np.ndarray
        Ascending eigenvalues, length ``h.shape[0]``.
    """
    h = np.asarray(h)
    n = h.shape[0]
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([float(np.real(h[0, 0]))])
    h = 0.5 * (h + h.conj().T)
    a = np.block([[h.real, -h.imag], [h.imag, h.real]])
    m = a.shape[0]
    scale = max(np.linalg.norm(a), 1e-300)
    players = list(range(m))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        order = players[:]
        for _ in range(m - 1):
            p = np.array(order[: m // 2])
            q = np.array(order[m // 2 :][::-1])
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > 1e-300
            tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            sgn = np.where(tau >= 0, 1.0, -1.0)
            t = np.where(active, sgn / (np.abs(tau) + np.hypot(1.0, tau)), 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rot = np.eye(m)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            # round-robin: keep order[0] fixed, rotate the rest
            order = [order[0], order[-1]] + order[1:-1]
    ev = np.sort(np.diag(a))
    return ev[::2]


def check_density_matrix(m: np.ndarray) -> None:
    herm = hermiticity_error(m)
    if herm > HERMITIAN_TOL:
        raise InvariantError(f"not Hermitian: max |rho - rho^dag| = {herm:.3e}")
    tr = np.trace(m)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvariantError(f"trace {tr.real:.12f} deviates from 1 by {abs(tr - 1):.3e}")
    lam = jacobi_eigvalsh(m)[0]
    if lam < POSITIVITY_FLOOR:
        raise InvariantError(f"negative eigenvalue {lam:.3e}")


def fock_annihilation(n_max: int) -> np.ndarray:
    """Truncated annihilation operator with ``a[n-1, n] = sqrt(n)``."""
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be an integer >= 1, got {n_max}")
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1).astype(complex)


def level_index(level: str) -> int:
    try:
        return LEVELS[level]
    except KeyError:
        raise ValueError(f"unknown atomic level {level!r}; expected one of {sorted(set(LEVELS))}") from None


def embed(space: HilbertSpace, op, subsystem_index: int) -> Operator:
    """Tensor ``op`` into the full space at factor ``subsystem_index``."""
    mat = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if not 0 <= subsystem_index < space.n_factors:
        raise IndexError(f"subsystem index {subsystem_index} out of range for {space.subsystem_dims}")
    d = space.subsystem_dims[subsystem_index]
    if mat.shape != (d, d):
        raise ValueError(f"operator of shape {mat.shape} cannot act on factor of dimension {d}")
    full = np.ones((1, 1), dtype=complex)
    for i, di in enumerate(space.subsystem_dims):
        full = np.kron(full, mat if i == subsystem_index else np.eye(di))
    return Operator(space, full)


def atomic_operator(space: HilbertSpace, from_level: str, to_level: str) -> Operator:
    """``|to><from|`` on the atomic factor (index 0), identity elsewhere."""
    if space.subsystem_dims[0] != ATOM_DIM:
        raise ValueError(f"atomic factor must have dimension {ATOM_DIM}")
    m = np.zeros((ATOM_DIM, ATOM_DIM), dtype=complex)
    m[level_index(to_level), level_index(from_level)] = 1.0
    return embed(space, m, 0)


def cavity_annihilation(space: HilbertSpace) -> Operator:
    return embed(space, fock_annihilation(space.subsystem_dims[-1] - 1), space.n_factors - 1)


def partial_trace(rho, keep: int):
    """Reduced state on factor ``keep``. Raw matrices go through :func:`partial_trace_matrix`."""
    space = rho.space
    if not 0 <= keep < space.n_factors:
        raise IndexError(f"subsystem index {keep} out of range for {space.subsystem_dims}")
    red = partial_trace_matrix(rho.matrix, space.subsystem_dims, keep)
    return DensityMatrix(HilbertSpace((space.subsystem_dims[keep],)), red, check=rho.check)


def partial_trace_matrix(m: np.ndarray, dims, keep: int) -> np.ndarray:
    dims = tuple(dims)
    k = len(dims)
    t = np.asarray(m).reshape(dims + dims)
    # move the kept row/col axes to the end, then trace the others pairwise
    for axis in reversed(range(k)):
        if axis == keep:
            continue
        t = np.trace(t, axis1=axis, axis2=axis + t.ndim // 2)
    return t


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    _same_space(rho.space, op.space)
    return complex(np.sum(rho.matrix * op.matrix.T))


def coherent_ket(n_max: int, alpha: complex) -> np.ndarray:
    """Fock amplitudes ``e^{-|a|^2/2} a^n / sqrt(n!)`` up to ``n_max`` (not renormalised)."""
    n = np.arange(n_max + 1)
    fact = np.array([float(factorial(int(k))) for k in n])
    return np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(fact)


def thermal_populations(n_max: int, n_bar: float) -> np.ndarray:
    """Bose-Einstein ``p(n) = n_bar^n / (1 + n_bar)^(n+1)`` up to ``n_max``."""
    n = np.arange(n_max + 1)
    if n_bar == 0:
        return (n == 0).astype(float)
    return n_bar**n / (1.0 + n_bar) ** (n + 1)
