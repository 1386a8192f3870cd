"""Ramsey sequence simulation, sinusoidal fringe fitting and projection noise.

Phases on a :class:`Fringe` are in units of pi, matching the fit model
``E(phi) = B + A cos(pi (phi - phi0))``; a grid on ``[0, 2)`` spans one period.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .lindblad import CollapseChannel, evolve, evolve_elements
from .model import IonCavityParams, build_generator, ion_drive_generator
from .quantum import (
    ATOM_DIM,
    DensityMatrix,
    HilbertSpace,
    atomic_operator,
    level_index,
    partial_trace_matrix,
)

FRINGE_HEADER = ("phase_pi", "p_D", "trials")
DEFAULT_POINTS = 51
DEFAULT_TRIALS = 250


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class PulseSpec:
    """Instantaneous rotation on the S-D qubit about ``cos(phase) X + sin(phase) Y``."""

    rotation_angle: float = math.pi / 2
    phase: float = 0.0
    implementation: str = "instantaneous"

    def __post_init__(self):
        if not 0 < self.rotation_angle <= math.pi:
            raise ValueError(f"rotation angle must lie in (0, pi], got {self.rotation_angle}")
        if self.implementation != "instantaneous":
            raise ValueError("only instantaneous pulses are modelled")

    def unitary(self, excited: str = "D") -> np.ndarray:
        """4x4 atomic unitary; ``excited`` picks the D slot label (D or Dp)."""
        c = math.cos(self.rotation_angle / 2)
        s = math.sin(self.rotation_angle / 2)
        i_s, i_d = level_index("S"), level_index(excited)
        u = np.eye(ATOM_DIM, dtype=complex)
        u[i_s, i_s] = c
        u[i_d, i_d] = c
        u[i_s, i_d] = -1j * s * np.exp(-1j * self.phase)
        u[i_d, i_s] = -1j * s * np.exp(1j * self.phase)
        return u


@dataclass(frozen=True)
class CoherenceModel:
    """Maps ideal |D> populations onto the detected excitation.

    ``mode="affine"`` applies ``p -> 2 B0 [1/2 + (p - 1/2) c_v]`` after the
    evolution. ``mode="dephasing"`` instead adds a pure-dephasing channel on
    |D> during the interaction, sized so the vacuum contrast is ``c_v``, and
    reads out ``2 B0 p``.
    """

    B0: float = 0.4915
    contrast_at_vacuum: float = 0.99
    mode: str = "affine"

    def __post_init__(self):
        if not 0 < self.B0 <= 0.5:
            raise ValueError(f"B0 must lie in (0, 0.5], got {self.B0}")
        if not 0 < self.contrast_at_vacuum <= 1:
            raise ValueError("contrast at vacuum must lie in (0, 1]")
        if self.mode not in ("affine", "dephasing"):
            raise ValueError(f"unknown coherence mode {self.mode!r}")

    def dephasing_rate(self, duration: float) -> float:
        return -2.0 * math.log(self.contrast_at_vacuum) / duration if duration > 0 else 0.0

    def readout(self, p_ideal):
        p_ideal = np.asarray(p_ideal, dtype=float)
        if self.mode == "affine":
            return 2 * self.B0 * (0.5 + (p_ideal - 0.5) * self.contrast_at_vacuum)
        return 2 * self.B0 * p_ideal


@dataclass(frozen=True, eq=False)
class Fringe:
    phases: np.ndarray
    p_D: np.ndarray
    trials: int = DEFAULT_TRIALS
    seed: int | None = None

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        p = np.asarray(self.p_D, dtype=float)
        if phases.shape != p.shape or phases.ndim != 1:
            raise ValueError("phases and p_D must be 1-D arrays of equal length")
        if phases.size < 4:
            raise ValueError(f"a fringe needs at least 4 points, got {phases.size}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("excitation probabilities must lie in [0, 1]")
        for arr in (phases, p):
            arr.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "p_D", p)
        object.__setattr__(self, "trials", int(self.trials))

    def __len__(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    phase_shift: float
    covariance: np.ndarray = field(repr=False)
    offset_pinned: bool = False
    iterations: int = 0

    @property
    def contrast(self) -> float:
        return self.amplitude / self.offset

    @property
    def errors(self) -> dict[str, float]:
        """One-sigma errors on amplitude, phase_shift and (if free) offset."""
        sig = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        names = ("amplitude", "phase_shift") if self.offset_pinned else ("amplitude", "phase_shift", "offset")
        return dict(zip(names, map(float, sig)))

    @property
    def contrast_error(self) -> float:
        err = self.errors
        rel2 = (err["amplitude"] / self.amplitude) ** 2 if self.amplitude else 0.0
        if not self.offset_pinned:
            rel2 += (err["offset"] / self.offset) ** 2
        return self.contrast * math.sqrt(rel2)


def default_phases(points: int = DEFAULT_POINTS) -> np.ndarray:
    return np.linspace(0.0, 2.0, points, endpoint=False)


# ---------------------------------------------------------------- simulation


def _excited_label(p: IonCavityParams) -> str:
    return "D" if p.transition.value == "DP" else "Dp"


@lru_cache(maxsize=16)
def _initial_state(space: HilbertSpace, excited: str) -> DensityMatrix:
    """|S> (cavity in vacuum) after the first pi/2 pulse."""
    ket_atom = PulseSpec().unitary(excited)[:, level_index("S")]
    ket = ket_atom
    for d in space.subsystem_dims[1:]:
        vac = np.zeros(d, dtype=complex)
        vac[0] = 1.0
        ket = np.kron(ket, vac)
    return DensityMatrix.from_ket(space, ket)


def _dephasing_channel(space: HilbertSpace, excited: str, coh: CoherenceModel, duration: float):
    if coh.mode != "dephasing":
        return ()
    return (CollapseChannel(atomic_operator(space, excited, excited), coh.dephasing_rate(duration)),)


@lru_cache(maxsize=512)
def _post_interaction(p: IonCavityParams, coh: CoherenceModel, backend: str, check: bool) -> DensityMatrix:
    excited = _excited_label(p)
    space = p.space
    gen = build_generator(p, backend, extra=_dephasing_channel(space, excited, coh, p.T))
    return evolve(gen, _initial_state(space, excited), p.T, check=check)


def post_interaction_state(
    p: IonCavityParams, coh: CoherenceModel | None = None, backend: str = "full", check: bool = True
) -> DensityMatrix:
    """Atom-cavity state after the first pi/2 pulse and the interaction time ``p.T``.

    Results are memoised on the (immutable) parameter records.
    """
    return _post_interaction(p, coh or CoherenceModel(), backend, check)


def _excitation(atom: np.ndarray, phases_rad: np.ndarray, excited: str, coh: CoherenceModel) -> np.ndarray:
    i_d = level_index(excited)
    out = np.empty(phases_rad.size)
    for k, phi in enumerate(phases_rad):
        u = PulseSpec(phase=float(phi)).unitary(excited)
        out[k] = float(np.real(u[i_d] @ atom @ u[i_d].conj()))
    return np.clip(coh.readout(out), 0.0, 1.0)


@lru_cache(maxsize=4096)
def _qubit_block(p: IonCavityParams, coh: CoherenceModel, backend: str) -> np.ndarray:
    """Reduced atomic matrix, exact on the S-D block only (fast, unchecked path)."""
    excited = _excited_label(p)
    space = p.space
    gen = build_generator(p, backend, extra=_dephasing_channel(space, excited, coh, p.T))
    inner = space.dim // ATOM_DIM
    i_s, i_d = level_index("S"), level_index(excited)
    observe = np.zeros((space.dim, space.dim), dtype=bool)
    for i, j in ((i_s, i_s), (i_d, i_d), (i_s, i_d)):
        observe[i * inner : (i + 1) * inner, j * inner : (j + 1) * inner] = np.eye(inner, dtype=bool)
    out = evolve_elements(gen, _initial_state(space, excited), p.T, observe)
    atom = partial_trace_matrix(out, space.subsystem_dims, 0)
    atom[i_d, i_s] = np.conj(atom[i_s, i_d])
    atom.setflags(write=False)
    return atom


def _atom_state(p: IonCavityParams, coh: CoherenceModel, backend: str, check: bool) -> np.ndarray:
    if check:
        rho = post_interaction_state(p, coh, backend, check)
        return partial_trace_matrix(rho.matrix, rho.space.subsystem_dims, 0)
    return _qubit_block(p, coh, backend)


def simulate_point(p: IonCavityParams, phi: float, coh: CoherenceModel | None = None, backend: str = "full") -> float:
    """Detected |D> probability for a second pulse of phase ``phi`` radians."""
    coh = coh or CoherenceModel()
    atom = _atom_state(p, coh, backend, check=True)
    return float(_excitation(atom, np.array([phi]), _excited_label(p), coh)[0])


def simulate_fringe(
    p: IonCavityParams,
    phases=None,
    coh: CoherenceModel | None = None,
    backend: str = "full",
    trials: int = DEFAULT_TRIALS,
    check: bool = True,
) -> Fringe:
    """Noiseless fringe; the interaction is evolved once and shared by all phases.

    With ``check=False`` only the matrix elements feeding the S-D qubit block
    are propagated and the density-matrix invariants are not verified; the
    probabilities are the same RK4 iterate either way.
    """
    coh = coh or CoherenceModel()
    phases = default_phases() if phases is None else np.asarray(phases, dtype=float)
    if np.unique(phases).size < 4:
        raise ValueError("a fringe needs at least 4 distinct phases")
    atom = _atom_state(p, coh, backend, check)
    return Fringe(phases, _excitation(atom, np.pi * phases, _excited_label(p), coh), trials)


def simulate_ion_drive_fringe(
    p: IonCavityParams, rabi: float, phases=None, coh: CoherenceModel | None = None, trials: int = DEFAULT_TRIALS
) -> Fringe:
    """Reference fringe with the cavity decoupled and the ion driven at Rabi frequency ``rabi``."""
    coh = coh or CoherenceModel()
    phases = default_phases() if phases is None else np.asarray(phases, dtype=float)
    excited = _excited_label(p)
    space = HilbertSpace((ATOM_DIM,))
    gen = ion_drive_generator(p, rabi, extra=_dephasing_channel(space, excited, coh, p.T))
    rho = evolve(gen, _initial_state(space, excited), p.T)
    return Fringe(phases, _excitation(np.array(rho.matrix), np.pi * phases, excited, coh), trials)


def cavity_distribution(rho: DensityMatrix) -> np.ndarray:
    """Diagonal of the reduced cavity state."""
    red = partial_trace_matrix(rho.matrix, rho.space.subsystem_dims, rho.space.n_factors - 1)
    return np.clip(np.real(np.diag(red)), 0.0, None)


# ---------------------------------------------------------------- noise


def point_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for ``(seed, index)``; independent of evaluation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_projection_noise(fringe: Fringe, trials: int | None = None, seed: int = 0, index: int = 0) -> Fringe:
    """Replace each ``f_k`` by ``m_k / M`` with ``m_k ~ Binomial(M, f_k)``."""
    trials = fringe.trials if trials is None else int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    counts = point_rng(seed, index).binomial(trials, fringe.p_D)
    return Fringe(fringe.phases, counts / trials, trials, seed=seed)


# ---------------------------------------------------------------- fitting


def _model(phases, params, pinned):
    amp, phi0 = params[..., 0:1], params[..., 1:2]
    off = pinned[..., None] if pinned is not None else params[..., 2:3]
    return off + amp * np.cos(np.pi * (phases - phi0))


def _dft_guess(phases, data):
    c = np.cos(np.pi * phases)
    s = np.sin(np.pi * phases)
    design = np.stack([np.ones_like(phases), c, s], axis=-1)
    coef, *_ = np.linalg.lstsq(design, np.moveaxis(data, -1, 0).reshape(phases.size, -1), rcond=None)
    off, a, b = coef
    return off, np.hypot(a, b), np.arctan2(b, a) / np.pi


def fit_sinusoid(phases, data, pinned_offset=None, max_iter: int = 50, tol: float = 1e-13):
    """Batched Gauss-Newton fit of ``B + A cos(pi (phi - phi0))``.

    ``data`` has shape ``(..., N)``. Starts from a discrete-Fourier estimate and
    differentiates the model numerically (central differences). Returns
    ``(params, covariance, iterations)`` with params ``(A, phi0[, B])`` along the
    last axis.
    """
    phases = np.asarray(phases, dtype=float)
    data = np.asarray(data, dtype=float)
    batch = data.shape[:-1]
    flat = data.reshape(-1, phases.size)
    off0, amp0, phi00 = _dft_guess(phases, flat)
    pinned = None
    if pinned_offset is not None:
        pinned = np.broadcast_to(np.asarray(pinned_offset, dtype=float), batch).reshape(-1)
        params = np.stack([amp0, phi00], axis=-1)
    else:
        params = np.stack([amp0, phi00, off0], axis=-1)
    n_par = params.shape[-1]
    if phases.size <= n_par:
        raise FitError("fewer points than fit parameters")
    it = 0
    for it in range(1, max_iter + 1):
        resid = flat - _model(phases, params, pinned)
        jac = np.empty(flat.shape + (n_par,))
        for j in range(n_par):
            h = 1e-6 * np.maximum(1.0, np.abs(params[:, j]))
            up = params.copy()
            dn = params.copy()
            up[:, j] += h
            dn[:, j] -= h
            jac[..., j] = (_model(phases, up, pinned) - _model(phases, dn, pinned)) / (2 * h[:, None])
        jtj = np.einsum("bni,bnj->bij", jac, jac)
        jtr = np.einsum("bni,bn->bi", jac, resid)
        try:
            step = np.linalg.solve(jtj, jtr[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise FitError("singular normal equations; fringe is degenerate") from exc
        params = params + step
        if np.max(np.abs(step)) < tol:
            break
    resid = flat - _model(phases, params, pinned)
    dof = phases.size - n_par
    s2 = np.sum(resid**2, axis=-1) / dof
    cov = np.linalg.inv(jtj) * s2[:, None, None]
    return params.reshape(batch + (n_par,)), cov.reshape(batch + (n_par, n_par)), it


def _canonical(amp, phi0, hint):
    """Make the amplitude non-negative and put phi0 on the branch nearest ``hint``."""
    phi0 = np.where(amp < 0, phi0 + 1.0, phi0)
    amp = np.abs(amp)
    phi0 = phi0 - 2.0 * np.round((phi0 - hint) / 2.0)
    return amp, phi0


def recalculated_offset(n_mean: float, p: IonCavityParams, coh: CoherenceModel | None = None) -> float:
    """Offset corrected for spontaneous emission out of the off-resonantly excited |P>.

    ``B = B0 exp(-Gamma_S' p_P <n> T)`` with ``p_P = 2 g^2 <n> / (Gamma_D^2 + Delta^2)``.
    """
    coh = coh or CoherenceModel()
    br = p.branching
    p_p = 2 * p.g**2 * n_mean / (br.Gamma_to_D**2 + p.Delta_PL**2)
    return coh.B0 * math.exp(-br.Gamma_to_Sprime * p_p * n_mean * p.T)


def fit_fringe(
    fringe: Fringe,
    n_mean_hint: float | None = None,
    p: IonCavityParams | None = None,
    coh: CoherenceModel | None = None,
    pin_offset: bool | None = None,
    phase_hint: float | None = None,
) -> FringeFit:
    """Least-squares sinusoid fit.

    With ``n_mean_hint`` and ``p`` the offset is pinned to
    :func:`recalculated_offset` unless ``pin_offset=False``. The reported
    ``phase_shift`` (units of pi) is the branch nearest ``phase_hint``, which
    defaults to the linear prediction for ``n_mean_hint`` or else 0.5.
    """
    if np.ptp(fringe.p_D) < 1e-12:
        raise FitError("constant fringe has no phase")
    if np.ptp(np.mod(fringe.phases, 2.0)) < 1e-9:
        raise FitError("fringe does not sample more than one phase")
    pin = (n_mean_hint is not None and p is not None) if pin_offset is None else pin_offset
    if pin and (n_mean_hint is None or p is None):
        raise ValueError("pinning the offset needs n_mean_hint and the ion-cavity parameters")
    if phase_hint is None:
        if n_mean_hint is not None and p is not None:
            from .model import expected_phase_shift

            phase_hint = expected_phase_shift(n_mean_hint, p) / math.pi
        else:
            phase_hint = 0.5
    pinned = recalculated_offset(n_mean_hint, p, coh) if pin else None
    params, cov, it = fit_sinusoid(fringe.phases, fringe.p_D, pinned)
    if not np.all(np.isfinite(params)):
        raise FitError("fit did not converge")
    amp, phi0 = _canonical(params[0], params[1], phase_hint)
    offset = float(pinned) if pin else float(params[2])
    return FringeFit(float(amp), offset, float(phi0), cov, offset_pinned=pin, iterations=it)


def fit_phases_batch(phases, data, phase_hint: float = 0.5) -> np.ndarray:
    """Fitted phase shifts (units of pi) for a stack of fringes, offset free."""
    params, _, _ = fit_sinusoid(phases, data)
    _, phi0 = _canonical(params[..., 0], params[..., 1], phase_hint)
    return phi0


# ---------------------------------------------------------------- CSV


def write_fringe_csv(path, fringe: Fringe, exact=None, comments=()) -> None:
    """Write ``phase_pi,p_D,trials`` (plus ``p_exact`` when given) at 17 significant digits."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = list(FRINGE_HEADER) + (["p_exact"] if exact is not None else [])
    w.writerow(header)
    for k in range(len(fringe)):
        row = [f"{fringe.phases[k]:.17g}", f"{fringe.p_D[k]:.17g}", str(fringe.trials)]
        if exact is not None:
            row.append(f"{exact[k]:.17g}")
        w.writerow(row)
    Path(path).write_text(buf.getvalue())


def read_fringe_csv(path) -> Fringe:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty fringe file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if tuple(header[:3]) != FRINGE_HEADER:
        raise ValueError(f"{path}: expected header starting with {','.join(FRINGE_HEADER)}, got {','.join(header)}")
    phases, p, trials = [], [], set()
    for lineno, row in enumerate(reader, start=2):
        try:
            phases.append(float(row[0]))
            p.append(float(row[1]))
            trials.add(int(row[2]))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed data row {lineno}: {row}") from exc
    if len(trials) != 1:
        raise ValueError(f"{path}: trials column must be constant")
    return Fringe(np.array(phases), np.array(p), trials.pop())


def with_trials(fringe: Fringe, trials: int) -> Fringe:
    return replace(fringe, trials=trials)
