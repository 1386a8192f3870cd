"""Ion-cavity parameters, Hamiltonian and decay channels for both qubit transitions.

All rates and detunings are angular frequencies in rad/s, times in seconds.
Use :func:`mhz` to convert the ``2 pi x (value) MHz`` numbers quoted by
experimentalists.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .lindblad import CollapseChannel, LindbladGenerator
from .quantum import (
    ATOM_DIM,
    HilbertSpace,
    Operator,
    atomic_operator,
    cavity_annihilation,
)

TWO_PI = 2 * math.pi


def mhz(value: float) -> float:
    """Ordinary frequency in MHz to angular frequency in rad/s."""
    return TWO_PI * value * 1e6


def khz(value: float) -> float:
    return TWO_PI * value * 1e3


class Transition(str, enum.Enum):
    DP = "DP"
    DpPp = "DpPp"


G_PRIME_FACTOR = 0.82


@dataclass(frozen=True)
class BranchingTable:
    Gamma_to_S: float
    Gamma_to_Sprime: float
    Gamma_to_D: float

    @property
    def total(self) -> float:
        return self.Gamma_to_S + self.Gamma_to_Sprime + self.Gamma_to_D


@dataclass(frozen=True)
class IonCavityParams:
    g: float = mhz(0.968)
    kappa: float = mhz(0.068)
    Delta_PL: float = mhz(125.0)
    Delta_CL: float = 0.0
    Delta_DR: float = 0.0
    Delta_SSp: float = 0.0
    eta: float = 0.0
    delta_n: float = 0.0
    Gamma_PS: float = mhz(21.4)
    Gamma_PD: float = mhz(1.34)
    Gamma_PD32: float = mhz(0.152)
    transition: Transition = Transition.DP
    n_max: int = 9
    T: float = 50e-6
    # amplitude (half-width) decay rate of |P>; quoted, never used by the dynamics
    gamma: float = mhz(11.5)

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        for name in ("g", "kappa", "eta", "delta_n", "Gamma_PS", "Gamma_PD", "Gamma_PD32", "T"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite value >= 0, got {value}")
        for name in ("Delta_PL", "Delta_CL", "Delta_DR", "Delta_SSp"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def Gamma_P(self) -> float:
        return self.Gamma_PS + self.Gamma_PD + self.Gamma_PD32

    @property
    def branching(self) -> BranchingTable:
        if self.transition is Transition.DP:
            return BranchingTable(
                Gamma_to_S=2 / 3 * self.Gamma_PS,
                Gamma_to_Sprime=1 / 3 * self.Gamma_PS + 3 / 5 * self.Gamma_PD + self.Gamma_PD32,
                Gamma_to_D=2 / 5 * self.Gamma_PD,
            )
        return BranchingTable(
            Gamma_to_S=self.Gamma_PS,
            Gamma_to_Sprime=11 / 15 * self.Gamma_PD,
            Gamma_to_D=4 / 15 * self.Gamma_PD,
        )

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace.atom_cavity(self.n_max)

    @property
    def n_coh(self) -> float:
        return self.eta**2 / (self.kappa**2 + self.Delta_CL**2) if self.eta else 0.0

    @property
    def n_th(self) -> float:
        return self.delta_n / self.kappa if self.delta_n else 0.0

    @property
    def mean_n(self) -> float:
        """Steady-state photon number of the empty cavity under this drive."""
        return self.n_coh + self.n_th

    def with_drive(self, n_coh: float, n_th: float = 0.0, self_consistent: bool = False) -> "IonCavityParams":
        """Drive amplitudes for target coherent and thermal photon numbers.

        With ``self_consistent`` the drive is tuned towards the cavity as
        pulled by an ion in |D>: ``Delta_CL = <n> g^2 / Delta_PL``, so that at
        ``<n> = 1`` the drive sits exactly on the pulled resonance. ``eta``
        compensates the detuning so the bare-cavity photon number is kept.
        """
        if n_coh < 0 or n_th < 0:
            raise ValueError("photon numbers must be >= 0")
        if self_consistent:
            delta_cl = (n_coh + n_th) * dispersive_shift(self.g, self.Delta_PL)
        else:
            delta_cl = self.Delta_CL
        eta = math.sqrt(n_coh * (self.kappa**2 + delta_cl**2))
        return replace(self, eta=eta, delta_n=self.kappa * n_th, Delta_CL=delta_cl)

    def second_transition(self, factor: float = G_PRIME_FACTOR) -> "IonCavityParams":
        """The |D'>-|P'> transition: coupling scaled by ``factor``, primed branching."""
        return replace(self, g=self.g * factor, transition=Transition.DpPp)


def _levels(p: IonCavityParams) -> tuple[str, str]:
    return ("D", "P") if p.transition is Transition.DP else ("Dp", "Pp")


def build_hamiltonian(p: IonCavityParams) -> Operator:
    """Interaction-picture Hamiltonian over hbar, Ramsey-pulse term excluded."""
    space = p.space
    d, pp = _levels(p)
    a = cavity_annihilation(space)
    ad = a.dag()
    sig_d = atomic_operator(space, d, d)
    sig_p = atomic_operator(space, pp, pp)
    sig_s2 = atomic_operator(space, "Sp", "Sp")
    sig_pd = atomic_operator(space, d, pp)  # |P><D|
    h = (
        p.Delta_DR * sig_d
        + (p.Delta_PL + p.Delta_CL + p.Delta_DR) * sig_p
        + p.Delta_SSp * sig_s2
        + p.Delta_CL * (ad @ a)
        + p.g * (sig_pd @ a + sig_pd.dag() @ ad)
        + p.eta * (a + ad)
    )
    # symmetrise away roundoff so the operator is Hermitian to the last bit
    m = h.matrix
    return Operator(space, 0.5 * (m + m.conj().T))


def build_channels(p: IonCavityParams) -> list[CollapseChannel]:
    """Three atomic decay channels out of |P> plus cavity photon loss.

    The cavity channel carries the photon (energy) decay rate ``2 kappa`` so
    that ``kappa`` is the field decay rate.
    """
    space = p.space
    d, pp = _levels(p)
    br = p.branching
    return [
        CollapseChannel(atomic_operator(space, pp, "S"), br.Gamma_to_S),
        CollapseChannel(atomic_operator(space, pp, "Sp"), br.Gamma_to_Sprime),
        CollapseChannel(atomic_operator(space, pp, d), br.Gamma_to_D),
        CollapseChannel(cavity_annihilation(space), 2 * p.kappa),
    ]


def build_generator(p: IonCavityParams, backend: str = "full", extra=()) -> LindbladGenerator:
    """Full master-equation generator, or the adiabatically eliminated one."""
    if backend == "eliminated":
        return eliminated_generator(p, extra)
    if backend != "full":
        raise ValueError(f"unknown backend {backend!r}; expected 'full' or 'eliminated'")
    space = p.space
    return LindbladGenerator(
        build_hamiltonian(p),
        tuple(build_channels(p)) + tuple(extra),
        incoherent_rate=p.delta_n,
        incoherent_mode=cavity_annihilation(space),
    )


def eliminated_generator(p: IonCavityParams, extra=()) -> LindbladGenerator:
    """Generator with |P> adiabatically eliminated.

    |D, n> couples to |P, n-1> at ``g sqrt(n)`` with complex detuning
    ``Delta_PL - i Gamma_P / 2``. To second order this leaves a light shift
    ``-g^2 Delta / (Delta^2 + Gamma_P^2/4)`` per photon on |D> (which also
    pulls the cavity) and photon-consuming jumps ``|i><D| a`` into each decay
    target at ``Gamma_i g^2 / (Delta^2 + Gamma_P^2/4)``. |P> stays empty.
    """
    space = p.space
    d, _ = _levels(p)
    a = cavity_annihilation(space)
    ad = a.dag()
    br = p.branching
    denom = p.Delta_PL**2 + 0.25 * br.total**2
    if denom == 0:
        raise ValueError("adiabatic elimination needs a nonzero detuning or linewidth")
    shift = -p.g**2 * p.Delta_PL / denom
    sig_d = atomic_operator(space, d, d)
    h = (
        p.Delta_DR * sig_d
        + p.Delta_SSp * atomic_operator(space, "Sp", "Sp")
        + p.Delta_CL * (ad @ a)
        + shift * (sig_d @ ad @ a)
        + p.eta * (a + ad)
    )
    m = h.matrix
    h = Operator(space, 0.5 * (m + m.conj().T))
    scatter = p.g**2 / denom
    channels = [
        CollapseChannel(atomic_operator(space, d, target) @ a, rate * scatter)
        for target, rate in (("S", br.Gamma_to_S), ("Sp", br.Gamma_to_Sprime), (d, br.Gamma_to_D))
    ]
    channels.append(CollapseChannel(a, 2 * p.kappa))
    return LindbladGenerator(
        h, tuple(channels) + tuple(extra), incoherent_rate=p.delta_n, incoherent_mode=a
    )


def ion_drive_generator(p: IonCavityParams, rabi: float, extra=()) -> LindbladGenerator:
    """Ion driven directly by a classical field at the cavity frequency, cavity decoupled.

    Atom-only space. ``rabi`` plays the role of ``g sqrt(n)`` in the cavity
    case: the D-P coupling term is ``rabi (sigma_PD + sigma_DP)``.
    """
    space = HilbertSpace((ATOM_DIM,))
    d, pp = _levels(p)
    sig_pd = atomic_operator(space, d, pp)
    h = (
        p.Delta_DR * atomic_operator(space, d, d)
        + (p.Delta_PL + p.Delta_DR) * atomic_operator(space, pp, pp)
        + p.Delta_SSp * atomic_operator(space, "Sp", "Sp")
        + rabi * (sig_pd + sig_pd.dag())
    )
    br = p.branching
    channels = [
        CollapseChannel(atomic_operator(space, pp, "S"), br.Gamma_to_S),
        CollapseChannel(atomic_operator(space, pp, "Sp"), br.Gamma_to_Sprime),
        CollapseChannel(atomic_operator(space, pp, d), br.Gamma_to_D),
    ]
    return LindbladGenerator(h, tuple(channels) + tuple(extra))


def dispersive_shift(g: float, Delta: float) -> float:
    """Cavity pull per ion, ``g^2 / Delta`` (rad/s)."""
    if Delta == 0:
        raise ValueError("dispersive shift is undefined at zero detuning")
    return g**2 / Delta


def expected_phase_shift(n_mean: float, p: IonCavityParams, duration: float | None = None) -> float:
    """Linear AC-Stark phase ``duration * g^2/Delta * <n>`` in radians (no build-up transient)."""
    if n_mean < 0:
        raise ValueError("mean photon number must be >= 0")
    duration = p.T if duration is None else duration
    return duration * dispersive_shift(p.g, p.Delta_PL) * n_mean


def photon_lifetime(p: IonCavityParams) -> float:
    """``tau_C = 1 / (2 kappa)``."""
    return 1.0 / (2.0 * p.kappa)


def weak_pull_ratio(p: IonCavityParams) -> float:
    return dispersive_shift(p.g, p.Delta_PL) / p.kappa
