"""Photon-number calibration from detector counts and photodiode voltages.

Also holds the strong-pull feasibility arithmetic. Everything here is plain
arithmetic on floats; rates are angular (rad/s) unless a name says ``_hz``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import mhz

SPEED_OF_LIGHT = 299_792_458.0
SYSTEMATIC_MEAN_N = 0.20


@dataclass(frozen=True)
class DetectionChain:
    """Cavity output to single-photon counter.

    Parameters
    ----------
    p_out
        Probability that an intracavity photon leaves through the output mirror.
    zeta
        Path and detector efficiency after the mirror; ``epsilon = p_out * zeta``.
    c
        Build-up correction: the fraction of the steady-state photon number
        integrated over a window that starts with an empty cavity.
    T
        Counting window, s.
    kappa
        Cavity field decay rate, rad/s. Photons leave at ``2 kappa``.
    repetitions
        Number of experimental cycles whose counts are summed.
    p_out_err, epsilon_err
        One-sigma input uncertainties used for first-order propagation.
    """

    p_out: float = 0.11
    zeta: float = 0.4041
    c: float = 0.922
    T: float = 50e-6
    kappa: float = mhz(0.068)
    repetitions: int = 250
    p_out_err: float = 0.02
    epsilon_err: float = 0.01

    def __post_init__(self):
        for name in ("p_out", "zeta", "c"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability in [0, 1], got {v}")
        if self.c == 0:
            raise ValueError("build-up correction c must be > 0")
        if not (self.T > 0 and self.kappa > 0):
            raise ValueError("window T and kappa must be > 0")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")
        if self.p_out_err < 0 or self.epsilon_err < 0:
            raise ValueError("uncertainties must be >= 0")

    @property
    def epsilon(self) -> float:
        """Total detection efficiency ``p_out * zeta``."""
        return self.p_out * self.zeta

    @property
    def rate_hz(self) -> float:
        """Count rate for one intracavity photon, ``2 kappa epsilon`` (counts/s)."""
        return 2 * self.kappa * self.epsilon

    @property
    def C0(self) -> float:
        """Expected counts per photon over the window and all repetitions, steady state."""
        return self.rate_hz * self.T * self.repetitions

    @property
    def C1(self) -> float:
        """Counts per photon corrected for the cavity build-up, ``C0 / c``."""
        return self.C0 / self.c

    @property
    def C1_relative_error(self) -> float:
        """First-order relative uncertainty of ``C1``; only ``epsilon`` enters."""
        return self.epsilon_err / self.epsilon if self.epsilon > 0 else math.inf


def mean_n_from_counts(C: float, chain: DetectionChain | None = None) -> float:
    """``<n> = C / C1``."""
    if C < 0:
        raise ValueError(f"counts must be >= 0, got {C}")
    chain = chain or DetectionChain()
    return C / chain.C1


def expected_counts(n_mean: float, chain: DetectionChain | None = None) -> float:
    """Inverse of :func:`mean_n_from_counts`."""
    if n_mean < 0:
        raise ValueError("mean photon number must be >= 0")
    chain = chain or DetectionChain()
    return n_mean * chain.C1


@dataclass(frozen=True)
class CalibratedMean:
    mean_n: float
    statistical: float
    systematic: float

    def as_dict(self) -> dict:
        return {"mean_n": self.mean_n, "statistical": self.statistical, "systematic": self.systematic}


def calibrate_counts(C: float, chain: DetectionChain | None = None, systematic: float = SYSTEMATIC_MEAN_N) -> CalibratedMean:
    """Mean photon number with first-order statistical and separate systematic uncertainty.

    The statistical part combines Poisson noise on ``C`` with the efficiency
    uncertainty of ``C1``; the systematic part is ``systematic * <n>`` and is
    never added to it.
    """
    chain = chain or DetectionChain()
    n = mean_n_from_counts(C, chain)
    rel2 = chain.C1_relative_error**2 + (1.0 / C if C > 0 else 0.0)
    return CalibratedMean(n, n * math.sqrt(rel2), systematic * n)


@dataclass(frozen=True)
class PhotodiodeReading:
    """Photodiode record of the cavity drive together with the counter reading.

    ``V_DC`` is the offset voltage under coherent drive, ``V_AC`` the amplitude
    of the noise oscillations on top and ``C`` the detector counts that go with
    ``V_DC``.
    """

    V_DC: float
    V_AC: float
    C: float

    def __post_init__(self):
        if self.V_DC < 0 or self.V_AC < 0:
            raise ValueError("photodiode voltages must be >= 0")
        if self.C < 0:
            raise ValueError("counts must be >= 0")


@dataclass(frozen=True)
class ThermalCalibration:
    n_coh: float
    delta_n: float
    S_V: float
    thermal_counts: float
    kappa: float

    @property
    def n_th(self) -> float:
        return self.delta_n / self.kappa


def thermal_from_photodiode(
    r: PhotodiodeReading, chain: DetectionChain | None = None, thermal_share: float = 0.0
) -> ThermalCalibration:
    """Split a noisy drive into coherent and thermal photon numbers.

    ``S_V = C / V_DC`` converts volts to counts, the thermal part is
    ``delta_n = kappa S_V V_AC / C1`` and the coherent part is
    ``n_coh = (C - thermal_share * S_V * V_AC) / C1``. With the default
    ``thermal_share = 0`` the counts ``C`` are taken to be the coherent
    calibration alone.
    """
    chain = chain or DetectionChain()
    if r.V_DC == 0:
        raise ValueError("V_DC must be > 0 to convert voltages to counts")
    if thermal_share < 0:
        raise ValueError("thermal_share must be >= 0")
    S_V = r.C / r.V_DC
    thermal_counts = S_V * r.V_AC
    delta_n = chain.kappa * thermal_counts / chain.C1
    n_coh = (r.C - thermal_share * thermal_counts) / chain.C1
    if n_coh < 0:
        raise ValueError("thermal share exceeds the measured counts")
    return ThermalCalibration(n_coh, delta_n, S_V, thermal_counts, chain.kappa)


def strong_pull_ratio(
    g: float, gamma: float, kappa: float, detuning_factor: float = 10.0, detuning: float | None = None
) -> float:
    """``g^2 / (Delta kappa)`` with ``Delta = detuning_factor * gamma`` unless ``detuning`` is given."""
    if detuning is None:
        if not (gamma > 0 and detuning_factor > 0):
            raise ValueError("gamma and detuning_factor must be > 0")
        detuning = detuning_factor * gamma
    if not (g > 0 and kappa > 0 and detuning > 0):
        raise ValueError("rates must be > 0")
    return g**2 / (detuning * kappa)


@dataclass(frozen=True)
class MirrorCavity:
    finesse: float
    photon_lifetime: float
    kappa: float
    output_coupling: float


def mirror_cavity(transmission: float, loss: float, length: float) -> MirrorCavity:
    """Two identical mirrors: finesse, photon lifetime, field decay rate, one-sided coupling.

    ``F = pi / (T + A)``, ``tau = L / (c (T + A))``, ``kappa = 1 / (2 tau)`` and
    output coupling ``T / (2T + 2A)``.
    """
    if transmission < 0 or loss < 0 or transmission + loss == 0 or length <= 0:
        raise ValueError("need non-negative mirror losses with T + A > 0 and a positive length")
    total = transmission + loss
    tau = length / (SPEED_OF_LIGHT * total)
    return MirrorCavity(math.pi / total, tau, 1.0 / (2.0 * tau), transmission / (2.0 * total))
