"""Non-destructive photon-statistics analysis with a trapped ion in an optical cavity.

Modules
-------
quantum
    Hilbert spaces, operators and density matrices with invariant checks.
lindblad
    Lindblad generators and an RK4 integrator.
model
    Ion-cavity parameters, Hamiltonian and decay channels.
ramsey
    Ramsey fringes, projection noise and sinusoid fits.
reconstruction
    Maximum-likelihood photon-number reconstruction and uncertainties.
calibration
    Detector-count and photodiode calibration, strong-pull estimates.
config, cli
    JSON configuration and the ``ionphoton`` command line.
"""
from .calibration import (
    DetectionChain,
    PhotodiodeReading,
    calibrate_counts,
    mean_n_from_counts,
    mirror_cavity,
    strong_pull_ratio,
    thermal_from_photodiode,
)
from .lindblad import CollapseChannel, LindbladGenerator, evolve, steady_state
from .model import IonCavityParams, Transition, build_generator, dispersive_shift, khz, mhz
from .quantum import DensityMatrix, HilbertSpace, InvariantError, Operator
from .ramsey import CoherenceModel, Fringe, FringeFit, fit_fringe, sample_projection_noise, simulate_fringe
from .reconstruction import (
    DriveParams,
    PhotonDistribution,
    ReconstructionResult,
    displaced_thermal,
    mandel_q,
    monte_carlo_uncertainty,
    phase_resolution,
    reconstruct,
    sso,
)

__version__ = "0.1.0"

__all__ = [
    "CoherenceModel",
    "CollapseChannel",
    "DensityMatrix",
    "DetectionChain",
    "DriveParams",
    "Fringe",
    "FringeFit",
    "HilbertSpace",
    "InvariantError",
    "IonCavityParams",
    "LindbladGenerator",
    "Operator",
    "PhotodiodeReading",
    "PhotonDistribution",
    "ReconstructionResult",
    "Transition",
    "build_generator",
    "calibrate_counts",
    "dispersive_shift",
    "displaced_thermal",
    "evolve",
    "fit_fringe",
    "khz",
    "mandel_q",
    "mean_n_from_counts",
    "mhz",
    "mirror_cavity",
    "monte_carlo_uncertainty",
    "phase_resolution",
    "reconstruct",
    "sample_projection_noise",
    "simulate_fringe",
    "sso",
    "steady_state",
    "strong_pull_ratio",
    "thermal_from_photodiode",
]
