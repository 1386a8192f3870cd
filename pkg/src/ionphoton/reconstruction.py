"""Maximum-likelihood reconstruction of the cavity photon-number distribution.

A measured Ramsey fringe is explained by the two cavity drive parameters
``eta`` (coherent amplitude) and ``delta_n`` (incoherent, thermal rate). The
log-likelihood of the binomial excitation data is maximised with a Nelder-Mead
simplex in log coordinates; the photon distribution is the diagonal of the
reduced cavity state at the optimum. Projection-noise uncertainties come from
a seeded Monte-Carlo resampling of the fringe.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .model import IonCavityParams, dispersive_shift
from .ramsey import (
    DEFAULT_TRIALS,
    CoherenceModel,
    FitError,
    Fringe,
    cavity_distribution,
    default_phases,
    fit_fringe,
    fit_phases_batch,
    point_rng,
    post_interaction_state,
    sample_projection_noise,
    simulate_fringe,
)

P_CLAMP = 1e-12
LOG_FLOOR_FACTOR = 1e-6
TAIL_LIMIT = 1e-3


class ReconstructionError(RuntimeError):
    """The optimiser or the Monte-Carlo loop could not produce a result."""


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class DriveParams:
    eta: float
    delta_n: float

    def __post_init__(self):
        for name in ("eta", "delta_n"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    def apply(self, p: IonCavityParams) -> IonCavityParams:
        return replace(p, eta=self.eta, delta_n=self.delta_n)

    @classmethod
    def from_photon_numbers(cls, n_coh: float, n_th: float, p: IonCavityParams) -> "DriveParams":
        q = p.with_drive(n_coh, n_th)
        return cls(q.eta, q.delta_n)


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).copy()
        if p.ndim != 1 or p.size < 2:
            raise ValueError("a photon distribution needs at least p(0) and p(1)")
        if np.any(p < -1e-9) or np.any(p > 1 + 1e-9) or not np.all(np.isfinite(p)):
            raise ValueError("photon-number probabilities must lie in [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"photon-number probabilities sum to {p.sum():.9f}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n_max(self) -> int:
        return self.p.size - 1

    @property
    def mean(self) -> float:
        return float(np.arange(self.p.size) @ self.p)

    @property
    def second_moment(self) -> float:
        return float(np.arange(self.p.size) ** 2 @ self.p)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def tail(self) -> float:
        return float(self.p[-1])

    @property
    def accepted(self) -> bool:
        """Whether the truncation tail ``p(n_max)`` is below 1e-3."""
        return self.tail < TAIL_LIMIT

    def mandel_q(self) -> float | None:
        return mandel_q(self)


def mandel_q(dist: PhotonDistribution) -> float | None:
    """``(<n^2> - <n>^2) / <n> - 1``; ``None`` for the vacuum, where it is undefined."""
    mean = dist.mean
    if mean <= 0:
        return None
    return dist.variance / mean - 1.0


def sso(p1: PhotonDistribution, p2: PhotonDistribution) -> float:
    """Squared statistical overlap ``(sum_n sqrt(p1(n) p2(n)))^2``."""
    if p1.p.size != p2.p.size:
        raise ValueError(f"distributions truncated differently: {p1.n_max} vs {p2.n_max}")
    # sort the products so the sum (and hence the value) is symmetric to the last bit
    terms = np.sort(np.sqrt(p1.p * p2.p))
    return float(min(1.0, math.fsum(terms) ** 2))


def displaced_thermal(n_coh: float, n_th: float, n_max: int) -> PhotonDistribution:
    """Photon statistics of a coherent amplitude on top of thermal noise, renormalised at ``n_max``.

    ``p(n) = n_th^n / (1+n_th)^(n+1) exp(-n_coh/(1+n_th)) L_n(-n_coh / (n_th (1+n_th)))``,
    reducing to Poisson for ``n_th = 0`` and Bose-Einstein for ``n_coh = 0``.
    """
    if n_coh < 0 or n_th < 0:
        raise ValueError("photon numbers must be >= 0")
    n = np.arange(n_max + 1)
    if n_th == 0:
        logp = -n_coh + n * math.log(n_coh) - np.array([math.lgamma(k + 1) for k in n]) if n_coh > 0 else None
        p = np.exp(logp) if logp is not None else (n == 0).astype(float)
    else:
        x = -n_coh / (n_th * (1 + n_th))
        lag = np.empty(n_max + 1)
        lag[0] = 1.0
        if n_max >= 1:
            lag[1] = 1.0 - x
        for k in range(1, n_max):
            lag[k + 1] = ((2 * k + 1 - x) * lag[k] - k * lag[k - 1]) / (k + 1)
        p = n_th**n / (1 + n_th) ** (n + 1) * math.exp(-n_coh / (1 + n_th)) * lag
    return PhotonDistribution(p / p.sum())


@dataclass(frozen=True, eq=False)
class Uncertainty:
    delta_eta: float
    delta_delta_n: float
    samples: int
    failures: int
    converged: bool
    eta_mean: float
    delta_n_mean: float
    upper: PhotonDistribution
    lower: PhotonDistribution
    spot_check_max_deviation: float = 0.0
    spot_checks: int = 0
    mean_n_mean: float = math.nan
    mean_n_std: float = math.nan

    def __post_init__(self):
        if self.delta_eta < 0 or self.delta_delta_n < 0:
            raise ValueError("uncertainties must be >= 0")

    @property
    def mean_n_bounds(self) -> tuple[float, float]:
        return self.lower.mean, self.upper.mean

    @property
    def mandel_q_bounds(self) -> tuple[float | None, float | None]:
        qs = [q for q in (mandel_q(self.lower), mandel_q(self.upper))]
        if any(q is None for q in qs):
            return tuple(qs)
        return min(qs), max(qs)

    def to_dict(self) -> dict:
        q_lo, q_hi = self.mandel_q_bounds
        return {
            "delta_eta_rad_s": self.delta_eta,
            "delta_delta_n_rad_s": self.delta_delta_n,
            "eta_mean_rad_s": self.eta_mean,
            "delta_n_mean_rad_s": self.delta_n_mean,
            "samples": self.samples,
            "failures": self.failures,
            "converged": self.converged,
            "mean_n_lower": self.lower.mean,
            "mean_n_upper": self.upper.mean,
            "mandel_q_lower": q_lo,
            "mandel_q_upper": q_hi,
            "p_n_lower": self.lower.p.tolist(),
            "p_n_upper": self.upper.p.tolist(),
            "spot_checks": self.spot_checks,
            "spot_check_max_deviation": self.spot_check_max_deviation,
            "mean_n_sample_mean": self.mean_n_mean,
            "mean_n_sample_std": self.mean_n_std,
        }


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    drive: DriveParams
    distribution: PhotonDistribution
    n_coh: float
    n_th: float
    log_likelihood: float
    iterations: int
    converged: bool
    seed: int | None = None
    phase_offset: float = 0.0
    uncertainty: Uncertainty | None = None

    def __post_init__(self):
        if not math.isfinite(self.log_likelihood):
            raise ValueError("log-likelihood must be finite")

    @property
    def mean_n(self) -> float:
        return self.distribution.mean

    @property
    def mandel_q(self) -> float | None:
        return mandel_q(self.distribution)

    def to_dict(self) -> dict:
        out = {
            "eta_rad_s": self.drive.eta,
            "delta_n_rad_s": self.drive.delta_n,
            "n_coh": self.n_coh,
            "n_th": self.n_th,
            "p_n": self.distribution.p.tolist(),
            "mean_n": self.mean_n,
            "mandel_q": self.mandel_q,
            "log_likelihood": self.log_likelihood,
            "seed": self.seed,
            "iterations": self.iterations,
            "converged": self.converged,
            "phase_offset_pi": self.phase_offset,
        }
        if self.uncertainty is not None:
            out["uncertainty"] = self.uncertainty.to_dict()
        return out


# ---------------------------------------------------------------- likelihood


def model_fringe(
    d: DriveParams,
    phases,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    backend: str = "eliminated",
    phase_offset: float = 0.0,
) -> np.ndarray:
    """Model probabilities ``P_k`` at drive ``d``; ``phase_offset`` (units of pi) shifts the fringe."""
    phases = np.asarray(phases, dtype=float)
    fr = simulate_fringe(d.apply(p), phases - phase_offset, coh, backend, check=False)
    return fr.p_D


def binomial_log_likelihood(f, P) -> float:
    """``sum f log P + (1 - f) log(1 - P)`` with ``P`` clamped away from 0 and 1."""
    f = np.asarray(f, dtype=float)
    P = np.clip(np.asarray(P, dtype=float), P_CLAMP, 1 - P_CLAMP)
    value = float(np.sum(f * np.log(P) + (1 - f) * np.log1p(-P)))
    if not math.isfinite(value):
        raise ReconstructionError("non-finite log-likelihood")
    return value


def log_likelihood(
    fringe: Fringe,
    d: DriveParams,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    backend: str = "eliminated",
    phase_offset: float = 0.0,
) -> float:
    """Binomial log-likelihood of the fringe under drive ``d`` (additive constant dropped)."""
    return binomial_log_likelihood(fringe.p_D, model_fringe(d, fringe.phases, p, coh, backend, phase_offset))


# ---------------------------------------------------------------- Nelder-Mead


@dataclass(frozen=True, eq=False)
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    simplex: np.ndarray = field(repr=False)


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0,
    step=0.1,
    f_tol: float = 1e-6,
    x_tol: float = 1e-4,
    max_iter: int = 200,
    lower=None,
    spread: Callable[[np.ndarray], float] | None = None,
) -> SimplexResult:
    """Minimise ``fun`` with the Nelder-Mead simplex.

    Reflection, expansion, contraction and shrink coefficients are 1, 2, 0.5
    and 0.5. Trial points are projected onto ``x >= lower`` when a lower bound
    is given. The search stops once the spread of function values over the
    simplex is below ``f_tol`` and the parameter spread is below ``x_tol``;
    ``spread`` overrides the default parameter spread, the largest coordinate
    distance of any vertex from the best one.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    lo = None if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (n,))

    def project(x):
        return x if lo is None else np.maximum(x, lo)

    if spread is None:

        def spread(s):
            return float(np.max(np.abs(s[1:] - s[0])))

    evaluations = 0

    def f(x):
        nonlocal evaluations
        evaluations += 1
        return float(fun(x))

    simplex = [project(x0)]
    for i in range(n):
        v = x0.copy()
        v[i] += step[i]
        v = project(v)
        if np.allclose(v, simplex[0]):
            v = x0.copy()
            v[i] -= step[i]
        simplex.append(project(v))
    simplex = np.array(simplex)
    values = np.array([f(v) for v in simplex])

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if values[-1] - values[0] < f_tol and spread(simplex) < x_tol:
            converged = True
            it -= 1
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = project(centroid + (centroid - worst))
        fr = f(xr)
        if fr < values[0]:
            xe = project(centroid + 2.0 * (centroid - worst))
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = project(centroid + 0.5 * (xr - centroid))
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = project(centroid + 0.5 * (worst - centroid))
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        for k in range(1, n + 1):
            simplex[k] = project(best + 0.5 * (simplex[k] - best))
            values[k] = f(simplex[k])
    else:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        converged = values[-1] - values[0] < f_tol and spread(simplex) < x_tol
    return SimplexResult(simplex[0].copy(), float(values[0]), it, evaluations, converged, simplex)


# ---------------------------------------------------------------- reconstruction


def _contrast_of(d: DriveParams, p, coh, backend, phases) -> tuple[float, float]:
    fr = simulate_fringe(d.apply(p), phases, coh, backend, check=False)
    fit = fit_fringe(fr)
    return fit.contrast, fit.phase_shift


def initial_guess(
    fringe: Fringe,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    backend: str = "eliminated",
    phase_offset: float = 0.0,
    fractions: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> DriveParams:
    """Starting drive from the fringe fit.

    The mean photon number follows from the fitted shift divided by the
    linear phase per photon ``T g^2/Delta``; its coherent/thermal split is the
    thermal fraction whose simulated contrast (tabulated on demand at that
    mean) best matches the fitted contrast, interpolated linearly.
    """
    try:
        fit = fit_fringe(fringe, phase_hint=phase_offset + 0.25)
    except FitError:
        return DriveParams(p.kappa * 0.1, p.kappa * 0.01)
    per_photon = abs(p.T * dispersive_shift(p.g, p.Delta_PL)) / math.pi
    n_est = float(np.clip((fit.phase_shift - phase_offset) / per_photon, 1e-3, 0.8 * p.n_max / 3))
    phases = default_phases(16)
    table = []
    for frac in fractions:
        d = DriveParams.from_photon_numbers(n_est * (1 - frac), n_est * frac, p)
        table.append(_contrast_of(d, p, coh, backend, phases)[0])
    table = np.array(table)
    target = fit.contrast
    frac = float(fractions[int(np.argmin(np.abs(table - target)))])
    # refine between the two bracketing table entries
    for k in range(len(fractions) - 1):
        a, b = table[k], table[k + 1]
        if (a - target) * (b - target) <= 0 and a != b:
            frac = fractions[k] + (target - a) / (b - a) * (fractions[k + 1] - fractions[k])
            break
    return DriveParams.from_photon_numbers(n_est * (1 - frac), n_est * frac, p)


def starting_points(
    fringe: Fringe,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    backend: str = "eliminated",
    phase_offset: float = 0.0,
) -> list[DriveParams]:
    """Simplex starts: the contrast-table guess plus a pure-coherent and a mostly thermal split.

    Near one photon a coherent and a largely thermal field give almost the
    same fringe (thermal light builds up faster but dephases no more), so the
    likelihood has two shallow basins; starting in both avoids stopping in
    the worse one.
    """
    guess = initial_guess(fringe, p, coh, backend, phase_offset)
    q = guess.apply(p)
    n_est = max(q.n_coh + q.n_th, 1e-3)
    return [
        guess,
        DriveParams.from_photon_numbers(n_est, 0.0, p),
        DriveParams.from_photon_numbers(0.2 * n_est, 0.8 * n_est, p),
    ]


def reconstruct(
    fringe: Fringe,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    init: DriveParams | None = None,
    backend: str = "eliminated",
    max_iter: int = 200,
    phase_offset: float = 0.0,
    fit_phase_offset: bool = False,
    seed: int | None = None,
    distribution: bool = True,
) -> ReconstructionResult:
    """Maximum-likelihood ``(eta, delta_n)`` for ``fringe``.

    The simplex runs over ``(log eta, log delta_n)`` with both floored at
    ``1e-6 kappa``. Without ``init`` it is started from each of
    :func:`starting_points` and the best optimum is kept; ``iterations`` then
    counts all runs. A known static fringe offset ``phase_offset`` (units of
    pi) can be supplied, or refitted as a third simplex coordinate with
    ``fit_phase_offset``. Non-convergence within ``max_iter`` is flagged on
    the result rather than raised.
    """
    coh = coh or CoherenceModel()
    if np.ptp(fringe.p_D) < 1e-12:
        raise ReconstructionError("constant fringe carries no phase information")
    floor = LOG_FLOOR_FACTOR * p.kappa
    starts = [init] if init is not None else starting_points(fringe, p, coh, backend, phase_offset)
    lower = [math.log(floor)] * 2 + ([-math.inf] if fit_phase_offset else [])
    step = [0.2, 1.0] + ([0.02] if fit_phase_offset else [])

    def unpack(x):
        d = DriveParams(math.exp(x[0]), math.exp(x[1]))
        return d, (float(x[2]) if fit_phase_offset else phase_offset)

    def objective(x):
        d, off = unpack(x)
        return -log_likelihood(fringe, d, p, coh, backend, off)

    scale = 1e-3 * p.kappa

    def spread(s):
        nat = np.exp(s[:, :2])
        rel = np.max(np.abs(nat[1:] - nat[0]) / np.maximum(nat[0], scale))
        if fit_phase_offset:
            rel = max(rel, float(np.max(np.abs(s[1:, 2] - s[0, 2]))))
        return float(rel)

    best = None
    iterations = 0
    for start in starts:
        x0 = [math.log(max(start.eta, floor)), math.log(max(start.delta_n, floor))]
        if fit_phase_offset:
            x0.append(phase_offset)
        res = nelder_mead(objective, x0, step, f_tol=1e-6, x_tol=1e-4, max_iter=max_iter, lower=lower, spread=spread)
        iterations += res.iterations
        if best is None or res.fun < best.fun:
            best = res
    d, off = unpack(best.x)
    n_coh, n_th = _photon_numbers(d, p)
    if distribution:
        dist = distribution_at(d, p, coh, backend)
    else:
        dist = displaced_thermal(n_coh, n_th, p.n_max)
    return ReconstructionResult(d, dist, n_coh, n_th, -best.fun, iterations, best.converged, seed, off)


def _photon_numbers(d: DriveParams, p: IonCavityParams) -> tuple[float, float]:
    q = d.apply(p)
    return q.n_coh, q.n_th


def distribution_at(d: DriveParams, p: IonCavityParams, coh: CoherenceModel | None = None, backend: str = "eliminated"):
    """Reduced cavity distribution after the interaction at drive ``d``."""
    rho = post_interaction_state(d.apply(p), coh or CoherenceModel(), backend)
    diag = cavity_distribution(rho)
    return PhotonDistribution(diag / diag.sum())


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class _Job:
    fringe: Fringe
    p: IonCavityParams
    coh: CoherenceModel
    backend: str
    init: DriveParams
    seed: int
    trials: int
    phase_offset: float
    spot_every: int


def _one_sample(job: _Job, index: int):
    """Reconstruct the ``index``-th resampled fringe; returns (eta, delta_n, spot deviation) or None."""
    noisy = sample_projection_noise(job.fringe, job.trials, job.seed, index)
    try:
        res = reconstruct(
            noisy, job.p, job.coh, job.init, job.backend, phase_offset=job.phase_offset, distribution=False
        )
    except (ReconstructionError, FitError, ValueError):
        return None
    if not res.converged:
        return None
    spot = None
    if job.spot_every and index % job.spot_every == 0 and job.backend != "full":
        fast = model_fringe(res.drive, noisy.phases, job.p, job.coh, job.backend, job.phase_offset)
        full = model_fringe(res.drive, noisy.phases, job.p, job.coh, "full", job.phase_offset)
        spot = float(np.max(np.abs(fast - full)))
    return res.drive.eta, res.drive.delta_n, spot


def _run_batch(job: _Job, indices: Sequence[int]):
    return [_one_sample(job, i) for i in indices]


def _std_settled(previous: float, current: float, rel: float, abs_floor: float) -> bool:
    return abs(current - previous) <= rel * max(current, abs_floor)


def monte_carlo_uncertainty(
    fringe: Fringe,
    result: ReconstructionResult,
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    seed: int = 0,
    trials: int | None = None,
    backend: str = "eliminated",
    workers: int = 1,
    batch: int = 25,
    min_samples: int = 100,
    max_samples: int = 2000,
    rel_change: float = 0.05,
    max_failure_rate: float = 0.2,
    spot_every: int = 50,
) -> Uncertainty:
    """Projection-noise uncertainty of a reconstruction.

    Each sample resamples the measured ``f_k`` with ``Binomial(trials, f_k)``
    from the stream ``(seed, index)`` and re-runs the reconstruction. Every
    ``batch`` samples, once ``min_samples`` are in, the standard deviations
    of ``eta`` and ``delta_n`` are compared with those one batch earlier;
    sampling stops when both changed by less than ``rel_change``. Failed
    inner reconstructions are dropped and counted; a failure rate above
    ``max_failure_rate`` aborts. Every ``spot_every``-th sample compares the
    fast backend with the full model at the inner optimum.
    The sample mean and spread of the implied bare-cavity ``n_coh + n_th``
    are reported too; along
    the nearly flat coherent/thermal direction the ``(eta, delta_n)`` samples
    are skewed, while ``<n>`` stays tightly determined.
    Results do not depend on ``workers``.
    """
    coh = coh or CoherenceModel()
    trials = fringe.trials if trials is None else int(trials)
    job = _Job(fringe, p, coh, backend, result.drive, int(seed), trials, result.phase_offset, spot_every)
    samples: list[tuple[float, float]] = []
    spots: list[float] = []
    failures = 0
    attempted = 0
    prev_std = None
    converged = False
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    floor = 1e-3 * p.kappa
    try:
        while attempted < max_samples:
            indices = list(range(attempted, min(attempted + batch, max_samples)))
            if pool is None:
                outcomes = _run_batch(job, indices)
            else:
                chunks = [indices[k::workers] for k in range(workers)]
                parts = list(pool.map(_run_batch, [job] * workers, chunks))
                by_index = {}
                for chunk, part in zip(chunks, parts):
                    by_index.update(zip(chunk, part))
                outcomes = [by_index[i] for i in indices]
            attempted += len(indices)
            for out in outcomes:
                if out is None:
                    failures += 1
                    continue
                samples.append(out[:2])
                if out[2] is not None:
                    spots.append(out[2])
            if failures > max_failure_rate * attempted:
                raise ReconstructionError(
                    f"{failures} of {attempted} Monte-Carlo reconstructions failed (> {max_failure_rate:.0%})"
                )
            if len(samples) < 2:
                continue
            std = np.std(np.array(samples), axis=0, ddof=1)
            if attempted >= min_samples and prev_std is not None:
                if all(_std_settled(a, b, rel_change, floor * 1e-3) for a, b in zip(prev_std, std)):
                    converged = True
                    break
            prev_std = std
    finally:
        if pool is not None:
            pool.shutdown()
    arr = np.array(samples)
    d_eta, d_dn = (float(x) for x in np.std(arr, axis=0, ddof=1))
    n_samples = np.array([sum(_photon_numbers(DriveParams(e, d), p)) for e, d in samples])
    eta, dn = result.drive.eta, result.drive.delta_n
    upper = distribution_at(DriveParams(eta + d_eta, dn + d_dn), p, coh, backend)
    lower = distribution_at(DriveParams(max(eta - d_eta, 0.0), max(dn - d_dn, 0.0)), p, coh, backend)
    return Uncertainty(
        delta_eta=d_eta,
        delta_delta_n=d_dn,
        samples=len(samples),
        failures=failures,
        converged=converged,
        eta_mean=float(arr[:, 0].mean()),
        delta_n_mean=float(arr[:, 1].mean()),
        upper=upper,
        lower=lower,
        spot_check_max_deviation=max(spots) if spots else 0.0,
        spot_checks=len(spots),
        mean_n_mean=float(n_samples.mean()),
        mean_n_std=float(n_samples.std(ddof=1)),
    )


# ---------------------------------------------------------------- phase resolution


@dataclass(frozen=True)
class PhaseResolution:
    delta_phi: float  # units of pi
    delta_n_bar: float
    sigma_phi: float  # units of pi
    repetitions: int
    failures: int


def phase_resolution(
    p: IonCavityParams,
    coh: CoherenceModel | None = None,
    repetitions: int = 50_000,
    seed: int = 0,
    trials: int = DEFAULT_TRIALS,
    n_mean: float = 1.0,
    backend: str = "full",
    chunk: int = 5000,
) -> PhaseResolution:
    """Smallest resolvable phase ``2 sigma_phi`` and the matching photon number.

    A reference fringe at ``n_mean`` is resampled ``repetitions`` times with
    binomial projection noise and refitted; ``sigma_phi`` is the spread of
    the fitted shifts and ``delta_n_bar = delta_phi / (T g^2 / Delta)``.
    """
    if repetitions < 1000:
        raise ValueError("phase resolution needs at least 1000 repetitions")
    coh = coh or CoherenceModel()
    ref = simulate_fringe(p.with_drive(n_mean), coh=coh, backend=backend, trials=trials)
    hint = fit_fringe(ref).phase_shift
    rng = point_rng(seed, 0)
    fitted = []
    failures = 0
    for start in range(0, repetitions, chunk):
        size = min(chunk, repetitions - start)
        data = rng.binomial(trials, np.broadcast_to(ref.p_D, (size, ref.p_D.size))) / trials
        phi = fit_phases_batch(ref.phases, data, phase_hint=hint)
        ok = np.isfinite(phi)
        failures += int(np.sum(~ok))
        fitted.append(phi[ok])
    phi = np.concatenate(fitted)
    sigma = float(np.std(phi, ddof=1))
    delta_phi = 2 * sigma
    per_photon = abs(p.T * dispersive_shift(p.g, p.Delta_PL)) / math.pi
    return PhaseResolution(delta_phi, delta_phi / per_photon, sigma, phi.size, failures)
