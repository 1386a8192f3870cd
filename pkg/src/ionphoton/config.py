"""JSON experiment configuration.

Frequencies in a config file are ordinary frequencies in MHz (``2 pi x value``
is applied on load), times are in microseconds. Unknown keys are rejected and
every error names the line of the offending key.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .calibration import DetectionChain, PhotodiodeReading
from .model import G_PRIME_FACTOR, IonCavityParams, Transition, mhz
from .ramsey import DEFAULT_POINTS, DEFAULT_TRIALS, CoherenceModel, default_phases

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Schema violation in a configuration file."""


# key -> (type, unit conversion); unit "MHz" means 2 pi x MHz, "us" microseconds, "kHz" 2 pi x kHz
_PARAM_KEYS = {
    "g_MHz": ("g", "MHz"),
    "kappa_MHz": ("kappa", "MHz"),
    "Delta_PL_MHz": ("Delta_PL", "MHz"),
    "Delta_CL_MHz": ("Delta_CL", "MHz"),
    "Delta_DR_MHz": ("Delta_DR", "MHz"),
    "Delta_SSp_MHz": ("Delta_SSp", "MHz"),
    "Gamma_PS_MHz": ("Gamma_PS", "MHz"),
    "Gamma_PD_MHz": ("Gamma_PD", "MHz"),
    "Gamma_PD32_MHz": ("Gamma_PD32", "MHz"),
    "gamma_MHz": ("gamma", "MHz"),
    "T_us": ("T", "us"),
    "n_max": ("n_max", "int"),
    "transition": ("transition", "str"),
    "g_prime_factor": ("g_prime_factor", "float"),
}

_SCHEMA: dict[str, Any] = {
    "schema_version": int,
    "seed": int,
    "trials": int,
    "backend": str,
    "params": {k: None for k in _PARAM_KEYS},
    "drive": {
        "n_coh": float,
        "n_th": float,
        "mean_n": float,
        "thermal_fraction": float,
        "eta_MHz": float,
        "delta_n_MHz": float,
        "self_consistent": bool,
    },
    "coherence": {"B0": float, "contrast_at_vacuum": float, "mode": str},
    "phases": {"points": int, "values": list},
    "fit": {"n_mean_hint": float, "pin_offset": bool, "phase_hint": float},
    "sweep": {"n_values": list, "transitions": list, "self_consistent": bool},
    "reconstruction": {
        "phase_offset_pi": float,
        "fit_phase_offset": bool,
        "max_iter": int,
        "workers": int,
        "inner_backend": str,
        "min_samples": int,
        "max_samples": int,
    },
    "phase_resolution": {"repetitions": int, "n_mean": float, "transitions": list},
    "detection": {
        "p_out": float,
        "zeta": float,
        "c": float,
        "T_us": float,
        "kappa_MHz": float,
        "repetitions": int,
        "p_out_err": float,
        "epsilon_err": float,
        "counts": float,
        "V_DC": float,
        "V_AC": float,
        "C": float,
        "thermal_share": float,
    },
    "strong_pull": {"detuning_factor": float, "rows": list},
}

_STRONG_PULL_ROW = {"name": str, "g_MHz": float, "gamma_MHz": float, "kappa_kHz": float, "Delta_MHz": float}


def _line_of(text: str, path: tuple[str, ...]) -> int | None:
    """Line number of the key at ``path`` (best effort: each key searched after its parent)."""
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


@dataclass(frozen=True)
class ExperimentConfig:
    params: IonCavityParams
    coherence: CoherenceModel
    phases: tuple[float, ...]
    trials: int | None
    seed: int
    backend: str
    drive: dict
    fit: dict
    sweep: dict
    reconstruction: dict
    phase_resolution: dict
    detection: DetectionChain
    photodiode: PhotodiodeReading | None
    counts: float | None
    thermal_share: float
    strong_pull: dict
    g_prime_factor: float
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def phase_grid(self) -> np.ndarray:
        return np.array(self.phases)

    def driven_params(self) -> IonCavityParams:
        """Ion-cavity parameters with the configured drive applied."""
        d = self.drive
        p = self.params
        if "eta_MHz" in d or "delta_n_MHz" in d:
            return replace(p, eta=mhz(d.get("eta_MHz", 0.0)), delta_n=mhz(d.get("delta_n_MHz", 0.0)))
        if "mean_n" in d:
            frac = d.get("thermal_fraction", 0.0)
            n_coh, n_th = d["mean_n"] * (1 - frac), d["mean_n"] * frac
        else:
            n_coh, n_th = d.get("n_coh", 0.0), d.get("n_th", 0.0)
        return p.with_drive(n_coh, n_th, self_consistent=d.get("self_consistent", False))

    def model_params(self) -> IonCavityParams:
        """Undriven parameters at the configured drive detuning, as used to fit data."""
        return replace(self.params, Delta_CL=self.driven_params().Delta_CL)

    def resolved(self) -> dict:
        """Internal (rad/s, s) values of everything the run depends on."""
        q = self.driven_params()
        params = {k: (v.value if isinstance(v, Transition) else v) for k, v in asdict(q).items()}
        return {
            "schema_version": SCHEMA_VERSION,
            "params_rad_s": params,
            "coherence": asdict(self.coherence),
            "phases_pi": list(self.phases),
            "trials": self.trials,
            "seed": self.seed,
            "backend": self.backend,
            "drive": dict(sorted(self.drive.items())),
            "fit": dict(sorted(self.fit.items())),
            "sweep": dict(sorted(self.sweep.items())),
            "reconstruction": dict(sorted(self.reconstruction.items())),
            "phase_resolution": dict(sorted(self.phase_resolution.items())),
            "detection": asdict(self.detection),
            "photodiode": asdict(self.photodiode) if self.photodiode else None,
            "counts": self.counts,
            "thermal_share": self.thermal_share,
            "strong_pull": self.strong_pull,
            "g_prime_factor": self.g_prime_factor,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=int(seed))

    def with_backend(self, backend: str | None) -> "ExperimentConfig":
        if backend is None:
            return self
        if backend not in ("full", "eliminated"):
            raise ConfigError(f"backend must be 'full' or 'eliminated', got {backend!r}")
        return replace(self, backend=backend)


def _check_type(value, expected, where: str):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: value must be finite")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {type(value).__name__}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {type(value).__name__}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {type(value).__name__}")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return value
    return value


def _validate(obj: dict, schema: dict, text: str, path: tuple = ()) -> dict:
    def where(key):
        line = _line_of(text, path + (key,))
        loc = ".".join(map(str, path + (key,)))
        return f"line {line}: {loc}" if line else loc

    if not isinstance(obj, dict):
        line = _line_of(text, path)
        raise ConfigError(f"line {line}: {'.'.join(path)} must be an object")
    out = {}
    for key, value in obj.items():
        if key not in schema:
            raise ConfigError(f"{where(key)}: unknown key (allowed: {', '.join(sorted(schema))})")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _validate(value, spec, text, path + (key,))
        elif spec is None:
            out[key] = value
        else:
            out[key] = _check_type(value, spec, where(key))
    return out


def _convert(value, unit: str):
    if unit == "MHz":
        return mhz(value)
    if unit == "us":
        return value * 1e-6
    return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        data = _validate(raw, _SCHEMA, text)
        return _build(data, text)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def default_config() -> ExperimentConfig:
    return parse_config('{"schema_version": 1}')


def _build(data: dict, text: str) -> ExperimentConfig:
    def err(path, msg):
        line = _line_of(text, path)
        return ConfigError(f"line {line}: {'.'.join(path)}: {msg}" if line else f"{'.'.join(path)}: {msg}")

    version = data.get("schema_version")
    if version is None:
        raise ConfigError("missing schema_version")
    if version != SCHEMA_VERSION:
        raise err(("schema_version",), f"unsupported schema version {version}; expected {SCHEMA_VERSION}")

    kwargs: dict[str, Any] = {}
    g_prime = G_PRIME_FACTOR
    for key, value in data.get("params", {}).items():
        name, unit = _PARAM_KEYS[key]
        where = ("params", key)
        if unit == "str":
            value = _check_type(value, str, ".".join(where))
            try:
                kwargs[name] = Transition(value)
            except ValueError:
                raise err(where, f"transition must be one of {[t.value for t in Transition]}") from None
            continue
        if unit == "int":
            kwargs[name] = _check_type(value, int, ".".join(where))
            continue
        value = _check_type(value, float, ".".join(where))
        if name == "g_prime_factor":
            g_prime = value
            continue
        kwargs[name] = _convert(value, unit)
    try:
        params = IonCavityParams(**kwargs)
    except ValueError as exc:
        raise err(("params",), str(exc)) from None

    try:
        coherence = CoherenceModel(**data.get("coherence", {}))
    except ValueError as exc:
        raise err(("coherence",), str(exc)) from None

    ph = data.get("phases", {})
    if "values" in ph and "points" in ph:
        raise err(("phases",), "give either points or values, not both")
    if "values" in ph:
        try:
            phases = tuple(float(v) for v in ph["values"])
        except (TypeError, ValueError):
            raise err(("phases", "values"), "values must be numbers (units of pi)") from None
    else:
        points = ph.get("points", DEFAULT_POINTS)
        if points < 4:
            raise err(("phases", "points"), "a fringe needs at least 4 points")
        phases = tuple(float(v) for v in default_phases(points))
    if len(set(phases)) < 4:
        raise err(("phases",), "a fringe needs at least 4 distinct phases")

    trials = data.get("trials")
    if trials is not None and trials < 1:
        raise err(("trials",), "trials must be >= 1")
    backend = data.get("backend", "full")
    if backend not in ("full", "eliminated"):
        raise err(("backend",), "backend must be 'full' or 'eliminated'")

    drive = data.get("drive", {})
    groups = [k for k in (("n_coh", "n_th"), ("mean_n", "thermal_fraction"), ("eta_MHz", "delta_n_MHz")) if any(x in drive for x in k)]
    if len(groups) > 1:
        raise err(("drive",), "specify the drive one way: (n_coh, n_th), (mean_n, thermal_fraction) or (eta_MHz, delta_n_MHz)")
    for key, value in drive.items():
        if key != "self_consistent" and value < 0:
            raise err(("drive", key), "must be >= 0")
    if not 0 <= drive.get("thermal_fraction", 0.0) <= 1:
        raise err(("drive", "thermal_fraction"), "must lie in [0, 1]")

    sweep = data.get("sweep", {})
    if "n_values" in sweep:
        vals = sweep["n_values"]
        if len(vals) < 2 or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in vals):
            raise err(("sweep", "n_values"), "need at least 2 non-negative photon numbers")
    for key in ("transitions",):
        for t in sweep.get(key, []):
            if t not in ("DP", "DpPp"):
                raise err(("sweep", key), f"unknown transition {t!r}")
    for t in data.get("phase_resolution", {}).get("transitions", []):
        if t not in ("DP", "DpPp"):
            raise err(("phase_resolution", "transitions"), f"unknown transition {t!r}")
    rec = data.get("reconstruction", {})
    if rec.get("inner_backend", "eliminated") not in ("full", "eliminated"):
        raise err(("reconstruction", "inner_backend"), "must be 'full' or 'eliminated'")
    if rec.get("workers", 1) < 1:
        raise err(("reconstruction", "workers"), "must be >= 1")
    pr = data.get("phase_resolution", {})
    if pr.get("repetitions", 50_000) < 1000:
        raise err(("phase_resolution", "repetitions"), "must be >= 1000")

    det = dict(data.get("detection", {}))
    pd_keys = {k: det.pop(k) for k in ("V_DC", "V_AC", "C") if k in det}
    counts = det.pop("counts", None)
    thermal_share = det.pop("thermal_share", 0.0)
    if "T_us" in det:
        det["T"] = det.pop("T_us") * 1e-6
    if "kappa_MHz" in det:
        det["kappa"] = mhz(det.pop("kappa_MHz"))
    else:
        det["kappa"] = params.kappa
    try:
        chain = DetectionChain(**det)
        photodiode = None
        if pd_keys:
            if set(pd_keys) != {"V_DC", "V_AC", "C"}:
                raise ValueError("photodiode calibration needs V_DC, V_AC and C together")
            photodiode = PhotodiodeReading(**pd_keys)
        if counts is not None and counts < 0:
            raise ValueError("counts must be >= 0")
    except ValueError as exc:
        raise err(("detection",), str(exc)) from None

    sp = data.get("strong_pull", {})
    rows = []
    for i, row in enumerate(sp.get("rows", [])):
        rows.append(_validate(row, _STRONG_PULL_ROW, text, ("strong_pull", "rows")))
        if not {"g_MHz", "kappa_kHz"} <= set(row) or not ({"gamma_MHz"} & set(row) or {"Delta_MHz"} & set(row)):
            raise err(("strong_pull", "rows"), f"row {i} needs g_MHz, kappa_kHz and gamma_MHz or Delta_MHz")
    strong_pull = {"detuning_factor": sp.get("detuning_factor", 10.0), "rows": rows}

    return ExperimentConfig(
        params=params,
        coherence=coherence,
        phases=phases,
        trials=trials,
        seed=data.get("seed", 0),
        backend=backend,
        drive=drive,
        fit=data.get("fit", {}),
        sweep=sweep,
        reconstruction=rec,
        phase_resolution=pr,
        detection=chain,
        photodiode=photodiode,
        counts=counts,
        thermal_share=thermal_share,
        strong_pull=strong_pull,
        g_prime_factor=g_prime,
        raw=data,
    )


__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "load_config",
    "parse_config",
    "DEFAULT_TRIALS",
]
