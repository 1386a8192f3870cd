"""Command-line interface: ``ionphoton <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 input/output error. Every output embeds the resolved-config hash and the
seed; identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .calibration import (
    calibrate_counts,
    strong_pull_ratio,
    thermal_from_photodiode,
)
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .lindblad import StepTooLargeError
from .model import Transition, expected_phase_shift, khz, mhz
from .quantum import InvariantError
from .ramsey import (
    FitError,
    fit_fringe,
    read_fringe_csv,
    sample_projection_noise,
    simulate_fringe,
    write_fringe_csv,
)
from .reconstruction import (
    ReconstructionError,
    monte_carlo_uncertainty,
    phase_resolution,
    reconstruct,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# default strong-pull rows: g and gamma in 2 pi x MHz, kappa in 2 pi x kHz
STRONG_PULL_REFERENCE = (
    {"name": "Ca+", "g_MHz": 1.53, "gamma_MHz": 11.5, "kappa_kHz": 1.9},
    {"name": "Cs", "g_MHz": 2.8, "gamma_MHz": 2.6, "kappa_kHz": 1.9},
)


class NonConvergenceError(RuntimeError):
    """A numerical procedure finished without meeting its convergence test."""


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config_sha256": cfg.config_hash(), "seed": cfg.seed, "resolved": cfg.resolved()}


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _table(header: list[str], rows: list[list], comments: list[str]) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _read_fringe(path: str):
    try:
        return read_fringe_csv(path)
    except (ValueError, IndexError) as exc:
        raise OSError(f"malformed fringe CSV: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: ExperimentConfig, out: str | None) -> int:
    p = cfg.driven_params()
    trials = cfg.trials or 250
    exact = simulate_fringe(p, cfg.phase_grid, cfg.coherence, cfg.backend, trials=trials)
    path = Path(out or "fringe.csv")
    comments = [f"config_sha256={cfg.config_hash()}", f"seed={cfg.seed}"]
    if cfg.trials is not None:
        sampled = sample_projection_noise(exact, trials, seed=cfg.seed)
        write_fringe_csv(path, sampled, exact=exact.p_D, comments=comments)
    else:
        write_fringe_csv(path, exact, exact=exact.p_D, comments=comments)
    fit = fit_fringe(exact, phase_hint=expected_phase_shift(p.mean_n, p) / math.pi)
    sidecar = _meta(cfg, "simulate")
    sidecar["fringe_csv"] = path.name
    sidecar["mean_n"] = p.mean_n
    sidecar["exact_fit"] = {
        "phase_shift_pi": fit.phase_shift,
        "contrast": fit.contrast,
        "amplitude": fit.amplitude,
        "offset": fit.offset,
    }
    path.with_suffix(".json").write_text(_dumps(sidecar))
    return EXIT_OK


def cmd_fit(cfg: ExperimentConfig, fringe_path: str, out: str | None) -> int:
    fringe = _read_fringe(fringe_path)
    f = cfg.fit
    fit = fit_fringe(
        fringe,
        n_mean_hint=f.get("n_mean_hint"),
        p=cfg.params if "n_mean_hint" in f else None,
        coh=cfg.coherence,
        pin_offset=f.get("pin_offset", False) if "n_mean_hint" in f else None,
        phase_hint=f.get("phase_hint"),
    )
    res = _meta(cfg, "fit")
    res["fit"] = {
        "phase_shift_pi": fit.phase_shift,
        "amplitude": fit.amplitude,
        "offset": fit.offset,
        "contrast": fit.contrast,
        "contrast_error": fit.contrast_error,
        "errors": fit.errors,
        "offset_pinned": fit.offset_pinned,
    }
    _emit(_dumps(res), out)
    return EXIT_OK


def cmd_reconstruct(cfg: ExperimentConfig, fringe_path: str, out: str | None, bootstrap: bool) -> int:
    fringe = _read_fringe(fringe_path)
    rc = cfg.reconstruction
    backend = rc.get("inner_backend", "eliminated")
    p = cfg.model_params()
    result = reconstruct(
        fringe,
        p,
        cfg.coherence,
        backend=backend,
        max_iter=rc.get("max_iter", 200),
        phase_offset=rc.get("phase_offset_pi", 0.0),
        fit_phase_offset=rc.get("fit_phase_offset", False),
        seed=cfg.seed,
    )
    converged = result.converged
    if bootstrap and converged:
        unc = monte_carlo_uncertainty(
            fringe,
            result,
            p,
            cfg.coherence,
            seed=cfg.seed,
            trials=cfg.trials,
            backend=backend,
            workers=rc.get("workers", 1),
            min_samples=rc.get("min_samples", 100),
            max_samples=rc.get("max_samples", 2000),
        )
        result = replace(result, uncertainty=unc)
        converged = unc.converged
    doc = _meta(cfg, "reconstruct")
    doc["fringe_csv"] = Path(fringe_path).name
    doc["result"] = result.to_dict()
    _emit(_dumps(doc), out)
    if not converged:
        raise NonConvergenceError("reconstruction did not converge (result written with converged=false)")
    return EXIT_OK


def cmd_calibrate(cfg: ExperimentConfig, out: str | None) -> int:
    chain = cfg.detection
    doc = _meta(cfg, "calibrate")
    doc["chain"] = {
        "epsilon": chain.epsilon,
        "count_rate_per_photon_hz": chain.rate_hz,
        "C0": chain.C0,
        "C1": chain.C1,
        "C1_relative_error": chain.C1_relative_error,
    }
    if cfg.counts is not None:
        doc["counts"] = calibrate_counts(cfg.counts, chain).as_dict()
    if cfg.photodiode is not None:
        th = thermal_from_photodiode(cfg.photodiode, chain, cfg.thermal_share)
        doc["photodiode"] = {
            "S_V": th.S_V,
            "thermal_counts": th.thermal_counts,
            "n_coh": th.n_coh,
            "n_th": th.n_th,
            "delta_n_rad_s": th.delta_n,
        }
    _emit(_dumps(doc), out)
    return EXIT_OK


def _sweep_rows(cfg: ExperimentConfig, transitions, n_values, self_consistent: bool):
    rows = []
    for t in transitions:
        base = cfg.params if t == "DP" else cfg.params.second_transition(cfg.g_prime_factor)
        base = replace(base, transition=Transition(t))
        per_photon = expected_phase_shift(1.0, base) / math.pi
        for n in n_values:
            p = base.with_drive(float(n), 0.0, self_consistent=self_consistent)
            fr = simulate_fringe(p, cfg.phase_grid, cfg.coherence, cfg.backend)
            fit = fit_fringe(fr, phase_hint=per_photon * n)
            rows.append([t, float(n), fit.phase_shift, fit.contrast, fit.offset, fit.amplitude])
    return rows


def cmd_sweep(cfg: ExperimentConfig, out: str | None, n_values=None, transitions=None) -> int:
    sw = cfg.sweep
    n_values = n_values if n_values is not None else sw.get("n_values", [0.0, 0.4, 0.8, 1.2, 1.6])
    if len(n_values) < 2:
        raise ConfigError("sweep needs at least 2 photon numbers")
    transitions = transitions or sw.get("transitions", ["DP", "DpPp"])
    rows = _sweep_rows(cfg, transitions, n_values, sw.get("self_consistent", True))
    comments = [
        f"config_sha256={cfg.config_hash()}",
        f"seed={cfg.seed}",
        "columns: transition (DP or DpPp); mean_n (target bare-cavity photon number); "
        "phase_shift_pi (fitted fringe shift, units of pi); contrast (amplitude/offset); "
        "offset and amplitude (fitted sinusoid)",
    ]
    header = ["transition", "mean_n", "phase_shift_pi", "contrast", "offset", "amplitude"]
    _emit(_table(header, rows, comments), out)
    return EXIT_OK


def cmd_phase_resolution(cfg: ExperimentConfig, out: str | None) -> int:
    pr = cfg.phase_resolution
    doc = _meta(cfg, "phase-resolution")
    results = {}
    for t in pr.get("transitions", ["DP", "DpPp"]):
        p = cfg.params if t == "DP" else cfg.params.second_transition(cfg.g_prime_factor)
        res = phase_resolution(
            p,
            cfg.coherence,
            repetitions=pr.get("repetitions", 50_000),
            seed=cfg.seed,
            trials=cfg.trials or 250,
            n_mean=pr.get("n_mean", 1.0),
            backend=cfg.backend,
        )
        results[t] = {
            "delta_phi_pi": res.delta_phi,
            "sigma_phi_pi": res.sigma_phi,
            "delta_n_bar": res.delta_n_bar,
            "repetitions": res.repetitions,
            "failures": res.failures,
        }
    doc["phase_resolution"] = results
    _emit(_dumps(doc), out)
    return EXIT_OK


def cmd_strong_pull(cfg: ExperimentConfig, out: str | None) -> int:
    sp = cfg.strong_pull
    rows_in = sp["rows"] or [dict(r) for r in STRONG_PULL_REFERENCE]
    factor = sp["detuning_factor"]
    rows = []
    for r in rows_in:
        detuning = mhz(r["Delta_MHz"]) if "Delta_MHz" in r else None
        ratio = strong_pull_ratio(
            mhz(r["g_MHz"]), mhz(r.get("gamma_MHz", 0.0)), khz(r["kappa_kHz"]), factor, detuning
        )
        rows.append([r.get("name", ""), r["g_MHz"], r.get("gamma_MHz", float("nan")), r["kappa_kHz"], ratio])
    p = cfg.params
    rows.append(["this-setup", p.g / mhz(1), p.gamma / mhz(1), p.kappa / khz(1),
                 strong_pull_ratio(p.g, p.gamma, p.kappa, detuning=abs(p.Delta_PL))])
    comments = [
        f"config_sha256={cfg.config_hash()}",
        f"seed={cfg.seed}",
        f"columns: name; g_MHz, gamma_MHz, kappa_kHz (2 pi x value); ratio = g^2/(Delta kappa) "
        f"with Delta = {factor:g} gamma (this-setup row uses its own Delta_PL)",
    ]
    _emit(_table(["name", "g_MHz", "gamma_MHz", "kappa_kHz", "ratio"], rows, comments), out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--backend", choices=("full", "eliminated"), help="master-equation backend")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout; simulate: fringe.csv)")
    parser = argparse.ArgumentParser(prog="ionphoton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a Ramsey fringe (CSV + JSON sidecar)")
    fringe_commands = {
        "fit": "fit phase shift, contrast and offset of a fringe",
        "reconstruct": "maximum-likelihood photon statistics of a fringe",
        "uncertainty": "reconstruction plus Monte-Carlo uncertainties",
    }
    for name, text in fringe_commands.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("fringe", metavar="FRINGE_CSV")
        if name == "reconstruct":
            sp.add_argument("--bootstrap", action="store_true", help="add Monte-Carlo uncertainties")
    sub.add_parser("calibrate", parents=[common], help="photon-number calibration from counts/voltages")
    sw = sub.add_parser("sweep", parents=[common], help="phase shift and contrast versus <n>")
    sw.add_argument("--n-values", type=float, nargs="+", metavar="N")
    sw.add_argument("--transition", choices=("DP", "DpPp"), help="sweep one transition only")
    sub.add_parser("phase-resolution", parents=[common], help="bootstrap phase resolution")
    sub.add_parser("strong-pull", parents=[common], help="strong-pull feasibility table")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = cfg.with_seed(args.seed).with_backend(args.backend)
        cmd = args.command
        if args.backend and cmd in ("reconstruct", "uncertainty"):
            cfg = replace(cfg, reconstruction={**cfg.reconstruction, "inner_backend": args.backend})
        if cmd == "simulate":
            return cmd_simulate(cfg, args.out)
        if cmd == "fit":
            return cmd_fit(cfg, args.fringe, args.out)
        if cmd in ("reconstruct", "uncertainty"):
            return cmd_reconstruct(cfg, args.fringe, args.out, cmd == "uncertainty" or args.bootstrap)
        if cmd == "calibrate":
            return cmd_calibrate(cfg, args.out)
        if cmd == "sweep":
            return cmd_sweep(cfg, args.out, args.n_values, [args.transition] if args.transition else None)
        if cmd == "phase-resolution":
            return cmd_phase_resolution(cfg, args.out)
        return cmd_strong_pull(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, ReconstructionError, FitError, StepTooLargeError, InvariantError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
