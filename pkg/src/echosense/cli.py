"""Command-line interface: sensitivity sweeps, diagnostics, oracle checks, fits.

Frequencies on all flags are plain Hz (e.g. ``--g-hz 3910`` for a coupling of
2*pi*3910 rad/s); rates like ``--gamma`` are 1/s; times carry their unit in
the flag name.  Values may also come from a JSON config file (``--config``);
explicit flags override file entries, which override built-in defaults.

Outputs are deterministic: identical configuration produces byte-identical
CSV or JSON.  Every JSON output validates against the schema shipped in
``echosense/schemas/echosense.schema.json`` ($defs cli_table / fit_result).

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from typing import Iterable, Optional, Sequence

import numpy as np

from . import calibration, entanglement
from .core import (
    ConfigError,
    Displacement,
    NoiseModel,
    NumericalError,
    PhysicalConstants,
    ProtocolSpec,
    TWO_PI,
    constants_from_json,
    efield_sensitivity_from_eta,
)
from .kernels import kernels_displacement
from .moments import moments_at_detuning
from .oracle import ThermalEnsemble, evolve_exact_detail
from .sensitivity import (
    SweepRow,
    averaged_sensitivity,
    gauss_hermite_rule,
    optimize_tau,
    perturbative_displacement,
    snr_single_measurement,
)

__all__ = ["main", "build_parser"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _write_table(
    command: str,
    params: dict,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    out: Optional[str],
    fmt: str,
) -> None:
    if fmt == "csv":
        lines = [",".join(columns)]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        text = "\n".join(lines) + "\n"
    else:
        payload = {
            "command": command,
            "params": params,
            "columns": list(columns),
            "rows": [list(row) for row in rows],
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        for key in cfg:
            if key in file_cfg:
                cfg[key] = file_cfg[key]
        cfg["_file"] = file_cfg
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _constants(cfg: dict) -> PhysicalConstants:
    file_cfg = cfg.get("_file", {})
    if "constants" in file_cfg:
        return constants_from_json(file_cfg["constants"])
    return PhysicalConstants()


def _noise(cfg: dict) -> NoiseModel:
    return NoiseModel(
        sigma=TWO_PI * cfg["sigma_hz"],
        nbar=cfg["nbar"],
        gamma=cfg["gamma"],
        excess_noise_factor=cfg["excess_noise"],
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

DISPLACEMENT_DEFAULTS = {
    "n_ions": 150,
    "g_hz": 3910.0,
    "nbar": 5.0,
    "gamma": 610.0,
    "sigma_hz": 40.0,
    "excess_noise": 1.0,
    "nodes": 64,
    "tau_min_us": 20.0,
    "tau_max_us": 600.0,
    "tau_steps": 117,
}


def cmd_displacement_sweep(args: argparse.Namespace) -> int:
    cfg = _merged(args, DISPLACEMENT_DEFAULTS)
    g = TWO_PI * cfg["g_hz"]
    noise = _noise(cfg)
    base_noise = NoiseModel(sigma=noise.sigma, nbar=noise.nbar, gamma=noise.gamma)
    rule = gauss_hermite_rule(noise.sigma, cfg["nodes"])
    taus = np.linspace(cfg["tau_min_us"] * 1e-6, cfg["tau_max_us"] * 1e-6, cfg["tau_steps"])
    with_excess = noise.excess_noise_factor != 1.0
    columns = ["tau_s", "delta_sq_exact", "delta_sq_perturbative", "sql", "db_below_sql"]
    if with_excess:
        columns.append("delta_sq_exact_excess")
    rows = []
    for tau in taus:
        spec = ProtocolSpec(Displacement(g, float(tau), 0.0), cfg["n_ions"])
        report = averaged_sensitivity(spec, base_noise, rule)
        pert = perturbative_displacement(g, float(tau), base_noise)
        row = [float(tau), report.delta_sq, pert.total, report.sql, report.db_below_sql]
        if with_excess:
            row.append(report.delta_sq * noise.excess_noise_factor**2)
        rows.append(row)
    _write_table("displacement-sweep", _public(cfg), columns, rows, args.out, args.format)
    return 0


EFIELD_DEFAULTS = {
    "n_ions": 150,
    "g_hz": 3880.0,
    "nbar": 5.0,
    "gamma": 520.0,
    "sigma_hz": 40.0,
    "excess_noise": 1.0,
    "nodes": 64,
    "t_min_ms": 0.2,
    "t_max_ms": 2.0,
    "t_steps": 19,
}


def cmd_efield_sweep(args: argparse.Namespace) -> int:
    cfg = _merged(args, EFIELD_DEFAULTS)
    g = TWO_PI * cfg["g_hz"]
    noise = _noise(cfg)
    rule = gauss_hermite_rule(noise.sigma, cfg["nodes"])
    constants = _constants(cfg)
    t_grid = np.linspace(cfg["t_min_ms"] * 1e-3, cfg["t_max_ms"] * 1e-3, cfg["t_steps"])
    columns = [
        "T_s",
        "tau_opt_quantum",
        "tau_opt_classical",
        "delta_eta_sq_quantum",
        "delta_eta_sq_classical",
        "sql",
        "eps_Vm_quantum",
    ]
    rows = []
    for T in t_grid:
        T = float(T)
        sql = 1.0 / (4.0 * T**2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tau_q, dsq_q = optimize_tau("quantum", T, g, noise, rule, cfg["n_ions"])
            tau_c, dsq_c = optimize_tau("classical", T, g, noise, rule, cfg["n_ions"])
        # SweepRow validates the tau caps (<= T/2 quantum, <= T classical)
        quantum = SweepRow(T, tau_q, dsq_q, 10 * math.log10(sql / dsq_q), "quantum_efield")
        classical = SweepRow(T, tau_c, dsq_c, 10 * math.log10(sql / dsq_c), "classical_efield")
        eps = efield_sensitivity_from_eta(
            math.sqrt(quantum.delta_sq), T, constants, cfg["n_ions"]
        )
        rows.append(
            [T, quantum.tau_opt, classical.tau_opt, quantum.delta_sq,
             classical.delta_sq, sql, eps]
        )
    _write_table("efield-sweep", _public(cfg), columns, rows, args.out, args.format)
    return 0


SNR_DEFAULTS = {
    "g_hz": 3910.0,
    "tau_us": 200.0,
    "nbar": 5.0,
    "gamma": 500.0,
    "sigma_hz": 40.0,
    "excess_noise": 1.0,
    "beta_max": 0.6,
    "steps": 61,
}


def cmd_snr(args: argparse.Namespace) -> int:
    cfg = _merged(args, SNR_DEFAULTS)
    g = TWO_PI * cfg["g_hz"]
    tau = cfg["tau_us"] * 1e-6
    noise = _noise(cfg)
    betas = np.linspace(0.0, cfg["beta_max"], cfg["steps"])
    rows = [[float(b), snr_single_measurement(float(b), g, tau, noise)] for b in betas]
    _write_table("snr", _public(cfg), ["beta", "snr"], rows, args.out, args.format)
    return 0


RENYI_DEFAULTS = {"g_hz": 3910.0, "tau_us": 200.0, "steps": 101}


def cmd_renyi(args: argparse.Namespace) -> int:
    cfg = _merged(args, RENYI_DEFAULTS)
    g = TWO_PI * cfg["g_hz"]
    tau = cfg["tau_us"] * 1e-6
    times = np.linspace(0.0, 2.0 * tau, cfg["steps"])
    rows = [[float(t), entanglement.renyi_entropy(g, tau, float(t))] for t in times]
    _write_table("renyi", _public(cfg), ["t_s", "s2"], rows, args.out, args.format)
    return 0


WIGNER_DEFAULTS = {"kind": "hybrid_plus", "g_tau": 2.0, "extent": 4.0, "points": 81}


def cmd_wigner(args: argparse.Namespace) -> int:
    cfg = _merged(args, WIGNER_DEFAULTS)
    if cfg["kind"] == "hybrid_plus":
        fn = entanglement.wigner_hybrid_plus
    elif cfg["kind"] == "reduced_boson":
        fn = entanglement.wigner_reduced_boson
    else:
        raise ConfigError(f"unknown wigner kind {cfg['kind']!r}")
    grid = np.linspace(-cfg["extent"], cfg["extent"], cfg["points"])
    rows = []
    for x in grid:
        for p in grid:
            rows.append([float(x), float(p), float(fn(float(x), float(p), cfg["g_tau"]))])
    _write_table("wigner", _public(cfg), ["x", "p", "w"], rows, args.out, args.format)
    return 0


ORACLE_DEFAULTS = {"tol": 1e-6}

ORACLE_CASES = [
    # (n_ions, nbar, delta_over_g, g_tau)
    (2, 0.0, 0.0, 1.0),
    (2, 0.5, 0.1, 0.5),
    (3, 0.0, 0.2, 1.5),
    (4, 0.5, 0.1, 1.0),
    (4, 0.0, 0.05, 2.0),
]


def cmd_oracle_check(args: argparse.Namespace) -> int:
    cfg = _merged(args, ORACLE_DEFAULTS)
    g = TWO_PI * 3910.0
    columns = ["n_ions", "nbar", "delta_over_g", "g_tau", "max_rel_err", "status"]
    rows = []
    worst = 0.0
    for n_ions, nbar, frac, g_tau in ORACLE_CASES:
        tau = g_tau / g
        delta = frac * g
        spec = ProtocolSpec(Displacement(g, tau, 0.0), n_ions)
        det = evolve_exact_detail(spec, delta, initial=ThermalEnsemble.from_nbar(nbar))
        mom = moments_at_detuning(
            kernels_displacement(g, tau, delta), n_ions, NoiseModel(nbar=nbar)
        )
        rel = max(
            abs(det.jx - mom.jx_mean) / abs(mom.jx_mean),
            abs(det.jy_sq - mom.jy_sq) / abs(mom.jy_sq),
            abs(det.slope - mom.slope) / abs(mom.slope),
        )
        worst = max(worst, rel)
        rows.append(
            [n_ions, nbar, frac, g_tau, rel, "ok" if rel < cfg["tol"] else "FAIL"]
        )
    _write_table("oracle-check", _public(cfg), columns, rows, args.out, args.format)
    if worst >= cfg["tol"]:
        raise NumericalError(
            f"oracle disagreement {worst:.3e} exceeds tolerance {cfg['tol']:.1e}"
        )
    return 0


CALIBRATE_DEFAULTS = {
    "g_hz": 3910.0,
    "nbar": 5.0,
    "n_ions": 150,
    "gamma_tot": 250.0,
    "tau_us": 1500.0,
}


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _merged(args, CALIBRATE_DEFAULTS)
    data = calibration.CalibrationDataset.from_csv(args.data)
    kind = args.kind
    if kind == "sigma":
        fit = calibration.fit_sigma(
            data,
            g=TWO_PI * cfg["g_hz"],
            nbar=cfg["nbar"],
            n_ions=cfg["n_ions"],
            gamma_tot=cfg["gamma_tot"],
        )
    elif kind == "contrast":
        fit = calibration.fit_contrast(data)
    elif kind == "ringdown":
        fit = calibration.fit_ring_down(
            data, gamma_tot=cfg["gamma_tot"], tau=cfg["tau_us"] * 1e-6
        )
    elif kind == "heating":
        fit = calibration.fit_heating_rate(data)
    else:
        raise ConfigError(f"unknown calibration kind {kind!r}")

    errors = {name: fit.error(name) for name in fit.params}
    if args.format == "json":
        payload = {
            "command": "calibrate",
            "kind": kind,
            "params": fit.params,
            "errors": errors,
            "covariance": [[float(v) for v in row] for row in fit.covariance],
            "residual_norm": fit.residual_norm,
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        rows = [[name, fit.params[name], errors[name]] for name in fit.params]
        _write_table(
            "calibrate", {"kind": kind}, ["param", "value", "stderr"], rows, args.out, "csv"
        )
    return 0


def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--out", help="output path (default stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_opt(sub: argparse.ArgumentParser, name: str, kind=float, **kwargs) -> None:
    sub.add_argument(name, type=kind, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echosense",
        description="Sensitivity theory for spin-coupled oscillator sensors",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("displacement-sweep", help="sensitivity vs drive time")
    _add_common(p)
    for flag in ("--g-hz", "--nbar", "--gamma", "--sigma-hz", "--excess-noise",
                 "--tau-min-us", "--tau-max-us"):
        _add_opt(p, flag)
    _add_opt(p, "--n-ions", int)
    _add_opt(p, "--nodes", int)
    _add_opt(p, "--tau-steps", int)
    p.set_defaults(func=cmd_displacement_sweep)

    p = subs.add_parser("efield-sweep", help="optimized drive-sensing sweep")
    _add_common(p)
    for flag in ("--g-hz", "--nbar", "--gamma", "--sigma-hz", "--excess-noise",
                 "--t-min-ms", "--t-max-ms"):
        _add_opt(p, flag)
    _add_opt(p, "--n-ions", int)
    _add_opt(p, "--nodes", int)
    _add_opt(p, "--t-steps", int)
    p.set_defaults(func=cmd_efield_sweep)

    p = subs.add_parser("snr", help="single-measurement SNR vs displacement")
    _add_common(p)
    for flag in ("--g-hz", "--tau-us", "--nbar", "--gamma", "--sigma-hz",
                 "--excess-noise", "--beta-max"):
        _add_opt(p, flag)
    _add_opt(p, "--steps", int)
    p.set_defaults(func=cmd_snr)

    p = subs.add_parser("renyi", help="entanglement entropy along the echo")
    _add_common(p)
    _add_opt(p, "--g-hz")
    _add_opt(p, "--tau-us")
    _add_opt(p, "--steps", int)
    p.set_defaults(func=cmd_renyi)

    p = subs.add_parser("wigner", help="Wigner-function grid dump")
    _add_common(p)
    p.add_argument("--kind", choices=("hybrid_plus", "reduced_boson"), default=None)
    _add_opt(p, "--g-tau")
    _add_opt(p, "--extent")
    _add_opt(p, "--points", int)
    p.set_defaults(func=cmd_wigner)

    p = subs.add_parser("oracle-check", help="closed forms vs brute-force simulator")
    _add_common(p)
    _add_opt(p, "--tol")
    p.set_defaults(func=cmd_oracle_check)

    p = subs.add_parser("calibrate", help="least-squares calibrations")
    p.add_argument("kind", choices=("sigma", "contrast", "ringdown", "heating"))
    p.add_argument("--data", required=True, help="CSV with header x,y[,yerr]")
    _add_common(p)
    for flag in ("--g-hz", "--nbar", "--gamma-tot", "--tau-us"):
        _add_opt(p, flag)
    _add_opt(p, "--n-ions", int)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
