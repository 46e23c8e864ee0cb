"""Command-line interface: configuration, orchestration, figure recipes.

Every run resolves its configuration from (in increasing precedence) the
built-in defaults, a JSON config file, ``KAGOMESIM_*`` environment variables,
and command-line flags, then writes its artifacts plus a ``run_manifest.json``
recording the resolved configuration, code version, seeds, convergence
reports, and a content hash of every output file.  Identical configuration
and seed produce byte-identical CSV outputs (the manifest timestamp is the
only varying field).  A failed run leaves a ``FAILED`` marker in the output
directory and prints a machine-readable error JSON to stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import (
    DEFAULT_SUM_RADIUS_D,
    DEFAULT_TAPER_FRACTION,
    band_structure,
    bz_path,
    convergence_report,
)
from .dynamics import (
    InitialState,
    calibrated_scenario,
    chirality_series,
    directional_weights,
    emission_scenario,
    evolve,
    render_population_png,
)
from .geometry import (
    LatticeSpec,
    build_flake,
    lattice_manifest,
    lattice_to_csv,
    place_impurity,
)
from .greens import Polarization
from .hamiltonian import ImpuritySpec, assemble_array, assemble_with_impurity
from .spectra import (
    classify_modes,
    diagonalize,
    disorder_ensemble,
    modes_to_rows,
    sweep_delta,
    sweep_theta,
)
from .util import sha256_file, write_csv

logger = logging.getLogger("kagomesim")

ENV_PREFIX = "KAGOMESIM_"

SPECTRA_FIELDS = [
    "job_key", "mode_index", "re_omega", "gamma", "ipr", "class", "in_gap",
    "w_A", "w_B", "w_C", "corner_A", "corner_B", "corner_C",
    "edge_1", "edge_2", "edge_3", "edge_family",
]

BAND_FIELDS = [
    "kx", "ky", "band_index", "re_omega_over_Gamma0", "gamma_over_Gamma0",
    "in_light_cone",
]

DEFAULT_CONFIG = {
    "lattice": {"d_lambda0": 0.1, "delta": 0.0, "cells_per_side": 10},
    "polarization": "pi",
    "impurity": None,
    "sweep": {
        "theta_points": 181,
        "delta_grid": [-0.6, -0.3, 0.0, 0.3, 0.6],
        "kappa_grid": [0.015, 0.03, 0.045, 0.06, 0.075, 0.09, 0.105, 0.12],
        "realizations": 30,
        "seed": 7,
    },
    "bloch": {
        "path": ["G", "K", "M", "G"],
        "points_per_segment": 30,
        "sum_radius_d": DEFAULT_SUM_RADIUS_D,
        "taper_fraction": DEFAULT_TAPER_FRACTION,
        "convergence_check": False,
    },
    "dynamics": {
        "scenario": "fig5a",
        "times_gamma0": None,
        "png": False,
        "calibrated": True,
    },
    "threads": None,
    "output_dir": "kagomesim_out",
}


class ConfigError(ValueError):
    """Unusable run configuration."""


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error in {path} at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config root in {path} must be a JSON object")
    return data


def apply_env_overrides(config: dict, env: dict | None = None) -> dict:
    """CI-style overrides: KAGOMESIM_SEED, _THREADS, _OUT, _SUM_RADIUS."""
    env = os.environ if env is None else env
    out = copy.deepcopy(config)
    if ENV_PREFIX + "SEED" in env:
        out["sweep"]["seed"] = int(env[ENV_PREFIX + "SEED"])
    if ENV_PREFIX + "THREADS" in env:
        out["threads"] = int(env[ENV_PREFIX + "THREADS"])
    if ENV_PREFIX + "OUT" in env:
        out["output_dir"] = env[ENV_PREFIX + "OUT"]
    if ENV_PREFIX + "SUM_RADIUS" in env:
        out["bloch"]["sum_radius_d"] = float(env[ENV_PREFIX + "SUM_RADIUS"])
    return out


def parse_polarization(text: str) -> Polarization:
    text = text.strip()
    if text == "pi":
        return Polarization.out_of_plane()
    if text == "sigma+":
        return Polarization.sigma_plus()
    if text == "sigma-":
        return Polarization.sigma_minus()
    if text.startswith("theta:"):
        try:
            return Polarization.in_plane(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigError(f"bad polarization angle in {text!r}") from exc
    raise ConfigError(
        f"unknown polarization {text!r}; use pi | theta:<radians> | sigma+ | sigma-"
    )


def lattice_spec_from_config(config: dict) -> LatticeSpec:
    lat = config["lattice"]
    return LatticeSpec(
        d=float(lat["d_lambda0"]),
        delta=float(lat["delta"]),
        cells_per_side=int(lat["cells_per_side"]),
    )


def impurity_from_config(config: dict, lat) -> ImpuritySpec | None:
    imp = config.get("impurity")
    if imp is None:
        return None
    placement = place_impurity(lat, imp["anchor"], float(imp.get("height_d", 0.4)))
    kind = imp.get("kind", "two_level")
    pol = parse_polarization(imp["polarization"]) if kind == "two_level" else None
    return ImpuritySpec(
        detuning=float(imp.get("detuning_gamma0", 0.0)),
        linewidth=float(imp.get("linewidth_gamma0", 0.002)),
        kind=kind,
        polarization=pol,
        zeeman=float(imp.get("zeeman_gamma0", 0.0)),
        placement=placement,
    )


def workers_from_config(config: dict) -> int:
    threads = config.get("threads")
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


# ---------------------------------------------------------------------------
# Subcommand implementations.  Each returns (relative artifact paths, extras).


def cmd_lattice(config: dict, out: Path):
    lat = build_flake(lattice_spec_from_config(config))
    lattice_to_csv(lat, out / "lattice.csv")
    (out / "lattice.json").write_text(
        json.dumps(lattice_manifest(lat), indent=2) + "\n"
    )
    return ["lattice.csv", "lattice.json"], {}


def cmd_bands(config: dict, out: Path):
    spec = lattice_spec_from_config(config)
    pol = parse_polarization(config["polarization"])
    bl = config["bloch"]
    ks, markers = bz_path(spec, list(bl["path"]), int(bl["points_per_segment"]))
    points = band_structure(
        spec, pol, ks, float(bl["sum_radius_d"]), float(bl["taper_fraction"])
    )
    rows = []
    for p in points:
        for b in range(3):
            rows.append(
                {
                    "kx": float(p.k[0]),
                    "ky": float(p.k[1]),
                    "band_index": b,
                    "re_omega_over_Gamma0": float(p.omega[b]),
                    "gamma_over_Gamma0": float(p.gamma[b]),
                    "in_light_cone": bool(p.in_light_cone),
                }
            )
    write_csv(out / "bands.csv", BAND_FIELDS, rows)
    extras = {"path_markers": [[i, lbl] for i, lbl in markers]}
    if bl.get("convergence_check"):
        sample = ks[:: max(1, len(ks) // 6)]
        extras["convergence"] = convergence_report(
            spec, pol, sample, float(bl["sum_radius_d"]), float(bl["taper_fraction"])
        )
    return ["bands.csv"], extras


def cmd_spectrum(config: dict, out: Path):
    spec = lattice_spec_from_config(config)
    lat = build_flake(spec)
    pol = parse_polarization(config["polarization"])
    imp = impurity_from_config(config, lat)
    if imp is None:
        h = assemble_array(lat, pol)
    else:
        h = assemble_with_impurity(lat, pol, imp)
    modes = classify_modes(diagonalize(h), lat)
    rows = modes_to_rows(modes, job_key=f"delta={spec.delta:.6g}")
    write_csv(out / "spectrum.csv", SPECTRA_FIELDS, rows)
    return ["spectrum.csv"], {"gap_window": modes.gap_window, "n_modes": modes.size}


THETA_FIELDS = [
    "theta", "corner", "re_omega", "gamma", "corner_dominated", "double_corner",
    "in_gap", "w_corner_A", "w_corner_B", "w_corner_C", "ordering",
]


def _theta_rows(track):
    rows = []
    for i, th in enumerate(track.thetas):
        for c, label in enumerate("ABC"):
            rows.append(
                {
                    "theta": float(th),
                    "corner": label,
                    "re_omega": float(track.frequencies[i, c]),
                    "gamma": float(track.decay_rates[i, c]),
                    "corner_dominated": bool(track.corner_dominated[i, c]),
                    "double_corner": bool(track.double_corner[i, c]),
                    "in_gap": bool(track.in_gap[i, c]),
                    "w_corner_A": float(track.corner_weights[i, c, 0]),
                    "w_corner_B": float(track.corner_weights[i, c, 1]),
                    "w_corner_C": float(track.corner_weights[i, c, 2]),
                    "ordering": track.ordering[i],
                }
            )
    return rows


def cmd_sweep_theta(config: dict, out: Path):
    spec = lattice_spec_from_config(config)
    lat = build_flake(spec)
    n = int(config["sweep"]["theta_points"])
    if n < 2:
        raise ConfigError(f"theta_points must be >= 2, got {n}")
    thetas = np.linspace(0.0, np.pi, n)
    track = sweep_theta(lat, thetas, workers=workers_from_config(config))
    write_csv(out / "theta_track.csv", THETA_FIELDS, _theta_rows(track))
    summary = {
        "reorganization_angles": [float(a) for a in track.reorganization_angles()],
        "ordering_sectors": _ordering_sectors(track),
    }
    (out / "theta_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return ["theta_track.csv", "theta_summary.json"], summary


def _ordering_sectors(track):
    """Compress the per-theta ordering labels into contiguous sectors."""
    sectors = []
    for th, order in zip(track.thetas, track.ordering):
        if not sectors or sectors[-1]["ordering"] != order:
            sectors.append(
                {"theta_start": float(th), "theta_end": float(th), "ordering": order}
            )
        else:
            sectors[-1]["theta_end"] = float(th)
    return sectors


def cmd_sweep_delta(config: dict, out: Path):
    spec = lattice_spec_from_config(config)
    pol = parse_polarization(config["polarization"])
    deltas = [float(x) for x in config["sweep"]["delta_grid"]]
    rows = sweep_delta(spec, deltas, pol, workers=workers_from_config(config))
    write_csv(out / "delta_sweep.csv", SPECTRA_FIELDS, rows)
    return ["delta_sweep.csv"], {"deltas": deltas}


DISORDER_FIELDS = [
    "kappa", "realization", "seed", "skipped", "n_corner_in_gap", "survived",
]


def cmd_disorder(config: dict, out: Path):
    spec = lattice_spec_from_config(config)
    pol = parse_polarization(config["polarization"])
    sw = config["sweep"]
    n_real = int(sw["realizations"])
    if n_real < 1:
        raise ConfigError(f"realizations must be >= 1, got {n_real}")
    result = disorder_ensemble(
        spec,
        pol,
        np.asarray([float(k) for k in sw["kappa_grid"]]),
        n_realizations=n_real,
        seed=int(sw["seed"]),
        workers=workers_from_config(config),
    )
    write_csv(out / "disorder.csv", DISORDER_FIELDS, result["records"])
    summary = {
        "kappas": result["kappas"],
        "survival_fraction": result["survival_fraction"],
        "kappa_star": result["kappa_star"],
        "seed": int(sw["seed"]),
    }
    (out / "disorder_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return ["disorder.csv", "disorder_summary.json"], summary


POPULATION_FIELDS = ["time", "basis_index", "population"]
SECTOR_FIELDS = [
    "time", "sector_1", "sector_2", "sector_3", "sector_4", "sector_5", "sector_6",
    "chirality", "total_norm",
]


def _write_trace(trace, lat, out: Path, prefix: str, png: bool):
    paths = []
    rows = []
    for i, t in enumerate(trace.times):
        for j in range(trace.populations.shape[1]):
            rows.append(
                {
                    "time": float(t),
                    "basis_index": j,
                    "population": float(trace.populations[i, j]),
                }
            )
    write_csv(out / f"{prefix}_populations.csv", POPULATION_FIELDS, rows)
    paths.append(f"{prefix}_populations.csv")

    sector_rows = []
    for i, t in enumerate(trace.times):
        row = {"time": float(t)}
        for s in range(6):
            row[f"sector_{s + 1}"] = float(trace.directional_weights[i, s])
        row["chirality"] = float(trace.chirality[i])
        row["total_norm"] = float(trace.total_norm[i])
        sector_rows.append(row)
    write_csv(out / f"{prefix}_sectors.csv", SECTOR_FIELDS, sector_rows)
    paths.append(f"{prefix}_sectors.csv")

    if png:
        png_name = f"{prefix}_snapshot.png"
        render_population_png(trace, lat, out / png_name)
        paths.append(png_name)
    return paths


def cmd_dynamics(config: dict, out: Path):
    dyn = config["dynamics"]
    scenario = dyn.get("scenario")
    png = bool(dyn.get("png"))
    if scenario:
        runner = calibrated_scenario if dyn.get("calibrated", True) else emission_scenario
        trace, lat, placement = runner(scenario)
        paths = _write_trace(trace, lat, out, scenario, png)
        extras = {
            "scenario": scenario,
            "params": trace.meta.get("params"),
            "calibration": trace.meta.get("calibration"),
            "method": trace.method,
        }
        return paths, extras
    # explicit dynamics: lattice + impurity from config, impurity initially excited
    spec = lattice_spec_from_config(config)
    lat = build_flake(spec)
    pol = parse_polarization(config["polarization"])
    imp = impurity_from_config(config, lat)
    if imp is None:
        raise ConfigError("explicit dynamics needs an impurity block in the config")
    h = assemble_with_impurity(lat, pol, imp)
    times = dyn.get("times_gamma0")
    if not times:
        raise ConfigError("explicit dynamics needs dynamics.times_gamma0")
    if imp.kind == "two_level":
        psi0 = InitialState.impurity_excited(h)
    else:
        psi0 = InitialState.v_type_symmetric(h)
    trace = evolve(h, psi0, np.asarray([float(t) for t in times]))
    directional_weights(trace, lat, imp.placement)
    chirality_series(trace, lat, imp.placement)
    paths = _write_trace(trace, lat, out, "dynamics", png)
    return paths, {"method": trace.method}


# ---------------------------------------------------------------------------
# Figure recipes


def recipe_fig1c(config: dict, out: Path):
    cfg = copy.deepcopy(config)
    cfg["lattice"]["delta"] = 0.0
    cfg["polarization"] = "pi"
    cfg["bloch"]["convergence_check"] = True
    paths, extras = cmd_bands(cfg, out)
    extras["reference_parameters"] = {"delta": 0.0, "polarization": "pi", "d_lambda0": 0.1}
    return paths, extras


def recipe_fig2(config: dict, out: Path):
    cfg = copy.deepcopy(config)
    cfg["lattice"]["delta"] = 0.3
    spec = lattice_spec_from_config(cfg)
    lat = build_flake(spec)
    paths = []
    for tag, theta in (("theta_4pi9", 4 * np.pi / 9), ("theta_pi2", np.pi / 2)):
        h = assemble_array(lat, Polarization.in_plane(theta))
        modes = classify_modes(diagonalize(h), lat)
        rows = modes_to_rows(modes, job_key=f"theta={theta:.6g}")
        name = f"spectrum_{tag}.csv"
        write_csv(out / name, SPECTRA_FIELDS, rows)
        paths.append(name)
    n = int(cfg["sweep"]["theta_points"])
    thetas = np.linspace(0.0, np.pi, n)
    track = sweep_theta(lat, thetas, workers=workers_from_config(cfg))
    write_csv(out / "theta_track.csv", THETA_FIELDS, _theta_rows(track))
    paths.append("theta_track.csv")
    extras = {
        "reference_parameters": {"delta": 0.3},
        "reorganization_angles": [float(a) for a in track.reorganization_angles()],
    }
    return paths, extras


def recipe_fig3(config: dict, out: Path):
    cfg = copy.deepcopy(config)
    cfg["lattice"]["delta"] = 0.6
    spec = lattice_spec_from_config(cfg)
    paths = []
    for tag, pol_text in (("pi", "pi"), ("theta_pi6", f"theta:{np.pi / 6}"),
                          ("theta_pi4", f"theta:{np.pi / 4}")):
        sub = copy.deepcopy(cfg)
        sub["polarization"] = pol_text
        rows = sweep_delta(
            spec,
            [float(x) for x in sub["sweep"]["delta_grid"]],
            parse_polarization(pol_text),
            workers=workers_from_config(sub),
        )
        name = f"delta_sweep_{tag}.csv"
        write_csv(out / name, SPECTRA_FIELDS, rows)
        paths.append(name)
    extras = {"reference_parameters": {"delta": 0.6}, "scenarios": {}}
    png = bool(cfg["dynamics"].get("png"))
    for scenario in ("fig3g", "fig3h", "fig3i"):
        trace, lat, _ = calibrated_scenario(scenario)
        paths.extend(_write_trace(trace, lat, out, scenario, png))
        extras["scenarios"][scenario] = trace.meta.get("calibration")
    return paths, extras


def recipe_fig4(config: dict, out: Path):
    cfg = copy.deepcopy(config)
    cfg["lattice"]["delta"] = 0.6
    paths = []
    extras = {"reference_parameters": {"delta": 0.6}, "ensembles": {}}
    for tag, pol_text in (("pi", "pi"), ("theta_pi6", f"theta:{np.pi / 6}"),
                          ("theta_pi4", f"theta:{np.pi / 4}")):
        sub = copy.deepcopy(cfg)
        sub["polarization"] = pol_text
        sub_out = out / f"disorder_{tag}"
        sub_out.mkdir(exist_ok=True)
        sub_paths, summary = cmd_disorder(sub, sub_out)
        paths.extend(f"disorder_{tag}/{p}" for p in sub_paths)
        extras["ensembles"][tag] = summary
    return paths, extras


def recipe_fig5(config: dict, out: Path):
    paths = []
    extras = {"scenarios": {}}
    png = bool(config["dynamics"].get("png"))
    for scenario in ("fig5a", "fig5b", "fig5c", "fig5d", "fig5e", "fig5f"):
        trace, lat, _ = calibrated_scenario(scenario)
        paths.extend(_write_trace(trace, lat, out, scenario, png))
        extras["scenarios"][scenario] = {
            "calibration": trace.meta.get("calibration"),
            "final_sectors": [float(x) for x in trace.directional_weights[-1]],
            "final_chirality": float(trace.chirality[-1]),
        }
    return paths, extras


RECIPES = {
    "fig1c": recipe_fig1c,
    "fig2": recipe_fig2,
    "fig3": recipe_fig3,
    "fig4": recipe_fig4,
    "fig5": recipe_fig5,
}

COMMANDS = {
    "lattice": cmd_lattice,
    "bands": cmd_bands,
    "spectrum": cmd_spectrum,
    "sweep-theta": cmd_sweep_theta,
    "sweep-delta": cmd_sweep_delta,
    "disorder": cmd_disorder,
    "dynamics": cmd_dynamics,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kagomesim",
        description="Breathing-kagome atomic metasurface simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    names = list(COMMANDS) + ["reproduce"]
    for name in names:
        p = sub.add_parser(name)
        if name == "reproduce":
            p.add_argument("figure", choices=sorted(RECIPES))
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
        p.add_argument("--seed", type=int, default=None, help="base RNG seed")
        p.add_argument(
            "--sum-radius", type=float, default=None,
            help="Bloch lattice-sum radius in units of d",
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress logs")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        config = merge_config(config, load_config_file(args.config))
    config = apply_env_overrides(config)
    if args.out is not None:
        config["output_dir"] = args.out
    if args.threads is not None:
        config["threads"] = args.threads
    if args.seed is not None:
        config["sweep"]["seed"] = args.seed
    if args.sum_radius is not None:
        config["bloch"]["sum_radius_d"] = args.sum_radius
    return config


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    failed_marker = out / "FAILED"
    if failed_marker.exists():
        failed_marker.unlink()
    started = time.time()
    try:
        if args.command == "reproduce":
            paths, extras = RECIPES[args.figure](config, out)
            command = f"reproduce {args.figure}"
        else:
            paths, extras = COMMANDS[args.command](config, out)
            command = args.command
    except Exception as exc:
        failed_marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    manifest = {
        "command": command,
        "code_version": __version__,
        "resolved_config": config,
        "seeds": {"base": config["sweep"]["seed"]},
        "extras": extras,
        "outputs": [
            {"path": p, "sha256": sha256_file(out / p)} for p in sorted(paths)
        ],
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    logger.info("%s finished in %.1fs -> %s", command, time.time() - started, out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except Exception as exc:
        error = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
