"""Command-line front end for the reconstruction pipeline.

Subcommands: ``phantom``, ``simulate``, ``reconstruct``, ``svd``, and
``condition-table``. Parameters come from an INI-style config file (one
section per command, ``[common]`` as shared fallback) and can be
overridden by flags. Angles accept ``pi`` expressions such as ``3pi/2``.
All commands are deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys

from . import fileio
from .fem import InnerProductSpec
from .forward import MeasurementSet, determinant_diagnostic, simulate_data
from .illposed import (
    TABLE_ANGLES,
    assemble_transfer_matrix,
    condition_table,
    svd_analyze,
)
from .inversion import ReconstructionConfig, add_noise, run_landweber
from .mesh import generate_disk_mesh
from .phantom import Crescent, Disc, Inclusion, PhantomSpec, default_phantom, phantom_field

DEFAULTS = {
    "mesh_vertices": "2000",
    "fine_vertices": "40000",
    "alpha": "2pi",
    "measurements": "3",
    "family": "trig",
    "adjoint": "h2beta",
    "beta0": "1.0",
    "beta1": "1e-3",
    "beta2": "1e-6",
    "tau": "1.0",
    "noise": "0.0",
    "seed": "0",
    "max_iter": "1000",
    "sigma0": "1.5",
    "sigma_floor": "0.1",
    "safeguard": "true",
    "background": "1.0",
    "inclusions": "default",
    "out": "out",
    "data": "",
    "truncate": "",
    "svd_vectors": "",
}

_ADJOINTS = {
    "l2": InnerProductSpec.l2,
    "h2": InnerProductSpec.h2,
    "h2beta": InnerProductSpec.h2_beta,
}


class CliError(Exception):
    pass


def parse_angle(text: str) -> float:
    """Parse an angle given as a float or a pi expression like ``3pi/2``."""
    text = str(text).strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.]*)\*?pi(?:/([0-9.]+))?", text)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        div = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / div
    try:
        return float(text)
    except ValueError:
        raise CliError(f"cannot parse angle {text!r}") from None


def _parse_bool(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def load_settings(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config-file sections, and flag overrides."""
    settings = dict(DEFAULTS)
    if args.config:
        parser = configparser.ConfigParser()
        if not os.path.exists(args.config):
            raise CliError(f"config file not found: {args.config}")
        parser.read(args.config)
        for section in ("common", command):
            if parser.has_section(section):
                settings.update(dict(parser[section]))
    overrides = {
        "alpha": args.alpha,
        "measurements": args.measurements,
        "family": args.family,
        "adjoint": args.adjoint,
        "tau": args.tau,
        "noise": args.noise,
        "seed": args.seed,
        "max_iter": args.max_iter,
        "out": args.out,
        "truncate": args.truncate,
        "mesh_vertices": getattr(args, "mesh_vertices", None),
        "data": getattr(args, "data", None),
    }
    settings.update({k: str(v) for k, v in overrides.items() if v is not None})
    return settings


def make_inner_spec(settings: dict) -> InnerProductSpec:
    name = settings["adjoint"].lower()
    if name not in _ADJOINTS:
        raise CliError(f"unknown adjoint {name!r} (expected l2, h2, or h2beta)")
    if name == "h2beta":
        return InnerProductSpec.h2_beta(
            float(settings["beta0"]), float(settings["beta1"]), float(settings["beta2"])
        )
    return _ADJOINTS[name]()


def make_measurement_set(settings: dict) -> MeasurementSet:
    m = int(settings["measurements"])
    family = settings["family"].lower()
    if family in ("trig", "trig_limited"):
        return MeasurementSet.trig(parse_angle(settings["alpha"]), tuple(range(1, m + 1)))
    if family in ("special", "special_full"):
        return MeasurementSet.special(tuple(range(1, m + 1)))
    raise CliError(f"unknown family {family!r} (expected trig or special)")


def make_phantom_spec(settings: dict) -> PhantomSpec:
    text = settings["inclusions"].strip()
    background = float(settings["background"])
    if text == "default":
        spec = default_phantom()
        if background != spec.background:
            spec = PhantomSpec(background, spec.inclusions)
        return spec
    inclusions = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = chunk.split()
        kind, vals = parts[0], [float(x) for x in parts[1:]]
        if kind == "disc" and len(vals) == 5:
            cx, cy, r, plateau, width = vals
            inclusions.append(Inclusion(Disc((cx, cy), r), plateau, width))
        elif kind == "crescent" and len(vals) == 8:
            ocx, ocy, orr, icx, icy, irr, plateau, width = vals
            inclusions.append(
                Inclusion(Crescent(Disc((ocx, ocy), orr), Disc((icx, icy), irr)), plateau, width)
            )
        else:
            raise CliError(
                f"bad inclusion spec {chunk!r}: expected 'disc cx cy r plateau width' "
                "or 'crescent ocx ocy or icx icy ir plateau width'"
            )
    return PhantomSpec(background, tuple(inclusions))


def cmd_phantom(settings: dict) -> int:
    out = fileio.ensure_dir(settings["out"])
    mesh = generate_disk_mesh(int(settings["mesh_vertices"]))
    spec = make_phantom_spec(settings)
    field = phantom_field(spec, mesh)
    floor = float(settings["sigma_floor"])
    if field.values.min() < floor:
        raise CliError(
            f"phantom violates admissibility: min {field.values.min():.4g} < "
            f"floor {floor}"
        )
    fileio.write_field_csv(os.path.join(out, "phantom.csv"), field)
    fileio.write_field_vtk(os.path.join(out, "phantom.vtk"), field, name="conductivity")
    plateaus = sorted(inc.plateau for inc in spec.inclusions)
    print(
        f"phantom: {mesh.num_vertices} vertices, min {field.values.min():.6g}, "
        f"max {field.values.max():.6g}, background {spec.background:.6g}, "
        f"plateaus {plateaus}"
    )
    return 0


def cmd_simulate(settings: dict) -> int:
    out = fileio.ensure_dir(settings["out"])
    mesh = generate_disk_mesh(int(settings["mesh_vertices"]))
    ms = make_measurement_set(settings)
    spec = make_phantom_spec(settings)
    data, fine_state = simulate_data(
        spec,
        ms,
        mesh,
        fine_vertex_count=int(settings["fine_vertices"]),
        sigma_floor=float(settings["sigma_floor"]),
    )
    noise = float(settings["noise"])
    seed = int(settings["seed"])
    noisy, delta_abs = add_noise(data, noise, seed)

    det_min = float("nan")
    if len(fine_state.potentials) >= 2:
        _, det_min = determinant_diagnostic(
            fine_state.potentials[0], fine_state.potentials[1]
        )

    fileio.write_mesh(os.path.join(out, "mesh.txt"), mesh)
    fileio.write_field_csv(
        os.path.join(out, "truth.csv"), phantom_field(spec, mesh)
    )
    for j, (e, ed) in enumerate(zip(data, noisy), start=1):
        fileio.write_field_csv(os.path.join(out, f"E_{j:02d}.csv"), e)
        fileio.write_field_vtk(os.path.join(out, f"E_{j:02d}.vtk"), e, name="power_density")
        fileio.write_field_csv(os.path.join(out, f"E_noisy_{j:02d}.csv"), ed)
    fileio.write_key_values(
        os.path.join(out, "data_info.txt"),
        "data",
        {
            "mesh_vertices": settings["mesh_vertices"],
            "fine_vertices": settings["fine_vertices"],
            "alpha": parse_angle(settings["alpha"]),
            "family": settings["family"],
            "measurements": settings["measurements"],
            "noise": noise,
            "seed": seed,
            "delta_abs": delta_abs,
            "det_min_first_pair": det_min,
        },
    )
    print(
        f"simulate: {len(data)} power densities on {mesh.num_vertices} vertices "
        f"(fine mesh {fine_state.mesh.num_vertices}), delta_abs {delta_abs:.6g}, "
        f"min |det| {det_min:.4g}"
    )
    return 0


def cmd_reconstruct(settings: dict) -> int:
    out = fileio.ensure_dir(settings["out"])
    data_dir = settings["data"] or settings["out"]
    info_path = os.path.join(data_dir, "data_info.txt")
    if not os.path.exists(info_path):
        raise CliError(f"no simulated data found at {info_path}; run simulate first")
    info = fileio.read_key_values(info_path, "data")

    mesh = generate_disk_mesh(int(info["mesh_vertices"]))
    data_settings = dict(settings)
    data_settings.update(
        {
            "alpha": info["alpha"],
            "family": info["family"],
            "measurements": info["measurements"],
        }
    )
    ms = make_measurement_set(data_settings)
    noisy = [
        fileio.read_field_csv(os.path.join(data_dir, f"E_noisy_{j:02d}.csv"), mesh)
        for j in range(1, int(info["measurements"]) + 1)
    ]
    truth = None
    truth_path = os.path.join(data_dir, "truth.csv")
    if os.path.exists(truth_path):
        truth = fileio.read_field_csv(truth_path, mesh)

    config = ReconstructionConfig(
        tau=float(settings["tau"]),
        delta_rel=float(info["noise"]),
        sigma0=float(settings["sigma0"]),
        max_iter=int(settings["max_iter"]),
        spec=make_inner_spec(settings),
        sigma_floor=float(settings["sigma_floor"]),
        rng_seed=int(info["seed"]),
        safeguard=_parse_bool(settings["safeguard"]),
    )
    sigma, log = run_landweber(config, noisy, float(info["delta_abs"]), ms, truth)

    fileio.write_field_csv(os.path.join(out, "reconstruction.csv"), sigma)
    fileio.write_field_vtk(
        os.path.join(out, "reconstruction.vtk"), sigma, name="conductivity"
    )
    fileio.write_iteration_log(os.path.join(out, "iterations.csv"), log)
    fileio.write_key_values(
        os.path.join(out, "reconstruct_summary.txt"),
        "reconstruct_summary",
        {
            "stop_reason": log.stop_reason,
            "iterations": log.num_iterations,
            "final_residual": float(log.residuals[-1]),
            "final_rel_error": float(log.rel_errors[-1]),
            "delta_abs": float(info["delta_abs"]),
            "tau": config.tau,
        },
    )
    print(
        f"reconstruct: stopped by {log.stop_reason} after {log.num_iterations} "
        f"iterations, residual {log.residuals[-1]:.6g}, "
        f"rel error {log.rel_errors[-1]:.6g}"
    )
    return 0


def _truncate_value(settings: dict):
    text = settings["truncate"].strip() if settings["truncate"] else ""
    return int(text) if text else None


def cmd_svd(settings: dict) -> int:
    out = fileio.ensure_dir(settings["out"])
    mesh = generate_disk_mesh(int(settings["mesh_vertices"]))
    ms = make_measurement_set(settings)
    truth = phantom_field(make_phantom_spec(settings), mesh)
    T = assemble_transfer_matrix(truth, ms)
    indices = tuple(
        int(x) for x in settings["svd_vectors"].split(",") if x.strip()
    )
    report = svd_analyze(T, vector_indices=indices, truncate=_truncate_value(settings))
    fileio.write_singular_values(
        os.path.join(out, "singular_values.csv"), report.singular_values
    )
    fileio.write_singular_vectors(os.path.join(out, "singvec_{:04d}.csv"), report)
    for k, vec in zip(report.vector_indices, report.vectors):
        fileio.write_field_vtk(
            os.path.join(out, f"singvec_{k:04d}.vtk"), vec, name="singular_vector"
        )
    fileio.write_key_values(
        os.path.join(out, "svd_summary.txt"),
        "svd_summary",
        {
            "alpha": parse_angle(settings["alpha"]),
            "measurements": settings["measurements"],
            "condition_number": report.condition_number,
            "rank": len(report.singular_values),
        },
    )
    print(
        f"svd: {T.matrix.shape[0]}x{T.matrix.shape[1]} transfer matrix, "
        f"condition number {report.condition_number:.6g}"
    )
    return 0


def cmd_condition_table(settings: dict) -> int:
    out = fileio.ensure_dir(settings["out"])
    mesh = generate_disk_mesh(int(settings["mesh_vertices"]))
    truth = phantom_field(make_phantom_spec(settings), mesh)
    rows = condition_table(truth, truncate=_truncate_value(settings))
    path = os.path.join(out, "condition_table.csv")
    fileio.write_condition_table(path, rows, TABLE_ANGLES)
    print(f"condition-table: wrote {len(rows)} rows x {len(TABLE_ANGLES)} angles to {path}")
    return 0


_COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "svd": cmd_svd,
    "condition-table": cmd_condition_table,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aet2d",
        description="Limited-angle power-density conductivity reconstruction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file (section per command)")
        p.add_argument("--alpha", help="accessible arc angle, e.g. 3pi/2")
        p.add_argument("--measurements", type=int, help="number of boundary currents")
        p.add_argument("--family", choices=["trig", "special"])
        p.add_argument("--adjoint", choices=["l2", "h2", "h2beta"])
        p.add_argument("--tau", type=float, help="discrepancy multiplier")
        p.add_argument("--noise", type=float, help="relative noise level")
        p.add_argument("--seed", type=int, help="noise RNG seed")
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--mesh-vertices", dest="mesh_vertices", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--data", help="directory with simulated data (reconstruct)")
        p.add_argument(
            "--truncate", type=int, help="keep only the K largest singular values"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.command, args)
        return _COMMANDS[args.command](settings)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
