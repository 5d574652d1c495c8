"""Command-line entry point: experiment subcommands over one config file.

Subcommands write deterministic CSV / gnuplot-matrix artifacts plus a run
manifest (config hash, effective config, versions, wall time).  Exit
codes: 0 ok, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, band_structure, distributions, liddi, protocol, two_atom
from .constants import HBAR
from .parameters import (
    ConfigError,
    ExperimentConfig,
    SweepSettings,
    lithium_default,
    load_config,
    parameter_report,
    write_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SWEEP_COLUMNS = [
    "parameter",
    "value",
    "vhop_erec",
    "vdd_erec",
    "diatom_min_erec",
    "diatom_max_erec",
    "split_gap_erec",
    "dx_minus_a",
    "dp_plus_hbar_per_a",
    "s",
    "displacement_ratio",
    "error",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if np.isnan(v):
        return "nan"
    return f"{v:.12g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def decimate_joint(
    joint: distributions.JointDistribution, max_points: int = 320
) -> distributions.JointDistribution:
    """Stride the grid down to a plottable size (metrics stay on the full grid)."""
    stride = max(1, int(np.ceil(joint.axis1.size / max_points)))
    if stride == 1:
        return joint
    return distributions.JointDistribution(
        joint.axis1[::stride],
        joint.axis2[::stride],
        joint.density[::stride, ::stride].copy(),
        joint.kind,
    )


def write_matrix(path: Path, joint: distributions.JointDistribution, comment: str) -> None:
    """Gnuplot `splot`-ready blocks: x1 x2 density, blank line per x1."""
    joint = decimate_joint(joint)
    unit = "a" if joint.kind == "position" else "hbar/a"
    lines = [
        f"# {comment}",
        f"# columns: axis1 [{unit}], axis2 [{unit}], probability density",
    ]
    for i, x1 in enumerate(joint.axis1):
        block = joint.density[i]
        x1s = _fmt(x1)
        lines.extend(
            f"{x1s} {_fmt(x2)} {_fmt(v)}" for x2, v in zip(joint.axis2, block)
        )
        lines.append("")
    path.write_text("\n".join(lines) + "\n")


def _config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(
    out_dir: Path, command: str, config: ExperimentConfig, outputs: list[str], t0: float
) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "config_sha256": _config_hash(config),
        "effective_config": config.to_dict(),
        "wall_time_s": time.time() - t0,
        "outputs": sorted(outputs),
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2))


def _measurement_wannier(config: ExperimentConfig) -> band_structure.WannierBasis:
    spectrum = band_structure.bloch_spectrum(
        config.measurement_lattice_depth, n_k=config.site_count
    )
    return band_structure.wannier(spectrum, points_per_cell=config.resolution)


def _thermal_joints(config: ExperimentConfig):
    """Position joint at the position-stage T, momentum joint at the
    momentum-stage T, over the split-off pair band."""
    model = config.model(boundary="periodic")
    spectrum = two_atom.diagonalize(two_atom.build(model))
    basis = _measurement_wannier(config)
    pos_thermal = two_atom.thermal_state(
        spectrum, config.temperature_position_k, model.recoil_energy
    )
    mom_thermal = two_atom.thermal_state(
        spectrum, config.temperature_momentum_k, model.recoil_energy
    )
    pos = distributions.joint_from_thermal(pos_thermal, spectrum, basis, "position")
    mom = distributions.joint_from_thermal(mom_thermal, spectrum, basis, "momentum")
    return model, spectrum, basis, pos, mom


# ---------------------------------------------------------------------------
# Subcommands


def cmd_params(config: ExperimentConfig, out: Path) -> list[str]:
    report = parameter_report(config)
    path = out / "params.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    for key in ("lattice_depth_erec", "hop_erec", "vdd_erec", "diatom_hop_erec"):
        print(f"{key} = {report[key]:.6g}")
    return [path.name]


def cmd_bands(config: ExperimentConfig, out: Path) -> list[str]:
    model = config.model()
    spectrum = band_structure.bloch_spectrum(model.lattice_depth)
    write_csv(
        out / "dispersion.csv",
        ["k_per_a", "band0_erec", "band1_erec", "band2_erec"],
        band_structure.dispersion_csv_rows(spectrum),
    )
    wspec = band_structure.bloch_spectrum(model.lattice_depth, n_k=config.site_count)
    basis = band_structure.wannier(wspec, points_per_cell=config.resolution)
    write_csv(
        out / "wannier.csv",
        ["x_a", "chi"],
        zip(basis.centered_grid(), basis.wannier_0),
    )
    return ["dispersion.csv", "wannier.csv"]


def cmd_liddi_scan(config: ExperimentConfig, out: Path) -> list[str]:
    phys = config.physical
    erec = config.model().recoil_energy
    field = liddi.LiddiField.from_atom(
        phys.dipole_coupling,
        phys.transition_freq_coupling,
        phys.lambda_coupling,
        phys.intensity_coupling,
    )
    offsets, energies = liddi.vdd_map(
        field, phys.lattice_shift, phys.lattice_constant, config.site_count // 2
    )
    write_csv(
        out / "liddi_scan.csv",
        ["site_offset", "energy_joule", "energy_erec"],
        zip(offsets, energies, energies / erec),
    )
    return ["liddi_scan.csv"]


def cmd_spectrum(
    config: ExperimentConfig, out: Path, sweep_spec: str | None = None
) -> list[str]:
    """Eigenvalue table; with --sweep, every branch versus the swept
    coupling (the split-off pair band emerges as the interaction grows)."""
    model = config.model()
    if sweep_spec is None:
        points = [("vdd", model.vdd, model)]
    else:
        parameter, values = _parse_range(sweep_spec)
        if parameter not in ("vdd", "vhop"):
            raise ConfigError(
                f"spectrum sweeps support vdd or vhop, got {parameter!r}"
            )
        points = []
        for value in values:
            if parameter == "vdd":
                varied = dataclasses.replace(model, vdd=-abs(value))
                points.append((parameter, varied.vdd, varied))
            else:
                varied = dataclasses.replace(model, hop=-abs(value))
                points.append((parameter, varied.hop, varied))
    rows = []
    for parameter, value, varied in points:
        spectrum = two_atom.diagonalize(two_atom.build(varied))
        rows.extend(
            (parameter, value, i, e) for i, e in enumerate(spectrum.eigenvalues)
        )
    write_csv(
        out / "spectrum.csv",
        ["parameter", "value", "index", "energy_erec"],
        rows,
    )
    return ["spectrum.csv"]


def cmd_dist(config: ExperimentConfig, out: Path) -> list[str]:
    model, spectrum, basis, pos, mom = _thermal_joints(config)
    outputs = []
    write_matrix(
        out / "position_joint.dat",
        pos,
        f"joint position density, T = {config.temperature_position_k} K",
    )
    outputs.append("position_joint.dat")
    write_matrix(
        out / "momentum_joint.dat",
        mom,
        f"joint momentum density, T = {config.temperature_momentum_k} K",
    )
    outputs.append("momentum_joint.dat")

    center = config.site_count // 2
    cond_x = distributions.conditional(pos, float(center), which_atom=1)
    write_csv(
        out / "conditional_position.csv",
        [f"x2_a_given_x1_{center}", "density"],
        zip(cond_x.grid, cond_x.density),
    )
    outputs.append("conditional_position.csv")

    p_measured = distributions.RECIPROCAL / 4.0
    cond_p = distributions.conditional(mom, p_measured, which_atom=1)
    marg_p = distributions.axis_marginal(mom, which_atom=2)
    write_csv(
        out / "conditional_momentum.csv",
        ["p2_hbar_per_a", "density_conditional", "density_marginal"],
        zip(cond_p.grid, cond_p.density, marg_p.density),
    )
    outputs.append("conditional_momentum.csv")

    metrics = distributions.epr_metrics(pos, mom)
    (out / "epr_metrics.json").write_text(
        json.dumps(dataclasses.asdict(metrics), indent=2, sort_keys=True)
    )
    outputs.append("epr_metrics.json")
    print(
        f"dx_minus = {metrics.dx_minus:.4g} a, dp_plus = {metrics.dp_plus:.4g} hbar/a, "
        f"s = {metrics.s:.4g}"
    )
    return outputs


def cmd_protocol(config: ExperimentConfig, out: Path) -> list[str]:
    prot = config.protocol
    model = config.model(boundary=prot.boundary)
    tilt = two_atom.ExternalPotential.linear(
        prot.slope_erec_per_site, species=prot.tilt_species
    )
    hamiltonian = two_atom.build(model, tilt)
    psi0 = protocol.initial_state(prot.sigma_e_sites, prot.center_site, config.site_count)
    trace = protocol.evolve(
        psi0,
        hamiltonian,
        prot.snapshot_times_s,
        erec_joule=model.recoil_energy,
        origin=prot.center_site,
        band=prot.diatom_band_width,
    )

    spectrum = band_structure.bloch_spectrum(model.lattice_depth, n_k=config.site_count)
    basis = band_structure.wannier(spectrum, points_per_cell=config.resolution)

    outputs = []
    rows = []
    for i, (t, diag, state) in enumerate(
        zip(trace.times, trace.diagnostics, trace.states)
    ):
        rows.append(
            (
                t,
                diag.diagonal_weight,
                diag.band_weight,
                diag.diatom_centroid,
                diag.single_centroid,
                diag.displacement_ratio,
            )
        )
        joint = distributions.position_joint(state, basis)
        name = f"snapshot_{i:03d}.dat"
        write_matrix(out / name, joint, f"joint position density at t = {t} s")
        outputs.append(name)
    write_csv(
        out / "protocol_diagnostics.csv",
        [
            "time_s",
            "diagonal_weight",
            "band_weight",
            "diatom_centroid_site",
            "single_centroid_site",
            "displacement_ratio",
        ],
        rows,
    )
    outputs.append("protocol_diagnostics.csv")

    region = prot.postselect_region or (0.0, prot.ejection_line_site)
    kept, retained = protocol.postselect_diatoms(
        trace.final(), region=region, band=prot.diatom_band_width
    )
    alpha = protocol.gaussian_envelope(
        prot.sigma_e_sites, prot.center_site, config.site_count
    )
    summary = {
        "retained_mass": retained,
        "diagonal_weight_final": trace.diagnostics[-1].diagonal_weight,
        "comb_fidelity": protocol.diagonal_comb_fidelity(kept, alpha**2),
        "single_centroid_final": trace.diagnostics[-1].single_centroid,
        "ejection_line_site": prot.ejection_line_site,
        "ejected": trace.diagnostics[-1].single_centroid > prot.ejection_line_site,
    }
    (out / "postselect.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    outputs.append("postselect.json")
    print(
        f"final ratio = {trace.diagnostics[-1].displacement_ratio:.3g}, "
        f"retained = {retained:.3g}, ejected = {summary['ejected']}"
    )
    return outputs


def _sweep_model(config: ExperimentConfig, parameter: str, value: float):
    """Model (and effective temperatures) for one sweep point."""
    model = config.model(boundary="periodic")
    t_pos = config.temperature_position_k
    t_mom = config.temperature_momentum_k
    if parameter == "vdd":
        model = dataclasses.replace(model, vdd=-abs(value))
    elif parameter == "vhop":
        model = dataclasses.replace(model, hop=-abs(value))
    elif parameter == "U0":
        spectrum = band_structure.bloch_spectrum(value)
        hopping = band_structure.hopping_exact(spectrum)
        model = dataclasses.replace(
            model,
            lattice_depth=value,
            hop=hopping.hop,
            tight_binding_valid=hopping.tight_binding_valid,
        )
    elif parameter == "T":
        t_pos = t_mom = value
    elif parameter == "l":
        phys = config.physical
        field = liddi.LiddiField.from_atom(
            phys.dipole_coupling,
            phys.transition_freq_coupling,
            phys.lambda_coupling,
            phys.intensity_coupling,
        )
        vdd = liddi.vdd_nearest(field.coupling, phys.lambda_coupling, value)
        model = dataclasses.replace(model, vdd=vdd / model.recoil_energy)
    return model, t_pos, t_mom


def sweep_point(config: ExperimentConfig, parameter: str, value: float) -> list:
    """One sweep row; failures are reported in the trailing error column."""
    row: dict = {name: "" for name in SWEEP_COLUMNS}
    row["parameter"] = parameter
    row["value"] = value
    try:
        if parameter == "sigma_E":
            sigma = band_structure.gaussian_sigma(config.measurement_lattice_depth)
            model = config.model(boundary="periodic")
            row["vhop_erec"] = model.hop
            row["vdd_erec"] = model.vdd
            dp_si = distributions.thermal_dp_plus(
                value * model.lattice_constant,
                config.temperature_momentum_k,
                config.physical.atom_mass,
            )
            dp = dp_si * model.lattice_constant / HBAR
            row["dx_minus_a"] = sigma
            row["dp_plus_hbar_per_a"] = dp
            row["s"] = 1.0 / (2.0 * sigma * dp)
        elif parameter == "slope":
            prot = config.protocol
            model = config.model(boundary=prot.boundary)
            row["vhop_erec"] = model.hop
            row["vdd_erec"] = model.vdd
            tilt = two_atom.ExternalPotential.linear(value, species=prot.tilt_species)
            psi0 = protocol.initial_state(
                prot.sigma_e_sites, prot.center_site, config.site_count
            )
            trace = protocol.evolve(
                psi0,
                two_atom.build(model, tilt),
                [prot.snapshot_times_s[-1]],
                erec_joule=model.recoil_energy,
                origin=prot.center_site,
                band=prot.diatom_band_width,
            )
            row["displacement_ratio"] = trace.diagnostics[-1].displacement_ratio
        else:
            model, t_pos, t_mom = _sweep_model(config, parameter, value)
            row["vhop_erec"] = model.hop
            row["vdd_erec"] = model.vdd
            spectrum = two_atom.diagonalize(two_atom.build(model))
            if len(spectrum.diatom_band) > 0:
                lo, hi = spectrum.diatom_band_edges
                row["diatom_min_erec"] = lo
                row["diatom_max_erec"] = hi
                row["split_gap_erec"] = spectrum.split_gap
                basis = _measurement_wannier(config)
                pos_w = two_atom.thermal_state(spectrum, t_pos, model.recoil_energy)
                mom_w = two_atom.thermal_state(spectrum, t_mom, model.recoil_energy)
                pos = distributions.joint_from_thermal(pos_w, spectrum, basis, "position")
                mom = distributions.joint_from_thermal(mom_w, spectrum, basis, "momentum")
                metrics = distributions.epr_metrics(pos, mom)
                row["dx_minus_a"] = metrics.dx_minus
                row["dp_plus_hbar_per_a"] = metrics.dp_plus
                row["s"] = metrics.s
    except Exception as exc:  # per-point failure recorded, sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return [row[name] for name in SWEEP_COLUMNS]


def _sweep_worker(args):
    config_dict, parameter, value = args
    config = ExperimentConfig.from_dict(config_dict)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sweep_point(config, parameter, value)


def _parse_range(spec: str) -> tuple[str, np.ndarray]:
    """'param start:stop:steps' -> (param, grid)."""
    parameter, rng = spec.split(None, 1) if " " in spec else (spec, None)
    if rng is None:
        raise ConfigError(f"sweep spec must be 'param start:stop:steps', got {spec!r}")
    try:
        start, stop, steps = rng.split(":")
        settings = SweepSettings(parameter, float(start), float(stop), int(steps))
    except ValueError as exc:
        raise ConfigError(f"bad sweep range {rng!r}: {exc}") from exc
    return settings.parameter, settings.grid()


def cmd_sweep(
    config: ExperimentConfig, out: Path, grid_spec: str | None, jobs: int
) -> list[str]:
    sweep = config.sweep
    if grid_spec is not None:
        parameter, rng = grid_spec.split(None, 1) if " " in grid_spec else (grid_spec, None)
        if rng is None:
            raise ConfigError(f"sweep spec must be 'param start:stop:steps', got {grid_spec!r}")
        try:
            start, stop, steps = rng.split(":")
            sweep = SweepSettings(parameter, float(start), float(stop), int(steps))
        except ValueError as exc:
            raise ConfigError(f"bad sweep range {rng!r}: {exc}") from exc

    values = sweep.grid()
    tasks = [(config.to_dict(), sweep.parameter, float(v)) for v in values]
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_worker, tasks))
    else:
        rows = [_sweep_worker(t) for t in tasks]
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return ["sweep.csv"]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticeepr",
        description="optical-lattice pair-correlation simulator",
    )
    parser.add_argument("--config", type=Path, default=None, help="experiment INI file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument(
        "--resolution", type=int, default=None, help="grid points per lattice cell"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="reserved; no stochastic paths yet"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("params", help="derived-parameter report")
    sub.add_parser("bands", help="band dispersion and Wannier function dumps")
    sub.add_parser("liddi-scan", help="interaction vs relative site offset")
    p_spectrum = sub.add_parser("spectrum", help="two-atom eigenvalues")
    p_spectrum.add_argument(
        "--sweep",
        default=None,
        help="'vdd start:stop:steps' or 'vhop ...': all branches per point",
    )
    sub.add_parser("dist", help="joint/conditional distributions and widths")
    sub.add_parser("protocol", help="separation-protocol simulation")
    p_sweep = sub.add_parser("sweep", help="parameter sweep table")
    p_sweep.add_argument(
        "grid", nargs="?", default=None, help="'param start:stop:steps' (else [sweep] section)"
    )
    p_init = sub.add_parser("init-config", help="write the bundled lithium config")
    p_init.add_argument("path", nargs="?", default="lithium.ini")
    return parser


COMMANDS = {
    "params": cmd_params,
    "bands": cmd_bands,
    "liddi-scan": cmd_liddi_scan,
    "dist": cmd_dist,
    "protocol": cmd_protocol,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.time()

    if args.command == "init-config":
        write_config(lithium_default(), args.path)
        print(f"wrote {args.path}")
        return EXIT_OK

    try:
        config = load_config(args.config) if args.config else lithium_default()
        if args.resolution is not None:
            config = dataclasses.replace(config, resolution=args.resolution)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out: Path = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: cannot create output dir: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "sweep":
                outputs = cmd_sweep(config, out, args.grid, max(1, args.jobs))
            elif args.command == "spectrum":
                outputs = cmd_spectrum(config, out, args.sweep)
            else:
                outputs = COMMANDS[args.command](config, out)
        for w in {str(w.message) for w in caught}:
            print(f"warning: {w}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        ValueError,
        RuntimeError,
        np.linalg.LinAlgError,
        band_structure.ConvergenceError,
    ) as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    write_manifest(out, args.command, config, outputs, t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
