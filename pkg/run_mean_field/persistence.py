"""
Run directory layout:

    manifest.json               see MANIFEST_SCHEMA.md
    Phi.mfoc rho.mfoc phi.mfoc  full trajectories as stacked snapshot frames
    snapshots/                  per-node snapshot files every output.snapshot_stride steps
    fp_diagnostics.csv hjb_diagnostics.csv iterations.csv
    clouds/                     particle dumps
"""
import csv
import json
import os
from datetime import datetime, timezone

import numpy as np

from mfoc import __version__, get_format_schema_int
from mfoc.exceptions import ConfigError, MeshMismatchError
from mfoc.grid.snapshot import read_snapshot, snapshot_filename, write_snapshot
from mfoc.particles.clouds import ParticleCloud
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fixed_point import IterationLog, SolutionPair
from mfoc.solvers.trajectory import DensityTrajectory, Trajectory, ValueTrajectory, lipschitz_profile
from run_mean_field.json_encoders import SortedNumpyEncoder
from run_mean_field.manifest_schema_version import MANIFEST_SCHEMA_VERSION

MANIFEST_FILENAME = "manifest.json"
SNAPSHOT_DIR = "snapshots"
CLOUD_DIR = "clouds"
PHI_NAME = "Phi"
RHO_NAME = "rho"
PHI_INPUT_NAME = "phi"


class RunDirectory:

    def __init__(self, directory: str):
        self.directory = directory

    def __repr__(self):
        return f"RunDirectory({self.directory})"

    def path(self, *parts) -> str:
        return os.path.join(self.directory, *parts)

    def create(self):
        for sub_dir in ("", SNAPSHOT_DIR, CLOUD_DIR):
            os.makedirs(self.path(sub_dir), exist_ok=True)

    @property
    def manifest_filename(self) -> str:
        return self.path(MANIFEST_FILENAME)

    def trajectory_filename(self, name: str) -> str:
        return self.path(f"{name}.mfoc")


def write_trajectory(run_dir: RunDirectory, name: str, trajectory: Trajectory, stride: int = 1):
    write_snapshot(run_dir.trajectory_filename(name), trajectory.grid, trajectory.values)
    last = len(trajectory) - 1
    for k in sorted(set(range(0, len(trajectory), stride)) | {last}):
        write_snapshot(snapshot_filename(run_dir.path(SNAPSHOT_DIR), name, k), trajectory.grid, trajectory.values[k])


def read_trajectory_values(run_dir: RunDirectory, name: str, spec: ProblemSpec) -> np.ndarray:
    grid, frames = read_snapshot(run_dir.trajectory_filename(name))
    if grid != spec.grid or len(frames) != spec.mesh.nt + 1:
        raise MeshMismatchError(f"{run_dir.trajectory_filename(name)}: {len(frames)} frames on {grid}, "
                                f"config expects {spec.mesh.nt + 1} on {spec.grid}")
    return frames


def _write_csv(filename: str, header, rows):
    with open(filename, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def write_fp_diagnostics(filename: str, rho: DensityTrajectory):
    header = ["t", "mass", "min", "l2_norm", "drift_sup", "drift_energy", "substeps"]
    _write_csv(filename, header, [[getattr(d, h) if h != "min" else d.minimum for h in header]
                                  for d in rho.diagnostics])


def write_hjb_diagnostics(filename: str, Phi: ValueTrajectory):
    sups = np.abs(Phi.values).reshape(len(Phi), -1).max(axis=1)
    minimum = Phi.transform_minimum if Phi.transform_minimum is not None else np.full(len(Phi), np.nan)
    rows = zip(Phi.mesh.times, sups, lipschitz_profile(Phi), minimum)
    _write_csv(filename, ["t", "Phi_sup", "grad_Phi_sup", "min_v"], rows)


def write_iteration_log(filename: str, log: IterationLog):
    _write_csv(filename, ["k", "residual", "density_gap", "envelope_margin", "budget_violated"],
               [list(record) for record in log])


def write_cloud(filename: str, cloud: ParticleCloud):
    header = ["particle_id"] + [f"x{axis}" for axis in range(cloud.d)]
    _write_csv(filename, header, ([i] + [repr(float(x)) for x in position]
                                  for i, position in enumerate(cloud.positions)))


def write_solution(run_dir: RunDirectory, pair: SolutionPair, log: IterationLog, stride: int = 1):
    write_trajectory(run_dir, PHI_NAME, pair.Phi, stride)
    write_trajectory(run_dir, RHO_NAME, pair.rho, stride)
    write_trajectory(run_dir, PHI_INPUT_NAME, pair.phi_input, stride)
    write_fp_diagnostics(run_dir.path("fp_diagnostics.csv"), pair.rho)
    write_hjb_diagnostics(run_dir.path("hjb_diagnostics.csv"), pair.Phi)
    write_iteration_log(run_dir.path("iterations.csv"), log)


def load_solution(run_dir: RunDirectory, spec: ProblemSpec) -> SolutionPair:
    """ Rebuilds the SolutionPair written by write_solution (diagnostics are not restored) """
    manifest = read_manifest(run_dir.manifest_filename)
    solve = manifest.get("solve")
    if solve is None:
        raise ConfigError(f"{run_dir} holds no solution (manifest has no 'solve' entry)")
    Phi = ValueTrajectory(spec.grid, spec.mesh, read_trajectory_values(run_dir, PHI_NAME, spec))
    rho = DensityTrajectory(spec.grid, spec.mesh, read_trajectory_values(run_dir, RHO_NAME, spec))
    phi_input = ValueTrajectory(spec.grid, spec.mesh, read_trajectory_values(run_dir, PHI_INPUT_NAME, spec))
    return SolutionPair(spec, Phi, rho, phi_input, solve["converged"], solve["residual"], solve["tolerance"],
                        solve["iterations"], solve["self_consistency_gap"],
                        solve.get("fixed_point_gap", float("nan")))


def write_manifest(filename: str, manifest: dict, timestamp: bool = True):
    data = dict(manifest)
    data["manifest_schema_version"] = MANIFEST_SCHEMA_VERSION
    data["mfoc_version"] = __version__
    if timestamp:
        data["created"] = datetime.now(timezone.utc).isoformat()
    with open(filename, "w") as f:
        json.dump(data, f, cls=SortedNumpyEncoder, sort_keys=True, indent=2)  # Sort so diffs work


def read_manifest(filename: str) -> dict:
    try:
        with open(filename) as f:
            manifest = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read manifest '{filename}': {e}") from e
    _validate_schema_compatibility(manifest.get("manifest_schema_version", "0.0.0"))
    return manifest


def _validate_schema_compatibility(manifest_schema_version: str):
    """ Raise an error if versions out of sync """
    reader_schema_int = get_format_schema_int(MANIFEST_SCHEMA_VERSION)
    manifest_schema_int = get_format_schema_int(manifest_schema_version)
    if reader_schema_int < manifest_schema_int:
        raise ConfigError(f"This reader ({MANIFEST_SCHEMA_VERSION}) cannot read {manifest_schema_version=} "
                          f"- please upgrade.")
