#!/usr/bin/env python3

import logging
import sys
from argparse import ArgumentParser

import numpy as np

from mfoc.diagnostics.cost import evaluate_cost, optimality_probe, slope_profile
from mfoc.exceptions import AssumptionError, ConfigError, MeshMismatchError, SolverBreakdownError
from mfoc.particles.simulation import simulate_mkv
from mfoc.particles.value_identity import verify_value_identity
from mfoc.particles.wasserstein import is_exact, wasserstein1
from mfoc.problem.problem_spec import validate_assumptions
from mfoc.solvers.fixed_point import certify, compute_budget, solve
from run_mean_field.manifest_schema_version import MANIFEST_SCHEMA_VERSION
from run_mean_field.persistence import (CLOUD_DIR, RunDirectory, load_solution, read_manifest, write_cloud,
                                        write_manifest, write_solution)
from run_mean_field.run_config import RunConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTIONS = 3
EXIT_SOLVER = 4
EXIT_CERTIFICATION = 5


def _setup_arg_parser():
    parser = ArgumentParser(description='Mean-field optimal control solver and verification suite')
    parser.add_argument('--version', action='store_true', help='show manifest schema version')
    parser.add_argument('--debug', action='store_true', help='log solver progress')
    parser.add_argument('--no-timestamp', action='store_true',
                        help="Leave 'created' out of manifests so reruns are byte-identical")

    subparsers = parser.add_subparsers(dest='subcommand')
    parser_validate = subparsers.add_parser("validate", help="Check assumptions (A1)-(A3) and print the budget")
    parser_solve = subparsers.add_parser("solve", help="Solve the fixed point, certify it and write a run directory")
    parser_solve.add_argument("--particles", action='store_true',
                              help="Also run the particle validation on the solution")
    parser_particles = subparsers.add_parser("particles", help="Particle validation of a finished run")
    parser_probe = subparsers.add_parser("probe", help="Optimality probe of a finished run")

    for p in [parser_validate, parser_solve, parser_particles, parser_probe]:
        p.add_argument("config", help="YAML run configuration")

    for p in [parser_particles, parser_probe]:
        p.add_argument('--from', dest='run_dir', required=True, help='Run directory written by "solve"')

    return parser


def _write(run_dir: RunDirectory, manifest: dict, args):
    write_manifest(run_dir.manifest_filename, manifest, timestamp=not args.no_timestamp)


def validate(args) -> int:
    config = load_config(args.config)
    report = validate_assumptions(config.spec)
    for check in report.checks:
        print(check)
    if not report.passed:
        return EXIT_ASSUMPTIONS
    print(compute_budget(config.spec, slack=config.solver.budget_slack))
    return EXIT_OK


def particle_validation(config: RunConfig, pair, run_dir: RunDirectory) -> dict:
    """ Mean-field consistency per seed and the value identity at every probe point """
    spec = config.spec
    settings = config.particles
    results = {"N": settings.N, "mean_field": [], "value_identity": []}
    final_density = pair.rho.snapshot(spec.mesh.nt)
    for seed in settings.seeds:
        print(f"Simulating {settings.N} particles (seed {seed})")
        clouds = simulate_mkv(spec, pair.Phi, settings.N, seed)
        write_cloud(run_dir.path(CLOUD_DIR, f"mkv_final_seed{seed}.csv"), clouds.final)
        distance = wasserstein1(clouds.final, final_density, seed=seed)
        results["mean_field"].append({"seed": seed, "w1_final": distance, "exact": is_exact(clouds.final,
                                                                                           final_density)})
    for point in settings.probe_points:
        print(f"Value identity at x0={point.x0}, t0={point.t0}")
        report = verify_value_identity(spec, pair, pair.phi_input, point.x0, point.t0, settings.N,
                                       seed=settings.seeds[0])
        results["value_identity"].append(report.to_dict())
    results["passed"] = all(r["zeta_passed"] and r["kinetic_bound_passed"] for r in results["value_identity"])
    return results


def solve_command(args) -> int:
    config = load_config(args.config)
    spec = config.spec
    solver = config.solver
    run_dir = RunDirectory(config.output.directory)
    run_dir.create()
    manifest = {"config": config.raw, "config_hash": config.config_hash, "status": "started"}

    assumptions = validate_assumptions(spec)
    manifest["assumptions"] = assumptions.to_dict()
    if not assumptions.passed:
        manifest["status"] = "assumptions_failed"
        _write(run_dir, manifest, args)
        return EXIT_ASSUMPTIONS
    budget = compute_budget(spec, slack=solver.budget_slack)
    manifest["budget"] = budget.to_dict()
    print(f"Budget: {budget}")

    try:
        pair, log = solve(spec, theta=solver.damping, tol=solver.tolerance, max_iter=solver.max_iterations,
                          budget=budget, cfl_safety=solver.cfl_safety, max_substeps=solver.max_substeps)
    except SolverBreakdownError as e:
        manifest["status"] = "solver_error"
        manifest["error"] = str(e)
        _write(run_dir, manifest, args)
        raise
    print(f"Solve: {pair}")
    write_solution(run_dir, pair, log, config.output.snapshot_stride)
    manifest["solve"] = pair.to_dict()
    manifest["solve"].update({"theta": solver.damping, "residuals": log.residuals,
                              "budget_violations": sum(r.budget_violated for r in log)})
    if not pair.converged:
        manifest["status"] = "not_converged"
        _write(run_dir, manifest, args)
        return EXIT_SOLVER

    certification = certify(pair, budget)
    manifest["certification"] = certification.to_dict()
    cost = evaluate_cost(spec, pair)
    manifest["cost"] = cost.to_dict()
    print(cost)
    particles_passed = True
    if args.particles:
        manifest["particles"] = particle_validation(config, pair, run_dir)
        particles_passed = manifest["particles"]["passed"]

    if not certification.passed:
        manifest["status"] = "certification_failed"
    elif not particles_passed:
        manifest["status"] = "particles_failed"
    else:
        manifest["status"] = "certified"
    _write(run_dir, manifest, args)
    for failure in certification.failures():
        print(f"Certification failed: {failure}")
    if not particles_passed:
        print("Particle validation failed")
    # exit 5 covers particle validation too
    return EXIT_OK if certification.passed and particles_passed else EXIT_CERTIFICATION


def _load_run(args):
    config = load_config(args.config)
    run_dir = RunDirectory(args.run_dir)
    manifest = read_manifest(run_dir.manifest_filename)
    if manifest.get("config_hash") != config.config_hash:
        logging.warning("%s was produced from a different configuration than %s", run_dir, args.config)
    return config, run_dir, manifest, load_solution(run_dir, config.spec)


def particles_command(args) -> int:
    config, run_dir, manifest, pair = _load_run(args)
    run_dir.create()
    results = particle_validation(config, pair, run_dir)
    manifest["particles"] = results
    _write(run_dir, manifest, args)
    return EXIT_OK if results["passed"] else EXIT_CERTIFICATION


def probe_command(args) -> int:
    config, run_dir, manifest, pair = _load_run(args)
    settings = config.particles
    report, results = optimality_probe(config.spec, pair, settings.n_perturb, settings.epsilon,
                                       seed=settings.seeds[0])
    slopes = slope_profile(config.spec, pair, seed=settings.seeds[0])
    manifest["optimality_probe"] = {"report": report.to_dict(), "perturbations": [r._asdict() for r in results],
                                    "slopes": slopes, "slopes_decreasing": bool(np.all(np.diff(slopes) <= 0))}
    _write(run_dir, manifest, args)
    print(report["stationarity"])
    return EXIT_OK if report.passed else EXIT_CERTIFICATION


SUBCOMMANDS = {
    "validate": validate,
    "solve": solve_command,
    "particles": particles_command,
    "probe": probe_command,
}


def run(argv) -> int:
    parser = _setup_arg_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(MANIFEST_SCHEMA_VERSION)
        return EXIT_OK
    if args.debug:
        logging.basicConfig(level=logging.DEBUG)

    if args.subcommand is None:
        parser.print_help()
        return EXIT_OK

    try:
        return SUBCOMMANDS[args.subcommand](args)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as e:
        print(f"Assumption violated: {e}", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    except (SolverBreakdownError, MeshMismatchError) as e:
        print(f"Solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
