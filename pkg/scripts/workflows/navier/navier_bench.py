#!/usr/bin/env python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import argparse
import json
import logging
import os
import sys
import traceback

from navier.config import ConfigError, apply_overrides, describe, load_config, worker_count
from navier.dynamics import ElastodynamicSolver, TimeGrid
from navier.ensembles import ENSEMBLE_KINDS, EnsembleParameters, ensemble_data
from navier.geometry import DomainSpec, build_mesh, mesh_header, write_mesh
from navier.harness import run_all
from navier.reports import (
    dump_json,
    meta_block,
    read_results,
    summary_table,
    write_csv,
    write_energy_csv,
    write_field,
    write_json,
    write_norm_report,
    write_ratio_csv,
    write_results_xml,
    write_trace_csv,
)
from navier.spaces import FeSpace, LameParameters, assemble_forms
from navier.traces import bochner_norms, stress_vector_trace

IDENTITY_CHECKS = ("AppA", "MULT-ID", "TRANSPOSE", "ENERGY", "KORN")
ESTIMATES = ("T3.1", "T3.4", "T3.5", "L3.7", "T3.8", "T3.9k1", "T3.10")
INTERPOLATION = ("AppB",)
BUNDLE_DIRS = ("identities", "estimates", "interp")


def parser():
    parser = argparse.ArgumentParser(
        description="Verification workbench for trace regularity in linear elastodynamics"
    )
    parser.add_argument("--debug", action="store_true", help="debug")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML configuration file, defaults apply when omitted")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="override run.workers, the number of worker processes")
    parser.add_argument("--out", type=str, default=None, help="override output.directory")
    parser.add_argument("--serial", action="store_true",
                        help="run everything in this process; the reference output")
    subparsers = parser.add_subparsers(help="sub-command help", dest="cmd")
    subparsers.required = True

    subparsers.add_parser("mesh", help="write the mesh of every configured level")

    solve = subparsers.add_parser("solve", help="one forward solve with its norms")
    solve.add_argument("--kind", choices=ENSEMBLE_KINDS, default="zero",
                       help="data ensemble of the solve (default: zero)")
    solve.add_argument("--member", type=int, default=0, help="ensemble member")
    solve.add_argument("-T", "--final-time", dest="T", type=float, default=None,
                       help="final time, defaults to the first entry of T_list")
    solve.add_argument("--level", type=int, default=None,
                       help="refinement level, defaults to discretization.level")

    subparsers.add_parser("identities",
                          help="algebraic identities, multiplier and transposition checks, "
                               "energy and Korn constants")
    subparsers.add_parser("estimates", help="trace estimate sweeps over T and levels")
    subparsers.add_parser("interp", help="time-scale interpolation benchmarks")

    report = subparsers.add_parser("report", help="summarise a bundle directory")
    report.add_argument("bundle", nargs="?", default=None,
                        help="bundle directory, defaults to output.directory")
    return parser


def parse_args(argv=None):
    return parser().parse_args(argv)


def setup(args):
    """Validated config with the command line overrides applied, and its hash."""
    config = load_config(args.config)
    config = apply_overrides(config, args.seed, args.workers, args.out, args.serial)
    digest = describe(config)
    return config, digest


def out_dir(config, *parts):
    path = os.path.join(config["output"]["directory"], *parts)
    os.makedirs(path, exist_ok=True)
    return path


def cmd_mesh(args, config, digest):
    dom = config["domain"]
    directory = out_dir(config)
    header = mesh_header(digest, config["run"]["seed"])
    for level in dom["levels"]:
        spec = DomainSpec(dom["dimension"], dom["inner_radius"], dom["outer_radius"], level)
        mesh = build_mesh(spec)
        path = os.path.join(directory, "mesh-d%d-level%d.txt" % (spec.dimension, level))
        write_mesh(mesh, path, header)
        logging.info("wrote %s: %d nodes, %d cells" % (path, mesh.num_nodes, mesh.num_cells))
    return 0


def cmd_solve(args, config, digest):
    dom = config["domain"]
    disc = config["discretization"]
    seed = config["run"]["seed"]
    meta = meta_block(digest, seed)
    level = disc["level"] if args.level is None else args.level
    T = disc["T_list"][0] if args.T is None else args.T
    spec = DomainSpec(dom["dimension"], dom["inner_radius"], dom["outer_radius"], level)
    lame = LameParameters(config["physics"]["mu"], config["physics"]["lam"])
    space = FeSpace(build_mesh(spec), disc["degree"])
    forms = assemble_forms(space, lame, worker_count(config))
    grid = TimeGrid(T, max(1, int(round(T * disc["steps_per_unit"] * 2 ** level))))
    params = EnsembleParameters.from_config(config["ensembles"])
    data = ensemble_data(args.kind, forms, seed, args.member, params)
    logging.info("solving %s member %d: T=%g N=%d level=%d dofs=%d"
                 % (args.kind, args.member, T, grid.N, level, space.dim))
    traj = ElastodynamicSolver(forms, grid, lift=disc["lift"]).forward(data)

    directory = out_dir(config, "solve")
    stem = os.path.join(directory, "%s-%d" % (args.kind, args.member))
    write_energy_csv(stem + "-energy.csv", traj, forms, meta)
    write_field(stem + "-final.txt", traj.field(grid.N), meta)
    write_trace_csv(stem + "-traction.csv", stress_vector_trace(traj, lame), meta)
    norms = bochner_norms(traj, forms, meta={"kind": args.kind, "member": args.member,
                                             "lift": disc["lift"]})
    write_norm_report(stem + "-norms", norms, meta)
    for name, value in norms.values.items():
        logging.info("%s = %.6e" % (name, value))
    return 0


def write_bundle(directory, bundle, meta, formats=("json", "csv", "xml")):
    """
    bundle.json, results.xml, one ratio CSV per report and its extra
    tables. bundle.json and errors.json are always written, the report
    subcommand reads them.
    """
    write_json(os.path.join(directory, "bundle.json"), bundle.as_dict(), meta)
    if bundle.errors:
        write_json(os.path.join(directory, "errors.json"), {"errors": bundle.errors}, meta)
    if "xml" in formats:
        write_results_xml(os.path.join(directory, "results.xml"), bundle.reports, meta)
    if "csv" not in formats:
        return
    for report in bundle.reports:
        write_ratio_csv(os.path.join(directory, "%s.csv" % report.theorem), report, meta)
        for name, (header, rows) in sorted(report.tables.items()):
            write_csv(os.path.join(directory, "%s-%s.csv" % (report.theorem, name)),
                      header, rows, meta)


def flag_results(bundle):
    """(suite, case, status, message) rows from the flags of bundle.json."""
    out = []
    for theorem, section in sorted(bundle.get("experiments", {}).items()):
        for f in section.get("flags", []):
            out.append((theorem, f["name"], "pass" if f["passed"] else "fail", ""))
    return out


def run_bundle(config, digest, name, experiments):
    bundle = run_all(config, worker_count(config), only=experiments)
    directory = out_dir(config, name)
    write_bundle(directory, bundle, meta_block(digest, config["run"]["seed"]),
                 config["output"]["formats"])
    failed = [f.name for r in bundle.reports for f in r.flags if not f.passed]
    logging.info("%s: %d reports, %d failed flags, %d errors in %s"
                 % (name, len(bundle.reports), len(failed), len(bundle.errors), directory))
    for report in bundle.reports:
        for f in report.flags:
            if not f.passed:
                logging.warning("%s %s" % (report.theorem, f.message()))
    if bundle.errors:
        return 1
    return 0 if bundle.passed else 1


def cmd_identities(args, config, digest):
    return run_bundle(config, digest, "identities", IDENTITY_CHECKS)


def cmd_estimates(args, config, digest):
    return run_bundle(config, digest, "estimates", ESTIMATES)


def cmd_interp(args, config, digest):
    return run_bundle(config, digest, "interp", INTERPOLATION)


def _bundle_dirs(path):
    if os.path.isfile(os.path.join(path, "bundle.json")):
        return [path]
    return [os.path.join(path, d) for d in BUNDLE_DIRS
            if os.path.isfile(os.path.join(path, d, "bundle.json"))]


def cmd_report(args, config, digest):
    path = args.bundle or config["output"]["directory"]
    dirs = _bundle_dirs(path)
    if not dirs:
        raise FileNotFoundError("no bundle.json under %s" % path)
    experiments = {}
    results = []
    errors = []
    for d in dirs:
        with open(os.path.join(d, "bundle.json")) as f:
            bundle = json.load(f)
        experiments.update(bundle.get("experiments", {}))
        errors.extend(bundle.get("errors", []))
        xml = os.path.join(d, "results.xml")
        results.extend(read_results(xml) if os.path.isfile(xml) else flag_results(bundle))
    sys.stdout.write(summary_table({"experiments": experiments}, results))
    if errors:
        sys.stdout.write("\n%d runtime errors:\n%s" % (len(errors), dump_json(errors)))
    failed = any(status != "pass" for _, _, status, _ in results)
    return 1 if failed or errors else 0


cmd_disp = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "identities": cmd_identities,
    "estimates": cmd_estimates,
    "interp": cmd_interp,
    "report": cmd_report,
}


def write_error_record(config, digest, exc):
    directory = out_dir(config)
    meta = meta_block(digest, config["run"]["seed"])
    write_json(os.path.join(directory, "errors.json"),
               {"errors": [{"error": type(exc).__name__, "message": str(exc)}]}, meta)


def run_args(args):
    """Exit code of one parsed invocation: 0 pass, 1 failure, 2 config error."""
    try:
        config, digest = setup(args)
    except ConfigError as exc:
        logging.error("invalid configuration: %s" % exc)
        return 2
    try:
        return cmd_disp[args.cmd](args, config, digest)
    except Exception as exc:
        logging.error("%s failed: %s" % (args.cmd, exc))
        logging.debug(traceback.format_exc())
        try:
            write_error_record(config, digest, exc)
        except OSError as err:
            logging.error("could not write errors.json: %s" % err)
        return 1


def main(argv=None):
    args = parse_args(argv)
    log = logging.getLogger()
    log.setLevel(logging.INFO)
    if args.debug:
        log.setLevel(logging.DEBUG)
    if not log.handlers:
        logging.basicConfig(format="%(levelname)s: %(message)s")
    return run_args(args)


if __name__ == "__main__":
    ret = 0
    try:
        ret = main()
    except Exception:
        ret = 1
        traceback.print_exc()
    sys.exit(ret)
