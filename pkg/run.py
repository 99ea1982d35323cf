#!/usr/bin/env python3
# run.py - command-line entry point for lqsparse

import argparse
import os
import sys

# Add project root to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from core.utils.errors import EXIT_NUMERICAL, EXIT_OK, LqSparseError, exit_code_for
from utils.logger import log_error, log_event

INTERP_FUNCTIONS = ("disk", "half-plane", "sine-product")


def _load(args, overrides):
    from core.config import DEFAULT_CONFIG, load_run_config, parse_override_args

    pairs = parse_override_args(overrides)
    if args.jobs is not None:
        pairs.append(("harness.jobs", str(args.jobs)))
    if args.output is not None:
        pairs.append(("output.directory", args.output))
    return load_run_config(args.config or DEFAULT_CONFIG, pairs)


def cmd_solve(args, overrides):
    from core.config import write_manifest
    from core.mesh import build_uniform_square
    from core.ocp_solver import (beta_sparsity_sweep, load_initial, quadratic_growth_diagnostic, solve,
                                 structure_diagnostics, write_report)
    from core.utils.errors import SolverError
    from core.utils.health import check_memory_budget

    rc = _load(args, overrides)
    run_dir = rc.run_dir("solve")
    mesh = build_uniform_square(rc.n)
    check_memory_budget(mesh.n_vertices)
    opts = rc.opts
    if rc.init_path:
        from dataclasses import replace
        opts = replace(opts, initial=load_initial(rc.init_path, mesh))

    log_event("solve_started", {"n": rc.n, "q": rc.params.q, "beta": rc.params.beta, "output": str(run_dir)})
    try:
        report = solve(rc.spec, mesh, opts)
    except SolverError as e:
        if e.report is not None:
            write_report(e.report, run_dir, formats=rc.formats)
        write_manifest(run_dir, rc, "solve", {"status": "failed", "error": str(e), "residual": e.residual})
        raise

    write_report(report, run_dir, formats=rc.formats)
    diagnostics = structure_diagnostics(report, rc.params)
    results = {"status": "converged", **report.summary(), "structure": diagnostics.as_dict()}
    if args.diagnostics:
        results["growth"] = quadratic_growth_diagnostic(rc.spec, mesh, report)
        sweep, monotone = beta_sparsity_sweep(rc.spec, mesh, rc.opts)
        sweep.to_csv(run_dir / "beta_sweep.csv", index=False, float_format="%.17g")
        results["beta_sweep"] = {"monotone": monotone, "rows": sweep.to_dict("records")}
    write_manifest(run_dir, rc, "solve", results)

    print(f"converged: cost={report.cost:.10g} kkt={report.kkt_residual:.3e} "
          f"support_fraction={report.support_fraction:.6f} band_violations={diagnostics.band_violations}")
    print(f"artifacts: {run_dir}")
    return EXIT_OK


def cmd_eoc(args, overrides):
    from core.config import write_manifest
    from core.eoc_harness import run_ladder, trend_summary
    from core.utils.health import check_memory_budget

    rc = _load(args, overrides)
    run_dir = rc.run_dir("eoc")
    run_dir.mkdir(parents=True, exist_ok=True)
    ladder = rc.ladder()
    finest = rc.n * 2 ** (rc.levels - 1 + rc.ref_extra)
    check_memory_budget((finest + 1) ** 2, ladder.jobs)

    table = run_ladder(ladder, output_dir=run_dir / "reports")
    table.to_csv(run_dir / "eoc_table.csv")
    pretty = table.to_pretty()
    (run_dir / "eoc_table.txt").write_text(pretty + "\n")
    if "gnuplot" in rc.formats:
        table.write_gnuplot(run_dir / "gnuplot")
    trend = trend_summary(table)
    failed = [row for row in table.rows if row["status"] != "ok"]
    write_manifest(run_dir, rc, "eoc", {"trend": {f"{q:g}": s for q, s in trend.items()},
                                        "failed_rows": len(failed), **table.metadata})

    print(pretty)
    print(f"artifacts: {run_dir}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_interp_study(args, overrides):
    from core.config import write_manifest
    from core.mesh import refinement_ladder
    from core.presets import sine_product
    from core.quasi_interp import DiskIndicator, HalfPlaneIndicator, interp_error_study
    from core.utils.errors import ConfigError

    rc = _load(args, overrides)
    functions = {"disk": DiskIndicator(), "half-plane": HalfPlaneIndicator(), "sine-product": sine_product}
    if rc.interp_function not in functions:
        raise ConfigError(f"interp_function must be one of {list(INTERP_FUNCTIONS)}, got {rc.interp_function!r}")

    run_dir = rc.run_dir("interp-study")
    run_dir.mkdir(parents=True, exist_ok=True)
    study = interp_error_study(refinement_ladder(rc.n, rc.levels), functions[rc.interp_function],
                               norm=rc.interp_norm, jobs=rc.jobs, label=rc.interp_function)
    study.to_csv(run_dir / "interp_study.csv")
    write_manifest(run_dir, rc, "interp-study", {"exponent_L1": study.exponent_l1,
                                                 "exponent_L2": study.exponent_l2})

    print(study.to_frame().to_string(index=False))
    print(f"fitted {rc.interp_norm} exponent: {study.fitted_exponent:.4f}")
    return EXIT_OK


def cmd_selftest(args, overrides):
    from core.selftest import run_selftest
    from core.utils.health import print_health

    print_health()
    results = run_selftest(quick=args.quick)
    for name, passed in results.items():
        print(f"{'✅' if passed else '❌'} {name}")
    return EXIT_OK if all(results.values()) else EXIT_NUMERICAL


COMMANDS = {
    "solve": cmd_solve,
    "eoc": cmd_eoc,
    "interp-study": cmd_interp_study,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="run.py",
        allow_abbrev=False,
        description="Huber-regularised L^q-sparse elliptic optimal control",
        epilog="Any config key can be overridden as --section.key VALUE, or --key VALUE when unique.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="YAML run configuration (default config/paper_example.yaml)")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads for ladder solves")
    parser.add_argument("--output", default=None, help="run directory (default $LQSPARSE_OUTPUT_ROOT/<command>)")
    parser.add_argument("--quiet", action="store_true", help="only log errors to the console")
    parser.add_argument("--quick", action="store_true", help="selftest: reduced sample counts")
    parser.add_argument("--diagnostics", action="store_true",
                        help="solve: add the quadratic growth check and a beta sweep to the manifest")
    return parser


def main(argv=None):
    parser = build_parser()
    args, overrides = parser.parse_known_args(argv)
    if args.quiet:
        os.environ["LQSPARSE_LOG_LEVEL"] = "ERROR"
    try:
        return COMMANDS[args.command](args, overrides)
    except LqSparseError as e:
        code = exit_code_for(e)
        log_error(e, {"command": args.command, "exit_code": code})
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
