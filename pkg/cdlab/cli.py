"""
Command-line interface for cdlab.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from cdlab.config import PRESET_MESHES, SWEEP_PRESETS, RunConfig
from cdlab.exceptions import ConfigError, SolverError
from cdlab.formulations import INITIAL_RATES, FormulationKind

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

FORMULATION_NAMES = [k.value for k in FormulationKind]


def configure_logging(verbose: bool = False):
    level = "DEBUG" if verbose else os.environ.get("CDLAB_LOG_LEVEL", "INFO")
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Convection-diffusion stabilization laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log every time step")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Single run
    run_parser = subparsers.add_parser("run", help="Run one formulation")
    run_parser.add_argument("config", nargs="?", help="JSON configuration file")
    run_parser.add_argument("--preset", choices=sorted(PRESET_MESHES), help="Benchmark preset")
    run_parser.add_argument("--formulation", choices=FORMULATION_NAMES, help="Weak formulation")
    run_parser.add_argument("--kappa", type=float, help="Diffusivity")
    run_parser.add_argument("--cfl", type=float, help="CFL number")
    run_parser.add_argument("--alpha-f", type=float,
                            help="alpha_f of the energy-decaying family (alpha_m = gamma = 1/2)")
    run_parser.add_argument("--end-time", type=float, help="Final time")
    run_parser.add_argument("--initial-rate", choices=INITIAL_RATES, help="Consistent initial rate or start from rest")
    run_parser.add_argument("--output-dir", help="Directory for the output files")
    run_parser.add_argument("--dump-small-scales", action="store_true",
                            help="Write the final small-scale field as CSV")

    # Mesh family
    sweep_parser = subparsers.add_parser("sweep", help="Run the benchmark mesh family")
    sweep_parser.add_argument("--formulations", nargs="+", choices=FORMULATION_NAMES,
                              default=["supgs", "glsd", "do"], help="Formulations to compare")
    sweep_parser.add_argument("--preset", choices=sorted(SWEEP_PRESETS), default="paper", help="Benchmark mesh family")
    sweep_parser.add_argument("--meshes", nargs="+", type=int, help="Mesh sizes (overrides the preset family)")
    sweep_parser.add_argument("--no-reference", action="store_true", help="Skip the 128x128 reference run")
    sweep_parser.add_argument("--output-dir", default="sweep", help="Directory for the runs")

    # Property suite
    verify_parser = subparsers.add_parser("verify", help="Run the property suite")
    verify_parser.add_argument("--mesh", type=int, default=32, help="Benchmark mesh size")
    verify_parser.add_argument("--skip-sweep", action="store_true", help="Skip the mesh-family check")
    verify_parser.add_argument("--reference", action="store_true", help="Include the 128x128 reference")
    return parser


def config_from_args(args) -> RunConfig:
    """Combine file, preset, environment and flags (later sources win)."""
    if args.config and args.preset:
        raise ConfigError(["give either a configuration file or --preset, not both"])
    if args.config:
        config = RunConfig.load_from_file(args.config)
    elif args.preset:
        config = RunConfig.preset(args.preset)
    else:
        raise ConfigError(["a configuration file or --preset is required"])
    config.load_from_env()

    overrides = {}
    if args.formulation:
        overrides["formulation"] = args.formulation
    if args.kappa is not None:
        overrides["kappa"] = args.kappa
    if args.cfl is not None:
        overrides["cfl"] = args.cfl
        overrides["dt"] = None
    if args.alpha_f is not None:
        overrides["alpha"] = "energy-decaying"
        overrides["alpha_f"] = args.alpha_f
    if args.initial_rate:
        overrides["initial_rate"] = args.initial_rate
    if args.end_time is not None:
        overrides["end_time"] = args.end_time
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    config.update(overrides)
    if not config.output_dir:
        config.output_dir = f"output/{config.formulation}-{config.mesh[0]}x{config.mesh[1]}"
    return config.validate()


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the cdlab CLI.

    Args:
        args (List[str], optional): Command-line arguments.

    Returns:
        int: Exit code (0 success, 1 failed checks, 2 invalid configuration, 3 solver failure).
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(args)
    configure_logging(args.verbose)

    try:
        if args.command == "run":
            from cdlab.core import run
            from cdlab.output import write_small_scales_csv

            config = config_from_args(args)
            result = run(config)
            last = result.ledger.rows[-1]
            print(f"{result.kind.value}: {len(result.ledger)} steps, dt={result.meta['dt']:.6g}")
            print(f"  E_0   = {result.ledger.initial['energy_total']:.10e}")
            print(f"  E_end = {last['energy_total']:.10e}")
            print(f"  max |balance residual| = {max(abs(r['balance_residual']) for r in result.ledger.rows):.3e}")
            if args.dump_small_scales:
                path = write_small_scales_csv(f"{config.output_dir}/small_scales.csv",
                                              result.formulation.grid, result.final_field)
                result.files.append(path)
            print(f"Output written to {config.output_dir}")
            return EXIT_OK
        elif args.command == "sweep":
            from cdlab.core import sweep

            meshes = args.meshes or list(SWEEP_PRESETS[args.preset])
            summary = sweep(args.formulations, meshes, reference=not args.no_reference,
                            output_dir=args.output_dir)
            for name, entry in summary.items():
                distances = ", ".join(f"{d:.3e}" for d in entry["distances"])
                print(f"{name}: sup distances {distances} ({'ordered' if entry['ordered'] else 'not ordered'})")
            print(f"Output written to {args.output_dir}")
            return EXIT_OK
        elif args.command == "verify":
            from cdlab.verify import run_suite

            results = run_suite(args.mesh, include_sweep=not args.skip_sweep, reference=args.reference)
            for result in results:
                print(f"{'PASS' if result.passed else 'FAIL'}  {result.name:24s} {result.detail}")
            failed = [r.name for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return EXIT_FAILED if failed else EXIT_OK
        else:
            parser.print_help()
            return EXIT_FAILED
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"Solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"Output error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
