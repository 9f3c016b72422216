"""Command-line entry point.

Usage:
    polyflow run couette-hookean --seed 3 --out runs/couette
    polyflow run fene-extension --mode constant --rate 4 --out runs/ext
    polyflow run cavity --ly 0.5 --wi 1 --config cavity.env --out runs/cavity
    polyflow reference oldroyd-b --out runs/oldroyd_b.csv
    polyflow verify
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import sentry_sdk

from polyflow.core.config import settings
from polyflow.core.errors import AppError, ConfigError
from polyflow.schemas.config import ExtensionMode, ProjectionKind, ScenarioKind
from polyflow.services.scenarios.defaults import load_config_file, scenario_config
from polyflow.services.scenarios.oldroyd_b import oldroyd_b_reference
from polyflow.services.scenarios.outputs import write_run, write_series
from polyflow.services.scenarios.registry import run_scenario
from polyflow.services.scenarios.verify import run_checks

logger = logging.getLogger("polyflow")

EXIT_OK = 0

# CLI flag name -> SimConfig field
RUN_FLAGS = {
    "seed": "seed",
    "n_particles": "N",
    "dt": "dt",
    "t_end": "t_end",
    "rate": "rate",
    "ly": "Ly",
    "wi": "Wi",
    "mode": "mode",
    "output_every": "output_every",
    "projection": "projection",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyflow", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario and write its CSV outputs")
    run.add_argument("scenario", choices=[k.value for k in ScenarioKind])
    run.add_argument("--seed", type=int)
    run.add_argument("--n-particles", type=int, help="Particles per node (N)")
    run.add_argument("--dt", type=float)
    run.add_argument("--t-end", type=float)
    run.add_argument("--out", type=Path, help="Output directory (default: $POLYFLOW_OUTPUT_DIR/<scenario>)")
    run.add_argument("--rate", type=float, help="Extension rate r (fene-extension)")
    run.add_argument("--mode", choices=[m.value for m in ExtensionMode], help="Extension history (fene-extension)")
    run.add_argument("--ly", type=float, help="Cavity height (cavity)")
    run.add_argument("--wi", type=float, help="Weissenberg number")
    run.add_argument("--output-every", type=int)
    run.add_argument("--projection", choices=[p.value for p in ProjectionKind])
    run.add_argument("--config", type=Path, help="Flat KEY=VALUE file; flags override its values")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--resume", type=Path, help="Restart from a checkpoint (cavity)")
    run.add_argument("--checkpoint", type=Path, help="Write a checkpoint at the end of the run (cavity)")

    ref = sub.add_parser("reference", help="Reference solutions")
    ref_sub = ref.add_subparsers(dest="reference", required=True)
    ob = ref_sub.add_parser("oldroyd-b", help="Oldroyd-B start-up Couette oracle")
    ob.add_argument("--re", type=float, default=0.11)
    ob.add_argument("--wi", type=float, default=0.1)
    ob.add_argument("--eta-s", type=float, default=0.11)
    ob.add_argument("--eps-p", type=float, default=0.89)
    ob.add_argument("--m-fine", type=int, default=400)
    ob.add_argument("--dt-fine", type=float, default=1e-4)
    ob.add_argument("--t-end", type=float, default=1.0)
    ob.add_argument("--record-dt", type=float, default=1e-2)
    ob.add_argument("--out", type=Path, default=Path("oldroyd_b.csv"))

    sub.add_parser("verify", help="Run the quick invariant suite")
    return parser


def run_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = load_config_file(args.config) if args.config else {}
    for flag, field in RUN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    return overrides


def write_diagnostics(out_dir: Path, error: AppError) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "diagnostics.json"
    path.write_text(json.dumps(error.to_dict(), indent=2, default=str) + "\n")
    return path


def cmd_run(args: argparse.Namespace) -> int:
    out = args.out or Path(settings.output_dir) / args.scenario
    try:
        overrides = run_overrides(args)
        cfg = scenario_config(args.scenario, **overrides)
        logger.info("running %s (%d steps, config %s)", cfg.scenario.value, cfg.n_steps, cfg.config_hash()[:12])
        result = run_scenario(
            args.scenario, workers=args.workers, resume=args.resume, checkpoint=args.checkpoint, **overrides
        )
    except AppError as e:
        path = write_diagnostics(out, e)
        logger.error("%s: %s (details in %s)", e.code, e.message, path)
        return e.exit_code
    write_run(result, out)
    for key, value in result.summary.items():
        logger.info("  %s = %s", key, value)
    return EXIT_OK


def cmd_reference(args: argparse.Namespace) -> int:
    try:
        series = oldroyd_b_reference(
            args.re,
            args.wi,
            args.eta_s,
            args.eps_p,
            M_fine=args.m_fine,
            dt_fine=args.dt_fine,
            t_end=args.t_end,
            record_dt=args.record_dt,
        )
    except ValueError as e:
        err = ConfigError(str(e))
        logger.error("%s: %s", err.code, err.message)
        return err.exit_code
    write_series(args.out, series)
    logger.info("wrote %s (%d rows)", args.out, len(series))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks()
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("%d of %d checks failed: %s", len(failed), len(results), ", ".join(failed))
        return 1
    logger.info("all %d checks passed", len(results))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "reference": cmd_reference, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    if settings.sentry_dsn and "PYTEST_CURRENT_TEST" not in os.environ:
        sentry_sdk.init(dsn=settings.sentry_dsn, traces_sample_rate=0.0)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
