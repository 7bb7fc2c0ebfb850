"""
Command-line entry point: `cate-fusion estimate` and `cate-fusion simulate`.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import ValidationError

from . import __version__
from .data import load_csv, parse_evaluation_points
from .estimator import AdaptiveCateEstimator
from .exceptions import CateFusionError, ConfigurationError
from .kernel import write_diagnostics_csv
from .models import CsvSchema, ScenarioConfig
from .pseudo_outcomes import write_panel_csv
from .settings import Settings, describe_validation_error
from .simulation import per_replication_frame, risk_curves_frame, run_simulation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1


def _bandwidth(text: str) -> Union[str, float]:
    if text.strip().lower() == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a positive number or 'auto', got '{text}'")
    if not value > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return value


def _estimation_flags() -> argparse.ArgumentParser:
    """Flags shared by both subcommands. Unset flags fall back to env/.env defaults."""
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("estimation")
    group.add_argument("--target-z", type=int, choices=(0, 1), help="Target population: 0 trial, 1 OS.")
    group.add_argument("--reduction", help="col:<i>, pct:<i> or pct-score (0-based columns).")
    group.add_argument("--outcome-link", choices=("identity", "logit"))
    group.add_argument("--outcome-design", choices=("pooled_arms", "per_arm"))
    group.add_argument("--method", choices=("lasso", "ridge", "unpenalized"))
    group.add_argument("--train-frac", type=float, help="Training share of each study (default 0.2).")
    group.add_argument("--grid", type=int, dest="grid_size", help="Number of log-spaced lambdas.")
    group.add_argument("--epsilon", type=float, help="Lower lambda grid end as a fraction of lambda_max.")
    group.add_argument("--bandwidth", type=_bandwidth, help="Kernel bandwidth or 'auto' for the rule of thumb.")
    group.add_argument("--beta-exponent", type=float, help="Ridge penalty exponent in (0, 0.5).")
    group.add_argument("--se-variant", choices=("plain", "conservative"), help="SE behind the reported CI.")
    group.add_argument("--threshold-rule", choices=("exact", "ratio"), help="Per-point lambda ratio used for the grid.")
    group.add_argument("--eval-points", help="Grid size k, or a comma-separated list of points.")
    group.add_argument("--refit-full", action="store_true", default=None, help="Refit on train + validation after tuning.")
    group.add_argument("--seed", type=int)
    group.add_argument("--threads", type=int, help="Parallel width; default uses every core.")
    group.add_argument("--out", default=".", help="Output directory.")
    group.add_argument("--env-file", help="Optional .env file with CATE_FUSION_* defaults.")
    group.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _estimation_flags()
    parser = argparse.ArgumentParser(
        prog="cate-fusion",
        description="Adaptive combination of trial and observational CATE estimators.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    estimate = commands.add_parser("estimate", parents=[common], help="Estimate CATEs from a CSV file.")
    estimate.add_argument("--data", required=True, help="CSV with columns z, t, y, x1..xp.")
    estimate.add_argument("--z-col", default="z")
    estimate.add_argument("--t-col", default="t")
    estimate.add_argument("--y-col", default="y")
    estimate.add_argument("--x-cols", help="Comma-separated covariate columns; default every x<k>.")
    estimate.add_argument(
        "--diagnostics", action="store_true", help="Also write diagnostics.csv (v, tau_r, tau_o, f_r, f_o) and panel.csv."
    )
    estimate.set_defaults(handler=cmd_estimate)

    simulate = commands.add_parser("simulate", parents=[common], help="Run the Monte Carlo study.")
    simulate.add_argument("--n", type=int, default=1000, help="Training sample size.")
    simulate.add_argument("--n-valid", type=int, help="Validation sample size (default 20000).")
    simulate.add_argument("--scenario", choices=("correct", "misspecified"))
    simulate.add_argument("--reps", type=int, help="Number of replications.")
    simulate.add_argument("--per-rep", action="store_true", help="Also write per_rep.csv.")
    simulate.add_argument("--no-progress", action="store_true")
    simulate.set_defaults(handler=cmd_simulate)
    return parser


_SETTING_FLAGS = (
    "target_z", "reduction", "outcome_link", "outcome_design", "method", "train_frac", "grid_size",
    "epsilon", "beta_exponent", "se_variant", "threshold_rule", "refit_full", "seed", "threads",
    "n_valid", "scenario", "reps",
)


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Environment defaults overridden by every flag given on the command line."""
    settings = Settings.from_env(env_file=args.env_file)
    overrides: Dict[str, Any] = {name: getattr(args, name, None) for name in _SETTING_FLAGS}
    eval_points = getattr(args, "eval_points", None)
    if eval_points is not None and eval_points.strip().isdigit():
        overrides["eval_points"] = int(eval_points)
    if isinstance(args.bandwidth, float):
        overrides["bandwidth"] = args.bandwidth
    settings = settings.merged(**overrides)
    if args.bandwidth == "auto" and settings.bandwidth is not None:
        settings = Settings.create(**{**settings.model_dump(), "bandwidth": None})
    return settings


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_estimate(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    schema = CsvSchema(
        z=args.z_col, t=args.t_col, y=args.y_col,
        x=[c.strip() for c in args.x_cols.split(",")] if args.x_cols else None,
    )
    data = load_csv(args.data, schema)
    estimator = AdaptiveCateEstimator(settings)

    grid = None
    if args.eval_points is not None and not args.eval_points.strip().isdigit():
        grid = parse_evaluation_points(args.eval_points)
    result = estimator.fit(data, grid)

    out = _out_dir(args)
    result.estimates_frame().to_csv(out / "estimates.csv", index=False)
    result.weights_frame().to_csv(out / "weights.csv", index=False)
    risk = result.tuning.to_frame() if result.tuning else pd.DataFrame(columns=["lambda", "risk"])
    risk.to_csv(out / "risk_curve.csv", index=False)
    if args.diagnostics:
        write_diagnostics_csv(result.summaries, out / "diagnostics.csv")
        write_panel_csv(result.panel, out / "panel.csv")

    run = {
        "version": __version__,
        "command": "estimate",
        "data": str(args.data),
        "schema": schema.model_dump(),
        "settings": estimator.describe(),
        "evaluation_points": [list(est.v) for est in result.adaptive],
        "bandwidth": list(result.bandwidth),
        "lambda_grid": result.lambda_grid.model_dump() if result.lambda_grid else None,
        "selected_lambda": result.selected_lambda,
        "n_train": result.n_train,
        "n0": result.n0,
        "n1": result.n1,
        "reduction": result.reduction.model_dump(mode="json", exclude={"reference_values"}),
        "nuisances": result.nuisances.to_json(),
    }
    (out / "run.json").write_text(json.dumps(run, indent=2))
    logger.info("Wrote estimates for %d points to %s", len(result.adaptive), out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    try:
        config = ScenarioConfig(
            n=args.n,
            n_valid=settings.n_valid,
            scenario=settings.scenario,
            replications=settings.reps,
            seed=settings.seed,
            integrated_grid_size=settings.eval_points,
        )
    except ValueError as e:
        raise ConfigurationError(str(e).replace("\n", " ")) from e

    report, results, failures = run_simulation(
        config, settings, n_jobs=settings.threads, progress=not args.no_progress
    )

    out = _out_dir(args)
    report.to_frame().to_csv(out / "metrics.csv", index=False)
    lines: List[str] = [f"failures: {len(failures)} of {config.replications}"]
    lines += [f"{f.rep_index}\t{f.error}" for f in failures]
    (out / "failures.txt").write_text("\n".join(lines) + "\n")
    risk_curves_frame(results).to_csv(out / "risk_curve.csv", index=False)
    if args.per_rep:
        per_replication_frame(results, config).to_csv(out / "per_rep.csv", index=False)
    print(report.to_frame().to_string(index=False))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except ValidationError as e:
        return _report(ConfigurationError(describe_validation_error(e)))
    except CateFusionError as e:
        return _report(e)


def _report(error: CateFusionError) -> int:
    message = " ".join(str(error.message).split())
    print(f"error: {error.code or 'error'}: {message}", file=sys.stderr)
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
