"""
Noisy MoE Command Line
======================

Fit, predict, simulate, benchmark, evaluate and choose the number of
clusters from CSV files.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure, 1 any other library error.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import find_dotenv, load_dotenv

from core.baselines import fit_moe_em, fit_moess
from core.config import RunConfig, load_config_file
from core.data_io import (
    covariate_names,
    latent_frame,
    read_covariates_csv,
    read_labeled_csv,
    sample_frame,
    write_csv,
    write_predictions,
)
from core.evaluation import HoldoutEvaluator, format_holdout, standardize
from core.gmm import select_k_bic
from core.moe import fit_noisy_moe
from core.serialization import load_model, predict_model, save_model
from core.simbench import (
    GRID_N,
    GRID_P0,
    LABELED_STREAM,
    METHODS,
    TEST_STREAM,
    TRUTH_STREAM,
    UNLABELED_STREAM,
    BenchmarkRunner,
    format_tables,
    make_truth,
    sample,
    write_reports_csv,
)
from models.mixture import GateKind
from utils.exceptions import (
    ConfigError,
    DataError,
    NoisyMoeError,
    NumericError,
    ValidationError,
)
from utils.helpers import RandomStreams, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULT_K_CANDIDATES = list(range(1, 11))


def _json_ready(value: Any) -> Any:
    """Replace non-finite floats by None so reports are strict JSON"""
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _write_json(data: Dict[str, Any], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_ready(data), f, indent=2, allow_nan=False)
        f.write("\n")


def _parse_k(value) -> Any:
    if value is None or value == "auto":
        return value
    try:
        k = int(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(
            f"k must be a positive integer or 'auto', got {value!r}"
        ) from e
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return k


def _method(value: str) -> str:
    if value not in METHODS:
        raise ConfigError(f"Unknown method '{value}', expected one of {METHODS}")
    return value


def cmd_fit(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Fit one estimator to labeled (and optional unlabeled) CSV data"""
    method = _method(cfg.get("method", "noisyss"))
    table = read_labeled_csv(args.labeled, response=cfg.get("response"))
    x_unlabeled = None
    if args.unlabeled:
        x_unlabeled = read_covariates_csv(args.unlabeled, table.covariates)

    report: Dict[str, Any] = {
        "method": method,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "n_labeled": int(table.x.shape[0]),
        "n_unlabeled": 0 if x_unlabeled is None else int(x_unlabeled.shape[0]),
        "covariates": table.covariates,
        "response": table.response,
    }

    k = _parse_k(cfg.get("k", "auto"))
    if k == "auto":
        pool = table.x if x_unlabeled is None else np.vstack([table.x, x_unlabeled])
        selection = select_k_bic(
            pool,
            cfg.get("k_candidates", DEFAULT_K_CANDIDATES),
            cfg.gmm_config(),
            threshold=float(cfg.get("threshold", 0.02)),
        )
        k = selection.suggested_k
        report["bic"] = selection.to_dict()
    report["k"] = k

    if method == "noisyss":
        model = fit_noisy_moe(table.x, table.y, x_unlabeled, k, cfg.noisy_config())
        report["diagnostics"] = model.diagnostics.to_dict()
        report["gmm_trace"] = list(model.gmm.trace)
        report["transition"] = model.transition.pi.tolist()
    elif method == "moess":
        noisy = cfg.noisy_config()
        model = fit_moess(
            table.x,
            table.y,
            x_unlabeled,
            k,
            gmm_cfg=cfg.gmm_config(),
            gmm_pool=noisy.gmm_pool,
            n_jobs=cfg.threads,
        )
        report["diagnostics"] = model.diagnostics.to_dict()
        report["gmm_trace"] = list(model.gmm.trace)
    else:
        if x_unlabeled is not None:
            logger.info(f"{method} is supervised; unlabeled covariates are ignored")
        kind = GateKind.LINEAR if method == "moeline" else GateKind.QUADRATIC
        model = fit_moe_em(table.x, table.y, k, kind, cfg.moe_config())
        report["log_likelihood"] = model.log_likelihood
        report["em_trace"] = list(model.trace)
        report["sigma_floored"] = model.sigma_floored

    out = Path(args.out)
    save_model(model, out, table.covariates, table.response)
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    _write_json(report, report_path)
    print(f"Fitted {method} with k={k}: model {out}, report {report_path}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Predict the response for every row of a covariate CSV"""
    model, metadata = load_model(args.model)
    x = read_covariates_csv(args.x, metadata["covariates"] or None, strict=False)
    if x.shape[1] != model.p:
        raise DataError(
            f"{args.x} has {x.shape[1]} covariates, model expects {model.p}"
        )
    yhat = predict_model(model, x)
    if args.out:
        write_predictions(yhat, args.out)
        logger.info(f"Wrote {len(yhat)} predictions to {args.out}")
    else:
        write_predictions(yhat, sys.stdout)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Draw labeled, unlabeled and test samples from the synthetic model"""
    sim = cfg.simulation_config()
    seed = cfg.seed
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    # replication 0 of a benchmark run with the same seed draws the same data
    truth = make_truth(sim, RandomStreams.stream(seed, 0, TRUTH_STREAM))
    labeled = sample(
        truth, sim.n_labeled, RandomStreams.stream(seed, 0, LABELED_STREAM)
    )
    unlabeled = sample(
        truth, sim.n_unlabeled, RandomStreams.stream(seed, 0, UNLABELED_STREAM)
    )
    test = sample(truth, sim.n_test, RandomStreams.stream(seed, 0, TEST_STREAM))

    names = covariate_names(sim.p)
    write_csv(sample_frame(labeled, names), outdir / "labeled.csv")
    write_csv(
        sample_frame(unlabeled, names, with_response=False),
        outdir / "unlabeled.csv",
    )
    write_csv(sample_frame(test, names), outdir / "test.csv")
    save_model(truth, outdir / "truth.json", names)
    if cfg.get("emit_latents", False):
        write_csv(latent_frame(labeled), outdir / "labeled_latents.csv")
        write_csv(latent_frame(test), outdir / "test_latents.csv")

    print(
        f"Simulated n={sim.n_labeled} labeled, {sim.n_unlabeled} unlabeled, "
        f"{sim.n_test} test rows (k={sim.k}, p={sim.p}, p0={sim.p0}) in {outdir}"
    )
    return EXIT_OK


def _p0_grid(cfg: RunConfig) -> Optional[List[float]]:
    corruption = cfg.get("corruption")
    grid = cfg.get("grid")
    if corruption is not None and grid is not None:
        raise ConfigError("Give either grid or corruption, not both")
    if corruption is not None:
        return [1.0 - float(c) / 100.0 for c in corruption]
    return None if grid is None else [float(g) for g in grid]


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Run the Monte-Carlo benchmark and print its summary tables"""
    grid_kind = cfg.get("grid_kind", GRID_P0)
    if grid_kind == GRID_P0:
        grid = _p0_grid(cfg)
    else:
        if cfg.get("corruption") is not None:
            raise ConfigError("corruption only applies to a p0 grid")
        grid = cfg.get("grid")
    methods = [_method(m) for m in cfg.get("methods", list(METHODS))]

    runner = BenchmarkRunner(
        sim=cfg.simulation_config(),
        grid_kind=grid_kind,
        grid=grid,
        methods=methods,
        reps=int(cfg.get("reps", 10)),
        freeze_truth=bool(cfg.get("freeze_truth", False)),
        noisy_cfg=cfg.noisy_config(),
        moe_cfg=cfg.moe_config(),
        gmm_cfg=cfg.gmm_config(),
        n_jobs=cfg.threads,
    )
    reports, summary = runner.run()
    write_reports_csv(reports, args.out, include_timing=bool(cfg.get("timing", False)))
    if args.summary_out:
        write_csv(summary, args.summary_out)
    print(format_tables(summary))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Repeated holdout comparison on a labeled CSV"""
    table = read_labeled_csv(args.data, response=cfg.get("response"))
    x, y = table.x, table.y
    if cfg.get("standardize", False):
        frame = standardize(
            pd.DataFrame(np.column_stack([x, y]), columns=table.covariates + ["_y"])
        )
        x, y = frame.to_numpy()[:, :-1], frame["_y"].to_numpy()

    n_train = cfg.get("n_train")
    if not n_train:
        raise ConfigError("evaluate needs at least one --n-train value")
    k = _parse_k(cfg.get("k", 2))
    if k == "auto":
        raise ConfigError("evaluate needs an explicit k")
    methods = [_method(m) for m in cfg.get("methods", list(METHODS))]

    evaluator = HoldoutEvaluator(
        k,
        methods=methods,
        reps=int(cfg.get("reps", 10)),
        seed=cfg.seed,
        noisy_cfg=cfg.noisy_config(),
        moe_cfg=cfg.moe_config(),
        gmm_cfg=cfg.gmm_config(),
        n_jobs=cfg.threads,
    )
    reports, summary = evaluator.run(x, y, [int(n) for n in n_train])
    if args.out:
        write_csv(pd.DataFrame([r.to_dict() for r in reports]), args.out)
    print(format_holdout(summary))
    return EXIT_OK


def cmd_select_k(args: argparse.Namespace, cfg: RunConfig) -> int:
    """BIC table over candidate numbers of clusters"""
    if args.response:
        x = read_labeled_csv(args.x, response=args.response).x
    else:
        x = read_covariates_csv(args.x)
    selection = select_k_bic(
        x,
        cfg.get("k_candidates", DEFAULT_K_CANDIDATES),
        cfg.gmm_config(),
        threshold=float(cfg.get("threshold", 0.02)),
    )
    table = pd.DataFrame(
        selection.rows,
        columns=["k", "bic", "log_likelihood", "n_parameters", "error"],
    )
    if args.out:
        write_csv(table, args.out)
    print(table.to_string(index=False))
    print(f"Suggested k: {selection.suggested_k}")
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings for the command")
    common.add_argument(
        "--seed", type=int, help="Base seed (default: config, NOISY_MOE_SEED, 0)"
    )
    common.add_argument(
        "--threads", type=int, help="Worker threads (default: available CPUs)"
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    return common


def _add_noisy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, help="Retaining fraction in [0.5, 1]")
    parser.add_argument(
        "--gmm-pool",
        dest="gmm_pool",
        choices=["all", "unlabeled-only"],
        help="Covariates the mixture is fitted on",
    )


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="Number of clusters (default 10)")
    parser.add_argument("--p", type=int, help="Covariate dimension (default 3)")
    parser.add_argument("--n-labeled", dest="n_labeled", type=int)
    parser.add_argument("--n-test", dest="n_test", type=int)
    parser.add_argument("--n-unlabeled", dest="n_unlabeled", type=int)
    parser.add_argument("--p0", type=float, help="Diagonal of the corruption matrix")
    parser.add_argument(
        "--no-oracle",
        dest="oracle_x",
        action="store_false",
        default=None,
        help="Fit the mixture on a finite unlabeled sample",
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="noisy-moe",
        description="Semi-supervised noisy mixture of experts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="Fit a model to CSV data")
    fit.add_argument("labeled", help="Labeled CSV (covariates and response)")
    fit.add_argument("unlabeled", nargs="?", help="Unlabeled covariate CSV")
    fit.add_argument("--method", choices=METHODS)
    fit.add_argument("--k", help="Number of clusters, or 'auto' for the BIC elbow")
    fit.add_argument("--response", help="Response column (default: last column)")
    fit.add_argument("--k-candidates", dest="k_candidates", type=int, nargs="+")
    fit.add_argument("--threshold", type=float, help="BIC elbow threshold")
    fit.add_argument("--out", required=True, help="Model file to write")
    fit.add_argument("--report", help="Fit report (default: <out>.report.json)")
    _add_noisy_flags(fit)

    predict = sub.add_parser("predict", parents=[common], help="Predict from a model")
    predict.add_argument("model", help="Model file written by fit")
    predict.add_argument("x", help="Covariate CSV")
    predict.add_argument("--out", help="Predictions CSV (default: stdout)")

    simulate = sub.add_parser("simulate", parents=[common], help="Draw synthetic data")
    simulate.add_argument("--outdir", default=".", help="Output directory")
    simulate.add_argument("--corruption", type=float, help="Corruption percentage")
    simulate.add_argument(
        "--emit-latents", dest="emit_latents", action="store_true", default=None
    )
    _add_simulation_flags(simulate)

    bench = sub.add_parser("bench", parents=[common], help="Monte-Carlo benchmark")
    bench.add_argument("--grid-kind", dest="grid_kind", choices=[GRID_P0, GRID_N])
    bench.add_argument("--grid", type=float, nargs="+", help="p0 values or sizes n")
    bench.add_argument(
        "--corruption", type=float, nargs="+", help="Corruption percentages"
    )
    bench.add_argument("--methods", nargs="+", choices=METHODS)
    bench.add_argument("--reps", type=int, help="Replications per grid value")
    bench.add_argument(
        "--freeze-truth", dest="freeze_truth", action="store_true", default=None
    )
    bench.add_argument("--timing", action="store_true", default=None)
    bench.add_argument("--out", required=True, help="Per-replication results CSV")
    bench.add_argument("--summary-out", dest="summary_out", help="Summary CSV")
    _add_simulation_flags(bench)
    _add_noisy_flags(bench)

    evaluate = sub.add_parser("evaluate", parents=[common], help="Repeated holdout")
    evaluate.add_argument("data", help="Labeled CSV")
    evaluate.add_argument("--n-train", dest="n_train", type=int, nargs="+")
    evaluate.add_argument("--reps", type=int)
    evaluate.add_argument("--methods", nargs="+", choices=METHODS)
    evaluate.add_argument("--k", help="Number of clusters")
    evaluate.add_argument("--response", help="Response column (default: last)")
    evaluate.add_argument("--standardize", action="store_true", default=None)
    evaluate.add_argument("--out", help="Per-split results CSV")
    _add_noisy_flags(evaluate)

    select = sub.add_parser("select-k", parents=[common], help="BIC over k")
    select.add_argument("x", help="Covariate CSV")
    select.add_argument("--response", help="Column to drop before clustering")
    select.add_argument("--k-candidates", dest="k_candidates", type=int, nargs="+")
    select.add_argument("--threshold", type=float)
    select.add_argument("--out", help="BIC table CSV")
    return parser


SIMULATION_FLAGS = ("k", "p", "n_labeled", "n_test", "n_unlabeled", "p0", "oracle_x")

COMMAND_FLAGS = {
    "fit": (
        "method",
        "k",
        "response",
        "k_candidates",
        "threshold",
        "alpha",
        "gmm_pool",
    ),
    "predict": (),
    "simulate": ("emit_latents",),
    "bench": (
        "grid_kind",
        "grid",
        "corruption",
        "methods",
        "reps",
        "freeze_truth",
        "timing",
        "alpha",
        "gmm_pool",
    ),
    "evaluate": (
        "n_train",
        "reps",
        "methods",
        "k",
        "response",
        "standardize",
        "alpha",
        "gmm_pool",
    ),
    "select-k": ("k_candidates", "threshold"),
}

COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "evaluate": cmd_evaluate,
    "select-k": cmd_select_k,
}


def run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file, environment and flags of a parsed command line"""
    file_data = load_config_file(args.config) if args.config else {}
    overrides: Dict[str, Any] = {"seed": args.seed, "threads": args.threads}
    for name in COMMAND_FLAGS[args.command]:
        overrides[name] = getattr(args, name, None)

    if args.command in ("simulate", "bench"):
        simulation = dict(file_data.get("simulation") or {})
        for name in SIMULATION_FLAGS:
            value = getattr(args, name, None)
            if value is not None:
                simulation[name] = value
        if args.command == "simulate":
            corruption = args.corruption
            if corruption is None:
                corruption = file_data.pop("corruption", None)
            if corruption is not None:
                if args.p0 is not None:
                    raise ConfigError("Give either --p0 or --corruption, not both")
                simulation["p0"] = 1.0 - float(corruption) / 100.0
        overrides["simulation"] = simulation
    return RunConfig.build(args.command, file_data, overrides)


def dispatch(args: argparse.Namespace, cfg: RunConfig) -> int:
    """
    Run a subcommand, converting unexpected exceptions into library errors

    Raises:
        NoisyMoeError: Library errors as raised, anything else wrapped
    """
    try:
        return COMMANDS[args.command](args, cfg)
    except NoisyMoeError:
        raise
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {type(e).__name__}: {e}")
        raise NoisyMoeError(
            f"Unexpected {type(e).__name__} in {args.command}: {e}"
        ) from e


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    load_dotenv(find_dotenv(usecwd=True))
    configure_logging(verbose=args.verbose, quiet=args.quiet)

    try:
        cfg = run_config(args)
        return dispatch(args, cfg)
    except ValidationError as e:
        logger.error(f"Invalid configuration or input: {e}")
        return EXIT_USAGE
    except DataError as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except NumericError as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except NoisyMoeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
