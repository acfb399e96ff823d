"""Command-line entry point: fit, diagnose, qreg, risk, simulate, compare, ci, summarize."""

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import NoReturn

from .baselines import stability_window, threshold_scan
from .config import RunConfig, Settings, load_generator_config, load_run_config
from .diagnostics import compare_models, summarize
from .errors import BhhmError, InputError
from .goodness import goodness_of_fit, posterior_point
from .hierarchy import HierarchicalModel, LinkSpec, threshold_profile
from .ingest import ingest, read_thresholds, site_thresholds
from .models import COVARIATES, Dataset, ModelFamily
from .outputs import (
    CONVERGENCE,
    SUMMARY,
    THRESHOLDS,
    format_observed,
    load_posterior_run,
    read_score,
    risk_document,
    write_comparison,
    write_convergence,
    write_cycle_thresholds,
    write_dataset,
    write_goodness,
    write_json,
    write_posterior_run,
    write_quantile_scan,
    write_risk,
    write_stability_window,
    write_summary,
    write_threshold_profile,
    write_threshold_scan,
)
from .quantile_regression import (
    DEFAULT_LEVELS,
    conflict_design,
    cycle_thresholds,
    quantile_grid_scan,
    quantile_regression,
    stable_levels,
)
from .risk import observed, posterior_risk
from .sampler import convergence_report, fit_posterior
from .simulate import simulate

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    logger.info("=" * 60)
    logger.info(title)
    logger.info(f"Started at: {datetime.now().isoformat()}")
    logger.info("=" * 60)


def _key_values(pairs: list[str] | None, flag: str) -> dict[str, str]:
    parsed = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise InputError(f"{flag} expects KEY=VALUE, got {pair!r}")
        parsed[key.strip()] = value.strip()
    return parsed


def _links(pairs: list[str] | None) -> dict[str, list[str]]:
    """--link mu=V,A --link phi= -> {"mu": ["V", "A"], "phi": []}"""
    return {
        param: [c.strip() for c in value.split(",") if c.strip()]
        for param, value in _key_values(pairs, "--link").items()
    }


def _site_thresholds(pairs: list[str] | None) -> dict[str, float]:
    values = {}
    for site, value in _key_values(pairs, "--site-threshold").items():
        try:
            values[site] = float(value)
        except ValueError as e:
            raise InputError(f"--site-threshold {site}: not a number: {value!r}") from e
    return values


def _require_inputs(config: RunConfig) -> tuple[Path, Path]:
    if config.conflicts is None or config.cycles is None:
        raise InputError("Both conflicts and cycles files are required (--conflicts, --cycles)")
    return config.conflicts, config.cycles


def _supplied_thresholds(
    config: RunConfig, dataset: Dataset
) -> dict[tuple[str, str], float] | None:
    if config.model.is_hybrid:
        return None
    if config.thresholds_file is not None:
        return read_thresholds(config.thresholds_file)
    if config.site_thresholds:
        return site_thresholds(dataset, config.site_thresholds)
    raise InputError("The gpd model needs --thresholds FILE or --site-threshold SITE=U")


def _build_model(config: RunConfig) -> tuple[Dataset, HierarchicalModel]:
    conflicts, cycles = _require_inputs(config)
    dataset = ingest(conflicts, cycles, config.crashes)
    spec = LinkSpec.from_mapping(config.links, config.model)
    model = HierarchicalModel(dataset, config.model, spec, _supplied_thresholds(config, dataset))
    return dataset, model


def cmd_fit(args: argparse.Namespace, settings: Settings) -> None:
    overrides = {
        "model": args.model,
        "conflicts": args.conflicts,
        "cycles": args.cycles,
        "crashes": args.crashes,
        "output_dir": args.out,
        "thresholds_file": args.thresholds,
        "mcmc.iterations": args.iters,
        "mcmc.burn_in": args.burnin,
        "mcmc.chains": args.chains,
        "mcmc.seed": args.seed,
        "mcmc.thinning": args.thin,
    }
    for param, covariates in _links(args.link).items():
        overrides[f"links.{param}"] = covariates
    if args.site_threshold:
        overrides["site_thresholds"] = _site_thresholds(args.site_threshold)
    config = load_run_config(args.config, overrides)

    _banner(f"FIT {config.model}")
    dataset, model = _build_model(config)
    if config.dataset_fingerprint and config.dataset_fingerprint != model.fingerprint:
        logger.warning("Input data differ from the dataset the configuration was written for")
    out = config.output_dir or settings.OUTPUT_ROOT / f"{config.model}-seed{config.mcmc.seed}"
    config = config.model_copy(
        update={"output_dir": out, "dataset_fingerprint": model.fingerprint}
    )
    logger.info(f"{model.n_params} parameters, {model.n_sites} sites, output in {out}")

    run = fit_posterior(model, config.mcmc, args.workers or settings.WORKERS)
    write_posterior_run(out, run, config)

    samples = run.pooled_samples()
    write_threshold_profile(out / THRESHOLDS, threshold_profile(model, samples))
    summaries, rows = goodness_of_fit(model, posterior_point(model, samples))
    write_goodness(out, summaries, rows)
    if run.unconverged():
        logger.warning(f"{len(run.unconverged())} scalars did not reach R-hat < 1.2")
    logger.info(f"DIC {run.dic.dic:.1f}; artifacts in {out}")


def cmd_diagnose(args: argparse.Namespace, settings: Settings) -> None:
    _banner("THRESHOLD DIAGNOSTICS")
    dataset = ingest(args.conflicts, args.cycles)
    out = args.out or settings.OUTPUT_ROOT / "diagnose"
    if args.site is not None and args.site not in dataset.sites:
        raise InputError(f"Unknown site {args.site!r}; sites are {list(dataset.sites)}")
    sites = [args.site] if args.site else [None, *dataset.sites]
    for site in sites:
        values = [o.x for o in dataset.observations if site is None or o.site_id == site]
        label = "all" if site is None else site
        rows = threshold_scan(values) if args.grid is None else threshold_scan(values, args.grid)
        write_threshold_scan(out / f"threshold-scan-{label}.csv", rows)
        window = stability_window(rows)
        write_stability_window(out / f"stability-window-{label}.json", window)
        if window is None:
            logger.info(f"{label}: no thresholds with agreeing shape intervals")
        else:
            logger.info(
                f"{label}: shape estimates agree over [{window.threshold_lo:.3f}, "
                f"{window.threshold_hi:.3f}] ({window.n_points} grid points)"
            )


def cmd_qreg(args: argparse.Namespace, settings: Settings) -> None:
    _banner("QUANTILE REGRESSION THRESHOLDS")
    dataset = ingest(args.conflicts, args.cycles)
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    y, X = conflict_design(dataset, covariates)
    out = args.out or settings.OUTPUT_ROOT / "qreg"

    rows = quantile_grid_scan(y, X, covariates, args.levels or DEFAULT_LEVELS)
    write_quantile_scan(out / "quantile-scan.csv", rows)
    stable = stable_levels(rows)
    write_json(
        out / "quantile-stability.json",
        {"stable_levels": None if stable is None else {"low": stable[0], "high": stable[1]}},
    )
    if stable is not None:
        logger.info(f"Shape estimates agree for levels {stable[0]:.3f}-{stable[1]:.3f}")

    if args.emit_thresholds is not None:
        fit = quantile_regression(y, X, args.level, covariates)
        write_cycle_thresholds(args.emit_thresholds, cycle_thresholds(fit, dataset))


def cmd_risk(args: argparse.Namespace, settings: Settings) -> None:
    _banner("CRASH RISK")
    config, run = load_posterior_run(args.run)
    overrides = {"t_hours": args.t_hours, "T_hours": args.T_hours}
    risk_config = config.risk.model_copy(
        update={k: v for k, v in overrides.items() if v is not None}
    )
    dataset, model = _build_model(config)
    reports = posterior_risk(run, model, risk_config, dataset, draws=args.draws)
    total = run.pooled_samples().shape[0]
    draws = total if args.draws is None else min(args.draws, total)
    document = risk_document(reports, config.model, model.fingerprint, draws)
    write_risk(args.out or args.run, document, reports)
    for report in reports:
        line = (
            f"{report.site}: {report.crash_mean:.2f} "
            f"[{report.ci_lo:.2f}, {report.ci_hi:.2f}] crashes per {report.T_hours:g} h"
        )
        if report.observed is not None:
            line += f"; observed {format_observed(report.observed)}"
        print(line)


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> None:
    _banner("SIMULATE")
    config = load_generator_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    out = args.out or settings.OUTPUT_ROOT / f"simulated-seed{config.seed}"
    result = simulate(config)
    paths = write_dataset(result.dataset, out)
    truth = result.truth(
        conflicts=str(paths["conflicts"]),
        cycles=str(paths["cycles"]),
        crashes=str(paths["crashes"]),
    )
    write_json(out / "truth.json", truth)


def cmd_compare(args: argparse.Namespace, settings: Settings) -> None:
    scores = [read_score(Path(d)) for d in args.runs]
    rows = compare_models(scores)
    if args.out is not None:
        write_comparison(args.out, rows)
    print(f"{'rank':>4}  {'run':<24} {'model':<14} {'DIC':>10} {'delta':>8}  verdict")
    for r in rows:
        print(
            f"{r.rank:>4}  {r.label:<24} {r.model:<14} {r.dic:>10.1f} {r.delta:>8.1f}  {r.verdict}"
        )


def cmd_ci(args: argparse.Namespace, settings: Settings) -> None:
    print(format_observed(observed(args.crashes, args.years)))


def cmd_summarize(args: argparse.Namespace, settings: Settings) -> None:
    _, run = load_posterior_run(args.run)
    samples = run.pooled_samples()
    out = args.out or args.run
    write_summary(out / SUMMARY, summarize(samples, run.names))
    convergence = convergence_report([c.samples for c in run.chains], run.names)
    write_convergence(out / CONVERGENCE, convergence, run.chains)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text}") from e


class _ArgumentParser(argparse.ArgumentParser):
    """Exits with the input-error code on usage errors."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(InputError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="threshold-bhhm",
        description="Hierarchical body+GPD threshold estimation for PET conflicts",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="Sample the hierarchical posterior")
    fit.add_argument("--config", type=Path, default=None, help="Run config (TOML or JSON)")
    fit.add_argument("--model", choices=[m.value for m in ModelFamily], default=None)
    fit.add_argument("--conflicts", type=Path, default=None)
    fit.add_argument("--cycles", type=Path, default=None)
    fit.add_argument("--crashes", type=Path, default=None)
    fit.add_argument("--out", type=Path, default=None, help="Run output directory")
    fit.add_argument("--iters", type=int, default=None, help="Iterations per chain")
    fit.add_argument("--burnin", type=int, default=None, help="Burn-in iterations per chain")
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--thin", type=int, default=None)
    fit.add_argument("--workers", type=int, default=None, help="Parallel chain processes")
    fit.add_argument(
        "--link",
        action="append",
        metavar="PARAM=COVS",
        help=f"Covariates of a linked parameter, e.g. mu=V,A (from {','.join(COVARIATES)})",
    )
    fit.add_argument("--thresholds", type=Path, default=None, help="Per-cycle thresholds CSV")
    fit.add_argument(
        "--site-threshold", action="append", metavar="SITE=U", help="Constant site threshold"
    )
    fit.set_defaults(handler=cmd_fit)

    diagnose = sub.add_parser("diagnose", help="Mean residual life and stability scans")
    diagnose.add_argument("--conflicts", type=Path, required=True)
    diagnose.add_argument("--cycles", type=Path, required=True)
    diagnose.add_argument("--site", default=None, help="Scan one site only")
    diagnose.add_argument(
        "--grid", type=_float_list, default=None, help="Comma-separated thresholds"
    )
    diagnose.add_argument("--out", type=Path, default=None)
    diagnose.set_defaults(handler=cmd_diagnose)

    qreg = sub.add_parser("qreg", help="Quantile-regression thresholds and level scan")
    qreg.add_argument("--conflicts", type=Path, required=True)
    qreg.add_argument("--cycles", type=Path, required=True)
    qreg.add_argument("--covariates", default="V,A,P", help="Comma-separated covariates")
    qreg.add_argument("--levels", type=_float_list, default=None, help="Comma-separated levels")
    qreg.add_argument("--level", type=float, default=0.9, help="Level for --emit-thresholds")
    qreg.add_argument("--emit-thresholds", type=Path, default=None, metavar="FILE")
    qreg.add_argument("--out", type=Path, default=None)
    qreg.set_defaults(handler=cmd_qreg)

    risk = sub.add_parser("risk", help="Posterior crash estimates for a fitted run")
    risk.add_argument("--run", type=Path, required=True, help="Run directory from `fit`")
    risk.add_argument("--t-hours", type=float, default=None, help="Observation duration")
    risk.add_argument("--T-hours", type=float, default=None, help="Projection horizon")
    risk.add_argument("--draws", type=int, default=None, help="Posterior draws to propagate")
    risk.add_argument("--out", type=Path, default=None)
    risk.set_defaults(handler=cmd_risk)

    sim = sub.add_parser("simulate", help="Generate a synthetic dataset")
    sim.add_argument("--config", type=Path, required=True, help="Generator config")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", type=Path, default=None)
    sim.set_defaults(handler=cmd_simulate)

    compare = sub.add_parser("compare", help="Rank run directories by DIC")
    compare.add_argument("runs", nargs="+", type=Path)
    compare.add_argument("--out", type=Path, default=None, help="Comparison CSV")
    compare.set_defaults(handler=cmd_compare)

    ci = sub.add_parser("ci", help="Poisson interval for an observed crash count")
    ci.add_argument("--crashes", type=int, required=True)
    ci.add_argument("--years", type=int, required=True)
    ci.set_defaults(handler=cmd_ci)

    summ = sub.add_parser("summarize", help="Re-emit posterior tables from stored traces")
    summ.add_argument("--run", type=Path, required=True)
    summ.add_argument("--out", type=Path, default=None)
    summ.set_defaults(handler=cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI entry point; returns 0, 1 (input error) or 2 (numerical failure)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code is None else int(e.code)
    settings = Settings()
    level = logging.DEBUG if args.verbose else settings.LOG_LEVEL.upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)

    try:
        args.handler(args, settings)
    except BhhmError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 1
    except RuntimeError as e:
        logger.error(f"Numerical failure: {e}", exc_info=args.verbose)
        return 2
    return 0


def main_cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_cli()
