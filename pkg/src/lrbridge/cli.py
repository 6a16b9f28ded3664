"""``lrbridge`` command-line interface.

Exit codes: 0 success, 1 simulation could not reach its conversion floor,
2 domain error, 64 usage error, 65 input parse error, 74 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__, calibration, experiments, formulas, reporting, violations
from .errors import DomainError, EmptyInputError, InputParseError, InsufficientConversionsError
from .simulation import PortfolioConfig, run_simulation

logger = logging.getLogger("lrbridge")

EXIT_OK = 0
EXIT_SIM_FAILED = 1
EXIT_DOMAIN = 2
EXIT_USAGE = 64
EXIT_PARSE = 65
EXIT_IO = 74

SEED_ENV = "LRBRIDGE_SEED"

DEFAULT_SWEEPS = {
    "heavy-tail": ("df", [3.0, 5.0, 10.0, 15.0, 30.0]),
    "skew": ("alpha", [0.0, 2.0, 5.0, 10.0, 15.0]),
    "error-corr": ("rho_el", [0.0, 0.1, 0.2, 0.3, 0.4]),
    "demand": ("family", ["power", "linear", "logistic", "exponential"]),
    "control": (None, [0.0]),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _seed(value: str) -> int:
    try:
        seed = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def _resolve_seed(flag: Optional[int], fallback: int) -> int:
    """``--seed`` wins, then ``$LRBRIDGE_SEED``, then the config value."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _seed(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{SEED_ENV}: {exc}") from None
    return fallback


def _emit(obj) -> None:
    sys.stdout.write(reporting.dumps(obj))


# ---------------------------------------------------------------------------
# Analytic commands
# ---------------------------------------------------------------------------


def cmd_predict(args) -> int:
    market = formulas.MarketSpec(args.eta, args.margin)
    quartet = (args.rho_f, args.cv_f, args.rho_s, args.cv_s)
    if any(v is not None for v in quartet):
        if any(v is None for v in quartet):
            raise UsageError("frequency/severity prediction needs all of --rho-f --cv-f --rho-s --cv-s")
        pred = formulas.predict_freq_sev(formulas.FreqSevQuality(*quartet), market)
    else:
        if args.rho is None or args.cv is None:
            raise UsageError("predict needs --rho and --cv (or the frequency/severity quartet)")
        pop = formulas.PopulationMoments(args.cv)
        pred = formulas.predict(formulas.ModelQuality.from_rho(args.rho, args.cv), pop, market)
    _emit(pred.to_dict())
    return EXIT_OK


def cmd_elr(args) -> int:
    elr = formulas.loss_ratio_error(args.rho, args.cv, args.eta)
    _emit({"elr": elr, "inputs": {"rho": args.rho, "cv": args.cv, "eta": args.eta}})
    return EXIT_OK


def cmd_improve(args) -> int:
    ratio = formulas.improvement_ratio(args.rho_old, args.rho_new, args.cv, args.eta)
    lr_old = formulas.expected_loss_ratio(args.rho_old, args.cv, args.eta, args.margin)
    lr_new = formulas.expected_loss_ratio(args.rho_new, args.cv, args.eta, args.margin)
    _emit(
        {
            "ratio": ratio,
            "relative_improvement": 1.0 - ratio,
            "lr_old": lr_old,
            "lr_new": lr_new,
            "absolute_improvement": lr_old - lr_new,
            "inputs": {
                "rho_old": args.rho_old, "rho_new": args.rho_new,
                "cv": args.cv, "eta": args.eta, "margin": args.margin,
            },
        }
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    records = reporting.load_deployments(args.deployments)
    est = calibration.aggregate_elasticity(records, args.confidence)
    out = est.to_dict()
    out["labels"] = [r.label for r in records]
    _emit(out)
    return EXIT_OK


def cmd_forecast(args) -> int:
    records = reporting.load_deployments(args.deployments)
    est = calibration.aggregate_elasticity(records, args.confidence)
    fc = calibration.forecast_improvement(
        est, formulas.PopulationMoments(args.cv), args.margin, args.rho_current, args.rho_target
    )
    _emit({"elasticity": est.to_dict(), **fc.to_dict()})
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = PortfolioConfig(
        n_potential=args.n_potential,
        cv=args.cv,
        target_rho=args.rho,
        eta=args.eta,
        margin=args.margin,
        seed=_resolve_seed(args.seed, 0),
        min_converted=args.min_converted,
        max_resample_attempts=args.max_attempts,
    )
    out = run_simulation(config)
    _emit(
        {
            "empirical_lr": out.empirical_lr,
            "predicted_lr": out.predicted_lr,
            "ape_percent": out.ape_percent,
            "n_converted": out.n_converted,
            "realized_rho": out.realized_rho,
            "attempts_used": out.attempts_used,
            "seed": config.seed,
        }
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# File-producing commands
# ---------------------------------------------------------------------------


def _load_grid_config(path: Optional[str]) -> experiments.GridConfig:
    if path is None:
        return experiments.GridConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputParseError(f"{path}: not UTF-8 ({exc.reason})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"{path}: {exc.msg}", exc.lineno) from None
    return experiments.GridConfig.from_dict(data)


def cmd_grid(args) -> int:
    config = _load_grid_config(args.config)
    overrides = {}
    if args.full_scale:
        overrides["n_potential"] = experiments.FULL_SCALE_N
    elif args.n_potential is not None:
        overrides["n_potential"] = args.n_potential
    if args.reps is not None:
        overrides["reps_per_cell"] = args.reps
    overrides["base_seed"] = _resolve_seed(args.seed, config.base_seed)
    config = experiments.GridConfig(**_merge(config, overrides))
    started = reporting.utc_now()
    with reporting.output_set(args.out_dir) as out:
        results, summary = experiments.run_grid(config, parallelism=args.parallelism)
        reporting.write_grid_csv(out.path("grid.csv"), results)
        reporting.write_json(out.path("summary.json"), summary.to_dict())
        out.finalize(reporting.RunManifest("grid", config.to_dict(), config.base_seed, started))
    _emit({"out_dir": str(args.out_dir), **summary.to_dict()})
    return EXIT_OK


def _merge(config: experiments.GridConfig, overrides: dict) -> dict:
    d = config.to_dict()
    d.pop("schema")
    d.update(overrides)
    return d


def _sweep_grid(args):
    name, default = DEFAULT_SWEEPS[args.kind]
    given = {
        "df": args.df, "alpha": args.alpha, "rho_el": args.rho_el, "family": args.family,
    }
    stray = [k for k, v in given.items() if v is not None and k != name]
    if stray:
        flags = ", ".join("--" + k.replace("_", "-") for k in stray)
        raise UsageError(f"{flags} not valid with --kind {args.kind}")
    values = given.get(name) if name else None
    return list(values) if values else list(default)


def cmd_violations(args) -> int:
    grid = _sweep_grid(args)
    base_seed = _resolve_seed(args.seed, 0)
    baseline = violations.Baseline(margin=args.margin)
    config = {
        "schema": "lrbridge.violations/1",
        "kind": args.kind,
        "grid": grid,
        "reps": args.reps,
        "portfolio_size": args.n_potential,
        "baseline": {"rho": baseline.rho, "cv": baseline.cv, "eta": baseline.eta, "margin": baseline.margin},
        "base_seed": base_seed,
        "min_converted": args.min_converted,
        "max_resample_attempts": args.max_attempts,
        "confidence": args.confidence,
    }
    started = reporting.utc_now()
    with reporting.output_set(args.out_dir) as out:
        points = violations.run_violation_sweep(
            args.kind,
            grid,
            reps=args.reps,
            portfolio_size=args.n_potential,
            baseline=baseline,
            base_seed=base_seed,
            parallelism=args.parallelism,
            min_converted=args.min_converted,
            max_resample_attempts=args.max_attempts,
            confidence=args.confidence,
        )
        reporting.write_degradation_csv(out.path("degradation.csv"), points)
        reporting.write_json(out.path("plot_series.json"), reporting.plot_series(points))
        out.finalize(reporting.RunManifest("violations", config, base_seed, started))
    _emit({"out_dir": str(args.out_dir), "series": reporting.plot_series(points)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrbridge", description="Expected loss ratios under imperfect pricing models.")
    parser.add_argument("--version", action="version", version=f"lrbridge {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def market(p, eta=True):
        if eta:
            p.add_argument("--eta", type=float, required=True, help="price elasticity")
        p.add_argument("--margin", type=float, default=1.0, help="price = margin * prediction")

    p = sub.add_parser("predict", help="expected loss ratio from model correlation")
    p.add_argument("--rho", type=float)
    p.add_argument("--cv", type=float)
    for flag in ("--rho-f", "--cv-f", "--rho-s", "--cv-s"):
        p.add_argument(flag, type=float, help="frequency/severity component")
    market(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("elr", help="loss ratio error above the perfect-model optimum")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--cv", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.set_defaults(func=cmd_elr)

    p = sub.add_parser("improve", help="loss ratio change from a correlation upgrade")
    p.add_argument("--rho-old", type=float, required=True)
    p.add_argument("--rho-new", type=float, required=True)
    p.add_argument("--cv", type=float, required=True)
    market(p)
    p.set_defaults(func=cmd_improve)

    p = sub.add_parser("calibrate", help="implied elasticity from past deployments")
    p.add_argument("deployments", help="CSV (label,observed_lr,margin,rho,cv) or JSON array")
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("forecast", help="calibrate, then forecast a correlation change")
    p.add_argument("deployments")
    p.add_argument("--cv", type=float, required=True)
    p.add_argument("--rho-current", type=float, required=True)
    p.add_argument("--rho-target", type=float, required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    market(p, eta=False)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("simulate", help="one Monte Carlo portfolio against the closed form")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--cv", type=float, required=True)
    market(p)
    p.add_argument("--n-potential", type=int, default=experiments.FULL_SCALE_N)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--min-converted", type=int, default=1)
    p.add_argument("--max-attempts", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="validation grid; writes grid.csv, summary.json, manifest.json")
    p.add_argument("--config", help="JSON grid config (defaults to the 625-simulation grid)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--reps", type=int, help="override reps per cell")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--n-potential", type=int, help="override potential customers per simulation")
    scale.add_argument("--full-scale", action="store_true", help=f"{experiments.FULL_SCALE_N:,} potential customers")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("violations", help="degradation sweep; writes degradation.csv, plot_series.json")
    p.add_argument("--kind", required=True, choices=violations.SWEEP_KINDS)
    p.add_argument("--df", type=_float_list, help="heavy-tail degrees of freedom")
    p.add_argument("--alpha", type=_float_list, help="skew-normal shape values")
    p.add_argument("--rho-el", type=_float_list, help="error-loss correlations")
    p.add_argument("--family", type=_str_list, help=f"demand families from {violations.DEMAND_FAMILIES}")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--n-potential", type=int, default=violations.MIN_PORTFOLIO)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--min-converted", type=int, default=1)
    p.add_argument("--max-attempts", type=int, default=20)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_violations)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputParseError, EmptyInputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InsufficientConversionsError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM_FAILED
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
