"""Command-line front end.

Three subcommands: ``estimate`` applies the estimators to a user CSV of
trial plus target-population rows; ``simulate`` runs the Monte Carlo
studies described by a scenario file (one or many settings); and
``derive-params`` solves for the data-generating intercepts behind a
target effect and selection probability, printing a pasteable scenario
block.

Every report is written both as JSON (full provenance: configuration,
seed, version, skip counts) and as flat CSV for analysis; simulations
additionally emit a long-format figure-data CSV keyed by the axis
variables (heterogeneity slope per selection slope). Exit codes: 0 ok,
2 validation, 3 numerical, 4 I/O.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from typing import Optional, Sequence

from . import __version__
from .data_model import EstimateReport, VarianceEntry, load_csv, validate
from .errors import (
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    DataError,
    NumericalError,
    TrialGenError,
)
from .estimators import (
    ALL_ESTIMATORS,
    EstimatorId,
    FitKind,
    fit_outcome_model,
    model_spec_for,
    point_estimate,
)
from .ps_weights import compute_weights, fit_ps_logistic, overlap_delta_p
from .rng import subseed
from .simulation import (
    DEFAULT_SIGMA,
    MonteCarloConfig,
    ScenarioParams,
    SimulationReport,
    delta_p_quadrature,
    marginal_selection_prob,
    pop_covariate_mean,
    run_double_layer,
    run_single_layer,
    solve_alpha0,
    solve_beta2,
)
from .variance import (
    BOOTSTRAP_METHODS,
    PARAMETRIC_FOR,
    BootstrapConfig,
    VarianceMethodId,
    bootstrap_variance,
    confidence_interval,
    is_applicable,
    lincomb_variance,
    mest_variance,
    survey_mean_variance,
)


def _split_tokens(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def _parse_estimators(raw: str) -> list[EstimatorId]:
    if raw == "all":
        return list(ALL_ESTIMATORS)
    try:
        return [EstimatorId(tok) for tok in _split_tokens(raw)]
    except ValueError as exc:
        raise DataError(f"unknown estimator: {exc}") from None


def _parse_methods(raw: str) -> list[str]:
    methods = _split_tokens(raw)
    valid = {m.value for m in VarianceMethodId} | {"parametric"}
    unknown = [m for m in methods if m not in valid]
    if unknown:
        raise DataError(f"unknown variance method(s): {', '.join(unknown)}")
    return methods


def _method_for(estimator: EstimatorId, token: str) -> Optional[VarianceMethodId]:
    if token == "parametric":
        return PARAMETRIC_FOR[estimator]
    method = VarianceMethodId(token)
    return method if is_applicable(method, estimator) else None


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv_rows(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def cmd_estimate(args: argparse.Namespace) -> int:
    schema: dict[str, object] = {"s": args.s_col, "t": args.t_col, "y": args.y_col}
    if args.x_cols:
        schema["x"] = _split_tokens(args.x_cols)
    sample = load_csv(args.data, schema)
    problems = validate(sample)
    if problems:
        for problem in problems:
            print(f"validation: {problem}", file=sys.stderr)
        return EXIT_VALIDATION

    estimators = _parse_estimators(args.estimators)
    methods = _parse_methods(args.variance)
    if any(_method_for(e, m) is None for e in estimators for m in methods if m != "parametric"):
        bad = [(e.value, m) for e in estimators for m in methods
               if m != "parametric" and _method_for(e, m) is None]
        raise DataError(f"variance method not applicable to estimator: {bad}")
    needs_seed = any(m in {s.value for s in BOOTSTRAP_METHODS} for m in methods)
    if needs_seed and args.seed is None:
        raise DataError("--seed is required when bootstrap variance methods are selected")
    seed = 0 if args.seed is None else args.seed

    interactions: Optional[tuple[str, ...]] = None
    if args.interactions == "none":
        interactions = ()
    elif args.interactions not in (None, "all"):
        interactions = tuple(_split_tokens(args.interactions))

    ps_fit = fit_ps_logistic(sample)
    weights = compute_weights(ps_fit, sample)
    delta_p = overlap_delta_p(weights, sample)

    reports: list[EstimateReport] = []
    for estimator in estimators:
        point = point_estimate(estimator, sample, weights, interactions)
        entries = []
        for token in methods:
            method = _method_for(estimator, token)
            if method is None:
                continue
            if method is VarianceMethodId.MEST:
                se = mest_variance(sample, ps_fit, weights)
            elif method is VarianceMethodId.SURVEY_LIN:
                se = survey_mean_variance(sample, weights)
            elif method is VarianceMethodId.LINCOMB:
                spec = model_spec_for(estimator, sample, interactions)
                kind = {"ols": FitKind.OLS, "wols": FitKind.WOLS, "modsv": FitKind.SURVEY}[
                    estimator.value.removesuffix("_cor")
                ]
                fit = fit_outcome_model(sample, spec, kind,
                                        None if kind is FitKind.OLS else weights)
                se = lincomb_variance(fit, spec, sample)
            else:
                config = BootstrapConfig(
                    scheme=method, reps=args.bootstrap_reps,
                    seed=subseed(seed, list(VarianceMethodId).index(method),
                                 list(ALL_ESTIMATORS).index(estimator)),
                )
                se = bootstrap_variance(sample, estimator, config, interactions)
            low, high = confidence_interval(point, se, args.level)
            entries.append(VarianceEntry(method=method.value, se=se, ci_low=low, ci_high=high))
        reports.append(EstimateReport(
            estimator=estimator.value, point=point, entries=tuple(entries),
            metadata={"n": sample.n, "n_trial": sample.n_trial, "delta_p": delta_p,
                      "seed": seed, "bootstrap_reps": args.bootstrap_reps},
        ))

    config_echo = {
        "command": "estimate", "data": args.data,
        "estimators": [e.value for e in estimators], "variance": methods,
        "interactions": args.interactions or "all",
        "bootstrap_reps": args.bootstrap_reps, "seed": seed, "level": args.level,
        "columns": {"s": args.s_col, "t": args.t_col, "y": args.y_col,
                    "x": list(sample.covariate_names)},
    }
    payload = {
        "version": __version__,
        "config": config_echo,
        "data_summary": {
            "n": sample.n, "n_trial": sample.n_trial, "n_pop": sample.n_pop,
            "delta_p": delta_p,
            "weights": {
                "sum": float(weights.w.sum()),
                "max_share": weights.max_weight_share,
                "concentrated": weights.concentrated,
            },
            "ps_converged": ps_fit.converged,
            "ps_iterations": ps_fit.iterations,
        },
        "estimates": [
            {"estimator": r.estimator, "point": r.point,
             "entries": [vars(entry) for entry in r.entries]}
            for r in reports
        ],
    }
    flat_rows = [
        {"estimator": r.estimator, "point": r.point, "variance_method": entry.method,
         "se": entry.se, "ci_low": entry.ci_low, "ci_high": entry.ci_high,
         "n": sample.n, "n_trial": sample.n_trial, "delta_p": delta_p}
        for r in reports for entry in r.entries
    ]

    if args.out:
        _write_json(f"{args.out}.json", payload)
        _write_csv_rows(
            f"{args.out}.csv",
            ["estimator", "point", "variance_method", "se", "ci_low", "ci_high",
             "n", "n_trial", "delta_p"],
            flat_rows,
        )
    _emit(args.format, payload, flat_rows, _format_estimate_text(payload, reports, weights))
    return EXIT_OK


def _format_estimate_text(payload, reports, weights) -> str:
    lines = [
        f"n={payload['data_summary']['n']}  trial={payload['data_summary']['n_trial']}  "
        f"population={payload['data_summary']['n_pop']}  "
        f"delta_p={payload['data_summary']['delta_p']:.4f}",
    ]
    if weights.concentrated:
        lines.append(
            f"warning: one subject carries {weights.max_weight_share:.1%} of total weight"
        )
    for r in reports:
        lines.append(f"{r.estimator}: {r.point:.4f}")
        for entry in r.entries:
            lines.append(
                f"  {entry.method:>10s}  se={entry.se:.4f}  "
                f"ci=({entry.ci_low:.4f}, {entry.ci_high:.4f})"
            )
    return "\n".join(lines)


def _emit(fmt: str, payload: dict, flat_rows: list[dict], text: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif fmt == "csv":
        writer = csv.DictWriter(sys.stdout, fieldnames=list(flat_rows[0].keys()))
        writer.writeheader()
        writer.writerows(flat_rows)
    else:
        print(text)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_RUN_DEFAULTS = {
    "layers": "single", "reps": 1000, "inner_reps": 10, "seed": None,
    "estimators": "all", "variance": "parametric", "bootstrap_reps": 500,
    "bootstrap_subsample": 0, "level": 0.95, "workers": 1,
}


def _load_scenario(path: str) -> tuple[dict, list[tuple[str, ScenarioParams]]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise OSError(f"scenario file not found: {path}")
    run = dict(_RUN_DEFAULTS)
    if parser.has_section("run"):
        for key, value in parser.items("run"):
            if key not in _RUN_DEFAULTS:
                raise DataError(f"unknown [run] key: {key}")
            run[key] = value
    settings: list[tuple[str, ScenarioParams]] = []
    for section in parser.sections():
        if section == "run":
            continue
        name = section.removeprefix("setting").strip() or section
        items = dict(parser.items(section))
        settings.append((name, _params_from_items(items, section)))
    if not settings:
        raise DataError("scenario file defines no [setting ...] sections")
    return run, settings


def _params_from_items(items: dict[str, str], section: str) -> ScenarioParams:
    def fval(key: str, default: Optional[float] = None) -> Optional[float]:
        if key not in items:
            return default
        try:
            return float(items[key])
        except ValueError:
            raise DataError(f"[{section}] {key} is not a number: {items[key]!r}") from None

    required = [k for k in ("alpha1", "beta3", "n_total") if k not in items]
    if required:
        raise DataError(f"[{section}] missing key(s): {', '.join(required)}")
    alpha1 = fval("alpha1")
    beta3 = fval("beta3")
    n_total = int(fval("n_total"))
    alpha0 = fval("alpha0")
    target_p = fval("target_p")
    if alpha0 is None and target_p is None:
        raise DataError(f"[{section}] provide alpha0 or target_p")
    beta0 = fval("beta0", 0.0)
    beta1 = fval("beta1", 0.3)
    sigma = fval("sigma", DEFAULT_SIGMA)
    has_pate = "pate" in items
    has_beta2 = "beta2" in items
    if has_pate and has_beta2:
        raise DataError(f"[{section}] give pate or beta2, not both")
    if not has_pate and not has_beta2:
        raise DataError(f"[{section}] provide pate or beta2")
    if has_beta2:
        if alpha0 is None:
            alpha0 = solve_alpha0(alpha1, target_p)
        return ScenarioParams.from_coefficients(
            alpha0=alpha0, alpha1=alpha1, beta0=beta0, beta1=beta1,
            beta2=fval("beta2"), beta3=beta3, n_total=n_total, sigma=sigma,
        )
    return ScenarioParams.from_targets(
        alpha1=alpha1, beta3=beta3, pate=fval("pate"), n_total=n_total,
        target_p=target_p, alpha0=alpha0, beta0=beta0, beta1=beta1, sigma=sigma,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    run, settings = _load_scenario(args.scenario)
    for flag in ("layers", "reps", "inner_reps", "seed", "workers",
                 "estimators", "variance", "bootstrap_reps", "level"):
        value = getattr(args, flag)
        if value is not None:
            run[flag] = value
    if run["seed"] is None:
        raise DataError("a seed is required: set [run] seed or pass --seed")
    layers = str(run["layers"])
    if layers not in ("single", "double"):
        raise DataError(f"layers must be 'single' or 'double', got {layers!r}")
    reps = int(run["reps"])
    inner_reps = int(run["inner_reps"])
    seed = int(run["seed"])
    subsample = int(run["bootstrap_subsample"])
    cfg = MonteCarloConfig(
        estimators=tuple(_parse_estimators(str(run["estimators"]))),
        methods=tuple(_parse_methods(str(run["variance"]))),
        level=float(run["level"]),
        bootstrap_reps=int(run["bootstrap_reps"]),
        bootstrap_subsample=subsample if subsample > 0 else None,
        workers=int(run["workers"]),
    )

    reports: list[tuple[str, SimulationReport]] = []
    for name, params in settings:
        print(f"running setting {name} "
              f"(alpha1={params.alpha1}, beta3={params.beta3}, n={params.n_total})...",
              file=sys.stderr)
        setting_seed = subseed(seed, len(reports)) if len(settings) > 1 else seed
        if layers == "double":
            report = run_double_layer(params, reps, setting_seed, inner_reps, cfg)
        else:
            report = run_single_layer(params, reps, setting_seed, cfg)
        reports.append((name, report))

    run_echo = {str(k): (None if v is None else str(v)) for k, v in run.items()}
    payload = {
        "version": __version__,
        "config": {"command": "simulate", "scenario": args.scenario, "run": run_echo,
                   "seed": seed},
        "settings": [
            {"name": name, **report.to_dict()} for name, report in reports
        ],
    }
    flat_fields = ["setting", "layers", "alpha0", "alpha1", "beta2", "beta3", "sigma",
                   "n_total", "target_p", "true_pate", "estimator", "variance_method",
                   "bias", "mc_sd", "ave_se", "finite_coverage", "infinite_coverage",
                   "n_points", "n_se", "reps_completed", "skipped", "mean_delta_p"]
    flat_rows = []
    figure_rows = []
    for name, report in reports:
        p = report.params
        for row in report.rows:
            flat_rows.append({
                "setting": name, "layers": report.layers, "alpha0": p.alpha0,
                "alpha1": p.alpha1, "beta2": p.beta2, "beta3": p.beta3,
                "sigma": p.sigma, "n_total": p.n_total, "target_p": p.target_p,
                "true_pate": p.true_pate, "estimator": row.estimator,
                "variance_method": row.variance_method, "bias": row.bias,
                "mc_sd": row.mc_sd, "ave_se": row.ave_se,
                "finite_coverage": row.finite_coverage,
                "infinite_coverage": row.infinite_coverage,
                "n_points": row.n_points, "n_se": row.n_se,
                "reps_completed": report.reps_completed,
                "skipped": sum(report.skipped.values()),
                "mean_delta_p": report.mean_delta_p,
            })
            figure_rows.append({
                "alpha1": p.alpha1, "beta3": p.beta3, "n_total": p.n_total,
                "target_p": p.target_p, "estimator": row.estimator,
                "variance_method": row.variance_method, "bias": row.bias,
                "se_gap": row.ave_se - row.mc_sd,
                "finite_coverage": row.finite_coverage,
                "infinite_coverage": row.infinite_coverage,
            })

    if args.out:
        _write_json(f"{args.out}.json", payload)
        _write_csv_rows(f"{args.out}.csv", flat_fields, flat_rows)
        _write_csv_rows(
            f"{args.out}_figure.csv",
            ["alpha1", "beta3", "n_total", "target_p", "estimator", "variance_method",
             "bias", "se_gap", "finite_coverage", "infinite_coverage"],
            figure_rows,
        )
    text_lines = []
    for name, report in reports:
        text_lines.append(
            f"[{name}] completed {report.reps_completed}/{report.reps_requested} "
            f"(skipped {sum(report.skipped.values())}), mean delta_p "
            f"{report.mean_delta_p:.4f}"
        )
        for row in report.rows:
            text_lines.append(
                f"  {row.estimator:>9s} x {row.variance_method:<10s} "
                f"bias {row.bias:+.4f}  mc_sd {row.mc_sd:.4f}  ave_se {row.ave_se:.4f}  "
                f"cov(fin/inf) {row.finite_coverage:.3f}/{row.infinite_coverage:.3f}"
            )
    _emit(args.format, payload, flat_rows, "\n".join(text_lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# derive-params
# ---------------------------------------------------------------------------

def cmd_derive_params(args: argparse.Namespace) -> int:
    alpha0 = solve_alpha0(args.alpha1, args.target_p)
    beta2 = solve_beta2(args.pate, args.beta3, alpha0, args.alpha1)
    block = [
        "[setting derived]",
        f"alpha1 = {args.alpha1!r}",
        f"alpha0 = {alpha0!r}",
        f"target_p = {args.target_p!r}",
        f"beta3 = {args.beta3!r}",
        f"beta2 = {beta2!r}",
        f"pate = {args.pate!r}",
        f"# E(X|S=0) = {pop_covariate_mean(alpha0, args.alpha1)!r}",
        f"# delta_p  = {delta_p_quadrature(alpha0, args.alpha1)!r}",
        f"# P(S=1)   = {marginal_selection_prob(alpha0, args.alpha1)!r}",
    ]
    print("\n".join(block))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialgen",
        description="Generalize randomized-trial treatment effects to target populations.",
    )
    parser.add_argument("--version", action="version", version=f"trialgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate population effects from a CSV")
    est.add_argument("--data", required=True, help="combined trial+population CSV")
    est.add_argument("--s-col", default="s", help="trial indicator column (default s)")
    est.add_argument("--t-col", default="t", help="treatment column (default t)")
    est.add_argument("--y-col", default="y", help="outcome column (default y)")
    est.add_argument("--x-cols", default=None,
                     help="comma-separated covariate columns (default: all others)")
    est.add_argument("--estimators", default="ipw,sv_only",
                     help="comma list or 'all' (default ipw,sv_only)")
    est.add_argument("--variance", default="parametric",
                     help="comma list of mest,survey_lin,lincomb,rb,wsb,wawsb,parametric")
    est.add_argument("--interactions", default="all",
                     help="'all', 'none', or comma list of covariates interacted "
                          "with treatment in *_cor models")
    est.add_argument("--bootstrap-reps", type=int, default=500)
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--out", default=None, help="base path for .json and .csv reports")
    est.add_argument("--format", choices=("text", "csv", "json"), default="text",
                     help="stdout format (files are always json+csv)")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run Monte Carlo studies from a scenario file")
    sim.add_argument("--scenario", required=True, help="INI-style scenario file")
    sim.add_argument("--reps", type=int, default=None,
                     help="override replication count (outer count for double layer)")
    sim.add_argument("--layers", choices=("single", "double"), default=None)
    sim.add_argument("--inner-reps", dest="inner_reps", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--estimators", default=None, help="override [run] estimators")
    sim.add_argument("--variance", default=None, help="override [run] variance methods")
    sim.add_argument("--bootstrap-reps", dest="bootstrap_reps", type=int, default=None)
    sim.add_argument("--level", type=float, default=None)
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--out", default=None,
                     help="base path for .json, .csv and _figure.csv reports")
    sim.add_argument("--format", choices=("text", "csv", "json"), default="text")
    sim.set_defaults(func=cmd_simulate)

    der = sub.add_parser("derive-params",
                         help="solve scenario parameters for a target effect")
    der.add_argument("--pate", type=float, required=True)
    der.add_argument("--beta3", type=float, required=True)
    der.add_argument("--alpha1", type=float, required=True)
    der.add_argument("--target-p", dest="target_p", type=float, required=True)
    der.set_defaults(func=cmd_derive_params)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TrialGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
