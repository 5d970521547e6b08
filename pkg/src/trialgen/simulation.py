"""Scenario calibration, data generation, and Monte Carlo drivers.

Selection into the trial follows a logistic curve in one uniform
covariate: the slope controls how far the trial's covariate distribution
drifts from the population's, and the intercept is solved (bisection
over a quadrature integral) to hit a prescribed marginal selection
probability. Outcomes are linear with a treatment-by-covariate
interaction controlling effect heterogeneity; the treatment main effect
is solved so the true population effect matches a target.

Two Monte Carlo designs:

* single layer -- every replicate redraws covariates, selection,
  treatment, and outcomes; performance targets the infinite-population
  effect.
* double layer -- each outer replicate fixes one realized target
  population, and inner replicates redraw only the trial (covariates
  from the selection-tilted density, via rejection sampling);
  performance targets each outer population's finite effect.

Replicates run in parallel as independent work units keyed by index;
streams derive from (seed, purpose, index), so reports are bit-identical
across worker counts.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .data_model import CombinedSample
from .errors import DegenerateReplicateError, TrialGenError
from .estimators import (
    ALL_ESTIMATORS,
    EstimatorId,
    FitKind,
    fit_outcome_model,
    model_spec_for,
    point_estimates,
)
from .numerics import bisect, integrate01
from .ps_weights import compute_weights, fit_ps_logistic, overlap_delta_p
from .rng import subseed, substream
from .variance import (
    BOOTSTRAP_METHODS,
    PARAMETRIC_FOR,
    BootstrapConfig,
    VarianceMethodId,
    bootstrap_standard_errors,
    confidence_interval,
    is_applicable,
    lincomb_variance,
    mest_variance,
    survey_mean_variance,
)

# Outcome noise SD. Calibrated once so the weighted-difference estimator's
# MC SD at the reference setting (alpha1=4, beta3=-0.6, n_total=3000,
# selection 20%) is 0.141 within 5%; see scripts/calibrate_sigma.py.
DEFAULT_SIGMA = 1.0

_ALPHA0_BRACKET = (-50.0, 50.0)
_SOLVER_TOL = 1e-12
_CONSISTENCY_TOL = 1e-6

# stream purpose tags
_DATASET, _INNER, _BOOT = 0, 1, 2


def selection_prob(x, alpha0: float, alpha1: float):
    """Trial-membership probability at covariate value(s) x."""
    return expit(alpha0 + alpha1 * np.asarray(x, dtype=np.float64))


def marginal_selection_prob(alpha0: float, alpha1: float) -> float:
    """P(S=1) under a uniform covariate, by quadrature."""
    return integrate01(lambda x: selection_prob(x, alpha0, alpha1))


def solve_alpha0(alpha1: float, target_p: float) -> float:
    """Intercept making the marginal selection probability equal target_p."""
    if not 0.0 < target_p < 1.0:
        raise ValueError("target selection probability must be in (0, 1)")
    lo, hi = _ALPHA0_BRACKET
    return bisect(lambda a0: marginal_selection_prob(a0, alpha1) - target_p,
                  lo, hi, tol=_SOLVER_TOL)


def pop_covariate_mean(alpha0: float, alpha1: float) -> float:
    """E(X | S=0): population-conditional covariate mean, by quadrature."""
    num = integrate01(lambda x: x * (1.0 - selection_prob(x, alpha0, alpha1)))
    den = integrate01(lambda x: 1.0 - selection_prob(x, alpha0, alpha1))
    return num / den


def trial_covariate_mean(alpha0: float, alpha1: float) -> float:
    """E(X | S=1): trial-conditional covariate mean, by quadrature."""
    num = integrate01(lambda x: x * selection_prob(x, alpha0, alpha1))
    den = integrate01(lambda x: selection_prob(x, alpha0, alpha1))
    return num / den


def delta_p_quadrature(alpha0: float, alpha1: float) -> float:
    """Overlap diagnostic under the true selection curve, by quadrature."""
    e2 = integrate01(lambda x: selection_prob(x, alpha0, alpha1) ** 2)
    e1 = integrate01(lambda x: selection_prob(x, alpha0, alpha1))
    e_1me = integrate01(lambda x: (p := selection_prob(x, alpha0, alpha1)) * (1.0 - p))
    one_me = 1.0 - e1
    return e2 / e1 - e_1me / one_me


def solve_beta2(true_pate: float, beta3: float, alpha0: float, alpha1: float) -> float:
    """Treatment main effect achieving the target population effect."""
    return true_pate - beta3 * pop_covariate_mean(alpha0, alpha1)


@dataclass(frozen=True)
class ScenarioParams:
    """Data-generating parameters for one simulation setting.

    ``true_pate`` must equal ``beta2 + beta3 * E(X|S=0)`` (checked at
    construction); build instances with :meth:`from_targets` or
    :meth:`from_coefficients` so the identity holds automatically.
    """

    alpha0: float
    alpha1: float
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    sigma: float
    n_total: int
    target_p: float
    true_pate: float

    def __post_init__(self) -> None:
        if self.sigma < 0.0:  # zero gives deterministic outcomes, useful in tests
            raise ValueError("sigma must be nonnegative")
        if self.n_total < 4:
            raise ValueError("n_total must be at least 4")
        implied = self.beta2 + self.beta3 * pop_covariate_mean(self.alpha0, self.alpha1)
        if abs(implied - self.true_pate) > _CONSISTENCY_TOL * max(1.0, abs(self.true_pate)):
            raise ValueError(
                f"true_pate={self.true_pate} inconsistent with "
                f"beta2 + beta3*E(X|S=0)={implied}"
            )

    @classmethod
    def from_targets(cls, alpha1: float, beta3: float, pate: float,
                     n_total: int, target_p: Optional[float] = None,
                     alpha0: Optional[float] = None, beta0: float = 0.0,
                     beta1: float = 0.3, sigma: float = DEFAULT_SIGMA) -> "ScenarioParams":
        """Derive the intercepts from targets: alpha0 from target_p, beta2 from pate."""
        if alpha0 is None:
            if target_p is None:
                raise ValueError("provide alpha0 or target_p")
            alpha0 = solve_alpha0(alpha1, target_p)
        marginal = marginal_selection_prob(alpha0, alpha1)
        beta2 = solve_beta2(pate, beta3, alpha0, alpha1)
        return cls(alpha0=alpha0, alpha1=alpha1, beta0=beta0, beta1=beta1,
                   beta2=beta2, beta3=beta3, sigma=sigma, n_total=n_total,
                   target_p=marginal, true_pate=pate)

    @classmethod
    def from_coefficients(cls, alpha0: float, alpha1: float, beta0: float,
                          beta1: float, beta2: float, beta3: float,
                          n_total: int, sigma: float = DEFAULT_SIGMA) -> "ScenarioParams":
        """Take coefficients as given; the implied true effect is computed."""
        pate = beta2 + beta3 * pop_covariate_mean(alpha0, alpha1)
        return cls(alpha0=alpha0, alpha1=alpha1, beta0=beta0, beta1=beta1,
                   beta2=beta2, beta3=beta3, sigma=sigma, n_total=n_total,
                   target_p=marginal_selection_prob(alpha0, alpha1), true_pate=pate)

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0, "alpha1": self.alpha1,
            "beta0": self.beta0, "beta1": self.beta1,
            "beta2": self.beta2, "beta3": self.beta3,
            "sigma": self.sigma, "n_total": self.n_total,
            "target_p": self.target_p, "true_pate": self.true_pate,
        }


_COVARIATE_NAMES = ("x",)


def _assemble(x_trial, t_trial, y_trial, x_pop) -> CombinedSample:
    m, n_pop = x_trial.shape[0], x_pop.shape[0]
    return CombinedSample(
        s=np.concatenate([np.ones(m, dtype=np.int8), np.zeros(n_pop, dtype=np.int8)]),
        t=np.concatenate([t_trial, np.full(n_pop, np.nan)]),
        y=np.concatenate([y_trial, np.full(n_pop, np.nan)]),
        x=np.concatenate([x_trial, x_pop])[:, None],
        covariate_names=_COVARIATE_NAMES,
    )


def _assign_arms(m: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly half treated; a fair coin gives one arm the odd unit."""
    extra = int(rng.integers(0, 2))
    n_treated = m // 2 + (extra if m % 2 else 0)
    t = np.zeros(m)
    t[rng.permutation(m)[:n_treated]] = 1.0
    return t


def _outcomes(params: ScenarioParams, x, t, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, params.sigma, x.shape[0])
    return params.beta0 + params.beta1 * x + params.beta2 * t + params.beta3 * x * t + noise


def generate_dataset(params: ScenarioParams, rng: np.random.Generator) -> CombinedSample:
    """One combined sample: uniform covariate, logistic selection, half treated.

    Outcomes exist only on trial rows. Raises
    :class:`DegenerateReplicateError` when the realized trial has fewer
    than 4 subjects or the population is empty; callers skip and count.
    """
    n = params.n_total
    x = rng.random(n)
    e = selection_prob(x, params.alpha0, params.alpha1)
    in_trial = rng.random(n) < e
    m = int(in_trial.sum())
    if m < 4 or n - m < 1:
        raise DegenerateReplicateError(f"realized trial size {m} of {n} unusable")
    x_trial = x[in_trial]
    t_trial = _assign_arms(m, rng)
    y_trial = _outcomes(params, x_trial, t_trial, rng)
    return _assemble(x_trial, t_trial, y_trial, x[~in_trial])


def _sample_trial_covariates(params: ScenarioParams, m: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Draw m covariates from the trial-conditional density (rejection sampling)."""
    bound = max(selection_prob(0.0, params.alpha0, params.alpha1),
                selection_prob(1.0, params.alpha0, params.alpha1))
    out = np.empty(0)
    while out.size < m:
        chunk = max(2 * (m - out.size), 64)
        proposal = rng.random(chunk)
        accept = rng.random(chunk) * bound < selection_prob(proposal, params.alpha0, params.alpha1)
        out = np.concatenate([out, proposal[accept]])
    return out[:m]


def generate_inner_trial(outer: CombinedSample, params: ScenarioParams,
                         rng: np.random.Generator) -> CombinedSample:
    """Redraw the trial against a fixed target population.

    Population rows are copied verbatim from ``outer``; the trial keeps
    the outer replicate's realized size, with covariates drawn from the
    selection-tilted density.
    """
    m = outer.n_trial
    x_trial = _sample_trial_covariates(params, m, rng)
    t_trial = _assign_arms(m, rng)
    y_trial = _outcomes(params, x_trial, t_trial, rng)
    return _assemble(x_trial, t_trial, y_trial, outer.x[outer.pop_mask, 0])


@dataclass(frozen=True)
class SimRow:
    """One estimator-by-variance-method cell of a simulation report."""

    estimator: str
    variance_method: str
    bias: float
    mc_sd: float
    ave_se: float
    finite_coverage: float
    infinite_coverage: float
    n_points: int
    n_se: int


@dataclass(frozen=True)
class SimulationReport:
    """Performance summary of one simulation run."""

    params: ScenarioParams
    layers: str
    reps_requested: int
    reps_completed: int
    skipped: dict[str, int]
    mean_delta_p: float
    mean_n_trial: float
    level: float
    seed: int
    rows: tuple[SimRow, ...]

    def get(self, estimator, method) -> SimRow:
        est = EstimatorId(estimator).value
        meth = VarianceMethodId(method).value
        for row in self.rows:
            if row.estimator == est and row.variance_method == meth:
                return row
        raise KeyError(f"no row for ({est}, {meth})")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "layers": self.layers,
            "reps_requested": self.reps_requested,
            "reps_completed": self.reps_completed,
            "skipped": dict(self.skipped),
            "mean_delta_p": self.mean_delta_p,
            "mean_n_trial": self.mean_n_trial,
            "level": self.level,
            "seed": self.seed,
            "rows": [vars(r) for r in self.rows],
        }


@dataclass(frozen=True)
class MonteCarloConfig:
    """Which estimators/variance methods to run, and bootstrap controls.

    ``methods`` may contain the literal token ``"parametric"``, which
    expands per estimator to its conventional analytic method. Bootstrap
    SEs are computed on the first ``bootstrap_subsample`` replicates
    (all of them when ``None``).
    """

    estimators: tuple[EstimatorId, ...] = ALL_ESTIMATORS
    methods: tuple[str, ...] = ("parametric",)
    level: float = 0.95
    bootstrap_reps: int = 500
    bootstrap_subsample: Optional[int] = None
    interactions: Optional[tuple[str, ...]] = None
    workers: int = 1

    def methods_for(self, estimator: EstimatorId) -> list[VarianceMethodId]:
        resolved: list[VarianceMethodId] = []
        for token in self.methods:
            if token == "parametric":
                method = PARAMETRIC_FOR[estimator]
            else:
                method = VarianceMethodId(token)
                if not is_applicable(method, estimator):
                    continue
            if method not in resolved:
                resolved.append(method)
        return resolved

    def bootstrap_schemes(self) -> list[VarianceMethodId]:
        schemes = []
        for token in self.methods:
            if token != "parametric" and VarianceMethodId(token) in BOOTSTRAP_METHODS:
                schemes.append(VarianceMethodId(token))
        return schemes


@dataclass
class _RepOutcome:
    index: int
    ok: bool
    reason: Optional[str] = None
    outer: int = 0
    n_trial: int = 0
    delta_p: float = np.nan
    finite_pate: float = np.nan
    points: dict = field(default_factory=dict)
    ses: dict = field(default_factory=dict)


def _parametric_ses(sample, weights, ps_fit, cfg: MonteCarloConfig,
                    wanted: Sequence[EstimatorId], interactions) -> dict:
    """Analytic SEs, sharing outcome-model fits across estimator ids."""
    ses: dict[tuple[str, str], float] = {}
    fits: dict[tuple[bool, FitKind], object] = {}

    def outcome_fit(estimator: EstimatorId):
        kind = {"ols": FitKind.OLS, "wols": FitKind.WOLS, "modsv": FitKind.SURVEY}[
            estimator.value.removesuffix("_cor")
        ]
        cor = estimator.value.endswith("_cor")
        key = (cor, kind)
        if key not in fits:
            spec = model_spec_for(estimator, sample, interactions)
            need_w = kind is not FitKind.OLS
            fits[key] = (fit_outcome_model(sample, spec, kind, weights if need_w else None), spec)
        return fits[key]

    for estimator in wanted:
        for method in cfg.methods_for(estimator):
            if method in BOOTSTRAP_METHODS:
                continue
            if method is VarianceMethodId.MEST:
                se = mest_variance(sample, ps_fit, weights)
            elif method is VarianceMethodId.SURVEY_LIN:
                se = survey_mean_variance(sample, weights)
            else:
                fit, spec = outcome_fit(estimator)
                se = lincomb_variance(fit, spec, sample)
            ses[(estimator.value, method.value)] = se
    return ses


def _bootstrap_ses(sample, cfg: MonteCarloConfig, wanted, interactions,
                   seed: int, path: tuple[int, ...]) -> dict:
    ses: dict[tuple[str, str], float] = {}
    for scheme in cfg.bootstrap_schemes():
        config = BootstrapConfig(
            scheme=scheme, reps=cfg.bootstrap_reps,
            seed=subseed(seed, _BOOT, *path, list(VarianceMethodId).index(scheme)),
        )
        applicable = [e for e in wanted if is_applicable(scheme, e)]
        boot, _ = bootstrap_standard_errors(sample, applicable, config, interactions)
        for estimator, se in boot.items():
            ses[(estimator.value, scheme.value)] = se
    return ses


def _analyze(sample, params, cfg: MonteCarloConfig, seed, path,
             with_bootstrap: bool) -> tuple[dict, dict, float]:
    wanted = list(cfg.estimators)
    interactions = cfg.interactions
    ps_fit = fit_ps_logistic(sample)
    weights = compute_weights(ps_fit, sample)
    points, failures = point_estimates(sample, weights, wanted, interactions)
    if failures:
        raise next(iter(failures.values()))
    ses = _parametric_ses(sample, weights, ps_fit, cfg, wanted, interactions)
    if with_bootstrap:
        ses.update(_bootstrap_ses(sample, cfg, wanted, interactions, seed, path))
    return ({e.value: v for e, v in points.items()}, ses,
            overlap_delta_p(weights, sample))


def _single_replicate(index: int, params: ScenarioParams, seed: int,
                      cfg: MonteCarloConfig, boot_cutoff: int) -> _RepOutcome:
    rng = substream(seed, _DATASET, index)
    try:
        sample = generate_dataset(params, rng)
        points, ses, delta_p = _analyze(
            sample, params, cfg, seed, (index,), with_bootstrap=index < boot_cutoff,
        )
    except TrialGenError as exc:
        return _RepOutcome(index=index, ok=False, reason=type(exc).__name__)
    finite_pate = params.beta2 + params.beta3 * float(sample.x[sample.pop_mask, 0].mean())
    return _RepOutcome(index=index, ok=True, n_trial=sample.n_trial, delta_p=delta_p,
                       finite_pate=finite_pate, points=points, ses=ses)


def _double_replicates(outer_index: int, params: ScenarioParams, seed: int,
                       cfg: MonteCarloConfig, inner_reps: int,
                       boot_cutoff: int) -> list[_RepOutcome]:
    rng = substream(seed, _DATASET, outer_index)
    try:
        outer = generate_dataset(params, rng)
    except TrialGenError as exc:
        return [_RepOutcome(index=outer_index * inner_reps + j, ok=False, outer=outer_index,
                            reason=type(exc).__name__) for j in range(inner_reps)]
    finite_pate = params.beta2 + params.beta3 * float(outer.x[outer.pop_mask, 0].mean())
    results = []
    for j in range(inner_reps):
        index = outer_index * inner_reps + j
        inner_rng = substream(seed, _INNER, outer_index, j)
        try:
            sample = generate_inner_trial(outer, params, inner_rng)
            points, ses, delta_p = _analyze(
                sample, params, cfg, seed, (outer_index, j),
                with_bootstrap=outer_index < boot_cutoff,
            )
        except TrialGenError as exc:
            results.append(_RepOutcome(index=index, ok=False, outer=outer_index,
                                       reason=type(exc).__name__))
            continue
        results.append(_RepOutcome(index=index, ok=True, outer=outer_index,
                                   n_trial=sample.n_trial, delta_p=delta_p,
                                   finite_pate=finite_pate, points=points, ses=ses))
    return results


def _map_indexed(fn, count: int, workers: int) -> list:
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    methods = mp.get_all_start_methods()
    context = mp.get_context("fork" if "fork" in methods else None)
    chunksize = max(1, count // (workers * 8))
    with context.Pool(workers) as pool:
        return pool.map(fn, range(count), chunksize=chunksize)


def _summarize(results: list[_RepOutcome], params: ScenarioParams, layers: str,
               cfg: MonteCarloConfig, reps_requested: int,
               seed: int) -> SimulationReport:
    completed = [r for r in results if r.ok]
    skipped: dict[str, int] = {}
    for r in results:
        if not r.ok:
            skipped[r.reason or "unknown"] = skipped.get(r.reason or "unknown", 0) + 1

    rows: list[SimRow] = []
    for estimator in cfg.estimators:
        est = estimator.value
        usable = [r for r in completed if est in r.points]
        pts = np.array([r.points[est] for r in usable])
        finite = np.array([r.finite_pate for r in usable])
        if layers == "double":
            bias = float(np.mean(pts - finite)) if usable else np.nan
            by_outer: dict[int, list[float]] = {}
            for r in usable:
                by_outer.setdefault(r.outer, []).append(r.points[est])
            sds = [np.std(v, ddof=1) for v in by_outer.values() if len(v) >= 2]
            mc_sd = float(np.mean(sds)) if sds else np.nan
        else:
            bias = float(np.mean(pts - params.true_pate)) if usable else np.nan
            mc_sd = float(np.std(pts, ddof=1)) if len(usable) >= 2 else np.nan
        for method in cfg.methods_for(estimator):
            key = (est, method.value)
            held = [r for r in usable if key in r.ses]
            if held:
                ses = np.array([r.ses[key] for r in held])
                p_held = np.array([r.points[est] for r in held])
                f_held = np.array([r.finite_pate for r in held])
                ave_se = float(np.mean(ses))
                z_half = confidence_interval(0.0, 1.0, cfg.level)[1]
                spans = z_half * ses
                finite_cov = float(np.mean(np.abs(p_held - f_held) <= spans))
                infinite_cov = float(np.mean(np.abs(p_held - params.true_pate) <= spans))
            else:
                ave_se = finite_cov = infinite_cov = np.nan
            rows.append(SimRow(
                estimator=est, variance_method=method.value, bias=bias, mc_sd=mc_sd,
                ave_se=ave_se, finite_coverage=finite_cov, infinite_coverage=infinite_cov,
                n_points=len(usable), n_se=len(held),
            ))

    return SimulationReport(
        params=params, layers=layers, reps_requested=reps_requested,
        reps_completed=len(completed), skipped=skipped,
        mean_delta_p=float(np.mean([r.delta_p for r in completed])) if completed else np.nan,
        mean_n_trial=float(np.mean([r.n_trial for r in completed])) if completed else np.nan,
        level=cfg.level, seed=seed, rows=tuple(rows),
    )


def run_single_layer(params: ScenarioParams, reps: int, seed: int,
                     cfg: Optional[MonteCarloConfig] = None) -> SimulationReport:
    """Single-layer Monte Carlo: every replicate redraws the whole sample.

    Bias and the infinite coverage target the scenario's true effect;
    finite coverage targets each replicate's realized-population effect.
    Degenerate or failed replicates are skipped and counted.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications")
    cfg = cfg or MonteCarloConfig()
    cutoff = reps if cfg.bootstrap_subsample is None else min(cfg.bootstrap_subsample, reps)
    if not cfg.bootstrap_schemes():
        cutoff = 0
    fn = partial(_single_replicate, params=params, seed=seed, cfg=cfg, boot_cutoff=cutoff)
    results = _map_indexed(fn, reps, cfg.workers)
    return _summarize(results, params, "single", cfg, reps, seed)


def run_double_layer(params: ScenarioParams, outer_reps: int, seed: int,
                     inner_reps: int = 10,
                     cfg: Optional[MonteCarloConfig] = None) -> SimulationReport:
    """Double-layer Monte Carlo: fixed populations, redrawn trials.

    Bias is measured against each outer population's finite effect; the
    MC SD is the mean over outer populations of the inner-replicate SD.
    The bootstrap subsample cutoff applies to outer indices.
    """
    if outer_reps < 1:
        raise ValueError("need at least 1 outer replication")
    if inner_reps < 2:
        raise ValueError("need at least 2 inner replications")
    cfg = cfg or MonteCarloConfig()
    cutoff = outer_reps if cfg.bootstrap_subsample is None else min(cfg.bootstrap_subsample, outer_reps)
    if not cfg.bootstrap_schemes():
        cutoff = 0
    fn = partial(_double_replicates, params=params, seed=seed, cfg=cfg,
                 inner_reps=inner_reps, boot_cutoff=cutoff)
    nested = _map_indexed(fn, outer_reps, cfg.workers)
    results = [r for group in nested for r in group]
    return _summarize(results, params, "double", cfg, outer_reps * inner_reps, seed)
