"""Trial-membership propensity model, generalization weights, overlap diagnostic.

The probability of being in the trial given covariates is fit by a
Newton-Raphson logistic regression with step-halving on the
log-likelihood. A trial subject is weighted by its inverse membership
odds times the empirical marginal membership odds, which reweights the
trial's covariate distribution toward the target population and makes
the weights sum to the trial size in expectation; population rows get
weight zero. Weights are never trimmed or clamped: a fitted probability
at the boundary is an error because downstream variances divide by it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, logit

from .data_model import CombinedSample
from .errors import (
    DataError,
    DegeneratePSError,
    PSNotConvergedError,
    RankDeficientError,
    SeparationError,
)

SEPARATION_BOUND = 50.0  # beyond this any fitted probability saturates numerically
DEGENERATE_PS_EPS = 1e-12
WEIGHT_SHARE_WARNING = 0.10  # single subject carrying >10% of total weight


@dataclass(frozen=True, eq=False)
class PSModelFit:
    """Logistic coefficients (intercept first) with convergence diagnostics."""

    alpha: np.ndarray
    cov_alpha: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-subject generalization weights aligned to the sample rows.

    ``w`` is zero exactly on population rows; ``ps`` holds the fitted
    membership probabilities for every row.
    """

    w: np.ndarray
    ps: np.ndarray

    @cached_property
    def max_weight_share(self) -> float:
        total = float(self.w.sum())
        return float(self.w.max()) / total if total > 0 else 0.0

    @property
    def concentrated(self) -> bool:
        return self.max_weight_share > WEIGHT_SHARE_WARNING


def ps_design(sample: CombinedSample) -> np.ndarray:
    """Membership-model design matrix: constant column then covariates."""
    return np.column_stack([np.ones(sample.n), sample.x])


def _log_likelihood(eta: np.ndarray, s: np.ndarray) -> float:
    return float(s @ eta - np.logaddexp(0.0, eta).sum())


def fit_ps_logistic(sample: CombinedSample, max_iter: int = 100,
                    tol: float = 1e-8) -> PSModelFit:
    """Maximum-likelihood logistic fit of trial membership on covariates.

    Newton-Raphson with step-halving, started from a zero slope and an
    intercept matching the marginal membership rate. Convergence means
    the score norm is at most ``tol``; hitting ``max_iter`` first returns
    a fit flagged ``converged=False``. A coefficient escaping past
    ``SEPARATION_BOUND`` raises :class:`SeparationError` rather than
    returning a garbage fit.
    """
    design = ps_design(sample)
    n, k = design.shape
    if n < k + 1:
        raise RankDeficientError(f"need at least {k + 1} subjects to fit {k} coefficients")
    s = sample.s.astype(np.float64)
    share = s.mean()
    if share in (0.0, 1.0):
        raise SeparationError("trial indicator is constant; membership model undefined")

    alpha = np.zeros(k)
    alpha[0] = logit(share)
    eta = design @ alpha  # kept current with alpha throughout
    ll_alpha = _log_likelihood(eta, s)
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        e = expit(eta)
        grad = design.T @ (s - e)
        if float(np.sqrt(grad @ grad)) <= tol:
            converged = True
            break
        info = design.T @ (design * (e * (1.0 - e))[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise RankDeficientError("membership design matrix is rank deficient") from None
        if not np.isfinite(ll_alpha):
            raise SeparationError("log-likelihood not finite during iteration")
        slack = 1e-10 * (1.0 + abs(ll_alpha))  # near the optimum gains fall below float resolution
        scale = 1.0
        for _ in range(40):
            candidate = alpha + scale * step
            eta_candidate = design @ candidate
            ll_candidate = _log_likelihood(eta_candidate, s)
            if np.isfinite(ll_candidate) and ll_candidate >= ll_alpha - slack:
                alpha, eta, ll_alpha = candidate, eta_candidate, ll_candidate
                break
            scale *= 0.5
        else:
            break  # stalled line search; report the non-converged fit
        if np.abs(alpha).max() > SEPARATION_BOUND:
            raise SeparationError(
                f"coefficient magnitude exceeded {SEPARATION_BOUND}; data likely separated"
            )

    e = expit(eta)
    grad = design.T @ (s - e)
    info = design.T @ (design * (e * (1.0 - e))[:, None])
    try:
        cov_alpha = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise RankDeficientError("information matrix singular at the fitted coefficients") from None
    return PSModelFit(
        alpha=alpha,
        cov_alpha=cov_alpha,
        converged=converged,
        iterations=iterations,
        final_gradient_norm=float(np.sqrt(grad @ grad)),
    )


def compute_weights(fit: PSModelFit, sample: CombinedSample) -> WeightVector:
    """Generalization weights from a converged membership fit.

    Trial subject i gets ``(1 - e_i) / e_i * p / (1 - p)`` with
    ``p = n_trial / n``; population rows get zero. Fitted probabilities
    within ``DEGENERATE_PS_EPS`` of the boundary raise
    :class:`DegeneratePSError` (positivity failure).
    """
    if not fit.converged:
        raise PSNotConvergedError("weights requested from a non-converged membership fit")
    e = expit(ps_design(sample) @ fit.alpha)
    if (e <= DEGENERATE_PS_EPS).any() or (e >= 1.0 - DEGENERATE_PS_EPS).any():
        raise DegeneratePSError("fitted membership probability at 0 or 1")
    p_hat = sample.n_trial / sample.n
    marginal_odds = p_hat / (1.0 - p_hat)
    trial = sample.trial_mask
    w = np.zeros(sample.n)
    w[trial] = (1.0 - e[trial]) / e[trial] * marginal_odds
    return WeightVector(w=w, ps=e)


def overlap_delta_p(weights: WeightVector, sample: CombinedSample) -> float:
    """Difference of mean fitted membership probability, trial minus population."""
    if sample.n_trial < 1 or sample.n_pop < 1:
        raise DataError("overlap diagnostic needs at least one trial and one population row")
    trial = sample.trial_mask
    return float(weights.ps[trial].mean() - weights.ps[~trial].mean())
