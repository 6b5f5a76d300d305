"""Prior construction for the dose-response model by quantile matching.

The elicitation chain runs in five steps.  Two expert probabilities pin down
minimally informative unimodal Beta distributions at the lowest and highest
dose; their medians anchor an exact two-point solve of the dose-response
curve; interior-dose medians interpolated from that curve define interior
Betas; stacking everybody's quantiles gives the target matrix Q.  The normal
hyperparameters eta = (gamma0, sigma0^2, gamma1, sigma1^2) are then chosen to
minimize the squared distance between Q and the quantiles implied by the
model, estimated with common random numbers so the objective is deterministic
and Nelder-Mead restarts are comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import DoseGrid
from .drm import CoefficientPrior
from .errors import (
    InvalidDesignError,
    OptimizationFailureError,
    UnsupportedFamilyError,
)
from .links import LINKS, link_forward, link_inverse

CRN_SIZE = 10_000
N_RESTARTS = 20
DEFAULT_LEVELS = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class BetaSpec:
    """Beta(a, b) with exactly one shape equal to 1 (closed-form quantiles)."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if self.a <= 0.0 or self.b <= 0.0:
            raise InvalidDesignError("Beta shapes must be positive")


def min_info_beta(p: float, q: float) -> BetaSpec:
    """Minimally informative unimodal Beta with quantile ``q`` at level ``p``.

    ``P{X <= q} = p`` holds exactly for the returned spec.
    """
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise InvalidDesignError("p and q must lie in (0, 1)")
    if q > p:
        return BetaSpec(a=math.log(p) / math.log(q), b=1.0)
    if q < p:
        return BetaSpec(a=1.0, b=math.log(1.0 - p) / math.log(1.0 - q))
    return BetaSpec(a=1.0, b=1.0)


def beta_quantile(spec: BetaSpec, p: float) -> float:
    """Closed-form quantile; only the one-shape-equals-1 family is supported."""
    if not 0.0 < p < 1.0:
        raise InvalidDesignError("quantile level must lie in (0, 1)")
    if spec.b == 1.0:
        return p ** (1.0 / spec.a)
    if spec.a == 1.0:
        return 1.0 - (1.0 - p) ** (1.0 / spec.b)
    raise UnsupportedFamilyError(
        f"Beta({spec.a}, {spec.b}) has no closed-form quantile here"
    )


def beta_median(spec: BetaSpec) -> float:
    return beta_quantile(spec, 0.5)


def beta_from_median(median: float) -> BetaSpec:
    """Minimally informative unimodal Beta with the given median."""
    if not 0.0 < median < 1.0:
        raise InvalidDesignError("median must lie in (0, 1)")
    if median < 0.5:
        return BetaSpec(a=1.0, b=math.log(0.5) / math.log(1.0 - median))
    if median > 0.5:
        return BetaSpec(a=math.log(0.5) / math.log(median), b=1.0)
    return BetaSpec(a=1.0, b=1.0)


def anchor_coefficients(
    mu_low: float, mu_high: float, grid: DoseGrid, link: str
) -> tuple[float, float]:
    """Exact (beta0, beta1) through the endpoint medians.

    Solves g(mu_low) = beta0 + exp(beta1) log(d_1/d*) and the same at d_J.
    Requires ``0 < mu_low < mu_high < 1`` so the slope is positive.
    """
    if not (0.0 < mu_low < mu_high < 1.0):
        raise InvalidDesignError("need 0 < mu_low < mu_high < 1 for a positive slope")
    g_low = link_forward(link, mu_low)
    g_high = link_forward(link, mu_high)
    slope = (g_high - g_low) / math.log(grid.doses[-1] / grid.doses[0])
    beta0 = g_high - slope * math.log(grid.doses[-1] / grid.ref_dose)
    return beta0, math.log(slope)


@dataclass(frozen=True)
class ElicitationInput:
    """Expert inputs: two endpoint probabilities relative to the target.

    ``p1`` is the prior probability that the lowest dose's DLT rate exceeds
    the target; ``pj`` the probability that the highest dose's rate is at or
    below it.
    """

    grid: DoseGrid
    link: str
    target: float = 0.3
    p1: float = 0.05
    pj: float = 0.21
    levels: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        if self.link not in LINKS:
            raise InvalidDesignError(f"unknown link: {self.link!r}")
        if not 0.0 < self.target < 1.0:
            raise InvalidDesignError("target must lie in (0, 1)")
        if not (0.0 < self.p1 < 1.0 and 0.0 < self.pj < 1.0):
            raise InvalidDesignError("p1 and pj must lie in (0, 1)")
        if self.p1 > 0.95:
            raise InvalidDesignError("p1 above 0.95 contradicts the safety constraint")
        if self.pj < 0.05:
            raise InvalidDesignError("pj below 0.05 contradicts the safety constraint")
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if any(not 0.0 < v < 1.0 for v in levels) or any(
            b <= a for a, b in zip(levels, levels[1:])
        ):
            raise InvalidDesignError("levels must be strictly increasing in (0, 1)")


@dataclass(frozen=True)
class QuantileTargets:
    """J x K matrix of target quantiles, rows indexed by dose."""

    levels: tuple[float, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[1] != len(self.levels):
            raise InvalidDesignError("values must be a J x len(levels) matrix")
        if np.any(values <= 0.0) or np.any(values >= 1.0):
            raise InvalidDesignError("quantile values must lie in (0, 1)")
        if np.any(np.diff(values, axis=1) < 0.0):
            raise InvalidDesignError("rows must be nondecreasing across levels")


def elicitation_report(inp: ElicitationInput) -> dict:
    """All intermediate elicitation quantities, keyed by step."""
    # Step 1: endpoint Betas from the two expert probabilities.
    spec_low = min_info_beta(1.0 - inp.p1, inp.target)
    spec_high = min_info_beta(inp.pj, inp.target)
    # Step 2: endpoint medians.
    mu_low = beta_median(spec_low)
    mu_high = beta_median(spec_high)
    # Step 3: anchor coefficients through the medians.
    beta0, beta1 = anchor_coefficients(mu_low, mu_high, inp.grid, inp.link)
    # Step 4: per-dose medians off the anchored curve, then one Beta per dose.
    slope = math.exp(beta1)
    medians = [
        float(link_inverse(inp.link, beta0 + slope * lr))
        for lr in inp.grid.log_ratios()
    ]
    specs = [beta_from_median(mu) for mu in medians]
    return {
        "endpoint_specs": (spec_low, spec_high),
        "anchors": (beta0, beta1),
        "medians": medians,
        "specs": specs,
    }


def build_targets(inp: ElicitationInput) -> QuantileTargets:
    """Target quantile matrix Q from the five-step deterministic chain."""
    specs = elicitation_report(inp)["specs"]
    values = np.array(
        [[beta_quantile(spec, level) for level in inp.levels] for spec in specs]
    )
    return QuantileTargets(levels=inp.levels, values=values)


def implied_quantiles(
    prior: CoefficientPrior,
    grid: DoseGrid,
    link: str,
    levels: Sequence[float],
    crn: np.ndarray,
) -> np.ndarray:
    """Empirical model quantiles under ``prior`` using fixed normal draws.

    ``crn`` holds standard-normal pairs, one row per Monte-Carlo sample; the
    same array must be reused across calls that will be compared.
    """
    crn = np.asarray(crn, dtype=float)
    if crn.ndim != 2 or crn.shape[1] != 2:
        raise InvalidDesignError("crn must be an (S, 2) array of normal pairs")
    b0 = prior.intercept_mean + math.sqrt(prior.intercept_var) * crn[:, 0]
    b1 = prior.logslope_mean + math.sqrt(prior.logslope_var) * crn[:, 1]
    # cap keeps exp finite when the optimizer probes extreme slopes; without
    # it exp(b1)*0 at the reference dose turns into NaN instead of b0
    slope = np.exp(np.minimum(b1, 700.0))
    x = b0[:, None] + slope[:, None] * grid.log_ratios()[None, :]
    pi = np.asarray(link_inverse(link, x))
    return np.quantile(pi, list(levels), axis=0).T


def quantile_loss(targets: QuantileTargets, implied: np.ndarray) -> float:
    """Squared-error distance between the target and implied matrices."""
    implied = np.asarray(implied, dtype=float)
    if implied.shape != targets.values.shape:
        raise InvalidDesignError("implied matrix shape disagrees with targets")
    return float(np.sum((targets.values - implied) ** 2))


@dataclass(frozen=True)
class SearchConstraints:
    """Box constraints for the hyperparameter search."""

    var_floor: float = 0.5
    mean_bound: float = 10.0

    def __post_init__(self) -> None:
        if self.var_floor <= 0.0 or self.mean_bound <= 0.0:
            raise InvalidDesignError("constraints must be positive")


@dataclass
class ElicitedPrior:
    """Search result: the prior, its loss, and the matched matrices."""

    prior: CoefficientPrior
    loss: float
    targets: QuantileTargets
    achieved: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _clipped_prior(x: np.ndarray, constraints: SearchConstraints) -> CoefficientPrior:
    bound = constraints.mean_bound
    return CoefficientPrior(
        intercept_mean=float(np.clip(x[0], -bound, bound)),
        intercept_var=float(max(constraints.var_floor, math.exp(min(x[2], 50.0)))),
        logslope_mean=float(np.clip(x[1], -bound, bound)),
        logslope_var=float(max(constraints.var_floor, math.exp(min(x[3], 50.0)))),
    )


def optimize_prior(
    targets: QuantileTargets,
    grid: DoseGrid,
    link: str,
    constraints: SearchConstraints = SearchConstraints(),
    crn: Optional[np.ndarray] = None,
    crn_size: int = CRN_SIZE,
    seed: int = 0,
    n_restarts: int = N_RESTARTS,
) -> ElicitedPrior:
    """Quantile-matching search for the normal hyperparameters.

    Nelder-Mead over (gamma0, gamma1, log sigma0^2, log sigma1^2) with one
    common-random-numbers sample shared by every objective evaluation, so the
    result is deterministic given (targets, seed).  Restarts perturb the
    anchor-based initial point; the best restart is polished once more.
    """
    if n_restarts < 1:
        raise InvalidDesignError("need at least one restart")
    rng = np.random.default_rng(seed)
    if crn is None:
        crn = rng.standard_normal((crn_size, 2))
    crn = np.asarray(crn, dtype=float)
    if crn.shape[0] < 10_000:
        raise InvalidDesignError("crn sample must hold at least 10,000 pairs")

    levels = targets.levels

    def objective(x: np.ndarray) -> float:
        prior = _clipped_prior(x, constraints)
        return quantile_loss(
            targets, implied_quantiles(prior, grid, link, levels, crn)
        )

    # Anchor initialization: exact curve through the endpoint target medians
    # when the median level is present, otherwise a flat start.
    x0 = np.zeros(4)
    if 0.5 in levels:
        k = levels.index(0.5)
        mu_low = float(targets.values[0, k])
        mu_high = float(targets.values[-1, k])
        if 0.0 < mu_low < mu_high < 1.0:
            b0, b1 = anchor_coefficients(mu_low, mu_high, grid, link)
            x0 = np.array([b0, b1, 0.0, 0.0])

    initial_loss = objective(x0)
    if not np.isfinite(initial_loss):
        raise OptimizationFailureError("objective not finite at the initial point")

    best_x: Optional[np.ndarray] = None
    best_loss = np.inf
    restart_losses = []
    for r in range(n_restarts):
        start = x0 if r == 0 else x0 + rng.normal(scale=1.5, size=4)
        res = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"maxfev": 600, "xatol": 1e-4, "fatol": 1e-9},
        )
        restart_losses.append(float(res.fun))
        if res.fun < best_loss:
            best_loss = float(res.fun)
            best_x = np.asarray(res.x)

    # Polish the winner with tighter tolerances.
    res = minimize(
        objective,
        best_x,
        method="Nelder-Mead",
        options={"maxfev": 2000, "xatol": 1e-7, "fatol": 1e-12},
    )
    if res.fun < best_loss:
        best_loss = float(res.fun)
        best_x = np.asarray(res.x)

    if not np.isfinite(best_loss) or best_loss > initial_loss:
        raise OptimizationFailureError(
            f"no restart improved on the initial loss {initial_loss:.6g}"
        )

    prior = _clipped_prior(best_x, constraints)
    achieved = implied_quantiles(prior, grid, link, levels, crn)
    return ElicitedPrior(
        prior=prior,
        loss=best_loss,
        targets=targets,
        achieved=achieved,
        diagnostics={
            "initial_loss": float(initial_loss),
            "restart_losses": restart_losses,
            "n_restarts": n_restarts,
            "crn_size": int(crn.shape[0]),
            "seed": int(seed),
        },
    )


def elicit_prior(
    inp: ElicitationInput,
    constraints: SearchConstraints = SearchConstraints(),
    seed: int = 0,
    n_restarts: int = N_RESTARTS,
    crn_size: int = CRN_SIZE,
) -> ElicitedPrior:
    """End-to-end elicitation: build the target matrix, then fit the prior."""
    targets = build_targets(inp)
    return optimize_prior(
        targets,
        inp.grid,
        inp.link,
        constraints=constraints,
        crn_size=crn_size,
        seed=seed,
        n_restarts=n_restarts,
    )
