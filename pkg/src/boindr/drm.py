"""Two-parameter dose-response model and its posterior over the dose grid.

The model puts ``g(pi(d_j)) = beta0 + exp(beta1) * log(d_j / d*)`` where ``g``
is one of the supported links and ``d*`` a fixed reference dose, so the curve
is non-decreasing in dose for every coefficient pair.  Independent normal
priors sit on beta0 and beta1.  Two posterior engines are provided: a
deterministic tensor-grid quadrature (the default) and an adaptive
random-walk Metropolis sampler used as a stochastic cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import DoseGrid
from .errors import InvalidDesignError, NumericalUnderflowError, TrialStateError
from .links import LINKS, link_inverse

GRID_POINTS = 201
GRID_SPAN = 6.0
MCMC_ITERATIONS = 10_500
MCMC_BURN_IN = 500
MCMC_TARGET_ACCEPTANCE = 0.234
ACCEPTANCE_BAND = (0.05, 0.7)


@dataclass(frozen=True)
class CoefficientPrior:
    """Independent normal priors on the intercept and the log-slope."""

    intercept_mean: float
    intercept_var: float
    logslope_mean: float
    logslope_var: float

    def __post_init__(self) -> None:
        if self.intercept_var <= 0.0 or self.logslope_var <= 0.0:
            raise InvalidDesignError("prior variances must be positive")


@dataclass(frozen=True)
class DoseResponseModel:
    """Link + dose grid + coefficient prior; hashable so engines can be cached."""

    link: str
    grid: DoseGrid
    prior: CoefficientPrior

    def __post_init__(self) -> None:
        if self.link not in LINKS:
            raise InvalidDesignError(f"unknown link: {self.link!r}")

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "doses": list(self.grid.doses),
            "ref_index": self.grid.ref_index,
            "gamma0": self.prior.intercept_mean,
            "var0": self.prior.intercept_var,
            "gamma1": self.prior.logslope_mean,
            "var1": self.prior.logslope_var,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DoseResponseModel":
        return cls(
            link=d["link"],
            grid=DoseGrid(tuple(d["doses"]), d["ref_index"]),
            prior=CoefficientPrior(
                intercept_mean=d["gamma0"],
                intercept_var=d["var0"],
                logslope_mean=d["gamma1"],
                logslope_var=d["var1"],
            ),
        )


def model_prob(beta0, beta1, dose, model: DoseResponseModel):
    """Toxicity probability at ``dose`` for coefficients ``(beta0, beta1)``.

    Vectorized over any broadcastable combination of arguments.
    """
    dose = np.asarray(dose, dtype=float)
    if np.any(dose <= 0.0):
        raise InvalidDesignError("doses must be positive")
    x = np.asarray(beta0, dtype=float) + np.exp(np.asarray(beta1, dtype=float)) * np.log(
        dose / model.grid.ref_dose
    )
    return link_inverse(model.link, x)


def _validate_data(model: DoseResponseModel, data_n, data_m) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(data_n, dtype=float)
    m = np.asarray(data_m, dtype=float)
    if n.shape != (model.grid.n_doses,) or m.shape != n.shape:
        raise TrialStateError("data vectors must match the dose grid length")
    if np.any(m < 0) or np.any(n < 0) or np.any(m > n):
        raise TrialStateError("need 0 <= m_j <= n_j at every dose")
    return n, m


def log_posterior(model: DoseResponseModel, data_n, data_m, beta0, beta1):
    """Unnormalized log posterior; vectorized over coefficient arrays."""
    n, m = _validate_data(model, data_n, data_m)
    b0 = np.asarray(beta0, dtype=float)
    b1 = np.asarray(beta1, dtype=float)
    log_ratio = model.grid.log_ratios()
    x = b0[..., None] + np.exp(b1)[..., None] * log_ratio
    pi = link_inverse(model.link, x)
    pi = np.asarray(pi)
    loglik = np.sum(m * np.log(pi) + (n - m) * np.log1p(-pi), axis=-1)
    p = model.prior
    log_prior = (
        -0.5 * (b0 - p.intercept_mean) ** 2 / p.intercept_var
        - 0.5 * (b1 - p.logslope_mean) ** 2 / p.logslope_var
    )
    out = loglik + log_prior
    return out if np.ndim(out) else float(out)


@dataclass
class PosteriorSummary:
    """Per-dose posterior point estimates plus engine diagnostics."""

    means: np.ndarray
    medians: Optional[np.ndarray]
    diagnostics: dict
    draws: Optional[np.ndarray] = None

    def estimates(self, use_median: bool = False) -> np.ndarray:
        if use_median:
            if self.medians is None:
                raise TrialStateError("medians were not computed by this engine")
            return self.medians
        return self.means


class GridPosteriorEngine:
    """Tensor-grid quadrature over the coefficient prior's +-span*sd box.

    The dose-probability lattice and prior log-weights are precomputed once per
    model, so evaluating a dataset is two matrix-vector products and a
    softmax.  Repeated (n, m) queries are memoized.
    """

    def __init__(self, model: DoseResponseModel, points: int = GRID_POINTS, span: float = GRID_SPAN):
        if points < 2:
            raise InvalidDesignError("grid needs at least 2 points per axis")
        self.model = model
        self.points = points
        self.span = span
        p = model.prior
        s0 = np.sqrt(p.intercept_var)
        s1 = np.sqrt(p.logslope_var)
        b0 = np.linspace(p.intercept_mean - span * s0, p.intercept_mean + span * s0, points)
        b1 = np.linspace(p.logslope_mean - span * s1, p.logslope_mean + span * s1, points)
        bb0, bb1 = np.meshgrid(b0, b1, indexing="ij")
        self._b0 = bb0.ravel()
        self._b1 = bb1.ravel()
        self._log_prior = (
            -0.5 * (self._b0 - p.intercept_mean) ** 2 / p.intercept_var
            - 0.5 * (self._b1 - p.logslope_mean) ** 2 / p.logslope_var
        )
        x = self._b0[:, None] + np.exp(self._b1)[:, None] * model.grid.log_ratios()[None, :]
        self._pi = np.asarray(link_inverse(model.link, x))
        self._log_pi = np.log(self._pi)
        self._log_1mpi = np.log1p(-self._pi)
        self._order: Optional[np.ndarray] = None  # per-dose sort of the lattice, built lazily
        self._cache: dict = {}

    def _weights(self, n: np.ndarray, m: np.ndarray) -> np.ndarray:
        loglik = self._log_pi @ m + self._log_1mpi @ (n - m)
        logw = self._log_prior + loglik
        norm = logsumexp(logw)
        if not np.isfinite(norm):
            raise NumericalUnderflowError("posterior mass underflowed on the grid")
        return np.exp(logw - norm)

    def summarize(self, data_n, data_m, want_median: bool = True) -> PosteriorSummary:
        n, m = _validate_data(self.model, data_n, data_m)
        key = (tuple(n.astype(int)), tuple(m.astype(int)), want_median)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        w = self._weights(n, m)
        means = w @ self._pi
        medians = None
        if want_median:
            if self._order is None:
                self._order = np.argsort(self._pi, axis=0)
            medians = np.empty_like(means)
            for j in range(self._pi.shape[1]):
                order = self._order[:, j]
                cum = np.cumsum(w[order])
                pos = int(np.searchsorted(cum, 0.5))
                medians[j] = self._pi[order[min(pos, order.size - 1)], j]
        summary = PosteriorSummary(
            means=means,
            medians=medians,
            diagnostics={
                "engine": "grid",
                "points": self.points,
                "span": self.span,
            },
        )
        if len(self._cache) < 100_000:
            self._cache[key] = summary
        return summary


@lru_cache(maxsize=32)
def _engine(model: DoseResponseModel, points: int, span: float) -> GridPosteriorEngine:
    return GridPosteriorEngine(model, points, span)


def grid_posterior(
    model: DoseResponseModel,
    data_n,
    data_m,
    points: int = GRID_POINTS,
    span: float = GRID_SPAN,
) -> PosteriorSummary:
    """Grid-quadrature posterior summary (engines are cached per model)."""
    return _engine(model, points, span).summarize(data_n, data_m)


def mcmc_sample(
    model: DoseResponseModel,
    data_n,
    data_m,
    n_iter: int = MCMC_ITERATIONS,
    n_burn: int = MCMC_BURN_IN,
    seed: int = 0,
) -> PosteriorSummary:
    """Adaptive random-walk Metropolis posterior summary.

    The proposal scale adapts toward an acceptance rate of 0.234 during
    burn-in only; afterwards the chain is a fixed-kernel Metropolis sampler.
    Deterministic given ``seed``.  An acceptance rate outside
    ``ACCEPTANCE_BAND`` is flagged in the diagnostics, not raised.
    """
    if n_iter <= n_burn:
        raise InvalidDesignError("n_iter must exceed n_burn")
    n, m = _validate_data(model, data_n, data_m)
    rng = np.random.default_rng(seed)
    p = model.prior
    log_ratio = model.grid.log_ratios()

    def logpost(b0: float, b1: float) -> float:
        x = b0 + np.exp(b1) * log_ratio
        pi = link_inverse(model.link, x)
        ll = float(np.sum(m * np.log(pi) + (n - m) * np.log1p(-pi)))
        lp = (
            -0.5 * (b0 - p.intercept_mean) ** 2 / p.intercept_var
            - 0.5 * (b1 - p.logslope_mean) ** 2 / p.logslope_var
        )
        return ll + lp

    base_sd = np.array([np.sqrt(p.intercept_var), np.sqrt(p.logslope_var)])
    x = np.array([p.intercept_mean, p.logslope_mean])
    lp = logpost(x[0], x[1])
    log_scale = 0.0
    draws = np.empty((n_iter, 2))
    accepted_after_burn = 0
    for t in range(n_iter):
        step = np.exp(log_scale) * base_sd * rng.standard_normal(2)
        cand = x + step
        lp_cand = logpost(cand[0], cand[1])
        log_alpha = lp_cand - lp
        if np.log(rng.random()) < log_alpha:
            x, lp = cand, lp_cand
            accept = 1.0
        else:
            accept = 0.0
        if t < n_burn:
            # Robbins-Monro drift toward the target acceptance rate; frozen afterwards.
            alpha = min(1.0, np.exp(log_alpha))
            log_scale += (alpha - MCMC_TARGET_ACCEPTANCE) / (t + 1) ** 0.6
        else:
            accepted_after_burn += accept
        draws[t] = x

    retained = draws[n_burn:]
    x_lattice = retained[:, 0][:, None] + np.exp(retained[:, 1])[:, None] * log_ratio[None, :]
    pi = np.asarray(link_inverse(model.link, x_lattice))
    means = pi.mean(axis=0)
    medians = np.median(pi, axis=0)
    acc_rate = accepted_after_burn / retained.shape[0]
    diagnostics = {
        "engine": "mcmc",
        "acceptance_rate": float(acc_rate),
        "n_retained": int(retained.shape[0]),
        "proposal_scale": float(np.exp(log_scale)),
        "seed": int(seed),
    }
    if not ACCEPTANCE_BAND[0] <= acc_rate <= ACCEPTANCE_BAND[1]:
        diagnostics["warning"] = (
            f"acceptance rate {acc_rate:.3f} outside "
            f"[{ACCEPTANCE_BAND[0]}, {ACCEPTANCE_BAND[1]}]"
        )
    return PosteriorSummary(means=means, medians=medians, diagnostics=diagnostics, draws=retained)


def select_mtd_drm(
    summary: PosteriorSummary,
    target: float,
    admissible: Sequence[int],
    use_median: bool = False,
) -> Optional[int]:
    """Admissible dose whose posterior estimate is closest to the target.

    ``admissible`` holds 1-based dose levels; exact ties go to the lower dose.
    Returns None when the admissible set is empty.
    """
    doses = list(admissible)
    if not doses:
        return None
    est = summary.estimates(use_median)
    if any(not 1 <= j <= est.size for j in doses):
        raise TrialStateError("admissible dose outside the grid")
    vals = np.abs(est[np.asarray(doses) - 1] - target)
    return doses[int(np.argmin(vals))]
