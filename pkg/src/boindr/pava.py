"""Isotonic MTD selection: posterior moments, weighted pooling, final screen.

Per-dose toxicity is summarized by the pseudo-count posterior point estimate

    y_j = (m_j + 0.05) / (n_j + 0.1)

with variance ``(m_j + 0.05) (n_j - m_j + 0.05) / ((n_j + 0.1)^2 (n_j + 1.1))``.
The pool-adjacent-violators step fits the weighted least-squares isotonic
vector under weights fixed at 1/variance of the raw estimates; the selected
dose minimizes the distance between the (tie-broken) isotonic estimate and the
target DLT probability over the admissible doses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TrialState, admissible_doses
from .errors import TrialStateError

# Tie-break slope: makes the isotonic estimates strictly increasing in dose level.
TIE_EPS = 1e-10


def posterior_point(n_j: int, m_j: int) -> float:
    """Pseudo-count point estimate of the DLT probability at one dose."""
    if not 0 <= m_j <= n_j:
        raise TrialStateError(f"DLT count {m_j} outside 0..{n_j}")
    return (m_j + 0.05) / (n_j + 0.1)


def posterior_var(n_j: int, m_j: int) -> float:
    """Pseudo-count posterior variance; finite and positive even at n_j = 0."""
    if not 0 <= m_j <= n_j:
        raise TrialStateError(f"DLT count {m_j} outside 0..{n_j}")
    denom = (n_j + 0.1) ** 2 * (n_j + 0.1 + 1.0)
    return (m_j + 0.05) * (n_j - m_j + 0.05) / denom


def pava_fit(y: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Weighted least-squares isotonic (non-decreasing) fit of ``y``.

    Weights stay fixed at their input values throughout the pooling; pooled
    entries are replaced by their weighted mean.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.ndim != 1 or y.shape != w.shape:
        raise ValueError("y and weights must be 1-d arrays of equal length")
    if y.size == 0:
        raise ValueError("pava_fit requires at least one element")
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")

    # Stack of blocks as (mean, weight, count); merge while out of order.
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        wsum.append(float(wi))
        count.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wsum.append(wt)
            count.append(c1 + c2)
    out = np.empty_like(y)
    pos = 0
    for m, c in zip(means, count):
        out[pos : pos + c] = m
        pos += c
    return out


@dataclass
class IsotonicFit:
    """Diagnostics for the isotonic selection at one trial state."""

    admissible: list[int]
    raw: np.ndarray
    variances: np.ndarray
    isotonic: np.ndarray
    tie_broken: np.ndarray
    selected: Optional[int]


def isotonic_fit(
    state: TrialState,
    target: float,
    elim_threshold: float = 0.95,
    elim_min_n: int = 3,
) -> IsotonicFit:
    """Full isotonic-selection computation with intermediate vectors exposed."""
    doses = admissible_doses(state, target, elim_threshold, elim_min_n)
    if not doses:
        return IsotonicFit(
            admissible=[],
            raw=np.empty(0),
            variances=np.empty(0),
            isotonic=np.empty(0),
            tie_broken=np.empty(0),
            selected=None,
        )
    raw = np.array([posterior_point(state.n[j - 1], state.m[j - 1]) for j in doses])
    var = np.array([posterior_var(state.n[j - 1], state.m[j - 1]) for j in doses])
    iso = pava_fit(raw, 1.0 / var)
    tie_broken = iso + np.asarray(doses, dtype=float) * TIE_EPS
    pick = int(np.argmin(np.abs(tie_broken - target)))
    return IsotonicFit(
        admissible=doses,
        raw=raw,
        variances=var,
        isotonic=iso,
        tie_broken=tie_broken,
        selected=doses[pick],
    )


def select_mtd_pava(
    state: TrialState,
    target: float,
    elim_threshold: float = 0.95,
    elim_min_n: int = 3,
) -> Optional[int]:
    """Dose level selected by the isotonic rule, or None when nothing is admissible."""
    return isotonic_fit(state, target, elim_threshold, elim_min_n).selected
