"""Interval-design trial engine: boundaries, decisions, elimination, conduct.

The escalation/de-escalation boundaries are the optimal-interval thresholds

    lambda_e = log((1 - p_saf) / (1 - target)) /
               log(target * (1 - p_saf) / (p_saf * (1 - target)))
    lambda_d = log((1 - target) / (1 - p_tox)) /
               log(p_tox * (1 - target) / (target * (1 - p_tox)))

where ``target`` is the target DLT probability, ``p_saf`` the highest DLT
probability still considered subtherapeutic and ``p_tox`` the lowest considered
overly toxic.  A dose whose observed DLT rate falls at or below ``lambda_e``
escalates, at or above ``lambda_d`` de-escalates, and is retained in between.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import InvalidDesignError, ScenarioError, TrialStateError

SCHEMA_VERSION = 1


def compute_boundaries(target: float, p_saf: float, p_tox: float) -> tuple[float, float]:
    """Return ``(lambda_e, lambda_d)`` for the given probability triple.

    Requires ``0 < p_saf < target < p_tox < 1``.
    """
    if not (0.0 < p_saf < target < p_tox < 1.0):
        raise InvalidDesignError(
            f"need 0 < p_saf < target < p_tox < 1, got "
            f"({p_saf}, {target}, {p_tox})"
        )
    lambda_e = math.log((1.0 - p_saf) / (1.0 - target)) / math.log(
        target * (1.0 - p_saf) / (p_saf * (1.0 - target))
    )
    lambda_d = math.log((1.0 - target) / (1.0 - p_tox)) / math.log(
        p_tox * (1.0 - target) / (target * (1.0 - p_tox))
    )
    return lambda_e, lambda_d


@dataclass(frozen=True)
class DoseGrid:
    """Ordered dose levels plus the index of the reference dose d*.

    ``ref_index`` is 1-based, matching the dose-level convention used
    throughout (dose 1 is the lowest).
    """

    doses: tuple[float, ...]
    ref_index: int

    def __post_init__(self) -> None:
        doses = tuple(float(d) for d in self.doses)
        object.__setattr__(self, "doses", doses)
        if len(doses) < 2:
            raise InvalidDesignError("need at least two dose levels")
        if any(d <= 0.0 for d in doses):
            raise InvalidDesignError("doses must be positive")
        if any(b <= a for a, b in zip(doses, doses[1:])):
            raise InvalidDesignError("doses must be strictly increasing")
        if not 1 <= self.ref_index <= len(doses):
            raise InvalidDesignError(
                f"ref_index {self.ref_index} outside 1..{len(doses)}"
            )

    @property
    def n_doses(self) -> int:
        return len(self.doses)

    @property
    def ref_dose(self) -> float:
        return self.doses[self.ref_index - 1]

    def log_ratios(self) -> np.ndarray:
        """log(d_j / d*) for every dose level."""
        return np.log(np.asarray(self.doses) / self.ref_dose)


@dataclass(frozen=True)
class TrialDesign:
    """Interval-design parameters; boundaries are derived, not stored inputs."""

    target: float
    p_saf: float
    p_tox: float
    cohort_size: int = 3
    n_cohorts: int = 12
    elim_threshold: float = 0.95
    elim_min_n: int = 3
    lambda_e: float = field(init=False)
    lambda_d: float = field(init=False)

    def __post_init__(self) -> None:
        if self.cohort_size < 1 or self.n_cohorts < 1:
            raise InvalidDesignError("cohort_size and n_cohorts must be >= 1")
        if not 0.0 < self.elim_threshold < 1.0:
            raise InvalidDesignError("elim_threshold must lie in (0, 1)")
        le, ld = compute_boundaries(self.target, self.p_saf, self.p_tox)
        object.__setattr__(self, "lambda_e", le)
        object.__setattr__(self, "lambda_d", ld)

    @classmethod
    def standard(cls, target: float, **kwargs) -> "TrialDesign":
        """Default interval: p_saf = 0.6 * target, p_tox = 1.4 * target."""
        return cls(target=target, p_saf=0.6 * target, p_tox=1.4 * target, **kwargs)

    @property
    def max_patients(self) -> int:
        return self.cohort_size * self.n_cohorts

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "phi": self.target,
            "phi1": self.p_saf,
            "phi2": self.p_tox,
            "cohort_size": self.cohort_size,
            "n_cohorts": self.n_cohorts,
            "elim_threshold": self.elim_threshold,
            "elim_min_n": self.elim_min_n,
            "lambda_e": self.lambda_e,
            "lambda_d": self.lambda_d,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialDesign":
        return cls(
            target=d["phi"],
            p_saf=d["phi1"],
            p_tox=d["phi2"],
            cohort_size=d.get("cohort_size", 3),
            n_cohorts=d.get("n_cohorts", 12),
            elim_threshold=d.get("elim_threshold", 0.95),
            elim_min_n=d.get("elim_min_n", 3),
        )


class Decision(str, Enum):
    ESCALATE = "escalate"
    RETAIN = "retain"
    DEESCALATE = "deescalate"


class TrialStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    STOPPED_ALL_ELIMINATED = "stopped_all_eliminated"


def decide(n_j: int, m_j: int, design: TrialDesign) -> Decision:
    """Interval decision for ``m_j`` DLTs out of ``n_j`` patients at one dose."""
    if n_j < 1:
        raise TrialStateError("decision requires at least one treated patient")
    if not 0 <= m_j <= n_j:
        raise TrialStateError(f"DLT count {m_j} outside 0..{n_j}")
    rate = m_j / n_j
    if rate <= design.lambda_e:
        return Decision.ESCALATE
    if rate >= design.lambda_d:
        return Decision.DEESCALATE
    return Decision.RETAIN


def decision_table(design: TrialDesign, max_n: Optional[int] = None) -> list[tuple[int, int, int]]:
    """Rows ``(n, L, U)``: escalate when DLTs <= L, de-escalate when DLTs >= U.

    ``L = floor(n * lambda_e)`` and ``U = ceil(n * lambda_d)``; U may exceed n
    for tiny n, in which case de-escalation is unreachable at that n.
    """
    if max_n is None:
        max_n = design.max_patients
    if max_n < 1:
        raise InvalidDesignError("max_n must be >= 1")
    rows = []
    for n in range(1, max_n + 1):
        low = math.floor(n * design.lambda_e)
        high = math.ceil(n * design.lambda_d)
        rows.append((n, low, high))
    return rows


def check_elimination(
    n_j: int,
    m_j: int,
    target: float,
    threshold: float = 0.95,
    min_n: int = 3,
) -> bool:
    """True when Pr{p > target | data} > threshold under a Beta(1, 1) prior.

    The check is only armed once ``n_j >= min_n``.
    """
    if not 0 <= m_j <= n_j:
        raise TrialStateError(f"DLT count {m_j} outside 0..{n_j}")
    if n_j < min_n:
        return False
    tail = float(beta_dist.sf(target, 1 + m_j, 1 + n_j - m_j))
    return tail > threshold


@dataclass
class CohortEvent:
    """One enrolled cohort: where it was treated, what happened, what was decided."""

    cohort_index: int
    dose: int
    n: int
    dlt: int
    decision: str
    eliminations: list[int]

    def to_dict(self) -> dict:
        return {
            "cohort_index": self.cohort_index,
            "dose": self.dose,
            "n": self.n,
            "dlt": self.dlt,
            "decision": self.decision,
            "eliminations": list(self.eliminations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CohortEvent":
        return cls(
            cohort_index=d["cohort_index"],
            dose=d["dose"],
            n=d["n"],
            dlt=d["dlt"],
            decision=d["decision"],
            eliminations=list(d["eliminations"]),
        )


@dataclass
class TrialState:
    """Mutable per-trial accumulator; all dose indices are 1-based."""

    n: list[int]
    m: list[int]
    current_dose: int
    eliminated: list[bool]
    status: TrialStatus
    events: list[CohortEvent] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_doses: int, start_dose: int = 1) -> "TrialState":
        if n_doses < 2:
            raise InvalidDesignError("need at least two dose levels")
        if not 1 <= start_dose <= n_doses:
            raise InvalidDesignError("start_dose outside the dose grid")
        return cls(
            n=[0] * n_doses,
            m=[0] * n_doses,
            current_dose=start_dose,
            eliminated=[False] * n_doses,
            status=TrialStatus.RUNNING,
        )

    @property
    def n_doses(self) -> int:
        return len(self.n)

    @property
    def n_enrolled(self) -> int:
        return sum(self.n)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_doses": self.n_doses,
            "n": list(self.n),
            "m": list(self.m),
            "current_dose": self.current_dose,
            "eliminated": list(self.eliminated),
            "status": self.status.value,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialState":
        state = cls(
            n=list(d["n"]),
            m=list(d["m"]),
            current_dose=d["current_dose"],
            eliminated=list(d["eliminated"]),
            status=TrialStatus(d["status"]),
            events=[CohortEvent.from_dict(e) for e in d.get("events", [])],
        )
        if len(state.m) != state.n_doses or len(state.eliminated) != state.n_doses:
            raise TrialStateError("n, m and eliminated must have equal length")
        if any(mm > nn for nn, mm in zip(state.n, state.m)):
            raise TrialStateError("DLT count exceeds patient count at some dose")
        return state


def apply_cohort(state: TrialState, dlt_count: int, design: TrialDesign) -> Decision:
    """Record one cohort at the current dose, then move the dose pointer.

    Order of operations: accumulate data, run the elimination check at the
    treated dose (propagating upward on a trip), take the interval decision,
    then move subject to the safety overrides (never move onto an eliminated
    dose, stop the trial when dose 1 is eliminated, stay put at the edges).
    """
    if state.status is not TrialStatus.RUNNING:
        raise TrialStateError(f"trial is {state.status.value}; cannot enroll")
    if not 0 <= dlt_count <= design.cohort_size:
        raise TrialStateError(
            f"dlt_count {dlt_count} outside 0..{design.cohort_size}"
        )
    j = state.current_dose
    idx = j - 1
    if state.eliminated[idx]:
        raise TrialStateError(f"current dose {j} is eliminated")
    state.n[idx] += design.cohort_size
    state.m[idx] += dlt_count

    newly_eliminated: list[int] = []
    if check_elimination(
        state.n[idx], state.m[idx], design.target, design.elim_threshold, design.elim_min_n
    ):
        for k in range(idx, state.n_doses):
            if not state.eliminated[k]:
                state.eliminated[k] = True
                newly_eliminated.append(k + 1)

    decision = decide(state.n[idx], state.m[idx], design)

    if state.eliminated[idx]:
        # Safety override: the treated dose is gone, so the only legal move is down.
        decision = Decision.DEESCALATE
        if j == 1:
            state.status = TrialStatus.STOPPED_ALL_ELIMINATED
        else:
            state.current_dose = j - 1
    elif decision is Decision.ESCALATE:
        nxt = j + 1
        if nxt <= state.n_doses and not state.eliminated[nxt - 1]:
            state.current_dose = nxt
    elif decision is Decision.DEESCALATE:
        if j > 1:
            state.current_dose = j - 1

    cohort_index = len(state.events) + 1
    if state.status is TrialStatus.RUNNING and cohort_index >= design.n_cohorts:
        state.status = TrialStatus.COMPLETED

    state.events.append(
        CohortEvent(
            cohort_index=cohort_index,
            dose=j,
            n=design.cohort_size,
            dlt=dlt_count,
            decision=decision.value,
            eliminations=newly_eliminated,
        )
    )
    return decision


def replay_events(
    design: TrialDesign, n_doses: int, events: Sequence[CohortEvent], start_dose: int = 1
) -> TrialState:
    """Rebuild a trial state by folding the event log through ``apply_cohort``."""
    state = TrialState.fresh(n_doses, start_dose)
    for event in events:
        if event.dose != state.current_dose:
            raise TrialStateError(
                f"event {event.cohort_index} treats dose {event.dose} "
                f"but the replayed state is at dose {state.current_dose}"
            )
        if event.n != design.cohort_size:
            raise TrialStateError("event cohort size disagrees with the design")
        apply_cohort(state, event.dlt, design)
    return state


def admissible_doses(
    state: TrialState,
    target: float,
    threshold: float = 0.95,
    min_n: int = 3,
) -> list[int]:
    """Dose levels eligible for selection, in increasing order.

    A dose is admissible when it has data, is not flagged eliminated, and no
    dose at or below it trips the posterior safety screen; a trip makes that
    dose and everything above it inadmissible.
    """
    out: list[int] = []
    for j in range(1, state.n_doses + 1):
        idx = j - 1
        if state.n[idx] <= 0:
            continue
        if state.eliminated[idx]:
            break
        if check_elimination(state.n[idx], state.m[idx], target, threshold, min_n):
            break
        out.append(j)
    return out


def visited_doses(state: TrialState) -> list[int]:
    """Dose levels with at least one treated patient, in increasing order.

    Selection candidates for the regression estimator: doses never given to
    anyone are out, but a flagged dose keeps its data and stays scoreable.
    The stricter posterior screen in admissible_doses applies to the
    isotonic estimator only.
    """
    return [j for j in range(1, state.n_doses + 1) if state.n[j - 1] > 0]


# An estimator maps a finished trial (plus its own randomness) to a dose level.
Estimator = Callable[[TrialState, np.random.Generator], Optional[int]]


@dataclass
class TrialRecord:
    """Outcome of one simulated trial."""

    state: TrialState
    selected: Optional[int]


def validate_true_probs(true_probs: Sequence[float]) -> tuple[float, ...]:
    probs = tuple(float(p) for p in true_probs)
    if len(probs) < 2:
        raise ScenarioError("need at least two dose levels")
    if any(not 0.0 <= p <= 1.0 for p in probs):
        raise ScenarioError("true DLT probabilities must lie in [0, 1]")
    if any(b < a for a, b in zip(probs, probs[1:])):
        raise ScenarioError("true DLT probabilities must be non-decreasing")
    return probs


def run_trial(
    design: TrialDesign,
    true_probs: Sequence[float],
    estimator: Optional[Estimator],
    rng: np.random.Generator,
    start_dose: int = 1,
) -> TrialRecord:
    """Simulate one trial: binomial cohort outcomes, conduct loop, then selection.

    ``estimator`` is invoked only when the trial completes; a trial stopped by
    eliminating dose 1 selects nothing.  Passing ``estimator=None`` skips
    selection (the caller applies estimators to ``record.state`` itself).
    """
    probs = validate_true_probs(true_probs)
    state = TrialState.fresh(len(probs), start_dose)
    while state.status is TrialStatus.RUNNING:
        p = probs[state.current_dose - 1]
        dlt = int(rng.binomial(design.cohort_size, p))
        apply_cohort(state, dlt, design)
    selected: Optional[int] = None
    if state.status is TrialStatus.COMPLETED and estimator is not None:
        selected = estimator(state, rng)
    return TrialRecord(state=state, selected=selected)
