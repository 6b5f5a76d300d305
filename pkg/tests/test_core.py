"""Design mathematics and trial state machine tests."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boindr import (
    Decision,
    DoseGrid,
    TrialDesign,
    TrialState,
    TrialStatus,
    admissible_doses,
    apply_cohort,
    check_elimination,
    compute_boundaries,
    decide,
    decision_table,
    replay_events,
    run_trial,
    visited_doses,
)
from boindr.core import CohortEvent, validate_true_probs
from boindr.errors import InvalidDesignError, ScenarioError, TrialStateError
from boindr.pava import select_mtd_pava

# Published rule table for phi=0.3, cohorts of 3 up to 36 patients:
# n -> (escalate if DLTs <= L, de-escalate if DLTs >= U).
RULE_TABLE_030 = {3: (0, 2), 6: (1, 3), 9: (2, 4), 12: (2, 5), 33: (7, 12), 36: (8, 13)}


def boundary_oracle(phi, phi1, phi2):
    # independent hand transcription of the interval-boundary formulas
    lam_e = math.log((1 - phi1) / (1 - phi)) / math.log(
        phi * (1 - phi1) / (phi1 * (1 - phi))
    )
    lam_d = math.log((1 - phi) / (1 - phi2)) / math.log(
        phi2 * (1 - phi) / (phi * (1 - phi2))
    )
    return lam_e, lam_d


class TestBoundaries:
    def test_reference_design_four_decimals(self):
        le, ld = compute_boundaries(0.3, 0.18, 0.42)
        assert round(le, 4) == 0.2365
        assert round(ld, 4) == 0.3585

    def test_phi_02_values(self):
        le, ld = compute_boundaries(0.2, 0.12, 0.28)
        assert round(le, 4) == 0.1572
        assert round(ld, 4) == 0.2385

    def test_matches_oracle_on_grid(self):
        for phi in (0.1, 0.2, 0.25, 0.3, 0.35, 0.4):
            got = compute_boundaries(phi, 0.6 * phi, 1.4 * phi)
            want = boundary_oracle(phi, 0.6 * phi, 1.4 * phi)
            assert got == pytest.approx(want, abs=1e-12)

    def test_ordering_invariant(self):
        for phi in np.linspace(0.05, 0.45, 9):
            le, ld = compute_boundaries(phi, 0.6 * phi, 1.4 * phi)
            assert le < phi < ld

    @pytest.mark.parametrize(
        "bad", [(0.3, 0.3, 0.42), (0.3, 0.18, 0.3), (0.3, 0.42, 0.18), (0.0, 0.1, 0.2)]
    )
    def test_ordering_violation_raises(self, bad):
        with pytest.raises(InvalidDesignError):
            compute_boundaries(*bad)


class TestDecisionTable:
    def test_published_cells(self, design):
        table = {n: (lo, hi) for n, lo, hi in decision_table(design, 36)}
        for n, expected in RULE_TABLE_030.items():
            assert table[n] == expected

    def test_all_cohort_multiples_match_floor_ceil(self, design):
        lam_e, lam_d = boundary_oracle(0.3, 0.18, 0.42)
        for n, lo, hi in decision_table(design, 36):
            assert lo == math.floor(n * lam_e)
            assert hi == math.ceil(n * lam_d)

    def test_consistent_with_decide(self, design):
        for n, lo, hi in decision_table(design, 36):
            for m in range(0, n + 1):
                want = (
                    Decision.ESCALATE
                    if m <= lo
                    else Decision.DEESCALATE
                    if m >= hi
                    else Decision.RETAIN
                )
                assert decide(n, m, design) is want

    def test_bad_max_n(self, design):
        with pytest.raises(InvalidDesignError):
            decision_table(design, 0)


class TestDecide:
    def test_cohort_of_three(self, design):
        assert decide(3, 0, design) is Decision.ESCALATE
        assert decide(3, 1, design) is Decision.RETAIN
        assert decide(3, 2, design) is Decision.DEESCALATE
        assert decide(3, 3, design) is Decision.DEESCALATE

    def test_no_data_errors(self, design):
        with pytest.raises(TrialStateError):
            decide(0, 0, design)
        with pytest.raises(TrialStateError):
            decide(3, 4, design)


class TestElimination:
    def test_three_of_three(self):
        # Pr{p > 0.3 | Beta(4, 1)} = 1 - 0.3^4 = 0.9919 > 0.95
        assert check_elimination(3, 3, 0.3) is True

    def test_two_of_three(self):
        # Pr{p > 0.3 | Beta(3, 2)} = 1 - (4*0.3^3 - 3*0.3^4) = 0.9163 < 0.95
        assert check_elimination(3, 2, 0.3) is False

    def test_min_n_guard(self):
        assert check_elimination(2, 2, 0.3) is False

    def test_closed_form_oracle(self):
        # integer-shape Beta tails via the binomial-sum identity:
        # Pr{Beta(a, b) > x} = sum_{k=0}^{a-1} C(a+b-1, k) x^k (1-x)^(a+b-1-k)
        def beta_tail(a, b, x):
            n = a + b - 1
            return sum(
                math.comb(n, k) * x**k * (1 - x) ** (n - k) for k in range(a)
            )

        for n_j in range(3, 13):
            for m_j in range(0, n_j + 1):
                tail = beta_tail(1 + m_j, 1 + n_j - m_j, 0.3)
                assert check_elimination(n_j, m_j, 0.3) is (tail > 0.95)


class TestDesignObject:
    def test_standard_interval(self):
        d = TrialDesign.standard(0.3)
        assert d.p_saf == pytest.approx(0.18)
        assert d.p_tox == pytest.approx(0.42)
        assert d.max_patients == 36

    def test_serialization_round_trip(self, design):
        clone = TrialDesign.from_dict(design.to_dict())
        assert clone == design
        assert clone.lambda_e == design.lambda_e

    def test_grid_validation(self):
        with pytest.raises(InvalidDesignError):
            DoseGrid(doses=(10.0, 10.0, 30.0), ref_index=1)
        with pytest.raises(InvalidDesignError):
            DoseGrid(doses=(10.0, 20.0), ref_index=3)
        with pytest.raises(InvalidDesignError):
            DoseGrid(doses=(-1.0, 20.0), ref_index=1)

    def test_grid_log_ratios(self, grid):
        assert grid.ref_dose == 30.0
        assert grid.log_ratios() == pytest.approx(
            np.log(np.array(grid.doses) / 30.0), abs=0
        )


class TestConductLoop:
    def test_escalation_from_start(self, design):
        state = TrialState.fresh(6)
        decision = apply_cohort(state, 0, design)
        assert decision is Decision.ESCALATE
        assert state.current_dose == 2
        assert state.n == [3, 0, 0, 0, 0, 0]
        assert state.status is TrialStatus.RUNNING

    def test_stay_at_top(self, design):
        state = TrialState.fresh(2)
        apply_cohort(state, 0, design)
        assert state.current_dose == 2
        apply_cohort(state, 0, design)
        assert state.current_dose == 2

    def test_deescalate_stays_at_bottom(self, design):
        state = TrialState.fresh(3)
        apply_cohort(state, 2, design)
        assert state.current_dose == 1
        assert state.status is TrialStatus.RUNNING

    def test_lowest_dose_elimination_stops_trial(self, design):
        state = TrialState.fresh(6)
        decision = apply_cohort(state, 3, design)
        assert decision is Decision.DEESCALATE
        assert state.status is TrialStatus.STOPPED_ALL_ELIMINATED
        assert state.eliminated == [True] * 6

    def test_elimination_is_upward_closed(self, design):
        state = TrialState.fresh(4)
        apply_cohort(state, 0, design)  # dose 1 -> 2
        apply_cohort(state, 3, design)  # 3/3 at dose 2: eliminate 2..4
        assert state.eliminated == [False, True, True, True]
        assert state.current_dose == 1
        assert state.status is TrialStatus.RUNNING

    def test_escalation_blocked_by_eliminated_dose(self, design):
        state = TrialState.fresh(3)
        apply_cohort(state, 0, design)  # -> dose 2
        apply_cohort(state, 3, design)  # eliminate 2..3, back to dose 1
        apply_cohort(state, 0, design)  # escalate decision, but dose 2 is gone
        assert state.current_dose == 1
        assert state.eliminated == [False, True, True]

    def test_completion_after_all_cohorts(self, design):
        state = TrialState.fresh(6)
        for _ in range(12):
            apply_cohort(state, 1, design)
        assert state.status is TrialStatus.COMPLETED
        assert state.n == [36, 0, 0, 0, 0, 0]
        with pytest.raises(TrialStateError):
            apply_cohort(state, 0, design)

    def test_dlt_count_bounds(self, design):
        state = TrialState.fresh(6)
        with pytest.raises(TrialStateError):
            apply_cohort(state, 4, design)

    def test_state_serialization_round_trip(self, design):
        state = TrialState.fresh(6)
        for dlt in (0, 1, 2, 0):
            apply_cohort(state, dlt, design)
        clone = TrialState.from_dict(state.to_dict())
        assert clone.to_dict() == state.to_dict()

    def test_replay_reconstructs_state(self, design):
        rng = np.random.default_rng(7)
        record = run_trial(design, (0.05, 0.15, 0.3, 0.45, 0.6, 0.8), None, rng)
        replayed = replay_events(design, 6, record.state.events)
        assert replayed.to_dict() == record.state.to_dict()

    def test_replay_rejects_tampered_log(self, design):
        state = TrialState.fresh(6)
        apply_cohort(state, 0, design)
        apply_cohort(state, 1, design)
        events = [CohortEvent.from_dict(e.to_dict()) for e in state.events]
        events[1].dose = 5  # contradicts the recorded path
        with pytest.raises(TrialStateError):
            replay_events(design, 6, events)


class TestAdmissibility:
    def _state_with(self, n, m, eliminated=None):
        state = TrialState.fresh(len(n))
        state.n = list(n)
        state.m = list(m)
        if eliminated:
            state.eliminated = list(eliminated)
        return state

    def test_untreated_doses_skipped(self):
        state = self._state_with([3, 3, 0], [0, 0, 0])
        assert admissible_doses(state, 0.3) == [1, 2]
        assert visited_doses(state) == [1, 2]

    def test_flagged_dose_breaks_admissible_but_not_visited(self):
        state = self._state_with(
            [6, 6, 3, 0], [0, 1, 3, 0], [False, False, True, True]
        )
        assert admissible_doses(state, 0.3) == [1, 2]
        assert visited_doses(state) == [1, 2, 3]

    def test_screen_trip_truncates(self):
        # dose 2 data (6, 5) trips the posterior screen even without a flag
        state = self._state_with([6, 6, 3], [0, 5, 1])
        assert admissible_doses(state, 0.3) == [1]

    def test_all_inadmissible(self):
        state = self._state_with([3, 0], [3, 0], [True, True])
        assert admissible_doses(state, 0.3) == []
        assert visited_doses(state) == [1]


class TestRunTrial:
    def test_zero_toxicity_reaches_top(self, design):
        rng = np.random.default_rng(1)
        estimator = lambda state, _rng: select_mtd_pava(state, 0.3)
        record = run_trial(design, (0.0,) * 6, estimator, rng)
        assert record.state.status is TrialStatus.COMPLETED
        assert record.state.n == [3, 3, 3, 3, 3, 21]
        assert record.selected == 6

    def test_certain_toxicity_stops_immediately(self, design):
        rng = np.random.default_rng(1)
        estimator = lambda state, _rng: select_mtd_pava(state, 0.3)
        record = run_trial(design, (1.0,) * 6, estimator, rng)
        assert record.state.status is TrialStatus.STOPPED_ALL_ELIMINATED
        assert record.state.n == [3, 0, 0, 0, 0, 0]
        assert record.selected is None

    def test_non_monotone_probs_rejected(self, design):
        with pytest.raises(ScenarioError):
            run_trial(design, (0.3, 0.2, 0.4), None, np.random.default_rng(0))
        with pytest.raises(ScenarioError):
            validate_true_probs((0.1, 1.2))

    def test_deterministic_given_seed(self, design):
        probs = (0.05, 0.15, 0.3, 0.45, 0.6, 0.8)
        a = run_trial(design, probs, None, np.random.default_rng(42))
        b = run_trial(design, probs, None, np.random.default_rng(42))
        assert a.state.to_dict() == b.state.to_dict()


@given(dlts=st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=12))
@settings(max_examples=150, deadline=None)
def test_property_conduct_invariants(dlts):
    design = TrialDesign.standard(0.3)
    state = TrialState.fresh(6)
    previous_dose = state.current_dose
    for dlt in dlts:
        if state.status is not TrialStatus.RUNNING:
            break
        apply_cohort(state, dlt, design)
        # single-step movement
        assert abs(state.current_dose - previous_dose) <= 1
        previous_dose = state.current_dose
        # eliminated set stays upward-closed
        flags = state.eliminated
        assert all(flags[j] <= flags[j + 1] for j in range(len(flags) - 1))
        # counts stay consistent
        assert all(0 <= m <= n for n, m in zip(state.n, state.m))
        assert sum(state.n) <= design.max_patients
        # the treated dose is never an eliminated one
        assert not state.eliminated[state.current_dose - 1] or (
            state.status is TrialStatus.STOPPED_ALL_ELIMINATED
        )
    replayed = replay_events(design, 6, state.events)
    assert replayed.to_dict() == state.to_dict()
