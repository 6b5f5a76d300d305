"""Conduct service: REST flows, conflict handling, durability, selection parity."""
import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from boindr import (
    DoseResponseModel,
    TrialDesign,
    TrialState,
    grid_posterior,
    select_mtd_drm,
    select_mtd_pava,
)
from boindr.core import visited_doses
from boindr.service import create_app
from tests.conftest import REFERENCE_PRIORS

DOSES = [10.0, 20.0, 30.0, 45.0, 60.0, 80.0]

CREATE = {
    "doses": DOSES,
    "ref_index": 3,
    "design": {"phi": 0.3},
    "estimator": {
        "method": "drm",
        "link": "logit",
        "prior": {"gamma0": -1.592, "var0": 1.371, "gamma1": 0.412, "var1": 0.784},
    },
}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "data", verify_replay=True)
    with TestClient(app) as c:
        c.data_dir = tmp_path / "data"
        yield c


def make_trial(client, body=None):
    resp = client.post("/trials", json=body or CREATE)
    assert resp.status_code == 201, resp.text
    return resp.json()


def post_cohort(client, trial_id, dose, dlt, **extra):
    body = {"dose_level": dose, "n": 3, "dlt": dlt, **extra}
    return client.post(f"/trials/{trial_id}/cohorts", json=body)


def drive_to_completion(client, trial_id, dlt_for_dose):
    """Post cohorts until the trial leaves RUNNING; dlt per current dose."""
    payload = client.get(f"/trials/{trial_id}").json()
    dose = payload["state"]["current_dose"]
    for _ in range(40):
        resp = post_cohort(client, trial_id, dose, dlt_for_dose[dose - 1])
        assert resp.status_code == 200, resp.text
        body = resp.json()
        if body["status"] != "running":
            return body
        dose = body["next_dose"]
    raise AssertionError("trial did not terminate")


class TestCreate:
    def test_created_payload(self, client):
        payload = make_trial(client)
        assert payload["schema_version"] == 1
        assert payload["boundaries"]["lambda_e"] == pytest.approx(0.2365, abs=5e-5)
        assert payload["boundaries"]["lambda_d"] == pytest.approx(0.3585, abs=5e-5)
        state = payload["state"]
        assert state["status"] == "running"
        assert state["current_dose"] == 1
        assert state["n"] == [0] * 6
        event_file = client.data_dir / f"{payload['trial_id']}.jsonl"
        assert event_file.exists()
        head = json.loads(event_file.read_text().splitlines()[0])
        assert head["type"] == "created"

    def test_invalid_interval_rejected(self, client):
        body = dict(CREATE, design={"phi": 0.3, "phi1": 0.35})
        assert client.post("/trials", json=body).status_code == 422

    def test_nonpositive_variance_rejected(self, client):
        est = {
            "method": "drm",
            "link": "logit",
            "prior": {"gamma0": 0.0, "var0": -1.0, "gamma1": 0.0, "var1": 1.0},
        }
        body = dict(CREATE, estimator=est)
        assert client.post("/trials", json=body).status_code == 422

    def test_drm_without_prior_rejected(self, client):
        body = dict(CREATE, estimator={"method": "drm", "link": "logit"})
        assert client.post("/trials", json=body).status_code == 422

    def test_idempotent_create(self, client):
        body = dict(CREATE, idempotency_key="abc")
        first = client.post("/trials", json=body)
        assert first.status_code == 201
        second = client.post("/trials", json=body)
        assert second.status_code == 200
        assert second.json()["trial_id"] == first.json()["trial_id"]

    def test_unknown_trial_404(self, client):
        assert client.get("/trials/nope").status_code == 404


class TestCohorts:
    def test_escalation_decision(self, client):
        trial = make_trial(client)
        resp = post_cohort(client, trial["trial_id"], 1, 0)
        assert resp.status_code == 200
        body = resp.json()
        assert body["decision"] == "escalate"
        assert body["next_dose"] == 2
        assert body["status"] == "running"
        assert body["state"]["n"][0] == 3

    def test_stale_dose_conflict(self, client):
        trial = make_trial(client)
        assert post_cohort(client, trial["trial_id"], 1, 0).status_code == 200
        resp = post_cohort(client, trial["trial_id"], 1, 0)
        assert resp.status_code == 409
        assert "stale dose_level" in resp.json()["detail"]

    def test_cohort_index_conflict(self, client):
        trial = make_trial(client)
        ok = post_cohort(client, trial["trial_id"], 1, 0, cohort_index=1)
        assert ok.status_code == 200
        dup = post_cohort(client, trial["trial_id"], 2, 0, cohort_index=1)
        assert dup.status_code == 409
        assert "stale cohort_index" in dup.json()["detail"]

    def test_wrong_cohort_size_rejected(self, client):
        trial = make_trial(client)
        resp = client.post(
            f"/trials/{trial['trial_id']}/cohorts",
            json={"dose_level": 1, "n": 4, "dlt": 0},
        )
        assert resp.status_code == 422

    def test_dlt_exceeding_n_rejected(self, client):
        trial = make_trial(client)
        resp = client.post(
            f"/trials/{trial['trial_id']}/cohorts",
            json={"dose_level": 1, "n": 3, "dlt": 4},
        )
        assert resp.status_code == 422

    def test_lowest_dose_elimination_stops_trial(self, client):
        trial = make_trial(client)
        resp = post_cohort(client, trial["trial_id"], 1, 3)
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "stopped_all_eliminated"
        assert body["eliminations"] == [1, 2, 3, 4, 5, 6]
        after = post_cohort(client, trial["trial_id"], 1, 0)
        assert after.status_code == 409

    def test_completion_blocks_further_cohorts(self, client):
        trial = make_trial(client)
        final = drive_to_completion(client, trial["trial_id"], [0, 0, 0, 1, 1, 1])
        assert final["status"] == "completed"
        resp = post_cohort(client, trial["trial_id"], final["next_dose"], 0)
        assert resp.status_code == 409

    def test_concurrent_posts_commit_once(self, client):
        trial = make_trial(client)
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(
                pool.map(
                    lambda _: post_cohort(client, trial["trial_id"], 1, 0).status_code,
                    range(8),
                )
            )
        assert sorted(results)[0] == 200
        assert results.count(200) == 1
        assert results.count(409) == 7
        state = client.get(f"/trials/{trial['trial_id']}").json()["state"]
        assert state["n"] == [3, 0, 0, 0, 0, 0]

    def test_events_endpoint_lists_cohorts(self, client):
        trial = make_trial(client)
        post_cohort(client, trial["trial_id"], 1, 0)
        post_cohort(client, trial["trial_id"], 2, 1)
        events = client.get(f"/trials/{trial['trial_id']}/events").json()["events"]
        assert len(events) == 2
        assert events[0]["dose"] == 1
        assert events[1]["dose"] == 2
        assert events[1]["dlt"] == 1


class TestPersistence:
    def test_restart_rebuilds_state(self, client, tmp_path):
        trial = make_trial(client)
        post_cohort(client, trial["trial_id"], 1, 0)
        post_cohort(client, trial["trial_id"], 2, 1)
        before = client.get(f"/trials/{trial['trial_id']}").json()

        fresh = TestClient(create_app(tmp_path / "data"))
        after = fresh.get(f"/trials/{trial['trial_id']}").json()
        assert after == before

    def test_restart_preserves_idempotency(self, client, tmp_path):
        body = dict(CREATE, idempotency_key="sticky")
        trial_id = client.post("/trials", json=body).json()["trial_id"]
        fresh = TestClient(create_app(tmp_path / "data"))
        again = fresh.post("/trials", json=body)
        assert again.status_code == 200
        assert again.json()["trial_id"] == trial_id


class TestSelection:
    def test_running_trial_conflicts(self, client):
        trial = make_trial(client)
        resp = client.get(f"/trials/{trial['trial_id']}/selection")
        assert resp.status_code == 409

    def test_parity_with_library(self, client, design, grid):
        trial = make_trial(client)
        drive_to_completion(client, trial["trial_id"], [0, 0, 1, 1, 2, 2])
        state_dict = client.get(f"/trials/{trial['trial_id']}").json()["state"]
        state = TrialState.from_dict(state_dict)

        resp = client.get(
            f"/trials/{trial['trial_id']}/selection", params={"method": "both"}
        )
        assert resp.status_code == 200
        payload = resp.json()

        want_pava = select_mtd_pava(
            state, design.target, design.elim_threshold, design.elim_min_n
        )
        assert payload["pava"]["mtd"] == want_pava

        model = DoseResponseModel(
            link="logit", grid=grid, prior=REFERENCE_PRIORS["logit"]
        )
        summary = grid_posterior(model, state.n, state.m)
        want_drm = select_mtd_drm(summary, design.target, visited_doses(state))
        assert payload["drm"]["mtd"] == want_drm
        assert payload["drm"]["estimates"] == pytest.approx(summary.means, abs=1e-9)
        assert payload["mtd"] == payload["drm"]["mtd"]

    def test_median_point_estimate(self, client, design, grid):
        trial = make_trial(client)
        drive_to_completion(client, trial["trial_id"], [0, 0, 1, 1, 2, 2])
        resp = client.get(
            f"/trials/{trial['trial_id']}/selection",
            params={"method": "drm", "point_estimate": "median"},
        )
        assert resp.status_code == 200
        state = TrialState.from_dict(
            client.get(f"/trials/{trial['trial_id']}").json()["state"]
        )
        model = DoseResponseModel(
            link="logit", grid=grid, prior=REFERENCE_PRIORS["logit"]
        )
        summary = grid_posterior(model, state.n, state.m)
        assert resp.json()["drm"]["estimates"] == pytest.approx(
            summary.medians, abs=1e-9
        )

    def test_stopped_trial_selects_nothing(self, client):
        trial = make_trial(client)
        post_cohort(client, trial["trial_id"], 1, 3)
        resp = client.get(
            f"/trials/{trial['trial_id']}/selection", params={"method": "both"}
        )
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["mtd"] is None
        assert payload["pava"]["mtd"] is None
        assert payload["drm"]["mtd"] is None

    def test_unknown_method_rejected(self, client):
        trial = make_trial(client)
        post_cohort(client, trial["trial_id"], 1, 3)
        resp = client.get(
            f"/trials/{trial['trial_id']}/selection", params={"method": "crm"}
        )
        assert resp.status_code == 422
        resp = client.get(
            f"/trials/{trial['trial_id']}/selection",
            params={"point_estimate": "mode"},
        )
        assert resp.status_code == 422

    def test_pava_only_trial_has_no_drm_block(self, client):
        body = dict(CREATE, estimator={"method": "pava"})
        trial = make_trial(client, body)
        post_cohort(client, trial["trial_id"], 1, 3)
        resp = client.get(
            f"/trials/{trial['trial_id']}/selection", params={"method": "drm"}
        )
        assert resp.status_code == 422


class TestUiMount:
    def test_static_mount(self, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>conduct</title>")
        app = create_app(tmp_path / "data", ui_dir=ui)
        with TestClient(app) as client:
            resp = client.get("/ui/")
            assert resp.status_code == 200
            assert "conduct" in resp.text
