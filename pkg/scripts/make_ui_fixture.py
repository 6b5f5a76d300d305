#!/usr/bin/env python3
"""Record a full conduct session against the live service as a fixture tape.

Drives an in-process instance of the HTTP service through a complete
trial: create, twelve cohorts whose DLT counts are binomial draws from a
fixed truth vector under a fixed seed, then the side-by-side selection
view.  Every request/response pair is appended to a JSON tape that the
browser client's tests replay against a mocked fetch.

The recorded decisions are cross-checked against the command-line
`decide` and `select` outputs on the exported trial state, so the tape
is guaranteed consistent with the other transport before it is written.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import tempfile
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from fastapi.testclient import TestClient

from boindr import standard_scenarios
from boindr.cli import main as cli_main
from boindr.service import create_app

DOSES = [10.0, 20.0, 30.0, 45.0, 60.0, 80.0]
REF_INDEX = 3
PRIOR = {"gamma0": -1.592, "var0": 1.371, "gamma1": 0.412, "var1": 0.784}

CREATE_BODY = {
    "schema_version": 1,
    "doses": DOSES,
    "ref_index": REF_INDEX,
    "design": {"phi": 0.3},
    "estimator": {"method": "drm", "link": "logit", "prior": PRIOR},
    "start_dose": 1,
    "idempotency_key": "ui-fixture-tape",
}


def record(steps, client, method, path, body=None):
    if method == "GET":
        resp = client.get(path)
    else:
        resp = client.post(path, json=body)
    step = {"method": method, "path": path, "status": resp.status_code,
            "response": resp.json()}
    if body is not None:
        step["body"] = body
    steps.append(step)
    return resp.json()


def run_cli(argv) -> dict:
    buf = io.StringIO()
    with redirect_stdout(buf):
        rc = cli_main(argv)
    if rc != 0:
        raise RuntimeError(f"cli {argv} exited {rc}")
    return json.loads(buf.getvalue())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1,
                    help="binomial outcome stream for the cohort tape")
    ap.add_argument("--scenario", default="scenario3",
                    help="truth vector the simulated patients follow")
    ap.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parents[1]
        / "frontend" / "tests" / "fixtures" / "session.json",
    )
    args = ap.parse_args(argv)

    scen = {s.name: s for s in standard_scenarios()}[args.scenario]
    rng = np.random.default_rng(args.seed)
    steps: list[dict] = []

    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(Path(tmp) / "data", verify_replay=True))
        created = record(steps, client, "POST", "/trials", CREATE_BODY)
        trial_id = created["trial_id"]

        state = created["state"]
        while state["status"] == "running":
            dose = state["current_dose"]
            dlt = int(rng.binomial(3, scen.true_probs[dose - 1]))
            body = {"schema_version": 1, "dose_level": dose, "n": 3, "dlt": dlt,
                    "cohort_index": len(state["events"]) + 1}
            reply = record(steps, client, "POST", f"/trials/{trial_id}/cohorts", body)
            state = reply["state"]

        trial = record(steps, client, "GET", f"/trials/{trial_id}")
        events = record(steps, client, "GET", f"/trials/{trial_id}/events")
        selection = record(
            steps, client, "GET", f"/trials/{trial_id}/selection?method=both"
        )

    # Cross-check every recorded decision against the CLI on identical counts.
    decide_checks = []
    n = [0] * len(DOSES)
    m = [0] * len(DOSES)
    for ev in events["events"]:
        n[ev["dose"] - 1] += ev["n"]
        m[ev["dose"] - 1] += ev["dlt"]
        out = run_cli([
            "decide", "--n", str(n[ev["dose"] - 1]), "--m", str(m[ev["dose"] - 1]),
            "--phi", "0.3", "--format", "json",
        ])
        if out["decision"] != ev["decision"]:
            raise RuntimeError(
                f"cohort {ev['cohort_index']}: service said {ev['decision']!r}, "
                f"cli said {out['decision']!r}"
            )
        decide_checks.append(out)

    with tempfile.TemporaryDirectory() as tmp:
        trial_file = Path(tmp) / "trial.json"
        trial_file.write_text(json.dumps(trial))
        prior_file = Path(tmp) / "prior.json"
        prior_file.write_text(json.dumps(
            {"link": "logit", "doses": DOSES, "ref_index": REF_INDEX, **PRIOR}
        ))
        cli_pava = run_cli(["select", "--data", str(trial_file),
                            "--method", "pava", "--format", "json"])
        cli_drm = run_cli(["select", "--data", str(trial_file), "--method", "drm",
                           "--prior", str(prior_file), "--format", "json"])

    if cli_pava["mtd"] != selection["pava"]["mtd"]:
        raise RuntimeError("pava mtd mismatch between service and cli")
    if cli_drm["mtd"] != selection["drm"]["mtd"]:
        raise RuntimeError("drm mtd mismatch between service and cli")
    drm_gap = max(
        abs(a - b)
        for a, b in zip(cli_drm["estimates"], selection["drm"]["estimates"])
    )
    if drm_gap > 1e-9:
        raise RuntimeError(f"drm estimate gap {drm_gap} between service and cli")

    tape = {
        "schema_version": 1,
        "seed": args.seed,
        "scenario": args.scenario,
        "trial_id": trial_id,
        "steps": steps,
        "trial": trial,
        "events": events,
        "selection": selection,
        "cli": {"decide": decide_checks, "select_pava": cli_pava,
                "select_drm": cli_drm},
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(tape, indent=1) + "\n")
    n_cohorts = len(events["events"])
    print(f"wrote {args.out} ({n_cohorts} cohorts, status "
          f"{trial['state']['status']}, pava mtd {cli_pava['mtd']}, "
          f"drm mtd {cli_drm['mtd']})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
