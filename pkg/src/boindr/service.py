"""HTTP service for live trial conduct.

Every trial is persisted as one append-only JSON-lines event file under the
data directory: the first line records the trial configuration, each further
line one cohort.  State is rebuilt by replaying that file, so GET responses
always equal fold(apply_cohort, events).  Mutations on one trial are
serialized by a per-trial lock; an event line is flushed to disk before the
response is produced.  Payloads carry an explicit ``schema_version``.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field, model_validator

from .core import (
    SCHEMA_VERSION,
    CohortEvent,
    DoseGrid,
    TrialDesign,
    TrialState,
    TrialStatus,
    visited_doses,
    apply_cohort,
    replay_events,
)
from .drm import CoefficientPrior, DoseResponseModel, grid_posterior, select_mtd_drm
from .errors import DoseFindingError
from .links import LINKS
from .pava import isotonic_fit


class PriorPayload(BaseModel):
    gamma0: float
    var0: float = Field(gt=0.0)
    gamma1: float
    var1: float = Field(gt=0.0)


class EstimatorPayload(BaseModel):
    method: Literal["pava", "drm"] = "pava"
    link: Optional[Literal["logit", "loglog", "cloglog"]] = None
    prior: Optional[PriorPayload] = None

    @model_validator(mode="after")
    def _drm_needs_prior(self) -> "EstimatorPayload":
        if self.method == "drm" and (self.link is None or self.prior is None):
            raise ValueError("method 'drm' requires 'link' and 'prior'")
        return self


class DesignPayload(BaseModel):
    phi: float = Field(gt=0.0, lt=1.0)
    phi1: Optional[float] = None
    phi2: Optional[float] = None
    cohort_size: int = Field(default=3, ge=1)
    n_cohorts: int = Field(default=12, ge=1)
    elim_threshold: float = Field(default=0.95, gt=0.0, lt=1.0)
    elim_min_n: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def _interval_order(self) -> "DesignPayload":
        p1 = self.phi1 if self.phi1 is not None else 0.6 * self.phi
        p2 = self.phi2 if self.phi2 is not None else 1.4 * self.phi
        if not 0.0 < p1 < self.phi:
            raise ValueError("phi1 must satisfy 0 < phi1 < phi")
        if not self.phi < p2 < 1.0:
            raise ValueError("phi2 must satisfy phi < phi2 < 1")
        return self

    def to_design(self) -> TrialDesign:
        return TrialDesign(
            target=self.phi,
            p_saf=self.phi1 if self.phi1 is not None else 0.6 * self.phi,
            p_tox=self.phi2 if self.phi2 is not None else 1.4 * self.phi,
            cohort_size=self.cohort_size,
            n_cohorts=self.n_cohorts,
            elim_threshold=self.elim_threshold,
            elim_min_n=self.elim_min_n,
        )


class CreateTrialRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    doses: list[float] = Field(min_length=2)
    ref_index: int = Field(default=1, ge=1)
    design: DesignPayload
    estimator: EstimatorPayload = EstimatorPayload()
    start_dose: int = Field(default=1, ge=1)
    idempotency_key: Optional[str] = None


class CohortRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    dose_level: int = Field(ge=1)
    n: int = Field(ge=1)
    dlt: int = Field(ge=0)
    cohort_index: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _dlt_within_cohort(self) -> "CohortRequest":
        if self.dlt > self.n:
            raise ValueError("dlt cannot exceed n")
        return self


@dataclass
class TrialSession:
    """In-memory runtime for one trial plus its on-disk event file."""

    trial_id: str
    design: TrialDesign
    grid: DoseGrid
    estimator: dict
    state: TrialState
    path: Path
    idempotency_key: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _created_record(session: TrialSession) -> dict:
    return {
        "type": "created",
        "schema_version": SCHEMA_VERSION,
        "trial_id": session.trial_id,
        "doses": list(session.grid.doses),
        "ref_index": session.grid.ref_index,
        "design": session.design.to_dict(),
        "estimator": session.estimator,
        "start_dose": session.state.current_dose,
        "idempotency_key": session.idempotency_key,
    }


def _load_session(path: Path) -> TrialSession:
    lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not lines or lines[0].get("type") != "created":
        raise DoseFindingError(f"corrupt trial file: {path}")
    head = lines[0]
    design = TrialDesign.from_dict(head["design"])
    grid = DoseGrid(tuple(head["doses"]), head["ref_index"])
    events = [CohortEvent.from_dict(rec) for rec in lines[1:]]
    state = replay_events(design, grid.n_doses, events, head.get("start_dose", 1))
    return TrialSession(
        trial_id=head["trial_id"],
        design=design,
        grid=grid,
        estimator=head.get("estimator", {"method": "pava"}),
        state=state,
        path=path,
        idempotency_key=head.get("idempotency_key"),
    )


def _state_payload(session: TrialSession) -> dict:
    state = session.state
    return {
        "schema_version": SCHEMA_VERSION,
        "trial_id": session.trial_id,
        "doses": list(session.grid.doses),
        "ref_index": session.grid.ref_index,
        "design": session.design.to_dict(),
        "estimator": session.estimator,
        "state": state.to_dict(),
    }


def create_app(data_dir: str | Path, ui_dir: Optional[str | Path] = None,
               verify_replay: bool = False) -> FastAPI:
    """Build the service; ``verify_replay`` re-folds the event log after every
    mutation and asserts equality (used by the test suite)."""
    data_path = Path(data_dir)
    data_path.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="dose-finding conduct service", version="1")

    sessions: dict[str, TrialSession] = {}
    idempotency: dict[str, str] = {}
    registry_lock = threading.Lock()

    for path in sorted(data_path.glob("*.jsonl")):
        session = _load_session(path)
        sessions[session.trial_id] = session
        if session.idempotency_key:
            idempotency[session.idempotency_key] = session.trial_id

    def get_session(trial_id: str) -> TrialSession:
        session = sessions.get(trial_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown trial {trial_id}")
        return session

    @app.post("/trials", status_code=201)
    def create_trial(req: CreateTrialRequest, response: Response):
        with registry_lock:
            if req.idempotency_key and req.idempotency_key in idempotency:
                session = sessions[idempotency[req.idempotency_key]]
                payload = _state_payload(session)
                payload["boundaries"] = {
                    "lambda_e": session.design.lambda_e,
                    "lambda_d": session.design.lambda_d,
                }
                response.status_code = 200
                return payload
            try:
                design = req.design.to_design()
                grid = DoseGrid(tuple(req.doses), req.ref_index)
                state = TrialState.fresh(grid.n_doses, req.start_dose)
            except DoseFindingError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            if req.estimator.method == "drm" and req.estimator.prior is not None:
                # Fail fast on an unusable prior rather than at selection time.
                prior = req.estimator.prior
                try:
                    CoefficientPrior(prior.gamma0, prior.var0, prior.gamma1, prior.var1)
                except DoseFindingError as exc:
                    raise HTTPException(status_code=422, detail=str(exc))
            trial_id = uuid.uuid4().hex[:12]
            session = TrialSession(
                trial_id=trial_id,
                design=design,
                grid=grid,
                estimator=req.estimator.model_dump(),
                state=state,
                path=data_path / f"{trial_id}.jsonl",
                idempotency_key=req.idempotency_key,
            )
            with open(session.path, "w") as fh:
                fh.write(json.dumps(_created_record(session)) + "\n")
            sessions[trial_id] = session
            if req.idempotency_key:
                idempotency[req.idempotency_key] = trial_id
        payload = _state_payload(session)
        payload["boundaries"] = {
            "lambda_e": design.lambda_e,
            "lambda_d": design.lambda_d,
        }
        return payload

    @app.get("/trials/{trial_id}")
    def get_trial(trial_id: str):
        return _state_payload(get_session(trial_id))

    @app.get("/trials/{trial_id}/events")
    def get_events(trial_id: str):
        session = get_session(trial_id)
        return {
            "schema_version": SCHEMA_VERSION,
            "trial_id": trial_id,
            "events": [e.to_dict() for e in session.state.events],
        }

    @app.post("/trials/{trial_id}/cohorts")
    def post_cohort(trial_id: str, req: CohortRequest):
        session = get_session(trial_id)
        with session.lock:
            state = session.state
            if state.status is not TrialStatus.RUNNING:
                raise HTTPException(
                    status_code=409, detail=f"trial is {state.status.value}"
                )
            if req.dose_level != state.current_dose:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"stale dose_level {req.dose_level}; "
                        f"current dose is {state.current_dose}"
                    ),
                )
            if req.cohort_index is not None and req.cohort_index != len(state.events) + 1:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"stale cohort_index {req.cohort_index}; "
                        f"next cohort is {len(state.events) + 1}"
                    ),
                )
            if req.n != session.design.cohort_size:
                raise HTTPException(
                    status_code=422,
                    detail=f"cohort size must be {session.design.cohort_size}",
                )
            try:
                decision = apply_cohort(state, req.dlt, session.design)
            except DoseFindingError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            event = state.events[-1]
            # Append-before-respond: the event is durable before anyone sees it.
            with open(session.path, "a") as fh:
                fh.write(json.dumps(event.to_dict()) + "\n")
                fh.flush()
            if verify_replay:
                replayed = _load_session(session.path).state
                assert replayed.to_dict() == state.to_dict(), "replay diverged"
            return {
                "schema_version": SCHEMA_VERSION,
                "trial_id": trial_id,
                "decision": decision.value,
                "next_dose": state.current_dose,
                "eliminations": list(event.eliminations),
                "status": state.status.value,
                "state": state.to_dict(),
            }

    @app.get("/trials/{trial_id}/selection")
    def get_selection(trial_id: str, method: Optional[str] = None,
                      point_estimate: str = "mean"):
        session = get_session(trial_id)
        state = session.state
        if state.status is TrialStatus.RUNNING:
            raise HTTPException(status_code=409, detail="trial is still running")
        chosen = method or session.estimator.get("method", "pava")
        if chosen not in ("pava", "drm", "both"):
            raise HTTPException(status_code=422, detail=f"unknown method {chosen!r}")
        if point_estimate not in ("mean", "median"):
            raise HTTPException(status_code=422, detail="point_estimate must be mean or median")
        design = session.design
        # Regression selection scores every visited dose; the isotonic block
        # applies its own posterior screen via isotonic_fit.
        adm = visited_doses(state) if state.status is TrialStatus.COMPLETED else []

        def pava_block() -> dict:
            if state.status is not TrialStatus.COMPLETED:
                return {"mtd": None, "estimates": [None] * state.n_doses, "admissible": []}
            fit = isotonic_fit(state, design.target, design.elim_threshold, design.elim_min_n)
            estimates: list[Optional[float]] = [None] * state.n_doses
            for dose, value in zip(fit.admissible, fit.tie_broken):
                estimates[dose - 1] = float(value)
            return {"mtd": fit.selected, "estimates": estimates, "admissible": fit.admissible}

        def drm_block() -> dict:
            cfg = session.estimator
            if cfg.get("method") != "drm" or not cfg.get("prior"):
                raise HTTPException(
                    status_code=422,
                    detail="trial was created without a dose-response prior",
                )
            prior = cfg["prior"]
            model = DoseResponseModel(
                link=cfg["link"],
                grid=session.grid,
                prior=CoefficientPrior(
                    prior["gamma0"], prior["var0"], prior["gamma1"], prior["var1"]
                ),
            )
            if state.status is not TrialStatus.COMPLETED:
                return {"mtd": None, "estimates": [None] * state.n_doses, "admissible": []}
            summary = grid_posterior(model, state.n, state.m)
            use_median = point_estimate == "median"
            mtd = select_mtd_drm(summary, design.target, adm, use_median)
            return {
                "mtd": mtd,
                "estimates": [float(v) for v in summary.estimates(use_median)],
                "admissible": adm,
                "link": cfg["link"],
            }

        payload = {
            "schema_version": SCHEMA_VERSION,
            "trial_id": trial_id,
            "status": state.status.value,
            "phi": design.target,
            "method": chosen,
        }
        if chosen == "pava":
            payload["pava"] = pava_block()
            payload["mtd"] = payload["pava"]["mtd"]
        elif chosen == "drm":
            payload["drm"] = drm_block()
            payload["mtd"] = payload["drm"]["mtd"]
        else:
            payload["pava"] = pava_block()
            payload["drm"] = drm_block()
            payload["mtd"] = payload[session.estimator.get("method", "pava")]["mtd"]
        return payload

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
