"""Monte-Carlo harness: scenario battery, estimator arms, sweep driver.

Replicate r of a scenario draws its RNG from the seed sequence
``[master_seed, crc32(scenario_name), r]``, so streams are independent across
scenarios/replicates and bit-reproducible regardless of execution order.  All
estimator arms are applied to the same simulated trial paths (conduct is
estimator-free), so allocation summaries coincide across arms by construction;
set ``share_paths=False`` for independently re-simulated arms.
"""
from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    DoseGrid,
    TrialDesign,
    TrialStatus,
    run_trial,
    validate_true_probs,
    visited_doses,
)
from .drm import (
    GRID_POINTS,
    CoefficientPrior,
    DoseResponseModel,
    GridPosteriorEngine,
    mcmc_sample,
    select_mtd_drm,
)
from .errors import InvalidDesignError, ScenarioError
from .pava import select_mtd_pava

DEFAULT_DOSES = (10.0, 20.0, 30.0, 45.0, 60.0, 80.0)
DEFAULT_REF_INDEX = 3
THREADS_ENV = "BOINDR_THREADS"


@dataclass(frozen=True)
class Scenario:
    """Named truth: per-dose DLT probabilities and the dose closest to target."""

    name: str
    true_probs: tuple[float, ...]
    true_mtd: int

    def __post_init__(self) -> None:
        probs = validate_true_probs(self.true_probs)
        object.__setattr__(self, "true_probs", probs)
        if not 1 <= self.true_mtd <= len(probs):
            raise ScenarioError(f"true_mtd {self.true_mtd} outside the dose grid")

    def check_target(self, target: float) -> None:
        """Raise unless true_mtd is the dose with probability closest to target."""
        dist = np.abs(np.asarray(self.true_probs) - target)
        if int(np.argmin(dist)) + 1 != self.true_mtd:
            raise ScenarioError(
                f"{self.name}: true_mtd {self.true_mtd} is not the closest dose "
                f"to target {target}"
            )


def standard_scenarios() -> tuple[Scenario, ...]:
    """Eight benchmark scenarios: 1-4 steep/shallow stress shapes, 5-8 curves
    generated by the dose-response model itself (d* = dose 3)."""
    rows = [
        ("scenario1", (0.02, 0.15, 0.20, 0.30, 0.35, 0.55), 4),
        ("scenario2", (0.01, 0.04, 0.14, 0.18, 0.22, 0.30), 6),
        ("scenario3", (0.01, 0.03, 0.10, 0.20, 0.30, 0.55), 5),
        ("scenario4", (0.15, 0.30, 0.36, 0.50, 0.55, 0.64), 2),
        ("scenario5", (0.08, 0.19, 0.30, 0.44, 0.54, 0.64), 3),
        ("scenario6", (0.03, 0.09, 0.17, 0.30, 0.42, 0.55), 4),
        ("scenario7", (0.09, 0.30, 0.45, 0.59, 0.68, 0.75), 2),
        ("scenario8", (0.08, 0.19, 0.30, 0.46, 0.60, 0.75), 3),
    ]
    return tuple(Scenario(name, probs, mtd) for name, probs, mtd in rows)


@dataclass(frozen=True)
class MethodSpec:
    """One estimator arm of a sweep."""

    name: str
    kind: str  # "pava" | "drm"
    link: Optional[str] = None
    prior: Optional[CoefficientPrior] = None
    engine: str = "grid"  # "grid" | "mcmc"
    grid_points: int = GRID_POINTS
    use_median: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("pava", "drm"):
            raise InvalidDesignError(f"unknown estimator kind: {self.kind!r}")
        if self.engine not in ("grid", "mcmc"):
            raise InvalidDesignError(f"unknown engine: {self.engine!r}")
        if self.kind == "drm" and (self.link is None or self.prior is None):
            raise InvalidDesignError("drm methods need a link and a prior")


def make_estimator(spec: MethodSpec, design: TrialDesign, grid: DoseGrid):
    """Callable (state, rng) -> selected dose or None for one method arm."""
    if spec.kind == "pava":

        def estimate(state, rng):
            return select_mtd_pava(
                state, design.target, design.elim_threshold, design.elim_min_n
            )

        return estimate

    # The regression arm scores every visited dose: the pooled fit is the
    # point of the model, and the posterior screen belongs to the isotonic
    # arm alone.  Early-stopped trials never reach the estimator.
    model = DoseResponseModel(link=spec.link, grid=grid, prior=spec.prior)
    if spec.engine == "grid":
        engine = GridPosteriorEngine(model, points=spec.grid_points)

        def estimate(state, rng):
            adm = visited_doses(state)
            if not adm:
                return None
            summary = engine.summarize(state.n, state.m, want_median=spec.use_median)
            return select_mtd_drm(summary, design.target, adm, spec.use_median)

        return estimate

    def estimate(state, rng):
        adm = visited_doses(state)
        if not adm:
            return None
        seed = int(rng.integers(2**63 - 1))
        summary = mcmc_sample(model, state.n, state.m, seed=seed)
        return select_mtd_drm(summary, design.target, adm, spec.use_median)

    return estimate


@dataclass
class SimulationReport:
    """Aggregate of one (scenario, method) cell of a sweep."""

    scenario: str
    method: str
    reps: int
    master_seed: int
    selection_props: tuple[float, ...]
    none_prop: float
    mean_n: tuple[float, ...]
    mean_m: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "method": self.method,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "selection_props": list(self.selection_props),
            "none_prop": self.none_prop,
            "mean_n": list(self.mean_n),
            "mean_m": list(self.mean_m),
        }


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def run_scenario_multi(
    design: TrialDesign,
    grid: DoseGrid,
    scenario: Scenario,
    methods: Sequence[MethodSpec],
    reps: int,
    master_seed: int,
    share_paths: bool = True,
) -> dict[str, SimulationReport]:
    """Run one scenario for several estimator arms.

    With ``share_paths`` every arm scores the same simulated trials; the
    estimator's own randomness (MCMC seeding) still comes from an arm-specific
    stream so arm order cannot matter.
    """
    if reps < 1:
        raise ScenarioError("reps must be >= 1")
    if len(grid.doses) != len(scenario.true_probs):
        raise ScenarioError("scenario length disagrees with the dose grid")
    if len({m.name for m in methods}) != len(methods):
        raise InvalidDesignError("method names must be unique")
    scenario.check_target(design.target)
    estimators = {m.name: make_estimator(m, design, grid) for m in methods}
    n_doses = grid.n_doses
    skey = _stream_key(scenario.name)

    counts = {m.name: np.zeros(n_doses + 1) for m in methods}  # slot 0 = none
    sum_n = {m.name: np.zeros(n_doses) for m in methods}
    sum_m = {m.name: np.zeros(n_doses) for m in methods}

    for r in range(reps):
        if share_paths:
            rng = np.random.default_rng([master_seed, skey, r])
            record = run_trial(design, scenario.true_probs, None, rng)
            states = {m.name: record.state for m in methods}
        else:
            states = {}
            for m in methods:
                rng = np.random.default_rng([master_seed, skey, r, _stream_key(m.name)])
                states[m.name] = run_trial(design, scenario.true_probs, None, rng).state
        for m in methods:
            state = states[m.name]
            sum_n[m.name] += state.n
            sum_m[m.name] += state.m
            selected = None
            if state.status is TrialStatus.COMPLETED:
                est_rng = np.random.default_rng(
                    [master_seed, skey, r, _stream_key(m.name), 1]
                )
                selected = estimators[m.name](state, est_rng)
            counts[m.name][selected if selected is not None else 0] += 1

    reports = {}
    for m in methods:
        c = counts[m.name] / reps
        reports[m.name] = SimulationReport(
            scenario=scenario.name,
            method=m.name,
            reps=reps,
            master_seed=master_seed,
            selection_props=tuple(c[1:]),
            none_prop=float(c[0]),
            mean_n=tuple(sum_n[m.name] / reps),
            mean_m=tuple(sum_m[m.name] / reps),
        )
    return reports


def run_scenario(
    design: TrialDesign,
    grid: DoseGrid,
    scenario: Scenario,
    method: MethodSpec,
    reps: int,
    master_seed: int,
) -> SimulationReport:
    """Single-arm convenience wrapper around ``run_scenario_multi``."""
    return run_scenario_multi(design, grid, scenario, [method], reps, master_seed)[
        method.name
    ]


def overdose_rate(report: SimulationReport, scenario: Scenario) -> float:
    """Proportion of replicates selecting a dose strictly above the true MTD."""
    if report.scenario != scenario.name:
        raise ScenarioError(
            f"report is for {report.scenario!r}, not {scenario.name!r}"
        )
    return float(sum(report.selection_props[scenario.true_mtd :]))


def correct_rate(report: SimulationReport, scenario: Scenario) -> float:
    """Proportion of replicates selecting exactly the true MTD."""
    if report.scenario != scenario.name:
        raise ScenarioError(
            f"report is for {report.scenario!r}, not {scenario.name!r}"
        )
    return float(report.selection_props[scenario.true_mtd - 1])


def allocation_summary(report: SimulationReport) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Mean per-dose patient and DLT counts."""
    return report.mean_n, report.mean_m


@dataclass
class SweepConfig:
    """Everything a sweep run needs, parsed from TOML or JSON."""

    design: TrialDesign
    grid: DoseGrid
    scenarios: tuple[Scenario, ...]
    methods: tuple[MethodSpec, ...]
    reps: int = 1000
    master_seed: int = 0
    share_paths: bool = True


def _method_from_dict(d: dict, grid: DoseGrid, target: float, base_dir: Path) -> MethodSpec:
    kind = d.get("kind")
    if kind == "pava":
        return MethodSpec(name=d.get("name", "pava"), kind="pava")
    if kind != "drm":
        raise InvalidDesignError(f"unknown estimator kind: {kind!r}")
    link = d.get("link")
    prior_cfg = d.get("prior")
    elicit_cfg = d.get("elicit")
    if (prior_cfg is None) == (elicit_cfg is None):
        raise InvalidDesignError("drm methods need exactly one of 'prior' or 'elicit'")
    if prior_cfg is not None:
        if isinstance(prior_cfg, str):
            payload = json.loads((base_dir / prior_cfg).read_text())
            model = DoseResponseModel.from_dict(payload)
            if model.link != link:
                raise InvalidDesignError(
                    f"prior file link {model.link!r} disagrees with method link {link!r}"
                )
            prior = model.prior
        else:
            prior = CoefficientPrior(
                intercept_mean=prior_cfg["gamma0"],
                intercept_var=prior_cfg["var0"],
                logslope_mean=prior_cfg["gamma1"],
                logslope_var=prior_cfg["var1"],
            )
    else:
        from .elicit import ElicitationInput, elicit_prior

        inp = ElicitationInput(
            grid=grid,
            link=link,
            target=target,
            p1=elicit_cfg.get("p1", 0.05),
            pj=elicit_cfg.get("pj", 0.21),
        )
        prior = elicit_prior(inp, seed=elicit_cfg.get("seed", 0)).prior
    return MethodSpec(
        name=d.get("name", f"drm-{link}"),
        kind="drm",
        link=link,
        prior=prior,
        engine=d.get("engine", "grid"),
        grid_points=d.get("grid_points", GRID_POINTS),
        use_median=d.get("point_estimate", "mean") == "median",
    )


def load_sweep_config(path: str | Path) -> SweepConfig:
    """Parse a sweep config file (TOML by default, JSON for .json paths)."""
    path = Path(path)
    if path.suffix == ".json":
        raw = json.loads(path.read_text())
    else:
        try:
            import tomllib as toml  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as toml
        with open(path, "rb") as fh:
            raw = toml.load(fh)

    design_cfg = raw.get("design", {})
    target = design_cfg.get("phi", 0.3)
    design = TrialDesign(
        target=target,
        p_saf=design_cfg.get("phi1", 0.6 * target),
        p_tox=design_cfg.get("phi2", 1.4 * target),
        cohort_size=design_cfg.get("cohort_size", 3),
        n_cohorts=design_cfg.get("n_cohorts", 12),
        elim_threshold=design_cfg.get("elim_threshold", 0.95),
        elim_min_n=design_cfg.get("elim_min_n", 3),
    )
    grid_cfg = raw.get("grid", {})
    grid = DoseGrid(
        doses=tuple(grid_cfg.get("doses", DEFAULT_DOSES)),
        ref_index=grid_cfg.get("ref_index", DEFAULT_REF_INDEX),
    )
    scen_cfg = raw.get("scenarios")
    if scen_cfg:
        scenarios = tuple(
            Scenario(s["name"], tuple(s["true_probs"]), s["true_mtd"]) for s in scen_cfg
        )
    else:
        scenarios = standard_scenarios()
    methods = tuple(
        _method_from_dict(m, grid, target, path.parent) for m in raw.get("methods", [])
    )
    if not methods:
        raise InvalidDesignError("sweep config declares no methods")
    return SweepConfig(
        design=design,
        grid=grid,
        scenarios=scenarios,
        methods=methods,
        reps=raw.get("reps", 1000),
        master_seed=raw.get("seed", 0),
        share_paths=raw.get("share_paths", True),
    )


def run_sweep(cfg: SweepConfig) -> list[SimulationReport]:
    """All (scenario, method) cells; scenarios fan out over BOINDR_THREADS."""
    workers = max(1, int(os.environ.get(THREADS_ENV, "1")))

    def one(scenario: Scenario) -> dict[str, SimulationReport]:
        return run_scenario_multi(
            cfg.design,
            cfg.grid,
            scenario,
            cfg.methods,
            cfg.reps,
            cfg.master_seed,
            share_paths=cfg.share_paths,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_scenario = list(pool.map(one, cfg.scenarios))
    else:
        per_scenario = [one(s) for s in cfg.scenarios]

    reports: list[SimulationReport] = []
    for scenario, by_method in zip(cfg.scenarios, per_scenario):
        for method in cfg.methods:
            reports.append(by_method[method.name])
    return reports


def sweep_rows(reports: Sequence[SimulationReport]) -> list[dict]:
    """Long-format rows, one per (scenario, method, dose)."""
    rows = []
    for rep in reports:
        for j, (prop, mn, mm) in enumerate(
            zip(rep.selection_props, rep.mean_n, rep.mean_m), start=1
        ):
            rows.append(
                {
                    "scenario": rep.scenario,
                    "method": rep.method,
                    "dose": j,
                    "selection_prop": prop,
                    "mean_n": mn,
                    "mean_m": mm,
                }
            )
    return rows


def sweep_summary(
    reports: Sequence[SimulationReport], scenarios: Sequence[Scenario]
) -> dict:
    """Per-cell summary statistics keyed by scenario then method."""
    by_name = {s.name: s for s in scenarios}
    summary: dict = {"schema_version": 1, "cells": []}
    for rep in reports:
        scenario = by_name[rep.scenario]
        summary["cells"].append(
            {
                "scenario": rep.scenario,
                "method": rep.method,
                "reps": rep.reps,
                "master_seed": rep.master_seed,
                "correct_prop": correct_rate(rep, scenario),
                "overdose_prop": overdose_rate(rep, scenario),
                "none_prop": rep.none_prop,
            }
        )
    return summary
