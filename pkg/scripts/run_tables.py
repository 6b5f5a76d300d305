#!/usr/bin/env python3
"""Reproduce the operating-characteristic tables for the standard design.

Runs the eight bundled toxicity scenarios under the four terminal
estimators (isotonic plus the three dose-response links) with shared
conduct paths, then writes per-dose selection percentages, summary rates
(correct selection, overdose selection, no selection), and allocation
tables (mean patients / mean DLTs per dose) as CSV files.

The coefficient priors baked in below are the reference elicitation for
the default skeleton (p1 = 0.05, pJ = 0.21, d* = dose 3 of the standard
ladder); rerun `boindr elicit` to regenerate them from scratch.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from boindr import (
    CoefficientPrior,
    DoseGrid,
    MethodSpec,
    SweepConfig,
    TrialDesign,
    correct_rate,
    overdose_rate,
    run_sweep,
    standard_scenarios,
    sweep_rows,
)
from boindr.sim import DEFAULT_DOSES, DEFAULT_REF_INDEX, THREADS_ENV

REFERENCE_PRIORS = {
    "logit": CoefficientPrior(-1.592, 1.371, 0.412, 0.784),
    "loglog": CoefficientPrior(-0.231, 0.847, 0.068, 0.544),
    "cloglog": CoefficientPrior(-1.549, 0.943, 0.142, 0.743),
}


def build_config(reps: int, seed: int) -> SweepConfig:
    design = TrialDesign.standard(0.3)
    grid = DoseGrid(DEFAULT_DOSES, ref_index=DEFAULT_REF_INDEX)
    methods = [MethodSpec(name="pava", kind="pava")]
    for link, prior in REFERENCE_PRIORS.items():
        methods.append(
            MethodSpec(name=link, kind="drm", link=link, prior=prior)
        )
    return SweepConfig(
        design=design,
        grid=grid,
        scenarios=standard_scenarios(),
        methods=tuple(methods),
        reps=reps,
        master_seed=seed,
    )


def write_selection(reports, scenarios, out: Path) -> None:
    n_doses = len(reports[0].selection_props)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["scenario", "method"]
            + [f"dose_{j}" for j in range(1, n_doses + 1)]
            + ["none", "correct", "overdose"]
        )
        by_name = {s.name: s for s in scenarios}
        for rep in reports:
            sc = by_name[rep.scenario]
            w.writerow(
                [rep.scenario, rep.method]
                + [f"{100.0 * p:.1f}" for p in rep.selection_props]
                + [
                    f"{100.0 * rep.none_prop:.1f}",
                    f"{100.0 * correct_rate(rep, sc):.1f}",
                    f"{100.0 * overdose_rate(rep, sc):.1f}",
                ]
            )


def write_allocation(reports, out: Path) -> None:
    rows = sweep_rows(reports)
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(
            fh, fieldnames=["scenario", "method", "dose", "mean_n", "mean_m"]
        )
        w.writeheader()
        for row in rows:
            w.writerow(
                {
                    "scenario": row["scenario"],
                    "method": row["method"],
                    "dose": row["dose"],
                    "mean_n": f"{row['mean_n']:.2f}",
                    "mean_m": f"{row['mean_m']:.2f}",
                }
            )


def print_summary(reports, scenarios) -> None:
    by_name = {s.name: s for s in scenarios}
    methods = []
    for rep in reports:
        if rep.method not in methods:
            methods.append(rep.method)
    print(f"\n{'scenario':<12}" + "".join(f"{m:>10}" for m in methods))
    print("correct selection %")
    for sc in scenarios:
        cells = {
            rep.method: correct_rate(rep, by_name[rep.scenario])
            for rep in reports
            if rep.scenario == sc.name
        }
        print(
            f"{sc.name:<12}"
            + "".join(f"{100.0 * cells[m]:>10.1f}" for m in methods)
        )
    print("overdose selection %")
    for sc in scenarios:
        cells = {
            rep.method: overdose_rate(rep, by_name[rep.scenario])
            for rep in reports
            if rep.scenario == sc.name
        }
        print(
            f"{sc.name:<12}"
            + "".join(f"{100.0 * cells[m]:>10.1f}" for m in methods)
        )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=107)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out-dir", type=Path, default=Path("tables"))
    args = ap.parse_args(argv)

    if args.threads is not None:
        os.environ[THREADS_ENV] = str(args.threads)

    cfg = build_config(args.reps, args.seed)
    t0 = time.perf_counter()
    print(
        f"running {len(cfg.scenarios)} scenarios x {len(cfg.methods)} methods "
        f"x {cfg.reps} reps (seed {cfg.master_seed}) ..."
    )
    reports = run_sweep(cfg)
    elapsed = time.perf_counter() - t0
    print(f"done in {elapsed:.1f}s")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_selection(reports, cfg.scenarios, args.out_dir / "selection.csv")
    write_allocation(reports, args.out_dir / "allocation.csv")
    print(f"wrote {args.out_dir / 'selection.csv'}")
    print(f"wrote {args.out_dir / 'allocation.csv'}")
    print_summary(reports, cfg.scenarios)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
