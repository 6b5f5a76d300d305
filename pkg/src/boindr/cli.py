"""Command-line interface.

Subcommands: ``boundaries``, ``linkcurves``, ``elicit``, ``simulate``,
``select``, ``decide``, ``serve``.  Every subcommand accepts ``--seed``,
``--out`` and ``--format {csv,json}``; outputs go to stdout unless ``--out``
is given, in which case the file is written atomically (temp file + rename).
CSV outputs start with a ``# schema=<name>.v1`` comment line followed by a
header row naming every column.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import (
    DoseGrid,
    TrialDesign,
    TrialState,
    visited_doses,
    check_elimination,
    compute_boundaries,
    decide,
    decision_table,
)
from .drm import (
    DoseResponseModel,
    grid_posterior,
    mcmc_sample,
    select_mtd_drm,
)
from .elicit import ElicitationInput, SearchConstraints, elicit_prior
from .errors import DoseFindingError
from .links import LINKS, link_inverse
from .pava import isotonic_fit
from .sim import (
    DEFAULT_DOSES,
    DEFAULT_REF_INDEX,
    load_sweep_config,
    run_sweep,
    sweep_rows,
    sweep_summary,
)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        _atomic_write(Path(out), text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _csv(schema: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={schema}.v1\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(str(v) for v in row) + "\n")
    return buf.getvalue()


def _json(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _parse_doses(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--out", help="output path (atomic write); default stdout")
    parser.add_argument(
        "--format", choices=("csv", "json"), default="csv", dest="fmt",
        help="output format",
    )


def cmd_boundaries(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    p_saf = args.phi1 if args.phi1 is not None else 0.6 * args.phi
    p_tox = args.phi2 if args.phi2 is not None else 1.4 * args.phi
    try:
        design = TrialDesign(
            target=args.phi, p_saf=p_saf, p_tox=p_tox, cohort_size=args.cohort,
            n_cohorts=max(1, args.max_n // args.cohort),
        )
        rows = decision_table(design, args.max_n)
    except DoseFindingError as exc:
        parser.error(str(exc))
    # Table-style rows at cohort multiples; lambda values carried in the payload.
    keep = [r for r in rows if r[0] % args.cohort == 0]
    if args.fmt == "json":
        payload = {
            "schema_version": 1,
            "phi": args.phi,
            "phi1": p_saf,
            "phi2": p_tox,
            "lambda_e": design.lambda_e,
            "lambda_d": design.lambda_d,
            "rows": [
                {"n": n, "escalate_le": lo, "deescalate_ge": hi} for n, lo, hi in keep
            ],
        }
        _emit(_json(payload), args.out)
    else:
        _emit(
            _csv(
                "boundaries",
                ("n_treated", "escalate_if_dlt_le", "deescalate_if_dlt_ge"),
                keep,
            ),
            args.out,
        )
    return 0


def cmd_linkcurves(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    doses = _parse_doses(args.doses)
    try:
        grid = DoseGrid(doses, args.ref_index)
    except DoseFindingError as exc:
        parser.error(str(exc))
    links = LINKS if args.link == "all" else (args.link,)
    sample = sorted(
        set(np.linspace(doses[0], doses[-1], args.points).tolist()) | set(doses)
    )
    slope = float(np.exp(args.beta1))
    rows = []
    curves = []
    for link in links:
        for d in sample:
            x = args.beta0 + slope * np.log(d / grid.ref_dose)
            pi = float(link_inverse(link, x))
            rows.append((f"{d:.6g}", link, f"{pi:.6g}"))
            curves.append({"dose": d, "link": link, "pi": pi})
    if args.fmt == "json":
        payload = {
            "schema_version": 1,
            "beta0": args.beta0,
            "beta1": args.beta1,
            "ref_dose": grid.ref_dose,
            "curves": curves,
        }
        _emit(_json(payload), args.out)
    else:
        _emit(_csv("linkcurves", ("dose", "link", "pi"), rows), args.out)
    return 0


def cmd_elicit(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    doses = _parse_doses(args.doses)
    levels = tuple(float(tok) for tok in args.levels.split(","))
    try:
        grid = DoseGrid(doses, args.ref_index)
        inp = ElicitationInput(
            grid=grid, link=args.link, target=args.phi,
            p1=args.p1, pj=args.pj, levels=levels,
        )
        constraints = SearchConstraints(
            var_floor=args.var_floor, mean_bound=args.mean_bound
        )
        result = elicit_prior(
            inp,
            constraints=constraints,
            seed=args.seed,
            n_restarts=args.restarts,
            crn_size=args.crn_size,
        )
    except DoseFindingError as exc:
        parser.error(str(exc))
    prior = result.prior
    if args.fmt == "csv":
        rows = []
        for j in range(len(doses)):
            for k, level in enumerate(levels):
                rows.append(
                    (
                        j + 1,
                        level,
                        f"{result.targets.values[j, k]:.6g}",
                        f"{result.achieved[j, k]:.6g}",
                    )
                )
        _emit(
            _csv("elicit", ("dose", "level", "target_q", "achieved_q"), rows), args.out
        )
        return 0
    payload = {
        "schema_version": 1,
        "link": args.link,
        "doses": list(doses),
        "ref_index": args.ref_index,
        "gamma0": prior.intercept_mean,
        "var0": prior.intercept_var,
        "gamma1": prior.logslope_mean,
        "var1": prior.logslope_var,
        "phi": args.phi,
        "p1": args.p1,
        "pj": args.pj,
        "levels": list(levels),
        "loss": result.loss,
        "target_quantiles": result.targets.values.tolist(),
        "achieved_quantiles": result.achieved.tolist(),
        "diagnostics": result.diagnostics,
    }
    _emit(_json(payload), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        cfg = load_sweep_config(args.config)
    except (OSError, KeyError, ValueError) as exc:
        parser.error(f"bad sweep config: {exc}")
    if args.reps is not None:
        cfg.reps = args.reps
    if args.seed:
        cfg.master_seed = args.seed
    reports = run_sweep(cfg)
    rows = sweep_rows(reports)
    summary = sweep_summary(reports, cfg.scenarios)
    if args.fmt == "json":
        payload = {
            "schema_version": 1,
            "rows": rows,
            "summary": summary,
            "reports": [r.to_dict() for r in reports],
        }
        _emit(_json(payload), args.out)
        return 0
    csv_text = _csv(
        "simulate",
        ("scenario", "method", "dose", "selection_prop", "mean_n", "mean_m"),
        [
            (
                r["scenario"],
                r["method"],
                r["dose"],
                f"{r['selection_prop']:.6g}",
                f"{r['mean_n']:.6g}",
                f"{r['mean_m']:.6g}",
            )
            for r in rows
        ],
    )
    _emit(csv_text, args.out)
    if args.out:
        summary_path = Path(args.out).with_suffix(".summary.json")
        _atomic_write(summary_path, _json(summary))
    return 0


def _load_trial_file(path: str) -> tuple[TrialDesign, TrialState, Optional[dict]]:
    payload = json.loads(Path(path).read_text())
    design = TrialDesign.from_dict(payload["design"])
    state = TrialState.from_dict(payload["state"])
    return design, state, payload


def cmd_select(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        design, state, payload = _load_trial_file(args.data)
    except (OSError, KeyError, ValueError) as exc:
        parser.error(f"bad trial file: {exc}")
    target = args.phi if args.phi is not None else design.target

    if args.method == "pava":
        fit = isotonic_fit(state, target, design.elim_threshold, design.elim_min_n)
        estimates: list[Optional[float]] = [None] * state.n_doses
        for dose, value in zip(fit.admissible, fit.tie_broken):
            estimates[dose - 1] = float(value)
        result = {
            "schema_version": 1,
            "method": "pava",
            "phi": target,
            "mtd": fit.selected,
            "admissible": fit.admissible,
            "estimates": estimates,
        }
    else:
        if not args.prior:
            parser.error("--method drm requires --prior")
        prior_payload = json.loads(Path(args.prior).read_text())
        model = DoseResponseModel.from_dict(prior_payload)
        if args.link and args.link != model.link:
            parser.error(
                f"--link {args.link} disagrees with prior file link {model.link}"
            )
        if model.grid.n_doses != state.n_doses:
            parser.error("prior file dose grid disagrees with the trial state")
        adm = visited_doses(state)
        if args.engine == "mcmc":
            summary = mcmc_sample(model, state.n, state.m, seed=args.seed)
        else:
            summary = grid_posterior(model, state.n, state.m)
        use_median = args.point_estimate == "median"
        mtd = select_mtd_drm(summary, target, adm, use_median)
        result = {
            "schema_version": 1,
            "method": "drm",
            "link": model.link,
            "engine": args.engine,
            "point_estimate": args.point_estimate,
            "phi": target,
            "mtd": mtd,
            "admissible": adm,
            "estimates": [float(v) for v in summary.estimates(use_median)],
            "diagnostics": summary.diagnostics,
        }

    if args.fmt == "json":
        _emit(_json(result), args.out)
    else:
        rows = []
        for j in range(1, state.n_doses + 1):
            est = result["estimates"][j - 1]
            rows.append(
                (
                    j,
                    "" if est is None else f"{est:.6g}",
                    int(j in result["admissible"]),
                    int(result["mtd"] == j),
                )
            )
        _emit(
            _csv("select", ("dose", "estimate", "admissible", "selected"), rows),
            args.out,
        )
    return 0


def cmd_decide(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    p_saf = args.phi1 if args.phi1 is not None else 0.6 * args.phi
    p_tox = args.phi2 if args.phi2 is not None else 1.4 * args.phi
    try:
        design = TrialDesign(target=args.phi, p_saf=p_saf, p_tox=p_tox)
        decision = decide(args.n, args.m, design)
        eliminate = check_elimination(
            args.n, args.m, args.phi, design.elim_threshold, design.elim_min_n
        )
    except DoseFindingError as exc:
        parser.error(str(exc))
    result = {
        "schema_version": 1,
        "n": args.n,
        "m": args.m,
        "phi": args.phi,
        "lambda_e": design.lambda_e,
        "lambda_d": design.lambda_d,
        "decision": decision.value,
        "eliminate": bool(eliminate),
    }
    if args.fmt == "json":
        _emit(_json(result), args.out)
    else:
        _emit(
            _csv(
                "decide",
                ("n", "m", "decision", "eliminate"),
                [(args.n, args.m, decision.value, int(eliminate))],
            ),
            args.out,
        )
    return 0


def cmd_serve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boindr",
        description="Interval-design dose finding with isotonic and dose-response MTD estimation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("boundaries", help="escalation/de-escalation rule table")
    p.add_argument("--phi", type=float, required=True, help="target DLT probability")
    p.add_argument("--phi1", type=float, help="subtherapeutic rate (default 0.6*phi)")
    p.add_argument("--phi2", type=float, help="overly toxic rate (default 1.4*phi)")
    p.add_argument("--cohort", type=int, default=3, help="cohort size (row spacing)")
    p.add_argument("--max-n", type=int, default=36, help="largest per-dose count")
    _add_common(p)
    p.set_defaults(func=cmd_boundaries)

    p = sub.add_parser("linkcurves", help="dose-response curves per link")
    p.add_argument("--link", choices=LINKS + ("all",), default="all")
    p.add_argument("--beta0", type=float, required=True)
    p.add_argument("--beta1", type=float, required=True)
    p.add_argument("--doses", default=",".join(str(d) for d in DEFAULT_DOSES))
    p.add_argument("--ref-index", type=int, default=DEFAULT_REF_INDEX)
    p.add_argument("--points", type=int, default=200, help="dense samples along the dose range")
    _add_common(p)
    p.set_defaults(func=cmd_linkcurves)

    p = sub.add_parser("elicit", help="fit prior hyperparameters by quantile matching")
    p.add_argument("--doses", default=",".join(str(d) for d in DEFAULT_DOSES))
    p.add_argument("--ref-index", type=int, default=DEFAULT_REF_INDEX)
    p.add_argument("--phi", type=float, default=0.3)
    p.add_argument("--link", choices=LINKS, required=True)
    p.add_argument("--p1", type=float, default=0.05,
                   help="prior P{lowest dose rate > phi}")
    p.add_argument("--pj", type=float, default=0.21,
                   help="prior P{highest dose rate <= phi}")
    p.add_argument("--levels", default="0.025,0.5,0.975")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--crn-size", type=int, default=10000)
    p.add_argument("--var-floor", type=float, default=0.5)
    p.add_argument("--mean-bound", type=float, default=10.0)
    _add_common(p)
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("simulate", help="run a scenario sweep from a config file")
    p.add_argument("--config", required=True, help="TOML or JSON sweep config")
    p.add_argument("--reps", type=int, help="override replicate count")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select", help="terminal MTD selection on a trial file")
    p.add_argument("--data", required=True, help="trial JSON (design + state)")
    p.add_argument("--method", choices=("pava", "drm"), required=True)
    p.add_argument("--prior", help="prior JSON file (drm only)")
    p.add_argument("--link", choices=LINKS, help="consistency check against the prior file")
    p.add_argument("--engine", choices=("grid", "mcmc"), default="grid")
    p.add_argument("--point-estimate", choices=("mean", "median"), default="mean")
    p.add_argument("--phi", type=float, help="override the design target")
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("decide", help="single interval decision for (n, m)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--phi1", type=float)
    p.add_argument("--phi2", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("serve", help="run the trial-conduct HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default="trial-data")
    p.add_argument("--ui-dir", help="optional static UI directory to mount at /ui")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except DoseFindingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
