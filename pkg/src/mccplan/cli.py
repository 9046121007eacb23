"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 numeric failure. Diagnostics go
to stderr; structured output goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .conditions import RiskFactorVector
from .errors import (
    BoundsError,
    CapacityError,
    CovariateLayoutError,
    DataError,
    NumericOverflowError,
    SchemaError,
    StepSizeError,
    ValidationError,
)
from .forward import forward_trajectory
from .io import patient_from_dict, read_dataset, read_model, write_dataset, write_model
from .learning import RegularizationSpec, fit_mle, structure_path
from .planner import BehaviorBounds, PlannerConfig, receding_horizon_run, sensitivity_report
from .synth import PRESET_NAMES, CohortSpec, generate, preset_model

_INPUT_ERRORS = (
    ValidationError, DataError, SchemaError, BoundsError, CovariateLayoutError,
    CapacityError, FileNotFoundError,
)
_NUMERIC_ERRORS = (NumericOverflowError, StepSizeError)


def _info(msg: str):
    print(msg, file=sys.stderr)


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _parse_bounds(text: str) -> dict[str, tuple[float, float]]:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, rng = part.partition("=")
        lo, _, hi = rng.partition(":")
        out[name.strip()] = (float(lo), float(hi))
    return out


def _load_patient(path, model):
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: invalid JSON: {e.msg}", line=e.lineno) from e
    pid, state, z = patient_from_dict(doc, model.condition_set, model.layout)
    return doc, pid, state, z


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_synth(args) -> int:
    model = preset_model(args.preset)
    spec = CohortSpec(
        n_patients=args.n_patients, seed=args.seed,
        n_visits=args.visits, visit_spacing=args.spacing,
    )
    dataset = generate(model, spec)
    write_dataset(dataset, args.out)
    _info(f"wrote {len(dataset)} records for {args.n_patients} patients to {args.out}")
    return 0


def cmd_fit(args) -> int:
    dataset = read_dataset(args.dataset)
    reg = RegularizationSpec(
        lam=args.lam, prune_epsilon=args.prune_epsilon,
        pilot_ridge=args.pilot_ridge, norm_floor=args.norm_floor,
    )
    if args.lambda_grid is not None:
        grid = _parse_floats(args.lambda_grid)
        path = structure_path(dataset, grid, reg)
        print(f"{'lambda':>10} {'edges':>6} {'score':>14} {'best':>5}")
        for i, entry in enumerate(path.entries):
            mark = "*" if i == path.best_index else ""
            print(f"{entry.lam:>10.4g} {len(entry.edges):>6d} {entry.score:>14.4f} {mark:>5}")
        model, report = path.best.model, path.best.report
    else:
        model, report = fit_mle(dataset, reg)
    write_model(model, args.out)
    _info(
        f"fit {report.n_records} records, log-lik {report.log_lik:.4f}, "
        f"converged={report.converged}; model written to {args.out}"
    )
    if report.flagged_conditions:
        _info(f"zero-event conditions floored: {', '.join(report.flagged_conditions)}")
    return 0


def _trajectory_payload(result) -> dict:
    return {
        "times": result.times.tolist(),
        "conditions": list(result.condition_codes),
        "marginals": {c: result.marginal_series(c).tolist() for c in result.condition_codes},
    }


def cmd_predict(args) -> int:
    model = read_model(args.model)
    doc, pid, state, z = _load_patient(args.patient, model)
    if "schedule" in doc:
        schedule = []
        for seg in doc["schedule"]:
            zz = z
            if seg.get("covariates") is not None:
                zz = RiskFactorVector.from_dict(model.layout, seg["covariates"])
            schedule.append((float(seg["duration"]), zz))
    else:
        schedule = [(args.horizon, z)]
    result = forward_trajectory(model, state, schedule, grid_step=args.grid_step)
    if args.format == "csv":
        target = open(args.out, "w", newline="") if args.out else sys.stdout
        writer = csv.writer(target)
        writer.writerow(["time", *result.condition_codes])
        for i, t in enumerate(result.times):
            writer.writerow([t, *result.marginals[i].tolist()])
        if args.out:
            target.close()
    else:
        payload = _trajectory_payload(result)
        payload["patient_id"] = pid
        _write_json(args.out, payload)
    _info(f"predicted {len(result.times)} grid points for patient {pid}")
    return 0


def cmd_plan(args) -> int:
    model = read_model(args.model)
    doc, pid, state, z = _load_patient(args.patient, model)
    config = PlannerConfig(
        n_stages=args.stages, stage_length=args.stage_length,
        smoothness=args.smoothness, mode=args.mode,
        adherence_window=args.adherence_window, risk_adjusted=args.risk_adjusted,
    )
    bounds = BehaviorBounds.from_dict(
        model.layout.modifiable, _parse_bounds(args.bounds) if args.bounds else {}
    )
    run = receding_horizon_run(
        model, state, z, _parse_floats(args.epochs), args.horizon, config, bounds
    )
    baseline = forward_trajectory(
        model, state, [(s.duration, s.z) for s in run.baseline_segments],
        grid_step=args.grid_step,
    )
    intervened = forward_trajectory(model, state, run.piecewise_schedule(),
                                    grid_step=args.grid_step)
    payload = {
        "patient_id": pid,
        "epochs": list(run.epochs),
        "plans": [
            {"stages": p.stages.tolist(), "objective": p.objective,
             "stage_risks": list(p.stage_risks), "mode": p.mode, "converged": p.converged}
            for p in run.plans
        ],
        "schedule": [
            {"t_start": s.t_start, "t_end": s.t_end, "covariates": s.z.to_dict(),
             "intervened": s.intervened}
            for s in run.segments
        ],
        "baseline": _trajectory_payload(baseline),
        "intervened": _trajectory_payload(intervened),
        "sensitivity": [
            {"behavior": e.behavior, "risk_at_low": e.risk_at_low,
             "risk_at_high": e.risk_at_high, "delta": e.delta}
            for e in sensitivity_report(model, state, z, config.stage_length, bounds)
        ],
    }
    _write_json(args.out, payload)
    _info(f"planned {len(run.plans)} epoch(s) for patient {pid}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app, default_demo_patients

    app = create_app(
        args.model_dir,
        preload_presets=tuple(args.preload_preset or ()),
        demo_patients=default_demo_patients() if args.demo_patients else (),
    )
    _info(f"serving on {args.host}:{args.port} with model dir {args.model_dir}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_reproduce_case_studies(args) -> int:
    """Baseline vs early vs late intervention trajectories on the preset
    cohort patient, written as comparable JSON files."""
    model = preset_model("cluster5")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = PlannerConfig(n_stages=5, stage_length=1.0, smoothness=0.05,
                           adherence_window=args.adherence_window)
    horizon = args.horizon
    rows = []
    for age_group in range(6):
        z = RiskFactorVector.from_dict(model.layout, {
            "diet": 0.0, "exercise": 0.0, "tobacco": 1.0, "alcohol": 1.0,
            "age_group": float(age_group), "gender": 1.0, "education": 0.0, "marital": 1.0,
        })
        state = model.condition_set.state_of(["OB", "HL"])
        scenarios = {"baseline": None, "early": [2.0], "late": [3.0]}
        results = {}
        for name, epochs in scenarios.items():
            if epochs is None:
                traj = forward_trajectory(model, state, [(horizon, z)],
                                          grid_step=args.grid_step)
                payload = {"scenario": name, "epochs": [], **_trajectory_payload(traj)}
            else:
                run = receding_horizon_run(model, state, z, epochs, horizon, config)
                traj = forward_trajectory(model, state, run.piecewise_schedule(),
                                          grid_step=args.grid_step)
                payload = {
                    "scenario": name, "epochs": epochs,
                    "schedule": [
                        {"t_start": s.t_start, "t_end": s.t_end,
                         "covariates": s.z.to_dict(), "intervened": s.intervened}
                        for s in run.segments
                    ],
                    **_trajectory_payload(traj),
                }
            _write_json(out_dir / f"age{age_group}_{name}.json", payload)
            results[name] = traj
        di = {name: results[name].marginal_series("DI") for name in scenarios}
        t10 = results["baseline"].index_at(min(10.0, horizon))
        rows.append({
            "age_group": age_group,
            "di_baseline_y10": float(di["baseline"][t10]),
            "di_early_y10": float(di["early"][t10]),
            "di_late_y10": float(di["late"][t10]),
        })
    with open(out_dir / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"{'age':>4} {'DI@10 base':>11} {'DI@10 early':>12} {'DI@10 late':>11}")
    for r in rows:
        print(f"{r['age_group']:>4d} {r['di_baseline_y10']:>11.4f} "
              f"{r['di_early_y10']:>12.4f} {r['di_late_y10']:>11.4f}")
    _info(f"case-study outputs in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mccplan",
        description="Chronic-condition progression modeling, prediction, and planning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort dataset")
    p.add_argument("--preset", choices=PRESET_NAMES, required=True)
    p.add_argument("--n-patients", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--visits", type=int, default=3)
    p.add_argument("--spacing", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model from a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--lambda-grid", help="comma-separated values, e.g. 0,0.1,1,10")
    p.add_argument("--prune-epsilon", type=float, default=1e-3)
    p.add_argument("--pilot-ridge", type=float, default=1e-4)
    p.add_argument("--norm-floor", type=float, default=1e-6)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forward risk trajectory for a patient")
    p.add_argument("--model", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--grid-step", type=float, default=1.0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plan", help="behavior plan with receding-horizon epochs")
    p.add_argument("--model", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--epochs", required=True, help="comma-separated years, e.g. 2,5")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--stages", type=int, default=5)
    p.add_argument("--stage-length", type=float, default=1.0)
    p.add_argument("--smoothness", type=float, default=0.05)
    p.add_argument("--mode", choices=("binary", "continuous"), default="binary")
    p.add_argument("--adherence-window", type=float, default=1.0)
    p.add_argument("--risk-adjusted", action="store_true")
    p.add_argument("--bounds", help="per-behavior bounds, e.g. diet=0:1,tobacco=0:0")
    p.add_argument("--grid-step", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--preload-preset", action="append", choices=PRESET_NAMES)
    p.add_argument("--demo-patients", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser(
        "reproduce-case-studies",
        help="baseline vs early vs late intervention comparisons on the preset model",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--horizon", type=float, default=12.0)
    p.add_argument("--grid-step", type=float, default=0.5)
    p.add_argument("--adherence-window", type=float, default=1.0)
    p.set_defaults(func=cmd_reproduce_case_studies)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as e:
        names = getattr(e, "fields", None) or getattr(e, "offending", None)
        suffix = f" ({', '.join(names)})" if names else ""
        _info(f"error: {e}{suffix}")
        return 1
    except _NUMERIC_ERRORS as e:
        _info(f"numeric failure: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
