"""HTTP service over the fitting, prediction, and planning engine.

Models live in a content-addressed directory: the id is a hash of the
canonical model JSON, so stored models are immutable and updates mint new
versions. All handlers are deterministic; identical requests against the
same model id return byte-identical bodies.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .conditions import RiskFactorVector
from .errors import (
    BoundsError,
    CapacityError,
    CovariateLayoutError,
    MccPlanError,
    SchemaError,
    ValidationError,
)
from .forward import forward_trajectory
from .io import canonical_model_json, read_dataset, read_model, write_model
from .learning import OnlineUpdateConfig, RegularizationSpec, fit_mle, online_update, structure_path
from .model import FctbnModel, state_intensities
from .planner import BehaviorBounds, PlannerConfig, receding_horizon_run, sensitivity_report
from .synth import PRESET_NAMES, preset_model

MODEL_ID_LENGTH = 16


class ModelStore:
    """Directory of immutable model files keyed by content hash."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._lineage_locks: dict[str, threading.Lock] = {}

    def _path(self, model_id: str) -> Path:
        return self.directory / f"{model_id}.json"

    def save(self, model: FctbnModel) -> str:
        text = canonical_model_json(model)
        model_id = hashlib.sha256(text.encode("utf-8")).hexdigest()[:MODEL_ID_LENGTH]
        path = self._path(model_id)
        if not path.exists():
            write_model(model, path)
        return model_id

    def load(self, model_id: str) -> FctbnModel:
        path = self._path(model_id)
        if not path.exists():
            raise KeyError(model_id)
        return read_model(path)

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def lineage_lock(self, model_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._lineage_locks.setdefault(model_id, threading.Lock())


class ScheduleSegmentSpec(BaseModel):
    duration: float
    covariates: dict[str, float] | None = None


class PredictRequest(BaseModel):
    state: int | list[str] = 0
    covariates: dict[str, float]
    schedule: list[ScheduleSegmentSpec] = Field(default_factory=list)
    grid_step: float = 1.0


class PlannerConfigSpec(BaseModel):
    n_stages: int = 5
    stage_length: float = 1.0
    smoothness: float = 0.05
    mode: str = "binary"
    adherence_window: float = 1.0
    risk_adjusted: bool = False

    def build(self) -> PlannerConfig:
        return PlannerConfig(
            n_stages=self.n_stages, stage_length=self.stage_length,
            smoothness=self.smoothness, mode=self.mode,
            adherence_window=self.adherence_window, risk_adjusted=self.risk_adjusted,
        )


class PlanRequest(BaseModel):
    state: int | list[str] = 0
    covariates: dict[str, float]
    epochs: list[float] = Field(default_factory=list)
    horizon: float = 10.0
    config: PlannerConfigSpec = Field(default_factory=PlannerConfigSpec)
    bounds: dict[str, tuple[float, float]] = Field(default_factory=dict)
    grid_step: float = 1.0


class FitRequest(BaseModel):
    dataset_path: str
    lam: float = 0.0
    lambda_grid: list[float] | None = None
    prune_epsilon: float = 1e-3
    pilot_ridge: float = 1e-4
    norm_floor: float = 1e-6


class UpdateRequest(BaseModel):
    dataset_path: str
    learning_rate: float
    batch_size: int = 32
    max_epochs: int = 100
    param_tol: float = 1e-6
    lam: float = 0.0


class PatientSpec(BaseModel):
    patient_id: str
    state: int | list[str] = 0
    covariates: dict[str, float]
    history: list[dict] = Field(default_factory=list)


def _fit_report_payload(report) -> dict:
    return {
        "objective": report.objective,
        "log_lik": report.log_lik,
        "n_records": report.n_records,
        "converged": report.converged,
        "flagged_conditions": list(report.flagged_conditions),
        "children": {
            c: {"iterations": r.iterations, "grad_norm": r.grad_norm,
                "converged": r.converged, "zero_events": r.zero_events}
            for c, r in report.children.items()
        },
    }


def _traj_payload(result) -> dict:
    return {
        "times": result.times.tolist(),
        "conditions": list(result.condition_codes),
        "marginals": {
            code: result.marginal_series(code).tolist() for code in result.condition_codes
        },
    }


def _plan_payload(p) -> dict:
    return {
        "stages": p.stages.tolist(),
        "objective": p.objective,
        "stage_risks": list(p.stage_risks),
        "mode": p.mode,
        "converged": p.converged,
    }


def create_app(model_dir, preload_presets: tuple[str, ...] = (),
               demo_patients: tuple[dict, ...] = ()) -> FastAPI:
    app = FastAPI(title="mccplan service", version="1.0.0")
    store = ModelStore(model_dir)
    patients: dict[str, dict] = {}
    patients_lock = threading.Lock()

    for name in preload_presets:
        if name not in PRESET_NAMES:
            raise ValidationError(f"unknown preset {name!r}", ["preload_presets"])
        store.save(preset_model(name))
    for doc in demo_patients:
        patients[doc["patient_id"]] = dict(doc)

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=422,
            content={"detail": f"file not found: {exc.filename or exc}"},
        )

    @app.exception_handler(MccPlanError)
    async def _mccplan_error(request: Request, exc: MccPlanError):
        if isinstance(exc, (BoundsError, CapacityError)):
            payload = {"detail": str(exc)}
            if isinstance(exc, BoundsError):
                payload["offending"] = exc.offending
            return JSONResponse(status_code=409, content=payload)
        payload = {"detail": str(exc)}
        if isinstance(exc, ValidationError):
            payload["fields"] = exc.fields
        if isinstance(exc, SchemaError):
            payload["line"] = exc.line
            payload["field"] = exc.field
        return JSONResponse(status_code=422, content=payload)

    def _load_model(model_id: str) -> FctbnModel:
        try:
            return store.load(model_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id}")

    def _vector(model: FctbnModel, covariates: dict[str, float]) -> RiskFactorVector:
        try:
            return RiskFactorVector.from_dict(model.layout, covariates)
        except CovariateLayoutError as e:
            raise ValidationError(str(e), ["covariates"]) from None

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/models")
    def list_models():
        return {"models": store.list_ids()}

    @app.post("/models")
    def fit_model(req: FitRequest):
        dataset = read_dataset(req.dataset_path)
        reg = RegularizationSpec(
            lam=req.lam, prune_epsilon=req.prune_epsilon,
            pilot_ridge=req.pilot_ridge, norm_floor=req.norm_floor,
        )
        path_payload = None
        if req.lambda_grid is not None:
            path = structure_path(dataset, req.lambda_grid, reg)
            model, report = path.best.model, path.best.report
            path_payload = [
                {"lam": e.lam, "edges": [list(g) for g in e.edges], "score": e.score}
                for e in path.entries
            ]
        else:
            model, report = fit_mle(dataset, reg)
        model_id = store.save(model)
        return {
            "model_id": model_id,
            "report": _fit_report_payload(report),
            "path": path_payload,
        }

    @app.get("/models/{model_id}")
    def get_model(model_id: str):
        model = _load_model(model_id)
        return {
            "model_id": model_id,
            "edges": [list(e) for e in model.edges()],
            "model": json.loads(canonical_model_json(model)),
        }

    @app.post("/models/{model_id}/predict")
    def predict(model_id: str, req: PredictRequest):
        model = _load_model(model_id)
        state = model.condition_set.state_of(req.state)
        base = _vector(model, req.covariates)
        schedule = []
        segment_intensities = []
        for seg in req.schedule:
            z = base if seg.covariates is None else _vector(model, seg.covariates)
            schedule.append((seg.duration, z))
            segment_intensities.append(
                {c: q for c, q in state_intensities(model, state, z).items()}
            )
        result = forward_trajectory(model, state, schedule, grid_step=req.grid_step)
        payload = _traj_payload(result)
        payload["model_id"] = model_id
        payload["segment_intensities"] = segment_intensities
        return payload

    @app.post("/models/{model_id}/plan")
    def plan_endpoint(model_id: str, req: PlanRequest):
        model = _load_model(model_id)
        state = model.condition_set.state_of(req.state)
        z = _vector(model, req.covariates)
        config = req.config.build()
        bounds = BehaviorBounds.from_dict(model.layout.modifiable, dict(req.bounds))
        run = receding_horizon_run(model, state, z, req.epochs, req.horizon, config, bounds)
        baseline = forward_trajectory(
            model, state, [(seg.duration, seg.z) for seg in run.baseline_segments],
            grid_step=req.grid_step,
        )
        intervened = forward_trajectory(
            model, state, run.piecewise_schedule(), grid_step=req.grid_step
        )
        return {
            "model_id": model_id,
            "epochs": list(run.epochs),
            "plans": [_plan_payload(p) for p in run.plans],
            "schedule": [
                {"t_start": seg.t_start, "t_end": seg.t_end,
                 "covariates": seg.z.to_dict(), "intervened": seg.intervened}
                for seg in run.segments
            ],
            "change_points": list(run.change_points()),
            "baseline": _traj_payload(baseline),
            "intervened": _traj_payload(intervened),
            "sensitivity": [
                {"behavior": e.behavior, "risk_at_low": e.risk_at_low,
                 "risk_at_high": e.risk_at_high, "delta": e.delta}
                for e in sensitivity_report(model, state, z, config.stage_length, bounds)
            ],
        }

    @app.post("/models/{model_id}/update")
    def update_model(model_id: str, req: UpdateRequest):
        model = _load_model(model_id)
        batch = read_dataset(req.dataset_path)
        cfg = OnlineUpdateConfig(
            learning_rate=req.learning_rate, batch_size=req.batch_size,
            max_epochs=req.max_epochs, param_tol=req.param_tol,
        )
        reg = RegularizationSpec(lam=req.lam)
        with store.lineage_lock(model_id):
            updated, report = online_update(model, batch, cfg, reg)
            new_id = store.save(updated)
        return {
            "model_id": new_id,
            "parent_id": model_id,
            "report": {
                "epochs": report.epochs,
                "objective": report.objective,
                "param_change": report.param_change,
                "converged": report.converged,
            },
        }

    @app.get("/patients")
    def list_patients():
        with patients_lock:
            return {"patients": [patients[k] for k in sorted(patients)]}

    @app.post("/patients")
    def create_patient(req: PatientSpec):
        doc = {
            "patient_id": req.patient_id,
            "state": req.state,
            "covariates": req.covariates,
            "history": req.history,
        }
        with patients_lock:
            if req.patient_id in patients:
                raise HTTPException(
                    status_code=409, detail=f"patient {req.patient_id} already exists"
                )
            patients[req.patient_id] = doc
        return doc

    @app.get("/patients/{patient_id}")
    def get_patient(patient_id: str):
        with patients_lock:
            if patient_id not in patients:
                raise HTTPException(status_code=404, detail=f"unknown patient {patient_id}")
            return patients[patient_id]

    return app


def default_demo_patients() -> tuple[dict, ...]:
    """Small fixed registry for demos and the UI; ages span the ordinal codes."""
    base = {"diet": 0.0, "exercise": 0.0, "tobacco": 1.0, "alcohol": 0.0,
            "gender": 1.0, "education": 1.0, "marital": 1.0}
    docs = []
    for age in range(3):
        docs.append({
            "patient_id": f"demo-{age}",
            "state": ["OB"] if age else [],
            "covariates": {**base, "age_group": float(age * 2)},
            "history": [],
        })
    return tuple(docs)
