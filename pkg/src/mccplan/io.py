"""File formats: JSON-lines datasets and single-document model files.

Writers are atomic (temp file + rename) and deterministic: sorted keys,
stable float repr. Readers fail with line numbers and field names so bad
files are fixable without a debugger.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .conditions import ConditionSet, CovariateLayout, RiskFactorVector
from .dataset import TransitionRecord, TrajectoryDataset
from .errors import DataError, MccPlanError, SchemaError
from .model import FctbnModel

DATASET_FORMAT = "mccplan-dataset"
MODEL_FORMAT = "mccplan-model"
FORMAT_VERSION = 1

_EDGE_KEY = re.compile(r"^(?P<parent>[^-]+)->(?P<child>.+)$")


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_format(doc: dict, expected: str, line: int | None = None):
    if doc.get("format") != expected:
        raise SchemaError(f"expected format {expected!r}, found {doc.get('format')!r}",
                          line=line, field="format")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(
            f"format_version {version!r} is not supported (this build reads version "
            f"{FORMAT_VERSION}); regenerate or upgrade the file",
            line=line, field="format_version",
        )


def _layout_to_dict(layout: CovariateLayout) -> dict:
    return {
        "modifiable": list(layout.modifiable),
        "fixed": list(layout.fixed),
        "edge_interactions": list(layout.edge_interactions),
    }


def _layout_from_dict(doc: dict, line: int | None = None) -> CovariateLayout:
    for key in ("modifiable", "fixed"):
        if key not in doc:
            raise SchemaError(f"covariates section missing {key!r}", line=line, field=key)
    return CovariateLayout(
        tuple(doc["modifiable"]), tuple(doc["fixed"]),
        tuple(doc.get("edge_interactions", ())),
    )


def write_dataset(dataset: TrajectoryDataset, path):
    header = {
        "format": DATASET_FORMAT,
        "format_version": FORMAT_VERSION,
        "conditions": list(dataset.condition_set.codes),
        "covariates": _layout_to_dict(dataset.layout),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for rec in dataset.records:
        lines.append(json.dumps({
            "patient_id": rec.patient_id,
            "t_start": rec.t_start,
            "t_end": rec.t_end,
            "state": rec.parent_config,
            "covariates": rec.z.to_dict(),
            "outcome": rec.outcome,
        }, sort_keys=True))
    _atomic_write(path, "\n".join(lines) + "\n")


def _require(doc: dict, key: str, line: int):
    if key not in doc:
        raise SchemaError(f"record missing field {key!r}", line=line, field=key)
    return doc[key]


def read_dataset(path) -> TrajectoryDataset:
    with open(path, encoding="utf-8") as f:
        raw_lines = f.read().splitlines()
    if not raw_lines:
        raise SchemaError("empty dataset file", line=1)
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", line=1) from None
    _check_format(header, DATASET_FORMAT, line=1)
    if "conditions" not in header:
        raise SchemaError("header missing 'conditions'", line=1, field="conditions")
    cs = ConditionSet(tuple(header["conditions"]))
    layout = _layout_from_dict(header.get("covariates", {}), line=1)

    records = []
    for lineno, raw in enumerate(raw_lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e.msg}", line=lineno) from None
        try:
            z = RiskFactorVector.from_dict(layout, _require(doc, "covariates", lineno))
            rec = TransitionRecord(
                patient_id=str(_require(doc, "patient_id", lineno)),
                t_start=float(_require(doc, "t_start", lineno)),
                t_end=float(_require(doc, "t_end", lineno)),
                parent_config=int(_require(doc, "state", lineno)),
                z=z,
                outcome=doc.get("outcome"),
            )
        except SchemaError:
            raise
        except (MccPlanError, ValueError, TypeError) as e:
            raise SchemaError(str(e), line=lineno) from None
        records.append(rec)
    try:
        return TrajectoryDataset(cs, layout, tuple(records))
    except DataError as e:
        m = re.match(r"record (\d+)", str(e))
        line = int(m.group(1)) + 2 if m else None
        raise SchemaError(str(e), line=line) from None


def model_to_dict(model: FctbnModel) -> dict:
    cov_names = model.layout.names
    baseline = {}
    for code, coef in model.baseline.items():
        baseline[code] = {
            "intercept": float(coef[0]),
            "coefficients": {n: float(v) for n, v in zip(cov_names, coef[1:])},
        }
    edges = {}
    for (p, c), coef in sorted(model.edge_groups.items()):
        edges[f"{p}->{c}"] = {
            "parent_effect": float(coef[0]),
            "interactions": {
                n: float(v) for n, v in zip(model.layout.edge_interactions, coef[1:])
            },
        }
    return {
        "format": MODEL_FORMAT,
        "format_version": FORMAT_VERSION,
        "conditions": list(model.condition_set.codes),
        "covariates": _layout_to_dict(model.layout),
        "baseline": baseline,
        "edges": edges,
    }


def model_from_dict(doc: dict) -> FctbnModel:
    _check_format(doc, MODEL_FORMAT)
    if "conditions" not in doc:
        raise SchemaError("model missing 'conditions'", field="conditions")
    cs = ConditionSet(tuple(doc["conditions"]))
    layout = _layout_from_dict(doc.get("covariates", {}))
    base_doc = doc.get("baseline", {})
    baseline = {}
    for code in cs.codes:
        if code not in base_doc:
            raise SchemaError(f"model missing baseline group for condition {code}",
                              field=f"baseline.{code}")
        entry = base_doc[code]
        coefs = entry.get("coefficients", {})
        unknown = [n for n in coefs if n not in layout.names]
        if unknown:
            raise SchemaError(f"baseline for {code} names unknown covariates {unknown}",
                              field=f"baseline.{code}.coefficients")
        row = [float(entry.get("intercept", 0.0))]
        row += [float(coefs.get(n, 0.0)) for n in layout.names]
        baseline[code] = np.array(row)
    edges = {}
    for key, entry in doc.get("edges", {}).items():
        m = _EDGE_KEY.match(key)
        if not m:
            raise SchemaError(f"edge key {key!r} is not of the form PARENT->CHILD",
                              field=f"edges.{key}")
        inter = entry.get("interactions", {})
        row = [float(entry.get("parent_effect", 0.0))]
        row += [float(inter.get(n, 0.0)) for n in layout.edge_interactions]
        edges[(m["parent"], m["child"])] = np.array(row)
    try:
        return FctbnModel(cs, layout, baseline, edges)
    except MccPlanError as e:
        raise SchemaError(str(e)) from None


def canonical_model_json(model: FctbnModel) -> str:
    """Stable serialization used for files and content addressing."""
    return json.dumps(model_to_dict(model), sort_keys=True, indent=2) + "\n"


def write_model(model: FctbnModel, path):
    _atomic_write(path, canonical_model_json(model))


def read_model(path) -> FctbnModel:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    return model_from_dict(doc)


def patient_from_dict(doc: dict, condition_set: ConditionSet, layout: CovariateLayout,
                      ) -> tuple[str, int, RiskFactorVector]:
    """Parse {patient_id, state, covariates}; state may be a bitmask or a
    list of condition codes."""
    if "covariates" not in doc:
        raise SchemaError("patient missing 'covariates'", field="covariates")
    state = condition_set.state_of(doc.get("state", 0))
    z = RiskFactorVector.from_dict(layout, doc["covariates"])
    return str(doc.get("patient_id", "anonymous")), state, z
