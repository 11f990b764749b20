"""JSON documents exchanged between pipeline stages."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ModelParseError
from .netmodel import IegsModel
from .scenario import DispatchSpec, MeasurementSet, NoiseModel

SCENARIO_SCHEMA = "iegs-scenario/1"
MEASUREMENT_SCHEMA = "iegs-measurements/1"


def plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(doc) -> str:
    return json.dumps(plain(doc), sort_keys=True, indent=2) + "\n"


def write_doc(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def read_doc(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: invalid JSON: {exc}") from None


def read_scenario(path) -> tuple[DispatchSpec, NoiseModel]:
    doc = read_doc(path)
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ModelParseError(f"{path}: expected schema {SCENARIO_SCHEMA!r}")
    if "dispatch" not in doc:
        raise ModelParseError(f"{path}: missing dispatch")
    try:
        dispatch = DispatchSpec.from_dict(doc["dispatch"])
    except (TypeError, KeyError) as exc:
        raise ModelParseError(f"{path}: dispatch: {exc}") from None
    return dispatch, NoiseModel.from_dict(doc.get("noise", {}))


def state_doc(model: IegsModel, x) -> dict:
    return dict(zip(model.state_labels(), np.asarray(x, dtype=float).tolist()))


def measurement_doc(ms: MeasurementSet, noise: NoiseModel) -> dict:
    return {"schema": MEASUREMENT_SCHEMA, "noise": noise.to_dict(),
            "meters": [{"id": l, "z": float(z), "variance": float(v)}
                       for l, z, v in zip(ms.labels, ms.z, ms.variances)]}


def read_measurements(path, model: IegsModel) -> MeasurementSet:
    doc = read_doc(path)
    if doc.get("schema") != MEASUREMENT_SCHEMA:
        raise ModelParseError(f"{path}: expected schema {MEASUREMENT_SCHEMA!r}")
    meters = doc.get("meters", [])
    labels = [m["id"] for m in meters]
    if labels != model.meter_labels():
        raise ModelParseError(f"{path}: meters do not match the model's measurement plan")
    z = np.array([m["z"] for m in meters], dtype=float)
    var = np.array([m["variance"] for m in meters], dtype=float)
    return MeasurementSet(z, var, labels, doc.get("noise", {}).get("seed"))
