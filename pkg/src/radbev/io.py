"""File formats: scenes, submissions, radar point sets, grid dumps, kernels, config.

All JSON is written canonically (sorted keys, compact separators, shortest
round-trip float repr, NaN and infinities as null) through a temp file and
an atomic rename, so a failed write never leaves a partial file.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from . import points as P
from .bev import BevGrid, GridSpec
from .boxes import CLASSES, Box3D
from .errors import InvalidTransform, SchemaError, ValidationError
from .fusion import ConvKernel
from .geometry import RigidTransform
from .scene import CameraInfo, Frame, RadarSweep, Scene

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

GRID_MAGIC = "bevgrid/1"

_NUM = {"type": "number"}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_VEC2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_POSE = {
    "type": "object",
    "required": ["rotation", "translation"],
    "additionalProperties": False,
    "properties": {"rotation": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4}, "translation": _VEC3},
}
_BOX = {
    "type": "object",
    "required": ["class", "center", "size_wlh", "yaw", "velocity", "attribute"],
    "additionalProperties": False,
    "properties": {
        "class": {"type": "string"},
        "center": _VEC3,
        "size_wlh": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "maxItems": 3},
        "yaw": _NUM,
        "velocity": _VEC2,
        "attribute": {"type": "string"},
    },
}
SCENE_SCHEMA = {
    "type": "object",
    "required": ["version", "frames"],
    "additionalProperties": False,
    "properties": {
        "version": {"type": "string"},
        "frames": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["timestamp", "ego_pose", "radars", "cameras", "annotations"],
                "additionalProperties": False,
                "properties": {
                    "timestamp": _NUM,
                    "ego_pose": _POSE,
                    "radars": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "calib", "points"],
                            "additionalProperties": False,
                            "properties": {
                                "name": {"type": "string"},
                                "calib": _POSE,
                                "points": {
                                    "type": "array",
                                    "items": {
                                        "type": "array",
                                        "items": _NUM,
                                        "minItems": P.NUM_FIELDS,
                                        "maxItems": P.NUM_FIELDS,
                                    },
                                },
                            },
                        },
                    },
                    "cameras": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "intrinsics", "extrinsics", "width", "height"],
                            "additionalProperties": False,
                            "properties": {
                                "name": {"type": "string"},
                                "intrinsics": {"type": "array", "items": _NUM, "minItems": 9, "maxItems": 9},
                                "extrinsics": _POSE,
                                "width": {"type": "integer", "minimum": 1},
                                "height": {"type": "integer", "minimum": 1},
                            },
                        },
                    },
                    "annotations": {"type": "array", "items": _BOX},
                },
            },
        },
    },
}
SUBMISSION_SCHEMA = {
    "type": "object",
    "required": ["results"],
    "properties": {
        "results": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["translation", "size_wlh", "yaw", "velocity", "class", "attribute", "score"],
                    "additionalProperties": False,
                    "properties": {
                        "translation": _VEC3,
                        "size_wlh": _BOX["properties"]["size_wlh"],
                        "yaw": _NUM,
                        "velocity": _VEC2,
                        "class": {"enum": list(CLASSES)},
                        "attribute": {"type": "string"},
                        "score": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
            },
        }
    },
}


# Canonical JSON and atomic writes


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, canonical_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"not valid JSON: {exc}") from exc


def _validate(doc, schema) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(doc))
    if err is not None:
        pointer = "".join(f"/{p}" for p in err.absolute_path)
        message = err.message
        if err.validator in ("minItems", "maxItems") and isinstance(err.instance, list):
            schema = err.schema
            want = schema.get("minItems") if schema.get("minItems") == schema.get("maxItems") else None
            message = f"has {len(err.instance)} entries, expected {want if want is not None else err.validator_value}"
        raise SchemaError(pointer, message)


# Scenes


def _pose_dict(t: RigidTransform) -> dict:
    return {"rotation": t.quaternion().tolist(), "translation": t.translation.tolist()}


def _pose(d: Mapping, pointer: str) -> RigidTransform:
    q = d["rotation"]
    if abs(math.sqrt(sum(v * v for v in q)) - 1.0) > 1e-6:
        raise SchemaError(f"{pointer}/rotation", "quaternion is not unit norm within 1e-6")
    try:
        return RigidTransform.from_quaternion(q, d["translation"])
    except InvalidTransform as exc:
        raise SchemaError(pointer, str(exc)) from exc


def box_to_dict(b: Box3D, score: bool = False) -> dict:
    out = {
        "class": b.class_name,
        "size_wlh": list(b.size),
        "yaw": b.yaw,
        "velocity": list(b.velocity),
        "attribute": b.attribute,
    }
    if score:
        out["translation"] = list(b.center)
        out["score"] = b.score
    else:
        out["center"] = list(b.center)
    return out


def box_from_dict(d: Mapping, pointer: str = "") -> Box3D:
    try:
        return Box3D(
            center=d["translation"] if "translation" in d else d["center"],
            size=d["size_wlh"],
            yaw=d["yaw"],
            velocity=d["velocity"],
            class_name=d["class"],
            attribute=d["attribute"],
            score=d.get("score", 1.0),
        )
    except ValueError as exc:
        raise SchemaError(pointer, str(exc)) from exc


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": scene.version,
        "frames": [
            {
                "timestamp": f.timestamp,
                "ego_pose": _pose_dict(f.ego_pose),
                "radars": [
                    {"name": r.name, "calib": _pose_dict(r.calib), "points": np.asarray(r.points)[:, : P.NUM_FIELDS].tolist()}
                    for r in f.radars
                ],
                "cameras": [
                    {
                        "name": c.name,
                        "intrinsics": np.asarray(c.intrinsics).reshape(-1).tolist(),
                        "extrinsics": _pose_dict(c.calib),
                        "width": c.width,
                        "height": c.height,
                    }
                    for c in f.cameras
                ],
                "annotations": [box_to_dict(b) for b in f.annotations],
            }
            for f in scene.frames
        ],
    }


def scene_from_dict(doc) -> Scene:
    """Validated scene; camera ``extrinsics`` in the file are camera-to-ego poses."""
    _validate(doc, SCENE_SCHEMA)
    frames = []
    for fi, f in enumerate(doc["frames"]):
        base = f"/frames/{fi}"
        radars = [
            RadarSweep(r["name"], _pose(r["calib"], f"{base}/radars/{ri}/calib"),
                       np.array(r["points"], dtype=np.float64).reshape(-1, P.NUM_FIELDS))
            for ri, r in enumerate(f["radars"])
        ]
        cameras = [
            CameraInfo(c["name"], np.array(c["intrinsics"], dtype=np.float64).reshape(3, 3),
                       _pose(c["extrinsics"], f"{base}/cameras/{ci}/extrinsics"), c["width"], c["height"])
            for ci, c in enumerate(f["cameras"])
        ]
        boxes = [box_from_dict(a, f"{base}/annotations/{ai}") for ai, a in enumerate(f["annotations"])]
        frames.append(Frame(float(f["timestamp"]), _pose(f["ego_pose"], f"{base}/ego_pose"), radars, cameras, boxes))
    if not frames[0].radars:
        raise SchemaError("/frames/0/radars", "the keyframe needs at least one radar")
    return Scene(frames, doc["version"])


def write_scene(scene: Scene, path) -> None:
    write_json(path, scene_to_dict(scene))


def parse_scene(path) -> Scene:
    return scene_from_dict(read_json(path))


# Submissions and reports


def write_submission(results: Mapping[str, Sequence[Box3D]], path) -> None:
    write_json(path, {"results": {k: [box_to_dict(b, score=True) for b in v] for k, v in results.items()}})


def parse_submission(path) -> dict[str, list[Box3D]]:
    doc = read_json(path)
    _validate(doc, SUBMISSION_SCHEMA)
    return {
        k: [box_from_dict(b, f"/results/{k}/{i}") for i, b in enumerate(v)]
        for k, v in doc["results"].items()
    }


# Radar point sets


POINT_COLUMNS = (*P.RADAR_FIELDS, "sweep_index")


def write_points(points: np.ndarray, path) -> None:
    write_json(path, {"fields": list(POINT_COLUMNS), "points": np.asarray(points).tolist()})


def parse_points(path) -> np.ndarray:
    doc = read_json(path)
    if not isinstance(doc, Mapping) or doc.get("fields") != list(POINT_COLUMNS):
        raise SchemaError("/fields", f"expected fields {list(POINT_COLUMNS)}")
    rows = doc.get("points")
    if not isinstance(rows, list):
        raise SchemaError("/points", "expected a list of rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(POINT_COLUMNS):
            raise SchemaError(f"/points/{i}", f"expected {len(POINT_COLUMNS)} numbers")
    return np.array(rows, dtype=np.float64).reshape(-1, len(POINT_COLUMNS))


# Grid dumps: one JSON header line, then little-endian float64 data row-major


def write_grid(grid: BevGrid, path) -> None:
    header = {"format": GRID_MAGIC, "spec": grid.spec.to_dict(), "shape": list(grid.data.shape), "dtype": "<f8"}
    atomic_write(path, canonical_json(header).encode("utf-8") + grid.data.astype("<f8").tobytes(order="C"))


def read_grid(path) -> BevGrid:
    with open(path, "rb") as fh:
        line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError("", f"bad grid header: {exc}") from exc
    if not isinstance(header, Mapping) or header.get("format") != GRID_MAGIC:
        raise SchemaError("/format", f"expected {GRID_MAGIC!r}")
    spec = GridSpec(**header["spec"])
    if tuple(header["shape"]) != spec.shape or len(body) != 8 * int(np.prod(spec.shape)):
        raise SchemaError("/shape", "payload size does not match the grid spec")
    return BevGrid(spec, np.frombuffer(body, dtype="<f8").reshape(spec.shape).astype(np.float64))


# Kernels: {"shape": [kh, kw, c_in, c_out], "weights": [...row-major...], "bias": [...]}


def kernel_to_dict(k: ConvKernel) -> dict:
    return {"shape": list(k.weights.shape), "weights": k.weights.reshape(-1).tolist(), "bias": k.bias.tolist()}


def kernel_from_dict(d: Mapping, pointer: str = "") -> ConvKernel:
    try:
        shape = [int(v) for v in d["shape"]]
        w = np.array(d["weights"], dtype=np.float64)
        if w.size != int(np.prod(shape)):
            raise SchemaError(f"{pointer}/weights", f"{w.size} weights for shape {shape}")
        return ConvKernel(w.reshape(shape), d["bias"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(pointer, f"bad kernel: {exc}") from exc


def write_kernels(kernels: Mapping[str, ConvKernel], path) -> None:
    write_json(path, {name: kernel_to_dict(k) for name, k in kernels.items()})


def parse_kernels(path) -> dict[str, ConvKernel]:
    doc = read_json(path)
    if not isinstance(doc, Mapping):
        raise SchemaError("", "expected an object of named kernels")
    return {name: kernel_from_dict(d, f"/{name}") for name, d in doc.items()}


# Config


def default_config_text() -> str:
    return resources.files("radbev").joinpath("default_config.toml").read_text(encoding="utf-8")


def load_config(path=None) -> dict[str, Any]:
    """Shipped defaults overlaid with a TOML (or JSON, by extension or on TOML failure) file."""
    base = tomllib.loads(default_config_text())
    if path is None:
        return base
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        user = json.loads(text)
    else:
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            try:
                user = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: neither TOML nor JSON") from exc
    if not isinstance(user, Mapping):
        raise ValidationError(f"{path}: config must be a table")
    return _merge(base, user)


def _merge(base: Mapping, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) else v
    return out
