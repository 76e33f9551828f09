"""Radar-camera bird's-eye-view fusion: geometry, radar preprocessing, BEV
grids, lift-splat, fusion, detection head, nuScenes-style metrics and a
deterministic synthetic scene generator."""

from .bev import BevGrid, GridSpec
from .boxes import CLASSES, Box3D
from .errors import SchemaError, ValidationError
from .geometry import CameraModel, RigidTransform, compose, invert, transform_points
from .metrics import EvalConfig, evaluate, nds
from .pipeline import PipelineConfig, run_pipeline, run_scene
from .synth import SceneConfig, generate_scene

__all__ = [
    "BevGrid",
    "Box3D",
    "CLASSES",
    "CameraModel",
    "EvalConfig",
    "GridSpec",
    "PipelineConfig",
    "RigidTransform",
    "SceneConfig",
    "SchemaError",
    "ValidationError",
    "compose",
    "evaluate",
    "generate_scene",
    "invert",
    "nds",
    "run_pipeline",
    "run_scene",
    "transform_points",
]

__version__ = "0.1.0"
