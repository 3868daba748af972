"""Python bindings for belt-forge."""

import json as _json

from ._core import SCHEMA, BeltForgeError, BeltParams, belt_force, derive_seed, fit_params, forward_kinematics
from . import _core


def plan(config):
    return _json.loads(_core.plan(str(config)))


def run_pipeline(config, out, seed=None):
    return _json.loads(_core.run_pipeline(str(config), str(out), seed))


__all__ = [
    "SCHEMA",
    "BeltForgeError",
    "BeltParams",
    "belt_force",
    "derive_seed",
    "fit_params",
    "forward_kinematics",
    "plan",
    "run_pipeline",
]
