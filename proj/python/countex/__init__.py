"""Prompted counting with negative-query refinement on synthetic scenes."""

import json

from countex._core import (
    ConfigError,
    ContractError,
    IoError,
    NumericError,
    SchemaError,
    ShapeError,
    count,
    default_config,
    generate_scene,
    gradcheck,
    hungarian,
    metrics,
    render_density,
    run,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "IoError",
    "NumericError",
    "SchemaError",
    "ShapeError",
    "count",
    "default_config",
    "generate_scene",
    "gradcheck",
    "hungarian",
    "metrics",
    "render_density",
    "run",
    "scene",
]


def scene(config=None, scene_id="s00000", seed=0):
    """Generate one scene and return it as a dict."""
    text = json.dumps(config) if config else ""
    return json.loads(generate_scene(text, scene_id, seed))
