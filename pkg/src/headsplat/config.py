"""Engine configuration: rasterizer constants + optimizer defaults + paths.

A config file is JSON with any subset of the known keys; absent keys take
the documented defaults. Every run writes the fully-resolved config next
to its outputs, and resolving is a fixed point: loading an emitted config
resolves to the identical dict.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ParseError
from .optimizer import OptimConfig
from .rasterizer import RenderOptions


@dataclass(frozen=True)
class EngineConfig:
    rasterizer: RenderOptions = field(default_factory=RenderOptions)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    paths: dict = field(default_factory=dict)


def resolved_dict(config: EngineConfig) -> dict:
    out = {
        "rasterizer": asdict(config.rasterizer),
        "optimizer": asdict(config.optimizer),
        "paths": dict(config.paths),
    }
    out["rasterizer"]["background"] = list(config.rasterizer.background)
    return out


def config_from_dict(data: dict) -> EngineConfig:
    known = {"rasterizer", "optimizer", "paths"}
    unknown = set(data) - known
    if unknown:
        raise ParseError(f"unknown config sections: {', '.join(sorted(unknown))}")

    rast_kwargs = dict(data.get("rasterizer", {}))
    opt_kwargs = dict(data.get("optimizer", {}))
    try:
        if "background" in rast_kwargs:
            rast_kwargs["background"] = tuple(float(v) for v in rast_kwargs["background"])
        rasterizer = RenderOptions(**rast_kwargs)
        optimizer = OptimConfig(**opt_kwargs)
    except TypeError as exc:
        raise ParseError(f"unknown config key: {exc}") from exc
    return EngineConfig(rasterizer=rasterizer, optimizer=optimizer, paths=dict(data.get("paths", {})))


def load_config(path=None) -> EngineConfig:
    """Load a config file; None or a missing 'path' yields pure defaults."""
    if path is None:
        return EngineConfig()
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(path, config: EngineConfig) -> None:
    with open(path, "w") as fh:
        json.dump(resolved_dict(config), fh, indent=2, sort_keys=True)
