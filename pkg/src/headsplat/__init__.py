"""headsplat: animatable, compositable 3D Gaussian-splat head scenes.

Library surface, one module per subsystem:

- ``quaternion``, ``rigid``, ``sh``: geometric/numeric primitives
- ``headmodel``, ``meshraster``: parametric head + mesh depth
- ``cloud``, ``splatio``, ``binding``: Gaussian storage, file I/O, mesh binding
- ``rasterizer``: tiled forward splatting, reference oracle, backward pass
- ``optimizer``, ``guidance``: masked appearance transfer from 2D guidance
- ``alignment``: closed-form head-to-background rigid alignment
- ``scenetools``: multi-view mask voting and person removal
- ``config``, ``scene``, ``track``: engine config, scene bundles, animation
- ``service``, ``cli``: live streaming endpoint and batch commands
"""

__version__ = "0.1.0"

from .camera import CameraRig
from .cloud import GaussianCloud, merge_scenes
from .errors import (
    HeadsplatError,
    InvalidInputError,
    InvariantError,
    NumericalError,
    ParseError,
)
from .headmodel import HeadModel, HeadParams, PosedMesh
from .rasterizer import RenderOptions, RenderOutput, SplatArrays, render, render_reference
from .rigid import RigidTransform

__all__ = [
    "CameraRig",
    "GaussianCloud",
    "HeadModel",
    "HeadParams",
    "HeadsplatError",
    "InvalidInputError",
    "InvariantError",
    "NumericalError",
    "ParseError",
    "PosedMesh",
    "RenderOptions",
    "RenderOutput",
    "RigidTransform",
    "SplatArrays",
    "merge_scenes",
    "render",
    "render_reference",
]
