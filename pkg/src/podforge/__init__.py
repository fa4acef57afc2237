"""Synthetic overlapping-object scene generation, export and evaluation."""

from podforge.assets import (
    BackgroundAsset,
    BackgroundPool,
    PodAsset,
    PodPool,
    load_background_pool,
    load_pod_pool,
    zero_pad,
)
from podforge.errors import (
    CorruptScene,
    InsufficientScenes,
    InvalidArgument,
    InvalidAsset,
    IoError,
    PodforgeError,
    PoolEmpty,
    Undefined,
)
from podforge.generator import (
    GenerationConfig,
    Placement,
    Scene,
    SceneInstance,
    compose_scene,
    generate_scenes,
    mask_color,
    render_overlay,
)

__version__ = "0.1.0"

__all__ = [
    "BackgroundAsset",
    "BackgroundPool",
    "CorruptScene",
    "GenerationConfig",
    "InsufficientScenes",
    "InvalidArgument",
    "InvalidAsset",
    "IoError",
    "Placement",
    "PodAsset",
    "PodPool",
    "PodforgeError",
    "PoolEmpty",
    "Scene",
    "SceneInstance",
    "Undefined",
    "compose_scene",
    "generate_scenes",
    "load_background_pool",
    "load_pod_pool",
    "mask_color",
    "render_overlay",
    "zero_pad",
]
