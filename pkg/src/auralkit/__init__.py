"""Scene-aware spatial room impulse responses: image-source low-order
reflections, parametric SRIR synthesis, metrics and a toy multimodal model."""

from .ambisonics import AmbisonicIR, a_to_b_format, b_to_a_format, encode_contribution, read_ir, write_ir
from .config import load_config
from .ga import check_visibility, compute_lor, enumerate_image_sources, simulate_reference
from .scene import (
    Face,
    PositionPair,
    SceneGraph,
    load_scene,
    make_furnished_room,
    make_shoebox,
    normalize_adjacency,
    save_scene,
)

__version__ = "0.1.0"

__all__ = [
    "AmbisonicIR", "Face", "PositionPair", "SceneGraph",
    "a_to_b_format", "b_to_a_format", "check_visibility", "compute_lor", "encode_contribution",
    "enumerate_image_sources", "load_config", "load_scene", "make_furnished_room", "make_shoebox",
    "normalize_adjacency", "read_ir", "save_scene", "simulate_reference", "write_ir",
]
