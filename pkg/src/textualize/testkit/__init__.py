"""Synthetic scenes, ground-truth backends and brute-force oracles for offline verification."""

from .brute import BruteMeasure, brute_force_measures, brute_minmax
from .fixtures import config_to_toml, write_fixture_set
from .oracle import (
    EMBED_TAGS,
    RECAPTION_PREFIX,
    FlakyTransport,
    OracleTransport,
    oracle_backends,
    oracle_config,
    oracle_transports,
    recaption_sentence,
)
from .scene import (
    BACKGROUND_DEPTH,
    SceneObject,
    SyntheticScene,
    build_scene,
    generate_scene,
    read_pgm,
    render_pixels,
    scene_sidecar,
    write_pgm,
    write_scene,
)

__all__ = [
    "BACKGROUND_DEPTH", "BruteMeasure", "EMBED_TAGS", "FlakyTransport", "OracleTransport", "RECAPTION_PREFIX",
    "SceneObject", "SyntheticScene", "brute_force_measures", "brute_minmax", "build_scene", "config_to_toml", "generate_scene",
    "oracle_backends", "oracle_config", "oracle_transports", "read_pgm", "recaption_sentence", "render_pixels",
    "scene_sidecar", "write_fixture_set", "write_pgm", "write_scene",
]
