"""Write a self-contained fixture set: scene images, a manifest, recorded backend
calls and a config file that replays them."""

from __future__ import annotations

import json
import tempfile
from dataclasses import asdict, replace
from pathlib import Path
from typing import Iterable

from ..gateway import RecordingTransport, backends_from_transports
from ..model import PipelineConfig
from ..pipeline import Pipeline
from .oracle import OracleTransport, oracle_config, oracle_transports
from .scene import SyntheticScene, generate_scene, write_scene

BACKEND_FIELDS = ("mllm_backend", "llm_backend", "detector_backend", "dense_caption_backend",
                  "segmenter_backend", "depth_backend", "embedder_backend")


def config_to_toml(config: PipelineConfig) -> str:
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, str):
            lines.append(f"{key} = {json.dumps(value)}")
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def write_fixture_set(directory: str | Path, seeds: Iterable[int], n_objects: int = 3,
                      n_distractors: int = 2, scenes: Iterable[SyntheticScene] | None = None) -> Path:
    """Generate scenes and record every backend call a full run makes.

    Layout::

        <dir>/images/<id>.pgm, <id>.json   scene pixels + ground truth
        <dir>/manifest.jsonl               {id, path, width, height} per scene
        <dir>/fixtures/calls/<digest>.json recorded responses
        <dir>/config.toml                  replays the fixtures

    Returns the config path.
    """
    directory = Path(directory).resolve()
    scenes = list(scenes) if scenes is not None else [generate_scene(s, n_objects, n_distractors) for s in seeds]
    images = [write_scene(scene, directory / "images") for scene in scenes]
    manifest = directory / "manifest.jsonl"
    manifest.write_text("".join(
        json.dumps({"id": img.id, "path": str(Path(img.pixel_source).relative_to(directory)),
                    "width": img.width, "height": img.height}) + "\n"
        for img in images))

    fixtures = directory / "fixtures"
    config = replace(oracle_config(), **{f: "fixture:fixtures" for f in BACKEND_FIELDS})
    recorder = RecordingTransport(OracleTransport(scenes), fixtures)
    backends = backends_from_transports(config, oracle_transports(recorder), sleep=lambda _s: None)
    with tempfile.TemporaryDirectory() as scratch:
        Pipeline(config, backends).run(images, Path(scratch) / "dataset.jsonl", parallelism=1)
    for img in images:  # embeddings are not part of a pipeline run
        backends.embedder.embed_image(img, "oracle-embed/1")

    path = directory / "config.toml"
    path.write_text(config_to_toml(config))
    return path
