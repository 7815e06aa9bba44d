#!/usr/bin/env python3
"""Shared fixtures: a small two-layer scene with exact integer parallax."""

import sys
from pathlib import Path

import numpy as np
import pytest

from vidgrid.config import validate_config
from vidgrid.geometry.camera import Intrinsics
from vidgrid.geometry.trajectory import make_translate_trajectory
from vidgrid.scene import SyntheticScene

ROOT = Path(__file__).resolve().parents[1]

# 16x16 frames, focal 16: the background (z=4) moves 1 px per view, the
# foreground (z=2) moves 2 px per view
SMALL = {
    "seed": 0,
    "grid": {"n_views": 3, "n_frames": 3, "width": 16, "height": 16, "channels": 3},
    "trajectory": {"kind": "translate", "offset": [0.5, 0.0, 0.0]},
    "intrinsics": {"focal": 16.0},
    "sampler": {"steps": 4},
    "scene": {
        "fg_size": [4, 4],
        "fg_start": [5, 6],
        "velocity": [1, 0],
        "checker": 3,
    },
    "backend": {"kind": "ideal"},
}


def small_config(**blocks):
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in SMALL.items()}
    for key, value in blocks.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return validate_config(data)


def write_toml(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


SMALL_TOML = """
seed = 0

[grid]
n_views = 3
n_frames = 3
width = 16
height = 16

[trajectory]
kind = "translate"
offset = [0.5, 0.0, 0.0]

[intrinsics]
focal = 16.0

[sampler]
steps = 4

[scene]
fg_size = [4, 4]
fg_start = [5, 6]
velocity = [1, 0]
checker = 3

[backend]
kind = "{backend}"
"""


@pytest.fixture
def small_toml(tmp_path):
    """Path to a small ideal-backend config on disk."""
    return write_toml(tmp_path / "small.toml", SMALL_TOML.format(backend="ideal"))


@pytest.fixture
def scene():
    return SyntheticScene(
        width=16,
        height=16,
        n_frames=3,
        fg_size=(4, 4),
        fg_start=(5, 6),
        velocity=(1, 0),
        checker=3,
        focal=16.0,
    )


@pytest.fixture
def K():
    return Intrinsics.centered(16, 16, 16.0)


@pytest.fixture
def trajectory():
    return make_translate_trajectory((0.5, 0.0, 0.0), 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def child_env(monkeypatch):
    """Make the package importable from backend child processes."""
    monkeypatch.setenv("PYTHONPATH", str(ROOT))
    return sys.executable
