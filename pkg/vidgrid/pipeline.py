"""End-to-end runs: inputs, warping, Stage A, Stage B and the manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vidgrid.backends.base import DenoiserBackend
from vidgrid.backends.factory import make_backend
from vidgrid.config import PipelineConfig, config_digest
from vidgrid.errors import InvalidInputError, StageError, VidgridError
from vidgrid.geometry.camera import Intrinsics
from vidgrid.geometry.trajectory import Trajectory
from vidgrid.grid import Grid4D, stage_a_keyframes, stage_b_fill
from vidgrid.io.frames import load_depth, load_frame
from vidgrid.io.manifest import GridManifest, write_grid
from vidgrid.sampling.noise import NoiseSource
from vidgrid.scene import SyntheticScene
from vidgrid.warp import WarpedGrid, warp_video_row

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PipelineInputs:
    row: np.ndarray  # (F, H, W, C) float32
    depths: np.ndarray  # (F, H, W) float32
    trajectory: Trajectory
    intrinsics: Intrinsics
    scene: SyntheticScene | None = None
    # ground-truth grid, only for synthetic scenes
    truth: np.ndarray | None = None
    truth_depths: np.ndarray | None = None


@dataclass(eq=False)
class PipelineResult:
    config: PipelineConfig
    digest: str
    inputs: PipelineInputs
    warped: WarpedGrid
    grid: Grid4D
    manifest: GridManifest | None = None


def _stage(name: str):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except VidgridError as e:
                raise e.with_context(stage=name)
            except Exception as e:
                raise StageError(f"{name} failed: {e}", stage=name) from e

        return run

    return wrap


@_stage("inputs")
def prepare_inputs(config: PipelineConfig) -> PipelineInputs:
    g = config.grid
    trajectory = config.trajectory.build(g.n_views)
    K = config.intrinsics_for_grid()
    scene = config.build_scene()
    truth = truth_depths = None
    if scene is not None:
        try:
            scene.validate_in_frustum(trajectory, K)
        except InvalidInputError as e:
            logger.warning(f"Foreground leaves some views: {e}")
        truth, truth_depths = scene.render_grid(trajectory, K)
    if config.input is not None:
        row = np.stack([load_frame(p) for p in config.input.frames])
        depths = np.stack([load_depth(p) for p in config.input.depths])
        expected = (g.n_frames, g.height, g.width, g.channels)
        if row.shape != expected or depths.shape != expected[:3]:
            raise InvalidInputError(
                "input video does not match the grid config",
                frames=row.shape,
                depths=depths.shape,
                expected=expected,
            )
    else:
        row, depths = truth[0], truth_depths[0]
    return PipelineInputs(
        row.astype(np.float32),
        depths.astype(np.float32),
        trajectory,
        K,
        scene,
        truth,
        truth_depths,
    )


@_stage("warp")
def warp_inputs(inputs: PipelineInputs) -> WarpedGrid:
    logger.info(
        f"Warping {len(inputs.row)} frames into {inputs.trajectory.n_views} views"
    )
    return warp_video_row(
        list(inputs.row), list(inputs.depths), inputs.trajectory, inputs.intrinsics
    )


def _execute(
    config: PipelineConfig,
    backend: DenoiserBackend | None,
    stages: str,
) -> PipelineResult:
    digest = config_digest(config)
    inputs = prepare_inputs(config)
    warped = warp_inputs(inputs)
    grid = Grid4D.from_warp(inputs.row, warped)
    settings = config.settings()
    rng = NoiseSource(config.seed)
    owned = backend is None
    if owned:
        backend = make_backend(config.backend, inputs.truth)
    try:
        stage_a_keyframes(grid, warped, backend, settings, rng.child("stage_a"))
        if stages == "all":
            logger.info("Stage B: filling the interior")
            stage_b_fill(grid, warped, backend, settings, rng.child("stage_b"))
    finally:
        if owned:
            backend.close()
    return PipelineResult(config, digest, inputs, warped, grid)


def run_keyframes(
    config: PipelineConfig,
    out_dir: str | Path | None = None,
    backend: DenoiserBackend | None = None,
) -> PipelineResult:
    """Stage A only; unknown interior cells keep their warped views."""
    result = _execute(config, backend, "keyframes")
    if out_dir is not None:
        result.manifest = _write(result, out_dir)
    return result


def run_pipeline(
    config: PipelineConfig,
    out_dir: str | Path | None = None,
    backend: DenoiserBackend | None = None,
) -> PipelineResult:
    """Complete grid; writes the manifest and cell files when ``out_dir`` is given."""
    result = _execute(config, backend, "all")
    if not result.grid.is_complete():
        raise StageError("grid incomplete after Stage B", stage="b")
    if out_dir is not None:
        result.manifest = _write(result, out_dir)
    return result


@_stage("manifest")
def _write(result: PipelineResult, out_dir: str | Path) -> GridManifest:
    return write_grid(
        out_dir,
        result.grid,
        result.config.seed,
        result.digest,
        result.config.trajectory.model_dump(mode="json"),
        result.config.output.bit_depth,
    )
