"""The N×F camera-time grid and the two stages that fill it.

Stage A generates the boundary: the first column (novel views of the first frame),
the last row (the last view's video) and the last column (novel views of the last
frame). Stage B fills the interior by alternating bidirectional steps along every
column and every row, one noise level at a time.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from vidgrid.backends.base import Condition, DenoiserBackend
from vidgrid.errors import InvalidInputError, StageError, VidgridError
from vidgrid.sampling.bidi import BidiStepConfig, Pins, bidi_step, interpolate_clip
from vidgrid.sampling.edm import (
    AnnealingParams,
    NoiseSchedule,
    renoise,
    sample_warp_guided_clip,
)
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import Axis, ClipState, GridLine
from vidgrid.warp import WarpedGrid

logger = logging.getLogger(__name__)


class CellStatus(IntEnum):
    UNKNOWN = 0
    WARPED = 1
    KEY = 2
    FINAL = 3


class Grid4D:
    """Per-cell states ``(N, F, H, W, C)``, statuses and noise levels.

    Row 0 holds the input video and is Final from construction. Status only moves
    forward, and Key or Final content is never overwritten.
    """

    def __init__(self, row: np.ndarray, n_views: int, dtype=np.float32):
        row = np.asarray(row)
        if row.ndim != 4:
            raise InvalidInputError("input row must be (F, H, W, C)", shape=row.shape)
        if n_views < 2 or row.shape[0] < 2:
            raise InvalidInputError(
                "grid needs N >= 2 and F >= 2", n_views=n_views, n_frames=row.shape[0]
            )
        self.states = np.zeros((n_views,) + row.shape, dtype=dtype)
        self.states[0] = row
        self.status = np.full(
            (n_views, row.shape[0]), CellStatus.UNKNOWN, dtype=np.int8
        )
        self.status[0] = CellStatus.FINAL
        self.sigma = np.full((n_views, row.shape[0]), math.inf)
        self.sigma[0] = 0.0

    @classmethod
    def from_warp(
        cls, row: np.ndarray, warped: WarpedGrid, dtype=np.float32
    ) -> "Grid4D":
        """Grid whose unknown cells start out holding their warped views."""
        grid = cls(row, warped.n_views, dtype)
        if warped.n_frames != grid.n_frames:
            raise InvalidInputError(
                "warped grid and input row lengths differ",
                warped=warped.n_frames,
                row=grid.n_frames,
            )
        for n in range(1, grid.n_views):
            for i in range(grid.n_frames):
                grid.set_cell(n, i, warped.frames[n, i], CellStatus.WARPED, math.inf)
        return grid

    @property
    def n_views(self) -> int:
        return self.states.shape[0]

    @property
    def n_frames(self) -> int:
        return self.states.shape[1]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.states.shape[2:]

    def cell_status(self, n: int, i: int) -> CellStatus:
        return CellStatus(int(self.status[n, i]))

    def is_known(self, n: int, i: int) -> bool:
        return self.status[n, i] >= CellStatus.KEY

    def set_cell(
        self, n: int, i: int, frame: np.ndarray, status: CellStatus, sigma: float
    ) -> None:
        old = self.cell_status(n, i)
        fixed = old is CellStatus.KEY and status is CellStatus.KEY
        if old is CellStatus.FINAL or fixed:
            raise InvalidInputError(
                "cell content is fixed", view=n, time=i, status=old.name
            )
        if status < old:
            raise InvalidInputError(
                "cell status cannot move backwards",
                view=n,
                time=i,
                old=old.name,
                new=CellStatus(status).name,
            )
        self.states[n, i] = frame
        self.status[n, i] = status
        self.sigma[n, i] = sigma

    def finalize(self) -> None:
        """Mark every cell Final; only valid once every cell holds clean content."""
        pending = [
            (n, i)
            for n in range(self.n_views)
            for i in range(self.n_frames)
            if not (self.is_known(n, i) or self.sigma[n, i] == 0.0)
        ]
        if pending:
            raise InvalidInputError("grid still has noisy cells", cells=pending[:10])
        self.status[:] = CellStatus.FINAL
        self.sigma[:] = 0.0

    def is_complete(self) -> bool:
        return bool(np.all(self.status == CellStatus.FINAL) and np.all(self.sigma == 0))

    def condition(self, n: int, i: int) -> Condition:
        if not self.is_known(n, i):
            raise InvalidInputError("condition cell is not known yet", view=n, time=i)
        return Condition((n, i), self.states[n, i])

    def cells(self, line: GridLine) -> list[tuple[int, int]]:
        length = self.n_views if line.axis is Axis.CAMERA else self.n_frames
        return [line.cell(p) for p in range(length)]

    def line_frames(self, line: GridLine) -> np.ndarray:
        if line.axis is Axis.CAMERA:
            return self.states[:, line.index].copy()
        return self.states[line.index].copy()

    def line_known(self, line: GridLine) -> np.ndarray:
        return np.array([self.is_known(n, i) for n, i in self.cells(line)])

    def line_pins(self, line: GridLine) -> Pins:
        return Pins(self.line_frames(line), self.line_known(line))

    def end_conditions(self, line: GridLine) -> tuple[Condition, Condition]:
        cells = self.cells(line)
        return self.condition(*cells[0]), self.condition(*cells[-1])


@dataclass(frozen=True)
class GridSettings:
    """Everything the two stages need besides the grid, warps and backend."""

    schedule: NoiseSchedule
    annealing: AnnealingParams
    bidi: BidiStepConfig = BidiStepConfig()
    disable_warp_guidance: bool = False
    disable_stbi: bool = False
    skip_known_lines: bool = False
    symmetric_renoise: bool = False
    parallel: bool = False
    max_workers: int | None = None


def _guidance(warped: WarpedGrid, settings: GridSettings) -> WarpedGrid:
    return warped.without_guidance() if settings.disable_warp_guidance else warped


def _bidi_config(settings: GridSettings) -> BidiStepConfig:
    if settings.disable_warp_guidance:
        return BidiStepConfig(settings.bidi.residual_mode, apply_warp_guidance=False)
    return settings.bidi


def _run(stage: str, where: GridLine, fn: Callable, *args, **kwargs):
    """Call ``fn`` and tag any failure with the stage and grid line."""
    try:
        return fn(*args, **kwargs)
    except VidgridError as e:
        raise e.with_context(stage=stage, line=str(where))
    except Exception as e:
        raise StageError(f"{stage} failed: {e}", stage=stage, line=str(where)) from e


def _store_key(grid: Grid4D, line: GridLine, clip: np.ndarray) -> int:
    written = 0
    for p, (n, i) in enumerate(grid.cells(line)):
        if not grid.is_known(n, i):
            grid.set_cell(n, i, clip[p], CellStatus.KEY, 0.0)
            written += 1
    return written


def stage_a_keyframes(
    grid: Grid4D,
    warped: WarpedGrid,
    denoiser: DenoiserBackend,
    settings: GridSettings,
    rng: NoiseSource,
) -> Grid4D:
    """Generate column 0, row N-1 and column F-1 in that order."""
    N, F = grid.n_views, grid.n_frames
    guide = _guidance(warped, settings)
    dtype = grid.states.dtype

    line = GridLine(Axis.CAMERA, 0)
    logger.info(f"Stage A1: {N - 1} novel views of frame 0")
    clip = _run(
        "a1",
        line,
        sample_warp_guided_clip,
        denoiser,
        guide.column(0),
        grid.condition(0, 0),
        settings.schedule,
        settings.annealing,
        rng.child("a1"),
        line=line,
        dtype=dtype,
    )
    _store_key(grid, line, clip)

    line = GridLine(Axis.TIME, N - 1)
    logger.info(f"Stage A2: video at view {N - 1}")
    clip = _run(
        "a2",
        line,
        sample_warp_guided_clip,
        denoiser,
        guide.row(N - 1),
        grid.condition(N - 1, 0),
        settings.schedule,
        settings.annealing,
        rng.child("a2"),
        line=line,
        dtype=dtype,
    )
    _store_key(grid, line, clip)

    line = GridLine(Axis.CAMERA, F - 1)
    if not grid.line_known(line).all():
        logger.info(f"Stage A3: interpolating novel views of frame {F - 1}")
        c_start, c_end = grid.end_conditions(line)
        clip = _run(
            "a3",
            line,
            interpolate_clip,
            None,
            c_start,
            c_end,
            guide.column(F - 1),
            denoiser,
            settings.schedule,
            rng.child("a3"),
            _bidi_config(settings),
            grid.line_pins(line),
            line,
        )
        _store_key(grid, line, clip)
    return grid


def _line_step(
    grid: Grid4D,
    line: GridLine,
    clip_warp,
    denoiser: DenoiserBackend,
    cfg: BidiStepConfig,
    sigma_t: float,
    sigma_prev: float,
    rng: NoiseSource,
    renoise_after: bool,
) -> np.ndarray:
    c_start, c_end = grid.end_conditions(line)
    state = ClipState(grid.line_frames(line), sigma_t, line=line)
    out = bidi_step(
        state,
        sigma_t,
        sigma_prev,
        c_start,
        c_end,
        clip_warp,
        denoiser,
        rng.child("bidi"),
        cfg,
        grid.line_pins(line),
    )
    if renoise_after:
        out = renoise(out, sigma_t, sigma_prev, rng.child("renoise"))
    return out.frames


def _map_lines(settings: GridSettings, denoiser: DenoiserBackend, fn, lines):
    if settings.parallel and denoiser.descriptor.concurrent_safe and len(lines) > 1:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            return list(pool.map(fn, lines))
    return [fn(line) for line in lines]


def stage_b_fill(
    grid: Grid4D,
    warped: WarpedGrid,
    denoiser: DenoiserBackend,
    settings: GridSettings,
    rng: NoiseSource,
) -> Grid4D:
    """Fill the interior from fresh noise; every cell ends Final at sigma 0."""
    N, F = grid.n_views, grid.n_frames
    guide = _guidance(warped, settings)
    cfg = _bidi_config(settings)
    schedule = settings.schedule
    sigma_max = schedule.sigma_max
    dtype = grid.states.dtype

    unknown = [(n, i) for n in range(N) for i in range(F) if not grid.is_known(n, i)]
    for n, i in unknown:
        noise = rng.child("init", n, i).normal(grid.frame_shape, dtype=dtype)
        grid.states[n, i] = sigma_max * noise
        grid.status[n, i] = max(int(grid.status[n, i]), CellStatus.WARPED)
        grid.sigma[n, i] = sigma_max

    if not unknown:
        grid.finalize()
        return grid

    def write_back(lines, clips, sigma):
        for line, clip in zip(lines, clips):
            for p, (n, i) in enumerate(grid.cells(line)):
                if not grid.is_known(n, i):
                    grid.states[n, i] = clip[p]
                    grid.sigma[n, i] = sigma

    def active(lines):
        if not settings.skip_known_lines:
            return lines
        return [ln for ln in lines if not grid.line_known(ln).all()]

    columns = [GridLine(Axis.CAMERA, i) for i in range(F)]
    rows = [GridLine(Axis.TIME, n) for n in range(N)]

    if settings.disable_stbi:
        logger.info("Stage B without camera-axis passes: interpolating rows")
        interior = [GridLine(Axis.TIME, n) for n in range(1, N - 1)]

        def fill_row(line: GridLine) -> np.ndarray:
            c_start, c_end = grid.end_conditions(line)
            return _run(
                "b",
                line,
                interpolate_clip,
                ClipState(grid.line_frames(line), sigma_max, line=line),
                c_start,
                c_end,
                guide.row(line.index),
                denoiser,
                schedule,
                rng.child(line.axis, line.index, "interpolate"),
                cfg,
                grid.line_pins(line),
                line,
            )

        write_back(interior, _map_lines(settings, denoiser, fill_row, interior), 0.0)
        grid.finalize()
        return grid

    for k, (sigma_t, sigma_prev) in enumerate(schedule.pairs()):
        t = schedule.steps - k
        logger.debug(f"Stage B step {k + 1}/{schedule.steps} sigma={sigma_t:.4g}")
        phases = [(columns, True), (rows, False)]
        # symmetric_renoise only alternates the axis order: rows first on odd steps
        if settings.symmetric_renoise and k % 2 == 1:
            phases = [(rows, True), (columns, False)]
        for lines, renoise_after in phases:
            lines = active(lines)

            def step(line: GridLine, renoise_after=renoise_after) -> np.ndarray:
                clip_warp = (
                    guide.column(line.index)
                    if line.axis is Axis.CAMERA
                    else guide.row(line.index)
                )
                return _run(
                    "b",
                    line,
                    _line_step,
                    grid,
                    line,
                    clip_warp,
                    denoiser,
                    cfg,
                    sigma_t,
                    sigma_prev,
                    rng.child(line.axis, line.index, t),
                    renoise_after,
                )

            clips = _map_lines(settings, denoiser, step, lines)
            write_back(lines, clips, sigma_t if renoise_after else sigma_prev)
    grid.finalize()
    logger.info(f"Stage B complete: {len(unknown)} interior cells")
    return grid
