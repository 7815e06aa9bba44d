"""Clip states and grid-line addressing shared by the samplers and backends."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from vidgrid.errors import InvalidInputError


class Axis(str, Enum):
    # camera: one grid column (all views at a fixed time)
    # time: one grid row (all times at a fixed view)
    CAMERA = "camera"
    TIME = "time"


@dataclass(frozen=True)
class GridLine:
    axis: Axis
    index: int

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if self.index < 0:
            raise InvalidInputError("grid line index must be >= 0", index=self.index)

    def cell(self, position: int) -> tuple[int, int]:
        """Grid (view, time) of the clip slot at ``position`` in canonical order."""
        if self.axis is Axis.CAMERA:
            return position, self.index
        return self.index, position

    def __str__(self) -> str:
        return f"{self.axis.value}[{self.index}]"


@dataclass(frozen=True, eq=False)
class ClipState:
    """Frames ``(L, H, W, C)`` of one clip at a common noise level.

    ``reversed`` is True while the clip is held in flipped order, so slot 0 is the
    line's last cell.
    """

    frames: np.ndarray
    sigma: float
    line: GridLine | None = None
    reversed: bool = False

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or min(frames.shape) <= 0:
            raise InvalidInputError(
                "clip frames must be (L, H, W, C)", shape=frames.shape
            )
        if not self.sigma >= 0:
            raise InvalidInputError("noise level must be >= 0", sigma=self.sigma)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "sigma", float(self.sigma))

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames.shape[1:]

    def with_frames(self, frames: np.ndarray, sigma: float) -> "ClipState":
        return replace(self, frames=frames, sigma=sigma)

    def flip(self) -> "ClipState":
        return replace(self, frames=self.frames[::-1], reversed=not self.reversed)

    def canonical_position(self, slot: int) -> int:
        """Index along the grid line of clip slot ``slot``."""
        return len(self) - 1 - slot if self.reversed else slot
