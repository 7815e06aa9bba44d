"""The conditional denoiser interface every sampler talks to."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from vidgrid.errors import BackendError, InvalidInputError
from vidgrid.sampling.state import ClipState
from vidgrid.warp import WarpedClip

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Condition:
    """A known frame and the grid cell ``(view, time)`` it was taken from."""

    anchor: tuple[int, int]
    frame: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "anchor", (int(self.anchor[0]), int(self.anchor[1])))
        if np.asarray(self.frame).ndim != 3:
            raise InvalidInputError(
                "condition frame must be (H, W, C)", shape=np.shape(self.frame)
            )


@dataclass(frozen=True, eq=False)
class DenoiseOutput:
    conditional: np.ndarray
    unconditional: np.ndarray | None = None

    def residual_source(self) -> np.ndarray:
        """Unconditional estimate, or the conditional one when there is none."""
        return self.conditional if self.unconditional is None else self.unconditional


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    concurrent_safe: bool = True
    has_unconditional: bool = False
    # (H, W, C); None accepts any frame size
    frame_shape: tuple[int, int, int] | None = None
    min_clip: int = 1
    max_clip: int | None = None

    def __post_init__(self):
        too_short = self.max_clip is not None and self.max_clip < self.min_clip
        if self.min_clip < 1 or too_short:
            raise InvalidInputError(
                "clip length limits must be positive",
                min_clip=self.min_clip,
                max_clip=self.max_clip,
            )


def condition_slot(state: ClipState, condition: Condition) -> int:
    """Clip slot holding the condition's anchor cell, 0 when it is not on the line."""
    if state.line is None:
        return 0
    n, i = condition.anchor
    for position in range(len(state)):
        if state.line.cell(position) == (n, i):
            return len(state) - 1 - position if state.reversed else position
    return 0


class DenoiserBackend(ABC):
    """Produces Tweedie estimates of the clean clip from a noisy one.

    Subclasses implement ``_denoise``; ``denoise`` checks shapes and limits on both
    sides of the call.
    """

    @property
    @abstractmethod
    def descriptor(self) -> BackendDescriptor: ...

    @abstractmethod
    def _denoise(
        self,
        x_t: ClipState,
        sigma: float,
        condition: Condition,
        warped: WarpedClip | None,
    ) -> DenoiseOutput: ...

    def denoise(
        self,
        x_t: ClipState,
        sigma: float,
        condition: Condition,
        warped: WarpedClip | None = None,
    ) -> DenoiseOutput:
        self._check_request(x_t, sigma, condition, warped)
        out = self._denoise(x_t, sigma, condition, warped)
        estimates = {"conditional": out.conditional, "unconditional": out.unconditional}
        for name, est in estimates.items():
            if est is not None and est.shape != x_t.frames.shape:
                raise BackendError(
                    f"{self.descriptor.name} returned a {name} estimate "
                    "of the wrong shape",
                    expected=x_t.frames.shape,
                    got=est.shape,
                )
        return out

    def _check_request(self, x_t, sigma, condition, warped) -> None:
        desc = self.descriptor
        if not sigma > 0:
            raise InvalidInputError("denoise needs sigma > 0", sigma=sigma)
        if condition.frame.shape != x_t.frame_shape:
            raise InvalidInputError(
                "condition frame does not match the clip frames",
                condition=condition.frame.shape,
                clip=x_t.frame_shape,
            )
        if warped is not None and warped.frames.shape != x_t.frames.shape:
            raise InvalidInputError(
                "warped clip does not match the state",
                warped=warped.frames.shape,
                clip=x_t.frames.shape,
            )
        if desc.frame_shape is not None and tuple(desc.frame_shape) != x_t.frame_shape:
            raise InvalidInputError(
                f"{desc.name} only accepts frames of shape {desc.frame_shape}",
                got=x_t.frame_shape,
            )
        too_long = desc.max_clip is not None and len(x_t) > desc.max_clip
        if len(x_t) < desc.min_clip or too_long:
            raise InvalidInputError(
                f"clip length outside the limits of {desc.name}",
                length=len(x_t),
                min_clip=desc.min_clip,
                max_clip=desc.max_clip,
            )

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
