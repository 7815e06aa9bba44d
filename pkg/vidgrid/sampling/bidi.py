"""Bidirectional interpolation between two known end frames.

One step denoises the clip towards its start condition, re-noises, flips the clip,
denoises towards the end condition and flips back. Known slots (the two ends, plus
any other known cells the caller supplies) are overwritten with noised copies of
their content before each denoiser call and written back exactly once the level
reaches zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from vidgrid.backends.base import Condition, DenoiserBackend, DenoiseOutput
from vidgrid.errors import BackendError, InvalidInputError, VidgridError
from vidgrid.sampling.edm import (
    NoiseSchedule,
    canonical_noise,
    renoise,
    warp_guided_estimate,
)
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import ClipState, GridLine
from vidgrid.warp import WarpedClip

logger = logging.getLogger(__name__)


class ResidualMode(str, Enum):
    UNCONDITIONAL = "unconditional"
    CONDITIONAL = "conditional"
    GUIDED = "guided"


@dataclass(frozen=True)
class BidiStepConfig:
    residual_mode: ResidualMode = ResidualMode.UNCONDITIONAL
    apply_warp_guidance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "residual_mode", ResidualMode(self.residual_mode))


@dataclass(frozen=True, eq=False)
class Pins:
    """Known clip slots: ``frames`` ``(L, H, W, C)``, ``known`` ``(L,)`` booleans."""

    frames: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        known = np.asarray(self.known, dtype=bool)
        if known.shape != self.frames.shape[:1]:
            raise InvalidInputError(
                "pin flags must have one entry per slot",
                flags=known.shape,
                frames=self.frames.shape,
            )
        object.__setattr__(self, "known", known)

    def flip(self) -> "Pins":
        return Pins(self.frames[::-1], self.known[::-1])

    def apply(self, state: ClipState, sigma: float, rng: NoiseSource) -> ClipState:
        """Overwrite the known slots with their content noised to ``sigma``."""
        if not self.known.any():
            return state
        frames = state.frames.copy()
        known = self.frames[self.known].astype(frames.dtype, copy=False)
        if sigma == 0:
            frames[self.known] = known
        else:
            eps = canonical_noise(rng, state)[self.known]
            frames[self.known] = known + float(sigma) * eps
        return state.with_frames(frames, state.sigma)


def end_pins(
    x_t: ClipState, c_start: Condition, c_end: Condition, pins: Pins | None = None
) -> Pins:
    """The caller's pins plus both condition frames at the clip ends."""
    L = len(x_t)
    if pins is None:
        frames = np.zeros_like(x_t.frames)
        known = np.zeros(L, dtype=bool)
    else:
        if pins.frames.shape != x_t.frames.shape:
            raise InvalidInputError(
                "pinned frames do not match the clip",
                pins=pins.frames.shape,
                clip=x_t.frames.shape,
            )
        frames = pins.frames.astype(x_t.frames.dtype, copy=True)
        known = pins.known.copy()
    for slot, cond in ((0, c_start), (L - 1, c_end)):
        if cond is None or cond.frame is None:
            raise InvalidInputError("both end conditions are required", slot=slot)
        if cond.frame.shape != x_t.frame_shape:
            raise InvalidInputError(
                "condition frame does not match the clip frames",
                slot=slot,
                condition=cond.frame.shape,
                clip=x_t.frame_shape,
            )
        frames[slot] = cond.frame
        known[slot] = True
    return Pins(frames, known)


def _residual(mode: ResidualMode, out: DenoiseOutput, x_bar: np.ndarray) -> np.ndarray:
    if mode is ResidualMode.UNCONDITIONAL:
        return out.residual_source()
    if mode is ResidualMode.CONDITIONAL:
        return out.conditional
    return x_bar


def _directional_pass(
    x: ClipState,
    sigma_t: float,
    sigma_prev: float,
    condition: Condition,
    warped: WarpedClip,
    denoiser: DenoiserBackend,
    cfg: BidiStepConfig,
) -> ClipState:
    try:
        out = denoiser.denoise(x, sigma_t, condition, warped)
    except VidgridError as e:
        raise e.with_context(sigma=sigma_t, anchor=condition.anchor, line=x.line)
    except Exception as e:
        raise BackendError(
            f"denoiser failed: {e}", sigma=sigma_t, anchor=condition.anchor, line=x.line
        ) from e
    x_hat = out.conditional
    x_bar = warp_guided_estimate(x_hat, warped) if cfg.apply_warp_guidance else x_hat
    residual = _residual(cfg.residual_mode, out, x_bar)
    ratio = float(sigma_prev) / float(sigma_t)
    return x.with_frames(x_bar + ratio * (x.frames - residual), float(sigma_prev))


def bidi_step(
    x_t: ClipState,
    sigma_t: float,
    sigma_prev: float,
    c_start: Condition,
    c_end: Condition,
    warped: WarpedClip | None,
    denoiser: DenoiserBackend,
    rng: NoiseSource,
    cfg: BidiStepConfig = BidiStepConfig(),
    pins: Pins | None = None,
) -> ClipState:
    if not 0 <= sigma_prev < sigma_t:
        raise InvalidInputError(
            "need 0 <= sigma_prev < sigma_t", sigma_t=sigma_t, sigma_prev=sigma_prev
        )
    if warped is None:
        warped = WarpedClip.holes(x_t.frames.shape, dtype=x_t.frames.dtype)
    elif warped.frames.shape != x_t.frames.shape:
        raise InvalidInputError(
            "warped clip does not match the state",
            warped=warped.frames.shape,
            clip=x_t.frames.shape,
        )
    layout = end_pins(x_t, c_start, c_end, pins)
    x = x_t.with_frames(x_t.frames, float(sigma_t))

    x = layout.apply(x, sigma_t, rng.child("pin", 1))
    x = _directional_pass(x, sigma_t, sigma_prev, c_start, warped, denoiser, cfg)
    x = renoise(x, sigma_t, sigma_prev, rng.child("renoise"))

    x, warped, layout = x.flip(), warped.flip(), layout.flip()
    x = layout.apply(x, sigma_t, rng.child("pin", 2))
    x = _directional_pass(x, sigma_t, sigma_prev, c_end, warped, denoiser, cfg)
    x, layout = x.flip(), layout.flip()

    return layout.apply(x, sigma_prev, rng.child("final_pin"))


def interpolate_clip(
    noisy_init: ClipState | None,
    c_start: Condition,
    c_end: Condition,
    warped: WarpedClip | None,
    denoiser: DenoiserBackend,
    schedule: NoiseSchedule,
    rng: NoiseSource,
    cfg: BidiStepConfig = BidiStepConfig(),
    pins: Pins | None = None,
    line: GridLine | None = None,
    length: int | None = None,
) -> np.ndarray:
    """Run ``bidi_step`` down the whole schedule and return the clean clip.

    Without ``noisy_init`` the clip starts from fresh noise at ``σ_T``; its length
    comes from ``warped``, ``pins`` or ``length``.
    """
    if noisy_init is None:
        if warped is not None:
            shape = warped.frames.shape
        elif pins is not None:
            shape = pins.frames.shape
        elif length is not None:
            shape = (length,) + c_start.frame.shape
        else:
            raise InvalidInputError("clip length unknown: pass warped, pins or length")
        dtype = c_start.frame.dtype if c_start.frame.dtype.kind == "f" else np.float32
        noise = rng.child("init").normal(shape, dtype=dtype)
        x = ClipState(schedule.sigma_max * noise, schedule.sigma_max, line=line)
    else:
        x = noisy_init
    for k, (sigma_t, sigma_prev) in enumerate(schedule.pairs()):
        logger.debug(f"bidi step {k + 1}/{schedule.steps} sigma={sigma_t:.4g}")
        try:
            x = bidi_step(
                x,
                sigma_t,
                sigma_prev,
                c_start,
                c_end,
                warped,
                denoiser,
                rng.child("step", k),
                cfg,
                pins,
            )
        except VidgridError as e:
            raise e.with_context(step=k)
    return x.frames
