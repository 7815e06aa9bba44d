"""Euler sampling on a Karras noise schedule, with depth-warp guidance.

All update functions keep the dtype of the state they are given; noise levels are
plain Python floats so they never promote a float32 state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from vidgrid.backends.base import Condition, DenoiserBackend
from vidgrid.errors import BackendError, InvalidInputError, VidgridError
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import ClipState, GridLine
from vidgrid.warp import WarpedClip

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise levels ``σ_T … σ_0`` with ``σ_0 = 0``."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        if len(sigmas) < 2:
            raise InvalidInputError("a schedule needs at least one step")
        if not all(math.isfinite(s) for s in sigmas):
            raise InvalidInputError("noise levels must be finite")
        if sigmas[-1] != 0.0 or not sigmas[0] > 0:
            raise InvalidInputError("schedule must start above 0 and end at 0")
        if any(a <= b for a, b in zip(sigmas, sigmas[1:])):
            raise InvalidInputError("noise levels must be strictly decreasing")
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def steps(self) -> int:
        """T, the number of Euler steps."""
        return len(self.sigmas) - 1

    @property
    def sigma_max(self) -> float:
        return self.sigmas[0]

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.sigmas, self.sigmas[1:]))


@dataclass(frozen=True)
class AnnealingParams:
    """Resampling rounds for the first ``t_guide`` steps.

    Of the ``r_total`` rounds per annealed step, the first ``r_guide`` use the warp.
    """

    t_guide: int
    r_total: int = 3
    r_guide: int = 2

    def __post_init__(self):
        if self.t_guide < 0:
            raise InvalidInputError("t_guide must be >= 0", t_guide=self.t_guide)
        if not 1 <= self.r_guide <= self.r_total:
            raise InvalidInputError(
                "need 1 <= r_guide <= r_total",
                r_guide=self.r_guide,
                r_total=self.r_total,
            )

    @classmethod
    def default(cls, steps: int) -> "AnnealingParams":
        return cls(t_guide=steps // 2)


def make_schedule(
    steps: int, sigma_min: float, sigma_max: float, rho: float
) -> NoiseSchedule:
    if int(steps) != steps or steps < 1:
        raise InvalidInputError("steps must be an integer >= 1", steps=steps)
    for name, v in (("sigma_min", sigma_min), ("sigma_max", sigma_max), ("rho", rho)):
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite", value=v)
    if not 0 < sigma_min < sigma_max:
        raise InvalidInputError(
            "need 0 < sigma_min < sigma_max", sigma_min=sigma_min, sigma_max=sigma_max
        )
    if not rho > 0:
        raise InvalidInputError("rho must be positive", rho=rho)
    if steps == 1:
        return NoiseSchedule((float(sigma_max), 0.0))
    lo = sigma_min ** (1.0 / rho)
    hi = sigma_max ** (1.0 / rho)
    sigmas = [(hi + k / (steps - 1) * (lo - hi)) ** rho for k in range(steps)]
    return NoiseSchedule(tuple(sigmas) + (0.0,))


def _check_step(x_t: ClipState, x_hat: np.ndarray, sigma_t: float, sigma_prev: float):
    if x_hat.shape != x_t.frames.shape:
        raise InvalidInputError(
            "estimate and state shapes differ",
            estimate=x_hat.shape,
            state=x_t.frames.shape,
        )
    if not sigma_t > 0:
        raise InvalidInputError("cannot step from sigma 0", sigma_t=sigma_t)
    if not 0 <= sigma_prev < sigma_t:
        raise InvalidInputError(
            "need 0 <= sigma_prev < sigma_t", sigma_t=sigma_t, sigma_prev=sigma_prev
        )


def euler_step(
    x_t: ClipState, x_hat: np.ndarray, sigma_t: float, sigma_prev: float
) -> ClipState:
    _check_step(x_t, x_hat, sigma_t, sigma_prev)
    ratio = float(sigma_prev) / float(sigma_t)
    return x_t.with_frames(x_hat + ratio * (x_t.frames - x_hat), float(sigma_prev))


def warp_guided_estimate(x_hat: np.ndarray, warped: WarpedClip) -> np.ndarray:
    """Take warped pixels where the mask says visible, the estimate elsewhere."""
    if warped.frames.shape != x_hat.shape:
        raise InvalidInputError(
            "warped clip and estimate shapes differ",
            warped=warped.frames.shape,
            estimate=x_hat.shape,
        )
    hole = (warped.masks == 1)[..., None]
    return np.where(hole, x_hat, warped.frames.astype(x_hat.dtype, copy=False))


def guided_euler_step(
    x_t: ClipState,
    x_hat: np.ndarray,
    warped: WarpedClip,
    sigma_t: float,
    sigma_prev: float,
    residual: np.ndarray | None = None,
) -> ClipState:
    """Euler step from the guided estimate; the residual defaults to the raw one."""
    _check_step(x_t, x_hat, sigma_t, sigma_prev)
    x_bar = warp_guided_estimate(x_hat, warped)
    if residual is None:
        residual = x_hat
    elif residual.shape != x_hat.shape:
        raise InvalidInputError("residual estimate has the wrong shape")
    ratio = float(sigma_prev) / float(sigma_t)
    return x_t.with_frames(x_bar + ratio * (x_t.frames - residual), float(sigma_prev))


def canonical_noise(rng: NoiseSource, state: ClipState) -> np.ndarray:
    """Noise for the whole clip, drawn in line order and flipped to match the state."""
    eps = rng.normal(state.frames.shape, dtype=state.frames.dtype)
    return eps[::-1] if state.reversed else eps


def renoise(
    x_prev: ClipState, sigma_t: float, sigma_prev: float, rng: NoiseSource
) -> ClipState:
    """Raise the state from ``sigma_prev`` back up to ``sigma_t``."""
    if not sigma_prev <= sigma_t:
        raise InvalidInputError(
            "re-noising cannot lower the noise level",
            sigma_t=sigma_t,
            sigma_prev=sigma_prev,
        )
    if sigma_prev == sigma_t:
        return x_prev.with_frames(x_prev.frames, float(sigma_t))
    scale = math.sqrt(float(sigma_t) ** 2 - float(sigma_prev) ** 2)
    eps = canonical_noise(rng, x_prev)
    return x_prev.with_frames(x_prev.frames + scale * eps, float(sigma_t))


def sample_warp_guided_clip(
    denoiser: DenoiserBackend,
    warped: WarpedClip,
    condition: Condition,
    schedule: NoiseSchedule,
    annealing: AnnealingParams,
    rng: NoiseSource,
    line: GridLine | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Generate a clean clip from fresh noise, pinned to the warped visible pixels.

    The first ``annealing.t_guide`` steps run ``r_total`` rounds each. Rounds up to
    ``r_guide`` mix in the warp; between rounds the state is redrawn at full level
    around the last estimate. Remaining steps are plain conditional Euler steps.
    """
    T = schedule.steps
    if annealing.t_guide > T:
        raise InvalidInputError(
            "t_guide exceeds the number of steps", t_guide=annealing.t_guide, steps=T
        )
    shape = warped.frames.shape
    x = ClipState(
        schedule.sigma_max * rng.child("init").normal(shape, dtype=dtype),
        schedule.sigma_max,
        line=line,
    )
    for k, (sigma_t, sigma_prev) in enumerate(schedule.pairs()):
        t = T - k
        annealed = t > T - annealing.t_guide
        rounds = annealing.r_total if annealed else 1
        logger.debug(f"step {k + 1}/{T} sigma={sigma_t:.4g} rounds={rounds}")
        for r in range(1, rounds + 1):
            try:
                out = denoiser.denoise(x, sigma_t, condition, warped)
            except VidgridError as e:
                raise e.with_context(step=k, round=r, sigma=sigma_t, line=line)
            except Exception as e:
                raise BackendError(
                    f"denoiser failed: {e}", step=k, round=r, sigma=sigma_t, line=line
                ) from e
            x_hat = out.conditional
            guided = annealed and r <= annealing.r_guide
            if r < rounds:
                x_bar = warp_guided_estimate(x_hat, warped) if guided else x_hat
                eps = canonical_noise(rng.child("step", k, "round", r), x)
                x = x.with_frames(x_bar + sigma_t * eps, sigma_t)
            elif guided:
                x = guided_euler_step(x, x_hat, warped, sigma_t, sigma_prev)
            else:
                x = euler_step(x, x_hat, sigma_t, sigma_prev)
    return x.frames
