"""In-process denoisers with known answers, used for verification."""

from __future__ import annotations

import numpy as np

from vidgrid.backends.base import (
    BackendDescriptor,
    Condition,
    DenoiseOutput,
    DenoiserBackend,
)
from vidgrid.errors import InvalidInputError
from vidgrid.geometry.camera import Intrinsics
from vidgrid.geometry.trajectory import Trajectory
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import Axis, ClipState, GridLine
from vidgrid.scene import SyntheticScene
from vidgrid.warp import WarpedClip


class IdentityDenoiser(DenoiserBackend):
    """Returns the noisy input unchanged."""

    _descriptor = BackendDescriptor("identity")

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def _denoise(self, x_t, sigma, condition, warped):
        return DenoiseOutput(x_t.frames.copy())


class GaussianAnalyticDenoiser(DenoiserBackend):
    """Exact posterior mean for an i.i.d. ``N(mu, tau^2)`` prior.

    Ignores the condition, so it treats every clip slot the same way.
    """

    def __init__(self, mu: float = 0.0, tau: float = 1.0):
        if not tau > 0:
            raise InvalidInputError("tau must be positive", tau=tau)
        self.mu = float(mu)
        self.tau = float(tau)
        self._descriptor = BackendDescriptor("gaussian")

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def posterior_mean(self, x: np.ndarray, sigma: float) -> np.ndarray:
        tau2 = self.tau**2
        s2 = float(sigma) ** 2
        return (tau2 * x + s2 * self.mu) / (tau2 + s2)

    def _denoise(self, x_t, sigma, condition, warped):
        return DenoiseOutput(self.posterior_mean(x_t.frames, sigma))


class IdealDenoiser(DenoiserBackend):
    """Returns the ground-truth clip for the grid line being sampled.

    ``truth`` holds the full ``(N, F, H, W, C)`` grid. Clips are addressed by their
    ``ClipState.line`` unless the backend is bound to a single ``line``; the state's
    ``reversed`` flag selects the orientation. The noisy input is ignored.
    """

    def __init__(self, truth: np.ndarray, line: GridLine | None = None):
        truth = np.asarray(truth)
        if truth.ndim != 5:
            raise InvalidInputError(
                "ground truth must be (N, F, H, W, C)", shape=truth.shape
            )
        if line is not None:
            limit = truth.shape[1] if line.axis is Axis.CAMERA else truth.shape[0]
            if line.index >= limit:
                raise InvalidInputError(
                    "grid line outside the ground truth", line=line, limit=limit
                )
        self.truth = truth
        self.line = line
        self._descriptor = BackendDescriptor("ideal", frame_shape=truth.shape[2:])

    @classmethod
    def from_scene(
        cls, scene: SyntheticScene, trajectory: Trajectory, K: Intrinsics
    ) -> "IdealDenoiser":
        return cls(scene.render_grid(trajectory, K)[0])

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def clip(self, line: GridLine) -> np.ndarray:
        if line.axis is Axis.CAMERA:
            return self.truth[:, line.index]
        return self.truth[line.index]

    def _denoise(self, x_t, sigma, condition, warped):
        return DenoiseOutput(self._estimate(x_t))

    def _estimate(self, x_t: ClipState) -> np.ndarray:
        line = self.line if self.line is not None else x_t.line
        if line is None:
            raise InvalidInputError("the ideal denoiser needs to know the grid line")
        clip = self.clip(line)
        if len(clip) != len(x_t):
            raise InvalidInputError(
                "clip length does not match the grid line",
                line=line,
                expected=len(clip),
                got=len(x_t),
            )
        if x_t.reversed:
            clip = clip[::-1]
        return clip.astype(x_t.frames.dtype)


class NoisyIdealDenoiser(IdealDenoiser):
    """Ground truth on covered pixels, a biased Gaussian posterior on the holes.

    Every grid line gets its own constant colour bias ``b`` drawn from ``seed``. On
    pixels the warp could not cover the estimate is the posterior mean of a
    ``N(truth + b, spread^2)`` prior given ``x_t``, so it moves with the noisy input
    and settles on ``truth + b`` as ``sigma`` falls. Without a warped clip every
    pixel counts as uncovered.
    """

    def __init__(
        self,
        truth: np.ndarray,
        amplitude: float = 0.1,
        seed: int = 0,
        line: GridLine | None = None,
        spread: float = 0.02,
    ):
        super().__init__(truth, line)
        if not amplitude >= 0:
            raise InvalidInputError("amplitude must be >= 0", amplitude=amplitude)
        if not spread >= 0:
            raise InvalidInputError("spread must be >= 0", spread=spread)
        self.amplitude = float(amplitude)
        self.spread = float(spread)
        self.seed = int(seed)
        self._descriptor = BackendDescriptor("noisy-ideal", frame_shape=truth.shape[2:])

    @classmethod
    def from_scene(
        cls,
        scene: SyntheticScene,
        trajectory: Trajectory,
        K: Intrinsics,
        amplitude: float = 0.1,
        seed: int = 0,
        spread: float = 0.02,
    ) -> "NoisyIdealDenoiser":
        truth = scene.render_grid(trajectory, K)[0]
        return cls(truth, amplitude, seed, spread=spread)

    def bias(self, line: GridLine) -> np.ndarray:
        """The ``(C,)`` colour offset every hole on ``line`` is pulled towards."""
        channels = self.truth.shape[-1]
        draw = NoiseSource(self.seed).child(str(line)).normal(channels, np.float64)
        return self.amplitude * draw

    def _denoise(self, x_t, sigma, condition: Condition, warped: WarpedClip | None):
        truth = self._estimate(x_t)
        line = self.line if self.line is not None else x_t.line
        prior = truth + self.bias(line)
        s2 = self.spread**2
        weight = s2 / (s2 + float(sigma) ** 2)
        guess = prior + weight * (x_t.frames - prior)
        if warped is None:
            return DenoiseOutput(guess.astype(truth.dtype))
        holes = (warped.masks == 1)[..., None]
        return DenoiseOutput(np.where(holes, guess, truth).astype(truth.dtype))


def ideal_denoiser(
    scene: SyntheticScene,
    axis: Axis | str,
    index: int,
    trajectory: Trajectory,
    K: Intrinsics,
) -> IdealDenoiser:
    """Ideal backend bound to a grid row (``axis="time"``) or column (``"camera"``)."""
    line = GridLine(Axis(axis), index)
    return IdealDenoiser(scene.render_grid(trajectory, K)[0], line=line)
