"""Procedural two-layer scene with exactly known geometry.

A textured background plane at ``z_bg`` and a textured rectangle at ``z_fg`` that
moves over time, both fronto-parallel to the input camera. Texture coordinates are
measured in input-camera pixels, so at the identity pose every pixel centre samples
an integer texture coordinate and every texture edge sits on a half-integer. Renders
are per-pixel ray casts; the depth map is the z-depth of the surface each ray hits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from vidgrid.errors import InvalidInputError
from vidgrid.geometry.camera import Intrinsics, Pose
from vidgrid.geometry.trajectory import Trajectory


@dataclass(frozen=True)
class SyntheticScene:
    width: int = 64
    height: int = 64
    channels: int = 3
    n_frames: int = 9
    z_bg: float = 4.0
    z_fg: float = 2.0
    # rectangle size and top-left cell, in input-camera pixels
    fg_size: tuple[int, int] = (16, 16)
    fg_start: tuple[int, int] = (16, 24)
    motion: Literal["linear", "circular", "static"] = "linear"
    velocity: tuple[int, int] = (2, 0)
    radius: float = 0.0
    period: float = 8.0
    checker: int = 8
    texture_seed: int = 0
    show_foreground: bool = True
    # focal length of the texture reference camera; None means width
    focal: float | None = None
    _palette: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.n_frames <= 0:
            raise InvalidInputError(
                "scene dimensions must be positive",
                width=self.width,
                height=self.height,
                n_frames=self.n_frames,
            )
        if self.channels not in (1, 3):
            raise InvalidInputError("channels must be 1 or 3", channels=self.channels)
        if not (math.isfinite(self.z_fg) and math.isfinite(self.z_bg)):
            raise InvalidInputError("layer depths must be finite")
        if not 0 < self.z_fg < self.z_bg:
            raise InvalidInputError(
                "need 0 < z_fg < z_bg", z_fg=self.z_fg, z_bg=self.z_bg
            )
        if self.checker <= 0 or min(self.fg_size) <= 0:
            raise InvalidInputError("checker and foreground sizes must be positive")
        if self.motion == "circular" and not self.period > 0:
            raise InvalidInputError("circular motion needs a positive period")
        rng = np.random.default_rng(self.texture_seed)
        palette = {
            "bg": rng.uniform(0.15, 0.85, size=(2, self.channels)),
            "fg": rng.uniform(0.15, 0.85, size=(2, self.channels)),
        }
        object.__setattr__(self, "_palette", palette)

    @property
    def reference(self) -> Intrinsics:
        """The input camera the texture coordinates are measured in."""
        return Intrinsics.centered(self.width, self.height, self.focal)

    def without_foreground(self) -> "SyntheticScene":
        return replace(self, show_foreground=False)

    def foreground_origin(self, time_index: int) -> tuple[int, int]:
        """Top-left texture cell of the moving rectangle at ``time_index``."""
        self._check_time(time_index)
        a0, b0 = self.fg_start
        if self.motion == "linear":
            du, dv = self.velocity
            return a0 + du * time_index, b0 + dv * time_index
        if self.motion == "circular":
            phase = 2.0 * math.pi * time_index / self.period
            return (
                a0 + int(round(self.radius * math.cos(phase))),
                b0 + int(round(self.radius * math.sin(phase))),
            )
        return a0, b0

    def _check_time(self, time_index: int) -> None:
        if not 0 <= time_index < self.n_frames:
            raise InvalidInputError(
                "time index out of range", time_index=time_index, n_frames=self.n_frames
            )

    def _texture(self, layer: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        cell = (np.floor((a + 0.5) / self.checker) + np.floor((b + 0.5) / self.checker))
        parity = (cell.astype(np.int64) % 2)[..., None]
        colors = self._palette[layer]
        base = np.where(parity == 0, colors[0], colors[1])
        shade = 0.85 + 0.15 * np.sin(0.11 * a + 0.07 * b)
        return np.clip(base * shade[..., None], 0.0, 1.0)

    def _cast(self, pose: Pose, time_index: int, K: Intrinsics):
        self._check_time(time_index)
        if (K.width, K.height) != (self.width, self.height):
            raise InvalidInputError(
                "intrinsics image size differs from the scene",
                intrinsics=(K.width, K.height),
                scene=(self.width, self.height),
            )
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        kx = (u - K.cx) / K.fx
        ky = (v - K.cy) / K.fy
        r = pose.rotation
        c = pose.center()
        # world ray direction R^T (kx, ky, 1); its camera z component is 1, so the
        # ray parameter at a hit is the camera depth of that hit
        dx = r[0, 0] * kx + r[1, 0] * ky + r[2, 0]
        dy = r[0, 1] * kx + r[1, 1] * ky + r[2, 1]
        dz = r[0, 2] * kx + r[1, 2] * ky + r[2, 2]
        ref = self.reference

        def hit(z_plane: float):
            with np.errstate(divide="ignore", invalid="ignore"):
                s = (z_plane - c[2]) / dz
            ok = (dz > 0) & (s > 0)
            s = np.where(ok, s, np.inf)
            x = c[0] + s * dx
            y = c[1] + s * dy
            a = x * ref.fx / z_plane + ref.cx
            b = y * ref.fy / z_plane + ref.cy
            return ok, s, a, b

        bg_ok, bg_s, bg_a, bg_b = hit(self.z_bg)
        if not bg_ok.all():
            raise InvalidInputError(
                "background plane does not cover the view", time_index=time_index
            )
        frame = self._texture("bg", bg_a, bg_b)
        depth = bg_s
        if self.show_foreground:
            fg_ok, fg_s, fg_a, fg_b = hit(self.z_fg)
            a0, b0 = self.foreground_origin(time_index)
            w, h = self.fg_size
            inside = (
                fg_ok
                & (fg_a >= a0 - 0.5)
                & (fg_a < a0 + w - 0.5)
                & (fg_b >= b0 - 0.5)
                & (fg_b < b0 + h - 0.5)
                & (fg_s < bg_s)
            )
            fg = self._texture("fg", fg_a - a0, fg_b - b0)
            frame = np.where(inside[..., None], fg, frame)
            depth = np.where(inside, fg_s, depth)
        return frame, depth

    def render_frame(self, pose: Pose, time_index: int, K: Intrinsics) -> np.ndarray:
        return self._cast(pose, time_index, K)[0]

    def render_depth(self, pose: Pose, time_index: int, K: Intrinsics) -> np.ndarray:
        return self._cast(pose, time_index, K)[1]

    def render_grid(
        self, trajectory: Trajectory, K: Intrinsics
    ) -> tuple[np.ndarray, np.ndarray]:
        """Ground-truth frames ``(N, F, H, W, C)`` and depths ``(N, F, H, W)``."""
        N, F = trajectory.n_views, self.n_frames
        frames = np.empty((N, F, self.height, self.width, self.channels))
        depths = np.empty((N, F, self.height, self.width))
        for n, pose in enumerate(trajectory.poses):
            Kn = trajectory.intrinsics(n, K)
            for i in range(F):
                frames[n, i], depths[n, i] = self._cast(pose, i, Kn)
        return frames, depths

    def static_mask(self, trajectory: Trajectory, K: Intrinsics) -> np.ndarray:
        """``(N, F, H, W)`` flags for pixels that show the background plane."""
        depths = self.render_grid(trajectory, K)[1]
        return depths == self.without_foreground().render_grid(trajectory, K)[1]

    def validate_in_frustum(self, trajectory: Trajectory, K: Intrinsics) -> None:
        """Raise unless the rectangle stays fully in view for every pose and time."""
        ref = self.reference
        w, h = self.fg_size
        for i in range(self.n_frames):
            a0, b0 = self.foreground_origin(i)
            for a, b in (
                (a0 - 0.5, b0 - 0.5),
                (a0 + w - 0.5, b0 - 0.5),
                (a0 - 0.5, b0 + h - 0.5),
                (a0 + w - 0.5, b0 + h - 0.5),
            ):
                world = np.array(
                    [
                        (a - ref.cx) / ref.fx * self.z_fg,
                        (b - ref.cy) / ref.fy * self.z_fg,
                        self.z_fg,
                    ]
                )
                for n, pose in enumerate(trajectory.poses):
                    p = pose.apply(world)
                    if p[2] <= 0:
                        raise InvalidInputError(
                            "foreground behind the camera", view=n, time_index=i
                        )
                    u = K.fx * p[0] / p[2] + K.cx
                    v = K.fy * p[1] / p[2] + K.cy
                    if not (-0.5 <= u <= K.width - 0.5 and -0.5 <= v <= K.height - 0.5):
                        raise InvalidInputError(
                            "foreground leaves the frame", view=n, time_index=i
                        )
