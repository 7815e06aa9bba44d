"""Depth-based forward warping with z-buffered occlusion masks.

Source pixels are unprojected with their depth, moved into the target camera, and
splatted to the nearest target pixel (``floor(x + 0.5)``). When several source pixels
land on one target pixel the smallest target-space depth wins, and at equal depth the
lowest row-major source index wins. Target pixels nothing lands on are holes: mask 1,
value 0.

``warp_frame`` is the vectorised implementation; ``oracle_warp_frame`` is the plain
double loop it must match bit for bit. Both evaluate the reprojection with the same
scalar operation order so their floating point results agree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vidgrid.errors import InvalidInputError
from vidgrid.geometry.camera import Intrinsics, Pose, relative_transform
from vidgrid.geometry.trajectory import Trajectory


@dataclass(frozen=True, eq=False)
class WarpedView:
    """One warped frame ``(H, W, C)`` and its hole mask ``(H, W)`` (1 = missing)."""

    frame: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.frame.shape[:2] != self.mask.shape:
            raise InvalidInputError(
                "warped frame and mask dimensions differ",
                frame=self.frame.shape,
                mask=self.mask.shape,
            )

    @property
    def missing(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class WarpedClip:
    """Warped views along one grid line.

    Frames are ``(L, H, W, C)``; masks are ``(L, H, W)`` with 1 for a hole.
    """

    frames: np.ndarray
    masks: np.ndarray

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[:3] != self.masks.shape:
            raise InvalidInputError(
                "warped clip frames and masks do not line up",
                frames=self.frames.shape,
                masks=self.masks.shape,
            )

    @classmethod
    def from_views(cls, views: Sequence[WarpedView]) -> "WarpedClip":
        return cls(
            np.stack([v.frame for v in views]), np.stack([v.mask for v in views])
        )

    @classmethod
    def holes(cls, shape: tuple[int, ...], dtype=np.float32) -> "WarpedClip":
        """No warp information at all: every pixel missing."""
        return cls(np.zeros(shape, dtype=dtype), np.ones(shape[:3], dtype=np.uint8))

    def __len__(self) -> int:
        return self.frames.shape[0]

    def views(self) -> list[WarpedView]:
        return [WarpedView(f, m) for f, m in zip(self.frames, self.masks)]

    def flip(self) -> "WarpedClip":
        return WarpedClip(self.frames[::-1], self.masks[::-1])


@dataclass(frozen=True, eq=False)
class WarpedGrid:
    """All N×F warped views of the input row."""

    frames: np.ndarray  # (N, F, H, W, C)
    masks: np.ndarray  # (N, F, H, W)

    @property
    def n_views(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    def __getitem__(self, index: tuple[int, int]) -> WarpedView:
        n, i = index
        return WarpedView(self.frames[n, i], self.masks[n, i])

    def column(self, i: int) -> WarpedClip:
        return WarpedClip(self.frames[:, i], self.masks[:, i])

    def row(self, n: int) -> WarpedClip:
        return WarpedClip(self.frames[n], self.masks[n])

    def without_guidance(self) -> "WarpedGrid":
        """Blank every warp: zero content, all-missing masks."""
        return WarpedGrid(np.zeros_like(self.frames), np.ones_like(self.masks))


def _check_frame(src: np.ndarray, depth: np.ndarray) -> None:
    if src.ndim != 3 or src.shape[2] not in (1, 3):
        raise InvalidInputError("frames must be (H, W, 1|3)", shape=src.shape)
    if src.shape[:2] != depth.shape:
        raise InvalidInputError(
            "frame and depth dimensions differ", frame=src.shape, depth=depth.shape
        )


def reproject_pixel(
    r_i: Sequence[float],
    depth: float,
    P: Pose,
    K: Intrinsics,
    K_target: Intrinsics | None = None,
) -> np.ndarray | None:
    """Continuous target pixel of source pixel ``r_i`` at ``depth``.

    Returns None when the point lands on or behind the target camera plane.
    """
    if not (math.isfinite(depth) and depth > 0):
        raise InvalidInputError("depth must be finite and positive", depth=depth)
    Kt = K if K_target is None else K_target
    r = [[float(v) for v in row] for row in P.rotation]
    t = [float(v) for v in P.translation]
    u, v = float(r_i[0]), float(r_i[1])
    x = (u - K.cx) / K.fx * depth
    y = (v - K.cy) / K.fy * depth
    z = depth
    zc = r[2][0] * x + r[2][1] * y + r[2][2] * z + t[2]
    if not zc > 0:
        return None
    xc = r[0][0] * x + r[0][1] * y + r[0][2] * z + t[0]
    yc = r[1][0] * x + r[1][1] * y + r[1][2] * z + t[1]
    return np.array([Kt.fx * xc / zc + Kt.cx, Kt.fy * yc / zc + Kt.cy])


def warp_frame(
    src: np.ndarray,
    depth: np.ndarray,
    P: Pose,
    K: Intrinsics,
    K_target: Intrinsics | None = None,
) -> WarpedView:
    _check_frame(src, depth)
    Kt = K if K_target is None else K_target
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W]
    d = depth.astype(np.float64)
    x = (u - K.cx) / K.fx * d
    y = (v - K.cy) / K.fy * d
    z = d
    r = P.rotation
    t = P.translation
    zc = float(r[2, 0]) * x + float(r[2, 1]) * y + float(r[2, 2]) * z + float(t[2])
    xc = float(r[0, 0]) * x + float(r[0, 1]) * y + float(r[0, 2]) * z + float(t[0])
    yc = float(r[1, 0]) * x + float(r[1, 1]) * y + float(r[1, 2]) * z + float(t[1])

    front = zc > 0
    safe_z = np.where(front, zc, 1.0)
    ut = np.floor(Kt.fx * xc / safe_z + Kt.cx + 0.5)
    vt = np.floor(Kt.fy * yc / safe_z + Kt.cy + 0.5)
    ok = front & (ut >= 0) & (ut < W) & (vt >= 0) & (vt < H)

    src_index = np.flatnonzero(ok)
    target = (vt.ravel()[src_index] * W + ut.ravel()[src_index]).astype(np.int64)
    zt = zc.ravel()[src_index]
    # sort by target pixel, then depth, then source order; keep the first per target
    order = np.lexsort((src_index, zt, target))
    target_sorted = target[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = target_sorted[1:] != target_sorted[:-1]
    winners = order[first]

    out = np.zeros(H * W * src.shape[2], dtype=src.dtype).reshape(H * W, src.shape[2])
    mask = np.ones(H * W, dtype=np.uint8)
    out[target[winners]] = src.reshape(H * W, -1)[src_index[winners]]
    mask[target[winners]] = 0
    return WarpedView(out.reshape(src.shape), mask.reshape(H, W))


def oracle_warp_frame(
    src: np.ndarray,
    depth: np.ndarray,
    P: Pose,
    K: Intrinsics,
    K_target: Intrinsics | None = None,
) -> WarpedView:
    """Reference warp: one source pixel at a time with an explicit z-buffer."""
    _check_frame(src, depth)
    Kt = K if K_target is None else K_target
    H, W = depth.shape
    r = [[float(v) for v in row] for row in P.rotation]
    t = [float(v) for v in P.translation]
    out = np.zeros_like(src)
    mask = np.ones((H, W), dtype=np.uint8)
    zbuf = [[math.inf] * W for _ in range(H)]
    for v in range(H):
        for u in range(W):
            d = float(depth[v, u])
            x = (u - K.cx) / K.fx * d
            y = (v - K.cy) / K.fy * d
            z = d
            zc = r[2][0] * x + r[2][1] * y + r[2][2] * z + t[2]
            if not zc > 0:
                continue
            xc = r[0][0] * x + r[0][1] * y + r[0][2] * z + t[0]
            yc = r[1][0] * x + r[1][1] * y + r[1][2] * z + t[1]
            ut = math.floor(Kt.fx * xc / zc + Kt.cx + 0.5)
            vt = math.floor(Kt.fy * yc / zc + Kt.cy + 0.5)
            if not (0 <= ut < W and 0 <= vt < H):
                continue
            if zc < zbuf[vt][ut]:
                zbuf[vt][ut] = zc
                out[vt, ut] = src[v, u]
                mask[vt, ut] = 0
    return WarpedView(out, mask)


def warp_video_row(
    row: Sequence[np.ndarray],
    depths: Sequence[np.ndarray],
    trajectory: Trajectory,
    K: Intrinsics,
) -> WarpedGrid:
    """Warp every input frame into every view of the trajectory.

    View 0 is the input camera and gets the input frames with all-visible masks.
    """
    if len(row) != len(depths):
        raise InvalidInputError(
            "input row and depth list lengths differ",
            frames=len(row),
            depths=len(depths),
        )
    if len(row) == 0:
        raise InvalidInputError("input row is empty")
    first = np.asarray(row[0])
    N, F = trajectory.n_views, len(row)
    frames = np.zeros((N, F) + first.shape, dtype=first.dtype)
    masks = np.ones((N, F) + first.shape[:2], dtype=np.uint8)
    for i, (src, depth) in enumerate(zip(row, depths)):
        src = np.asarray(src)
        _check_frame(src, np.asarray(depth))
        frames[0, i] = src
        masks[0, i] = 0
    for n in range(1, N):
        P = relative_transform(trajectory.poses[0], trajectory.poses[n])
        Kt = trajectory.intrinsics(n, K)
        for i, (src, depth) in enumerate(zip(row, depths)):
            view = warp_frame(np.asarray(src), np.asarray(depth), P, K, Kt)
            frames[n, i] = view.frame
            masks[n, i] = view.mask
    return WarpedGrid(frames, masks)
