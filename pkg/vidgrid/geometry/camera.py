"""Pinhole camera model and pose algebra.

Conventions: right-handed camera axes with +x right, +y down (matching pixel rows)
and +z forward. A :class:`Pose` is camera-from-world, ``X_cam = R @ X_world + t``.
Pixel (u, v) has its centre at integer coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vidgrid.errors import InvalidInputError

ORTHONORMAL_TOL = 1e-9


def _finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite", value=v)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        _finite("intrinsics", self.fx, self.fy, self.cx, self.cy)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(
                "focal lengths must be positive", fx=self.fx, fy=self.fy
            )
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(
                "image size must be positive", width=self.width, height=self.height
            )
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(
                "principal point outside the image", cx=self.cx, cy=self.cy
            )

    @classmethod
    def centered(
        cls, width: int, height: int, focal: float | None = None
    ) -> "Intrinsics":
        """Square pixels and a centred principal point; focal defaults to the width."""
        f = float(width if focal is None else focal)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def scaled(self, focal_scale: float) -> "Intrinsics":
        """Same principal point, focal lengths multiplied by ``focal_scale``."""
        return Intrinsics(
            self.fx * focal_scale,
            self.fy * focal_scale,
            self.cx,
            self.cy,
            self.width,
            self.height,
        )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-from-world transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidInputError("pose entries must be finite")
        if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHONORMAL_TOL:
            raise InvalidInputError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidInputError("rotation must have determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        r_t = self.rotation.T
        return Pose(r_t, -(r_t @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -(self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(
            np.max(np.abs(self.rotation - np.eye(3))) <= tol
            and np.max(np.abs(self.translation)) <= tol
        )

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )


def rot_x(degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def translate(x: float, y: float, z: float) -> Pose:
    return Pose(np.eye(3), np.array([x, y, z], dtype=np.float64))


def relative_transform(pose_i: Pose, pose_j: Pose) -> Pose:
    """Transform taking camera-i coordinates to camera-j coordinates.

    ``relative_transform(p, p)`` is the identity; chaining a→b with b→c gives a→c.
    """
    r = pose_j.rotation @ pose_i.rotation.T
    return Pose(r, pose_j.translation - r @ pose_i.translation)


def project(point: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Camera-space point to continuous pixel coordinates."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise InvalidInputError("point is behind the camera", z=z)
    return np.array([K.fx * x / z + K.cx, K.fy * y / z + K.cy])


def unproject(pixel: np.ndarray, depth: float, K: Intrinsics) -> np.ndarray:
    """Pixel plus z-depth to a camera-space point."""
    if not (math.isfinite(depth) and depth > 0):
        raise InvalidInputError("depth must be finite and positive", depth=depth)
    u, v = (float(c) for c in pixel)
    return np.array([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth])


def look_at(center: np.ndarray, target: np.ndarray) -> Pose:
    """Camera at ``center`` looking at ``target`` with image rows pointing along +y.

    Built from the forward/right/up frame the usual c2w look-at constructs, then
    inverted to camera-from-world.
    """
    c = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - c
    norm = np.linalg.norm(forward)
    if not norm > 0:
        raise InvalidInputError("look-at target coincides with the camera centre")
    forward = forward / norm
    right = np.cross(np.array([0.0, 1.0, 0.0]), forward)
    right_norm = np.linalg.norm(right)
    if right_norm < 1e-12:
        raise InvalidInputError("look-at direction is parallel to the vertical axis")
    right = right / right_norm
    down = np.cross(forward, right)
    c2w = np.stack([right, down, forward], axis=1)
    rotation = c2w.T
    return Pose(rotation, -(rotation @ c))
