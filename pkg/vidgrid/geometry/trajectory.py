"""Camera trajectories defining the camera axis of the grid.

Every constructor returns poses expressed relative to the input camera, so
``poses[0]`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from vidgrid.errors import InvalidInputError
from vidgrid.geometry.camera import Intrinsics, Pose, look_at, relative_transform

TrajectoryKind = Literal[
    "orbit", "dolly", "elevation", "complex", "translate", "custom"
]


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: tuple[Pose, ...]
    kind: TrajectoryKind = "custom"
    # per-view focal multipliers; None means one fixed K for every view
    focal_scales: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.poses) < 2:
            raise InvalidInputError("a trajectory needs at least two views")
        if not self.poses[0].is_identity(tol=1e-9):
            raise InvalidInputError(
                "the first pose must be the input camera (identity)"
            )
        if self.focal_scales is not None:
            scales = tuple(float(s) for s in self.focal_scales)
            if len(scales) != len(self.poses) or any(
                not (math.isfinite(s) and s > 0) for s in scales
            ):
                raise InvalidInputError("focal scales must be positive, one per view")
            object.__setattr__(self, "focal_scales", scales)

    @property
    def n_views(self) -> int:
        return len(self.poses)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, n: int) -> Pose:
        return self.poses[n]

    def centers(self) -> np.ndarray:
        return np.stack([p.center() for p in self.poses])

    def intrinsics(self, n: int, K: Intrinsics) -> Intrinsics:
        """``K`` as seen by view ``n``, where ``K`` belongs to the input view."""
        if self.focal_scales is None:
            return K
        return K.scaled(self.focal_scales[n] / self.focal_scales[0])


def _check(n_views: int, *values: float) -> None:
    if int(n_views) != n_views or n_views < 2:
        raise InvalidInputError("n_views must be an integer >= 2", n_views=n_views)
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError("trajectory parameters must be finite", value=v)


def _rebase(poses: Sequence[Pose]) -> tuple[Pose, ...]:
    first = poses[0]
    if first.is_identity():
        return tuple(poses)
    return tuple(relative_transform(first, p) for p in poses)


def make_orbit_trajectory(
    center_depth: float, max_angle: float, n_views: int
) -> Trajectory:
    """Rotate about the vertical axis through the point ``center_depth`` ahead.

    Positive angles move the camera to the right while it keeps facing the pivot.
    """
    _check(n_views, center_depth, max_angle)
    if center_depth <= 0:
        raise InvalidInputError(
            "orbit pivot depth must be positive", depth=center_depth
        )
    if not -180.0 < max_angle < 180.0:
        raise InvalidInputError("orbit angle must lie in (-180, 180)", angle=max_angle)
    pivot = np.array([0.0, 0.0, center_depth])
    poses = []
    for angle in np.linspace(0.0, max_angle, n_views):
        a = math.radians(angle)
        offset = np.array(
            [center_depth * math.sin(a), 0.0, -center_depth * math.cos(a)]
        )
        poses.append(look_at(pivot + offset, pivot))
    return Trajectory(
        _rebase(poses),
        kind="orbit",
        params={"center_depth": center_depth, "max_angle": max_angle},
    )


def make_translate_trajectory(offset: Sequence[float], n_views: int) -> Trajectory:
    """Pure translation of the camera centre from the origin to ``offset``."""
    end = np.asarray(offset, dtype=np.float64).reshape(3)
    _check(n_views, *end)
    poses = [
        Pose(np.eye(3), -(end * s)) for s in np.linspace(0.0, 1.0, n_views)
    ]
    return Trajectory(tuple(poses), kind="translate", params={"offset": end.tolist()})


def make_dolly_trajectory(
    distance: float, n_views: int, zoom_subject_depth: float | None = None
) -> Trajectory:
    """Move along the optical axis; positive ``distance`` dollies in.

    With ``zoom_subject_depth`` set, each view also carries the focal scale that keeps
    a subject at that depth the same size on screen.
    """
    _check(n_views, distance)
    steps = np.linspace(0.0, distance, n_views)
    poses = tuple(Pose(np.eye(3), np.array([0.0, 0.0, -s])) for s in steps)
    scales = None
    if zoom_subject_depth is not None:
        if not zoom_subject_depth > max(0.0, distance):
            raise InvalidInputError(
                "dolly-zoom subject must stay in front of the camera",
                subject_depth=zoom_subject_depth,
            )
        scales = tuple((zoom_subject_depth - s) / zoom_subject_depth for s in steps)
    return Trajectory(
        poses,
        kind="dolly",
        focal_scales=scales,
        params={"distance": distance, "zoom_subject_depth": zoom_subject_depth},
    )


def make_elevation_trajectory(
    height: float, pivot_depth: float, n_views: int
) -> Trajectory:
    """Raise (positive) or lower the camera, keeping the pivot on the optical axis."""
    _check(n_views, height, pivot_depth)
    if pivot_depth <= 0:
        raise InvalidInputError("pivot depth must be positive", pivot_depth=pivot_depth)
    pivot = np.array([0.0, 0.0, pivot_depth])
    # +y points down, so going up means negative y
    poses = [
        look_at(np.array([0.0, -h, 0.0]), pivot)
        for h in np.linspace(0.0, height, n_views)
    ]
    return Trajectory(
        _rebase(poses),
        kind="elevation",
        params={"height": height, "pivot_depth": pivot_depth},
    )


def make_complex_trajectory(
    waypoints: Sequence[Sequence[float]], pivot_depth: float, n_views: int
) -> Trajectory:
    """Camera centres along the waypoint polyline, each view looking at the pivot.

    Views are spaced uniformly in arc length over the whole path.
    """
    pts = np.asarray(waypoints, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
        raise InvalidInputError("need at least two 3-vector waypoints")
    _check(n_views, pivot_depth, *pts.ravel())
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0:
        raise InvalidInputError("waypoints are all identical")
    cumulative = np.concatenate([[0.0], np.cumsum(seg)])
    pivot = np.array([0.0, 0.0, pivot_depth])
    poses = []
    for s in np.linspace(0.0, total, n_views):
        k = int(np.searchsorted(cumulative, s, side="right") - 1)
        k = min(max(k, 0), len(seg) - 1)
        while seg[k] == 0 and k < len(seg) - 1:
            k += 1
        frac = 0.0 if seg[k] == 0 else (s - cumulative[k]) / seg[k]
        frac = min(max(frac, 0.0), 1.0)
        center = pts[k] + (pts[k + 1] - pts[k]) * frac
        poses.append(look_at(center, pivot))
    return Trajectory(
        _rebase(poses),
        kind="complex",
        params={"waypoints": pts.tolist(), "pivot_depth": pivot_depth},
    )


def complex_waypoints(
    variant: Literal["in_out", "out_in"], depth: float, lateral: float
) -> list[list[float]]:
    """The two combined x/y/z paths: move in then back out, or out then back in."""
    sign = 1.0 if variant == "in_out" else -1.0
    return [
        [0.0, 0.0, 0.0],
        [lateral, -0.5 * lateral, sign * depth],
        [2.0 * lateral, 0.0, 0.0],
    ]


def custom_trajectory(poses: Sequence[Pose]) -> Trajectory:
    return Trajectory(_rebase(list(poses)), kind="custom")
