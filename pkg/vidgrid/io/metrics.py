"""Grid quality metrics against a reference grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from vidgrid.errors import InvalidInputError
from vidgrid.geometry.camera import Intrinsics
from vidgrid.geometry.trajectory import Trajectory

# exact matches count as this many dB when averaging
PSNR_CAP_DB = 100.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for [0, 1] frames; ``inf`` marks an exact match."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError("frame shapes differ", a=a.shape, b=b.shape)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def xt_slice(frames: np.ndarray, row: int, y: int) -> np.ndarray:
    """Pixel row ``y`` of every frame in grid row ``row``, as an ``(F, W, C)`` image."""
    frames = np.asarray(frames)
    if frames.ndim != 5:
        raise InvalidInputError(
            "grid frames must be (N, F, H, W, C)", shape=frames.shape
        )
    N, F, H = frames.shape[:3]
    if not 0 <= row < N:
        raise InvalidInputError("view index out of range", row=row, n_views=N)
    if not 0 <= y < H:
        raise InvalidInputError("pixel row out of range", y=y, height=H)
    return frames[row, :, y].copy()


def _capped(values) -> float:
    return float(np.mean([min(v, PSNR_CAP_DB) for v in values]))


@dataclass
class MetricsReport:
    per_cell: np.ndarray  # (N, F) dB, inf on exact match
    boundary_exact: dict[str, bool]
    digest_match: bool | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def per_view_mean(self) -> list[float]:
        return [_capped(row) for row in self.per_cell]

    @property
    def mean(self) -> float:
        return _capped(self.per_cell.ravel())

    @property
    def interior_mean(self) -> float | None:
        interior = self.per_cell[1:-1, 1:-1]
        return _capped(interior.ravel()) if interior.size else None

    @property
    def exact_cells(self) -> int:
        return int(np.isinf(self.per_cell).sum())

    def to_dict(self) -> dict:
        def db(v):
            return "inf" if math.isinf(v) else round(float(v), 6)

        return {
            "mean_psnr_db": db(self.mean),
            "interior_mean_psnr_db": None
            if self.interior_mean is None
            else db(self.interior_mean),
            "per_view_mean_psnr_db": [db(v) for v in self.per_view_mean],
            "per_cell_psnr_db": [[db(v) for v in row] for row in self.per_cell],
            "exact_cells": self.exact_cells,
            "boundary_exact": dict(self.boundary_exact),
            "digest_match": self.digest_match,
            "notes": list(self.notes),
        }


def evaluate_grid(
    frames: np.ndarray, reference: np.ndarray, digest_match: bool | None = None
) -> MetricsReport:
    frames = np.asarray(frames)
    reference = np.asarray(reference)
    if frames.shape != reference.shape or frames.ndim != 5:
        raise InvalidInputError(
            "grid and reference shapes differ",
            grid=frames.shape,
            reference=reference.shape,
        )
    N, F = frames.shape[:2]
    per_cell = np.array(
        [[psnr(frames[n, i], reference[n, i]) for i in range(F)] for n in range(N)]
    )
    boundary = {
        "input_row": bool(np.array_equal(frames[0], reference[0])),
        "first_column": bool(np.array_equal(frames[:, 0], reference[:, 0])),
        "last_row": bool(np.array_equal(frames[N - 1], reference[N - 1])),
        "last_column": bool(np.array_equal(frames[:, F - 1], reference[:, F - 1])),
    }
    notes = []
    if digest_match is False:
        notes.append("grid and reference were produced from different configs")
    return MetricsReport(per_cell, boundary, digest_match, notes)


def cross_view_variance(
    frames: np.ndarray,
    depths: np.ndarray,
    static: np.ndarray,
    trajectory: Trajectory,
    K: Intrinsics,
) -> float:
    """Mean per-channel variance of static points across the views that see them.

    Every pixel flagged in ``static`` (``(N, F, H, W)``) is lifted to world space
    with its depth and keyed by its rounded pixel in view 0, even outside the image.
    Samples that share a key and a time index are one point; points seen fewer than
    twice do not count. Consistent grids score 0.
    """
    frames = np.asarray(frames)
    depths = np.asarray(depths)
    static = np.asarray(static, dtype=bool)
    if frames.ndim != 5 or depths.shape != frames.shape[:4]:
        raise InvalidInputError(
            "need (N, F, H, W, C) frames with matching depths",
            frames=frames.shape,
            depths=depths.shape,
        )
    if static.shape != depths.shape:
        raise InvalidInputError(
            "static mask does not match the grid", mask=static.shape, grid=depths.shape
        )
    N, F, H, W, C = frames.shape
    if trajectory.n_views != N:
        raise InvalidInputError(
            "trajectory does not match the grid", views=trajectory.n_views, grid=N
        )
    v, u = np.mgrid[0:H, 0:W]
    ref, K0 = trajectory.poses[0], trajectory.intrinsics(0, K)
    total, count = 0.0, 0
    for i in range(F):
        keys, values = [], []
        for n in range(N):
            sel = static[n, i]
            if not sel.any():
                continue
            Kn = trajectory.intrinsics(n, K)
            d = depths[n, i][sel].astype(np.float64)
            cam = np.stack(
                [(u[sel] - Kn.cx) / Kn.fx * d, (v[sel] - Kn.cy) / Kn.fy * d, d], axis=-1
            )
            p = ref.apply(trajectory.poses[n].inverse().apply(cam))
            front = p[:, 2] > 0
            p = p[front]
            key_u = np.floor(K0.fx * p[:, 0] / p[:, 2] + K0.cx + 0.5)
            key_v = np.floor(K0.fy * p[:, 1] / p[:, 2] + K0.cy + 0.5)
            keys.append(np.stack([key_u, key_v], axis=-1).astype(np.int64))
            values.append(frames[n, i][sel][front].astype(np.float64))
        if not keys:
            continue
        _, inverse, counts = np.unique(
            np.concatenate(keys), axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        samples = np.concatenate(values)
        sums = np.zeros((len(counts), C))
        squares = np.zeros((len(counts), C))
        np.add.at(sums, inverse, samples)
        np.add.at(squares, inverse, samples**2)
        seen = counts >= 2
        mean = sums[seen] / counts[seen, None]
        var = np.maximum(squares[seen] / counts[seen, None] - mean**2, 0.0)
        total += float(var.sum())
        count += int(var.size)
    if count == 0:
        raise InvalidInputError("no static point is seen by two views")
    return total / count
