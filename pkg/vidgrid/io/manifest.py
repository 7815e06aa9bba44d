"""Grid manifests: one PNG per cell plus ``manifest.ttl`` describing the grid.

The manifest is a small RDF graph written as Turtle. Reading it back goes through
SPARQL, the same way the rest of the graph tooling queries its data.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rdflib import Graph, Literal, Namespace, URIRef
from rdflib.namespace import RDF, XSD

from vidgrid.errors import FormatError, InvalidInputError, ManifestIncompleteError
from vidgrid.grid import CellStatus, Grid4D
from vidgrid.io.frames import load_frame, save_frame

logger = logging.getLogger(__name__)

VG = Namespace("urn:vidgrid:vocab#")
GRID = URIRef("urn:vidgrid:grid")
MANIFEST_NAME = "manifest.ttl"


def cell_file(n: int, i: int, prefix: str = "") -> str:
    return f"{prefix}view{n:03d}_time{i:03d}.png"


def _cell_uri(n: int, i: int) -> URIRef:
    return URIRef(f"urn:vidgrid:cell/v{n:03d}/t{i:03d}")


@dataclass
class GridManifest:
    n_views: int
    n_frames: int
    height: int
    width: int
    channels: int
    seed: int
    config_digest: str
    bit_depth: int = 16
    trajectory: dict = field(default_factory=dict)
    files: dict[tuple[int, int], str] = field(default_factory=dict)
    statuses: dict[tuple[int, int], str] = field(default_factory=dict)

    def to_graph(self) -> Graph:
        g = Graph()
        g.bind("vg", VG)
        g.add((GRID, RDF.type, VG.Grid))
        g.add((GRID, VG.nViews, Literal(self.n_views, datatype=XSD.integer)))
        g.add((GRID, VG.nFrames, Literal(self.n_frames, datatype=XSD.integer)))
        g.add((GRID, VG.height, Literal(self.height, datatype=XSD.integer)))
        g.add((GRID, VG.width, Literal(self.width, datatype=XSD.integer)))
        g.add((GRID, VG.channels, Literal(self.channels, datatype=XSD.integer)))
        g.add((GRID, VG.seed, Literal(self.seed, datatype=XSD.integer)))
        g.add((GRID, VG.bitDepth, Literal(self.bit_depth, datatype=XSD.integer)))
        g.add((GRID, VG.configDigest, Literal(self.config_digest)))
        trajectory = json.dumps(self.trajectory, sort_keys=True)
        g.add((GRID, VG.trajectory, Literal(trajectory)))
        for (n, i), name in self.files.items():
            cell = _cell_uri(n, i)
            g.add((GRID, VG.cell, cell))
            g.add((cell, RDF.type, VG.Cell))
            g.add((cell, VG.view, Literal(n, datatype=XSD.integer)))
            g.add((cell, VG.time, Literal(i, datatype=XSD.integer)))
            g.add((cell, VG.file, Literal(name)))
            g.add((cell, VG.status, Literal(self.statuses.get((n, i), "FINAL"))))
        return g


@dataclass
class LoadedGrid:
    manifest: GridManifest
    frames: np.ndarray  # (N, F, H, W, C) float32

    def cell(self, n: int, i: int) -> np.ndarray:
        return self.frames[n, i]


def write_manifest(
    out_dir: str | Path,
    frames: np.ndarray,
    seed: int,
    config_digest: str,
    trajectory: dict | None = None,
    statuses: np.ndarray | None = None,
    bit_depth: int = 16,
    prefix: str = "",
) -> GridManifest:
    """Write every cell of ``frames`` ``(N, F, H, W, C)`` plus the manifest."""
    frames = np.asarray(frames)
    if frames.ndim != 5:
        raise InvalidInputError(
            "grid frames must be (N, F, H, W, C)", shape=frames.shape
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    N, F, H, W, C = frames.shape
    manifest = GridManifest(
        N, F, H, W, C, seed, config_digest, bit_depth, dict(trajectory or {})
    )
    for n in range(N):
        for i in range(F):
            name = cell_file(n, i, prefix)
            save_frame(out / name, frames[n, i], bit_depth)
            manifest.files[(n, i)] = name
            status = CellStatus.FINAL
            if statuses is not None:
                status = CellStatus(int(statuses[n, i]))
            manifest.statuses[(n, i)] = status.name
    manifest.to_graph().serialize(destination=str(out / MANIFEST_NAME), format="turtle")
    logger.info(f"Wrote {N * F} cells and {MANIFEST_NAME} to {out}")
    return manifest


def write_grid(
    out_dir: str | Path,
    grid: Grid4D,
    seed: int,
    config_digest: str,
    trajectory: dict | None = None,
    bit_depth: int = 16,
) -> GridManifest:
    return write_manifest(
        out_dir, grid.states, seed, config_digest, trajectory, grid.status, bit_depth
    )


GRID_QUERY = """
PREFIX vg: <urn:vidgrid:vocab#>
SELECT ?n ?f ?h ?w ?c ?seed ?digest ?depth ?traj WHERE {
    ?grid a vg:Grid ;
        vg:nViews ?n ;
        vg:nFrames ?f ;
        vg:height ?h ;
        vg:width ?w ;
        vg:channels ?c ;
        vg:seed ?seed ;
        vg:configDigest ?digest ;
        vg:bitDepth ?depth ;
        vg:trajectory ?traj .
}"""

CELL_QUERY = """
PREFIX vg: <urn:vidgrid:vocab#>
SELECT ?view ?time ?file ?status WHERE {
    ?grid vg:cell ?cell .
    ?cell vg:view ?view ;
        vg:time ?time ;
        vg:file ?file ;
        vg:status ?status .
}"""


def read_manifest(out_dir: str | Path, load_frames: bool = True) -> LoadedGrid:
    """Parse ``manifest.ttl`` and load every cell, listing all missing files at once."""
    out = Path(out_dir)
    path = out / MANIFEST_NAME
    g = Graph()
    try:
        g.parse(str(path), format="turtle")
    except FileNotFoundError as e:
        raise FormatError("no manifest in directory", path=str(path)) from e
    except Exception as e:
        raise FormatError(f"unreadable manifest: {e}", path=str(path)) from e

    rows = list(g.query(GRID_QUERY))
    if len(rows) != 1:
        raise FormatError("manifest must describe exactly one grid", path=str(path))
    n, f, h, w, c, seed, digest, depth, traj = rows[0]
    manifest = GridManifest(
        n_views=int(n.toPython()),
        n_frames=int(f.toPython()),
        height=int(h.toPython()),
        width=int(w.toPython()),
        channels=int(c.toPython()),
        seed=int(seed.toPython()),
        config_digest=str(digest),
        bit_depth=int(depth.toPython()),
        trajectory=json.loads(str(traj)),
    )
    for view, time, name, status in g.query(CELL_QUERY):
        key = (int(view.toPython()), int(time.toPython()))
        manifest.files[key] = str(name)
        manifest.statuses[key] = str(status)

    N, F = manifest.n_views, manifest.n_frames
    missing = [
        (v, t)
        for v in range(N)
        for t in range(F)
        if (v, t) not in manifest.files or not (out / manifest.files[(v, t)]).is_file()
    ]
    if missing:
        names = ", ".join(f"view {v} time {t}" for v, t in missing)
        raise ManifestIncompleteError(
            f"missing cell files: {names}", path=str(out), missing=missing
        )
    shape = (N, F, manifest.height, manifest.width, manifest.channels)
    frames = np.zeros(shape, dtype=np.float32)
    if load_frames:
        for (v, t), name in manifest.files.items():
            if v >= N or t >= F:
                raise FormatError("cell outside the grid", view=v, time=t)
            frame = load_frame(out / name)
            if frame.shape != shape[2:]:
                raise FormatError(
                    "cell frame has the wrong size",
                    view=v,
                    time=t,
                    expected=shape[2:],
                    got=frame.shape,
                )
            frames[v, t] = frame
    return LoadedGrid(manifest, frames)
