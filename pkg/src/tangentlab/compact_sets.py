"""Finite point-cloud approximations of compact sets.

Clouds carry the resolution of the grid that produced them.  The Hausdorff
machinery is exact brute force for moderate sizes and switches to a k-d
tree for large inputs; both paths return identical distances.

``approx_upper_limit`` realizes the topological upper limit of a set
sequence on a finite window: a point of the tail union is kept when it
comes within ``eps`` of at least two distinct tail sets.  A single near
hit must not certify membership in a limit set; two hits across the tail
is the weakest recurrence evidence a finite window supports.  This is an
approximation of the infinite-sequence notion, not a theorem: families
whose members drift slowly can retain transients that an infinite tail
would discard.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .numerics import Box

__all__ = [
    "PointCloudSet",
    "SetSequence",
    "min_dist",
    "directed_hausdorff",
    "hausdorff",
    "eps_subset",
    "EpsSubset",
    "approx_upper_limit",
    "write_point_cloud",
    "read_point_cloud",
]

# Above this many pairwise distances the k-d tree path takes over from
# chunked brute force; both are exact nearest-neighbor computations.
_BRUTE_FORCE_PAIR_LIMIT = 10_000_000
_BRUTE_FORCE_SET_LIMIT = 200_000
_CSV_HEADERS = {1: "x", 2: "x,y", 3: "x,y,z"}


def _query_workers() -> int:
    """Worker cap for tree queries, from TANGENTLAB_THREADS (default: all)."""
    raw = os.environ.get("TANGENTLAB_THREADS", "")
    try:
        workers = int(raw)
    except ValueError:
        return -1
    return workers if workers > 0 else -1


@dataclass(frozen=True)
class PointCloudSet:
    """Deduplicated, lexicographically sorted finite point set in R^d.

    ``resolution`` is the spacing of the generating grid and tags how
    coarse the approximation is.  Empty clouds must be requested
    explicitly via ``allow_empty`` (or the ``empty`` constructor).
    """

    dim: int
    points: np.ndarray
    resolution: float
    box: Box | None = None
    allow_empty: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"point cloud dimension must be 1..3, got {self.dim}")
        if not self.resolution > 0.0:
            raise ValueError("resolution must be positive")
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts = np.unique(pts, axis=0)
        if pts.shape[0] == 0 and not self.allow_empty:
            raise ValueError("empty point cloud (pass allow_empty to permit)")
        if self.box is not None:
            if self.box.dim != self.dim:
                raise ValueError("box dimension does not match cloud dimension")
            if pts.size and not self.box.contains(pts):
                raise ValueError("points fall outside the associated box")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def empty(cls, dim: int, resolution: float, box: Box | None = None) -> "PointCloudSet":
        return cls(dim, np.empty((0, dim)), resolution, box, allow_empty=True)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.size == 0


CloudLike = Union[PointCloudSet, Sequence[PointCloudSet]]


@dataclass(frozen=True)
class SetSequence:
    """Ordered sequence of nonempty clouds sharing dimension and box."""

    sets: tuple[PointCloudSet, ...]

    def __post_init__(self):
        sets = tuple(self.sets)
        object.__setattr__(self, "sets", sets)
        if len(sets) < 2:
            raise ValueError("a set sequence needs at least 2 members")
        dim = sets[0].dim
        box = sets[0].box
        for k in sets:
            if k.dim != dim:
                raise ValueError("all sets in a sequence must share a dimension")
            if k.box != box:
                raise ValueError("all sets in a sequence must share a box")
            if k.is_empty:
                raise ValueError("set sequences cannot contain empty sets")

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, idx):
        return self.sets[idx]

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    @property
    def resolution(self) -> float:
        return max(k.resolution for k in self.sets)


def _require_nonempty(*clouds: PointCloudSet) -> None:
    for k in clouds:
        if k.is_empty:
            raise ValueError("operation requires nonempty point sets")


def _nearest_distances(query: np.ndarray, target: PointCloudSet) -> np.ndarray:
    """Exact distance from each query point to its nearest target point."""
    n, m = query.shape[0], target.size
    if n == 0:
        return np.empty(0)
    if m <= _BRUTE_FORCE_SET_LIMIT and n * m <= _BRUTE_FORCE_PAIR_LIMIT:
        chunk = max(1, _BRUTE_FORCE_PAIR_LIMIT // m)
        out = np.empty(n)
        for start in range(0, n, chunk):
            stop = min(n, start + chunk)
            out[start:stop] = cdist(query[start:stop], target.points).min(axis=1)
        return out
    dists, _ = cKDTree(target.points).query(query, workers=_query_workers())
    return np.asarray(dists, dtype=float)


def min_dist(p: Sequence[float], cloud: PointCloudSet) -> float:
    """Euclidean distance from a point to the nearest cloud point."""
    _require_nonempty(cloud)
    q = np.asarray(p, dtype=float).reshape(1, cloud.dim)
    return float(_nearest_distances(q, cloud)[0])


def _directed_with_witness(k1: PointCloudSet, k2: PointCloudSet) -> tuple[float, np.ndarray]:
    _require_nonempty(k1, k2)
    if k1.dim != k2.dim:
        raise ValueError("point clouds must share a dimension")
    dists = _nearest_distances(k1.points, k2)
    idx = int(np.argmax(dists))
    return float(dists[idx]), k1.points[idx].copy()


def directed_hausdorff(k1: PointCloudSet, k2: PointCloudSet) -> float:
    """max over p in k1 of the distance from p to k2."""
    return _directed_with_witness(k1, k2)[0]


def hausdorff(k1: PointCloudSet, k2: PointCloudSet) -> float:
    """Symmetrized Hausdorff distance between two nonempty clouds."""
    return max(directed_hausdorff(k1, k2), directed_hausdorff(k2, k1))


class EpsSubset(NamedTuple):
    holds: bool
    distance: float
    witness: np.ndarray  # worst point of k1; meaningful when holds is False


def eps_subset(k1: PointCloudSet, k2: PointCloudSet, eps: float) -> EpsSubset:
    """Whether k1 lies within eps of k2 (directed Hausdorff test)."""
    dist, witness = _directed_with_witness(k1, k2)
    return EpsSubset(dist <= eps, dist, witness)


def approx_upper_limit(
    seq: Union[SetSequence, Iterable[PointCloudSet]],
    eps: float | None = None,
    tail_fraction: float = 0.5,
) -> PointCloudSet:
    """Finite-window approximation of the topological upper limit.

    Keeps every point of the union of the tail (the last
    ceil(tail_fraction * N) sets) that lies within ``eps`` of at least two
    distinct tail sets.  ``eps`` defaults to twice the sequence resolution,
    tying membership tolerance to sampling density.  Output is monotone
    nondecreasing in ``eps``.
    """
    if not isinstance(seq, SetSequence):
        seq = SetSequence(tuple(seq))
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    if eps is None:
        eps = 2.0 * seq.resolution
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    n_tail = math.ceil(tail_fraction * len(seq))
    if n_tail < 2:
        raise ValueError(
            f"tail window has {n_tail} set(s); need at least 2 for recurrence"
        )
    tail = seq.sets[-n_tail:]
    pool = np.unique(np.vstack([k.points for k in tail]), axis=0)
    hits = np.zeros(pool.shape[0], dtype=np.int64)
    for k in tail:
        hits += _nearest_distances(pool, k) <= eps
    kept = pool[hits >= 2]
    return PointCloudSet(
        seq.dim, kept, seq.resolution, box=tail[0].box, allow_empty=True
    )


# ---------------------------------------------------------------------------
# serialization


def _manifest_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".manifest.json")


def write_point_cloud(cloud: PointCloudSet, path: str | Path) -> None:
    """Write a cloud as CSV plus a JSON manifest sidecar.

    The CSV has one point per row under an ``x,y[,z]`` header; the manifest
    records {dim, box, h, count}.  Output is byte-identical for equal
    clouds: points are already sorted and floats use repr round-tripping.
    """
    path = Path(path)
    lines = [_CSV_HEADERS[cloud.dim]]
    for row in cloud.points:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest = {
        "dim": cloud.dim,
        "box": list(list(iv) for iv in cloud.box.intervals) if cloud.box else None,
        "h": cloud.resolution,
        "count": cloud.size,
    }
    _manifest_path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_point_cloud(path: str | Path, resolution: float | None = None) -> PointCloudSet:
    """Read a cloud written by ``write_point_cloud``.

    Without a manifest, ``resolution`` must be supplied.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        raise ValueError(f"{path} is empty")
    lines = text.splitlines()
    header = lines[0].strip()
    dims = {v: k for k, v in _CSV_HEADERS.items()}
    if header not in dims:
        raise ValueError(f"unrecognized point cloud header {header!r}")
    dim = dims[header]
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
    box = None
    h = resolution
    mpath = _manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        h = float(manifest.get("h", h if h is not None else 0.0))
        if manifest.get("box"):
            box = Box(tuple(tuple(iv) for iv in manifest["box"]))
    if h is None or not h > 0.0:
        raise ValueError(
            f"no resolution metadata for {path}; pass resolution= explicitly"
        )
    pts = np.array(rows, dtype=float).reshape(-1, dim)
    return PointCloudSet(dim, pts, h, box=box, allow_empty=True)
