"""Finite samples of model compact metric spaces.

Every space is a point cloud in R^d whose metric is a monotone transform
of the Euclidean distance (identity for all kinds except the snowflake),
rescaled so the sampled diameter is exactly 1.  That structure lets all
neighbor queries run through one KD-tree on the raw coordinates.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

KINDS = ("interval", "circle", "square", "sphere", "carpet", "snowflake")

# Net geometry degrades below sample resolution; keep s^-k >= RESOLUTION_FACTOR*h.
RESOLUTION_FACTOR = 4.0


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloudSpace:
    """Finite sample of a compact metric space with normalized diameter 1.

    metric(i, j) = |x_i - x_j|^alpha / scale, with alpha = 1 for all kinds
    except the snowflake.  ``scale`` is the raw diameter of the sample, so
    the normalized diameter is exactly 1.
    """

    kind: str
    coords: np.ndarray  # (n, dim) raw coordinates, read-only
    alpha: float
    scale: float
    resolution: float  # covering radius h of the sample, normalized metric
    kind_params: dict

    def __post_init__(self):
        self.coords.setflags(write=False)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def diameter(self) -> float:
        return 1.0

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.coords)

    # -- metric oracle -------------------------------------------------

    def metric_from_euclid(self, e):
        if self.alpha == 1.0:
            return e / self.scale
        return np.power(e, self.alpha) / self.scale

    def euclid_from_metric(self, r):
        if self.alpha == 1.0:
            return r * self.scale
        return float((r * self.scale) ** (1.0 / self.alpha))

    def distance(self, i: int, j: int) -> float:
        e = float(np.linalg.norm(self.coords[i] - self.coords[j]))
        return float(self.metric_from_euclid(e))

    def distances_from(self, i: int) -> np.ndarray:
        """Distances from point i to every sample point."""
        e = np.linalg.norm(self.coords - self.coords[i], axis=1)
        return self.metric_from_euclid(e)

    def distances_between(self, ids_a: np.ndarray, ids_b: np.ndarray) -> np.ndarray:
        """Dense (len(a), len(b)) block of pairwise distances."""
        diff = self.coords[np.asarray(ids_a)][:, None, :] - self.coords[np.asarray(ids_b)][None, :, :]
        return self.metric_from_euclid(np.linalg.norm(diff, axis=2))

    def neighbors_within(self, i: int, r: float) -> np.ndarray:
        """Ids of points at metric distance < r from point i (open ball)."""
        cand = self.tree.query_ball_point(self.coords[i], self.euclid_from_metric(r) * (1 + 1e-9))
        cand = np.asarray(cand, dtype=np.int64)
        d = self.metric_from_euclid(np.linalg.norm(self.coords[cand] - self.coords[i], axis=1))
        return cand[d < r * (1 - 1e-12)]

    def count_in_ball(self, i: int, r: float) -> int:
        return int(self.neighbors_within(i, r).size)

    def k_max(self, s: float) -> int:
        """Deepest level at which nets remain faithful: s^-k >= 4h."""
        return int(math.floor(math.log(1.0 / (RESOLUTION_FACTOR * self.resolution)) / math.log(s)))

    def export_text(self) -> str:
        buf = io.StringIO()
        h = self.kind_params.get("h", self.resolution)
        buf.write(f"# kind={self.kind} h={h:.12g} diam=1\n")
        for i, row in enumerate(self.coords):
            buf.write(str(i) + " " + " ".join(f"{c:.12g}" for c in row) + "\n")
        return buf.getvalue()


@dataclass(frozen=True)
class Net:
    """Maximal s^-k separated subset of the sample."""

    level: int
    separation: float
    members: np.ndarray

    def __post_init__(self):
        self.members.setflags(write=False)


@dataclass(frozen=True)
class RegularityReport:
    exponent_fit: float
    lower_const: float
    upper_const: float
    radii_tested: tuple
    residual: float


# ---------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------


def _require_h(params) -> float:
    h = float(params.get("h", 0.0))
    if h <= 0:
        raise SpaceError("resolution h must be positive")
    return h


def _interval(params):
    h = _require_h(params)
    n = int(round(1.0 / h)) + 1
    xs = np.linspace(0.0, 1.0, n)
    coords = xs[:, None]
    return coords, 1.0, 1.0, h / 2.0, {"h": h}


def _square(params):
    h = _require_h(params)
    # normalized coverage = (g*sqrt(2)/2)/sqrt(2) = g/2 <= h
    g = 2.0 * h
    m = int(math.ceil(1.0 / g)) + 1
    xs = np.linspace(0.0, 1.0, m)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    scale = math.sqrt(2.0)
    step = xs[1] - xs[0]
    cover = (step * math.sqrt(2.0) / 2.0) / scale
    return coords, 1.0, scale, cover, {"h": h}


def _circle(params):
    h = _require_h(params)
    m = int(math.ceil(math.pi / (2.0 * h)))
    m += m % 2  # even count puts antipodal pairs in the sample, raw diam exactly 2
    m = max(m, 8)
    ang = 2.0 * math.pi * np.arange(m) / m
    coords = np.column_stack([np.cos(ang), np.sin(ang)])
    cover = 2.0 * math.sin(math.pi / (2.0 * m)) / 2.0
    return coords, 1.0, 2.0, cover, {"h": h, "n": m}


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    z = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _sphere(params):
    h = _require_h(params)
    # empirical covering radius of the Fibonacci lattice ~ 3.1/sqrt(n) geodesic
    n = max(64, int(math.ceil((1.6 / h) ** 2)))
    coords = _fibonacci_sphere(n)
    # raw diameter computed exactly (chunked max over pairs)
    scale = _exact_diameter_euclid(coords)
    cover = (1.6 / math.sqrt(n)) * 2.0 / scale  # conservative chord estimate
    return coords, 1.0, scale, cover, {"h": h, "n": n}


def _carpet(params):
    d = int(params.get("d", 0))
    if d < 1:
        raise SpaceError("carpet depth d must be >= 1")
    cells = [(0, 0)]
    for _ in range(d):
        nxt = []
        for (i, j) in cells:
            for di in range(3):
                for dj in range(3):
                    if di == 1 and dj == 1:
                        continue
                    nxt.append((3 * i + di, 3 * j + dj))
        cells = nxt
    cells.sort()
    side = 3**d
    arr = (np.asarray(cells, dtype=float) + 0.5) / side
    scale = math.sqrt(2.0) * (1.0 - 1.0 / side)
    cover = (math.sqrt(2.0) / (2.0 * side)) / scale
    return arr, 1.0, scale, cover, {"d": d, "h": cover}


def _snowflake(params):
    alpha = float(params.get("alpha", 0.0))
    if not (0.0 < alpha <= 1.0):
        raise SpaceError("snowflake exponent alpha must lie in (0, 1]")
    h = _require_h(params)
    g = 2.0 * h ** (1.0 / alpha)
    n = int(math.ceil(1.0 / g)) + 1
    xs = np.linspace(0.0, 1.0, n)
    step = xs[1] - xs[0]
    cover = (step / 2.0) ** alpha
    return xs[:, None], alpha, 1.0, cover, {"h": h, "alpha": alpha}


def _exact_diameter_euclid(coords: np.ndarray, chunk: int = 512) -> float:
    best = 0.0
    n = coords.shape[0]
    for lo in range(0, n, chunk):
        blk = coords[lo : lo + chunk]
        d = np.linalg.norm(blk[:, None, :] - coords[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


_BUILDERS = {
    "interval": _interval,
    "circle": _circle,
    "square": _square,
    "sphere": _sphere,
    "carpet": _carpet,
    "snowflake": _snowflake,
}


def make_model_space(kind: str, params: dict | None = None) -> PointCloudSpace:
    """Build one of the model spaces; deterministic given (kind, params)."""
    if kind not in _BUILDERS:
        raise SpaceError(f"unknown kind {kind!r}; expected one of {KINDS}")
    coords, alpha, scale, cover, kind_params = _BUILDERS[kind](dict(params or {}))
    coords = np.ascontiguousarray(coords, dtype=float)
    return PointCloudSpace(
        kind=kind,
        coords=coords,
        alpha=alpha,
        scale=scale,
        resolution=cover,
        kind_params=kind_params,
    )


# ---------------------------------------------------------------------
# nets
# ---------------------------------------------------------------------


def greedy_maximal_net(space: PointCloudSpace, level: int, s: float) -> Net:
    """Greedy maximal s^-level separated net, scanning ids in ascending order.

    A point is accepted iff no previously accepted member is at distance
    < separation; acceptance then blocks its open separation-ball.
    """
    if level < 1:
        raise SpaceError("net level must be >= 1")
    if s <= 1:
        raise SpaceError("scaling parameter s must be > 1")
    sep = s ** (-level)
    eucl = space.euclid_from_metric(sep) * (1 + 1e-9)
    blocked = np.zeros(space.n_points, dtype=bool)
    members = []
    tree = space.tree
    coords = space.coords
    for i in range(space.n_points):
        if blocked[i]:
            continue
        members.append(i)
        cand = np.asarray(tree.query_ball_point(coords[i], eucl), dtype=np.int64)
        d = space.metric_from_euclid(np.linalg.norm(coords[cand] - coords[i], axis=1))
        blocked[cand[d < sep * (1 - 1e-12)]] = True
    return Net(level=level, separation=sep, members=np.asarray(members, dtype=np.int64))


# ---------------------------------------------------------------------
# regularity probe
# ---------------------------------------------------------------------


def regularity_probe(space: PointCloudSpace, radii, n_centers: int = 64, seed: int = 0) -> RegularityReport:
    """Least-squares dimension fit of log mean ball count against log radius.

    Ball mass is the normalized counting measure; the envelope constants
    c, C bound count/n over r^Q_hat across all probed (center, radius).
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise SpaceError("need at least 3 radii")
    if radii[0] <= 2 * space.resolution or radii[-1] > 1.0:
        raise SpaceError("radii must lie in (2h, 1]")
    rng = np.random.default_rng(seed)
    centers = rng.integers(0, space.n_points, size=min(n_centers, space.n_points))
    counts = np.zeros((len(centers), len(radii)))
    for ci, c in enumerate(centers):
        d = space.distances_from(int(c))
        for ri, r in enumerate(radii):
            counts[ci, ri] = np.count_nonzero(d < r)
    mean = counts.mean(axis=0)
    logs_r = np.log(np.asarray(radii))
    logs_c = np.log(mean)
    A = np.column_stack([logs_r, np.ones_like(logs_r)])
    sol, res, _, _ = np.linalg.lstsq(A, logs_c, rcond=None)
    q_hat = float(sol[0])
    residual = float(res[0]) if res.size else 0.0
    mu = counts / space.n_points
    ratios = mu / np.power(np.asarray(radii)[None, :], q_hat)
    return RegularityReport(
        exponent_fit=q_hat,
        lower_const=float(ratios.min()),
        upper_const=float(ratios.max()),
        radii_tested=tuple(radii),
        residual=residual,
    )
