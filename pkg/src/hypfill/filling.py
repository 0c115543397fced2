"""Hyperbolic filling of a sampled space and derived structures.

The filling is a leveled graph: level-k vertices are a greedy maximal
s^-k net, each carrying the ball B(center, 2 s^-k); distinct vertices are
joined iff their levels differ by at most 1 and their balls intersect.
Level 0 is a single root associated to the whole space.

Also houses sampled regions (finite unions of metric balls and ball
complements), set pairs with relative distance, hulls, ring separation,
single-level graphs, and anchor sets for truncated path families.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree, ConvexHull
from scipy.spatial import QhullError

from .spaces import PointCloudSpace, Net, greedy_maximal_net

# Touching balls (gap below this) give no edge; keeps the edge set stable.
EDGE_TOL = 1e-12


class FillingError(ValueError):
    pass


@dataclass(eq=False)
class Filling:
    space: PointCloudSpace
    s: float
    max_level: int
    center: np.ndarray  # (V,) sample point id of each vertex
    level: np.ndarray  # (V,)
    radius: np.ndarray  # (V,) = 2 s^-level
    edges: np.ndarray  # (E, 2) vertex ids, u < v, lexicographically sorted
    degree_bound: int
    nets: tuple  # Net per level 1..max_level

    @property
    def n_vertices(self) -> int:
        return self.center.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def root(self) -> int:
        return 0

    @cached_property
    def level_slices(self) -> tuple:
        """Half-open vertex-id range per level (vertices are level-sorted)."""
        out = []
        for k in range(self.max_level + 1):
            lo = int(np.searchsorted(self.level, k, side="left"))
            hi = int(np.searchsorted(self.level, k, side="right"))
            out.append((lo, hi))
        return tuple(out)

    def vertices_at_level(self, k: int) -> np.ndarray:
        lo, hi = self.level_slices[k]
        return np.arange(lo, hi, dtype=np.int64)

    @cached_property
    def arcs(self):
        """Directed arc view (indptr, neighbor, edge_id) of the undirected edges."""
        u = self.edges[:, 0]
        v = self.edges[:, 1]
        heads = np.concatenate([u, v])
        tails = np.concatenate([v, u])
        eids = np.concatenate([np.arange(self.n_edges), np.arange(self.n_edges)])
        order = np.lexsort((tails, heads))
        heads, tails, eids = heads[order], tails[order], eids[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.add.at(indptr, heads + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, tails.astype(np.int64), eids.astype(np.int64)

    @cached_property
    def csr_unit(self) -> sparse.csr_matrix:
        indptr, tails, _ = self.arcs
        data = np.ones(tails.shape[0])
        return sparse.csr_matrix((data, tails, indptr), shape=(self.n_vertices, self.n_vertices))

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    def edge_id(self, a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        return self.edge_index[(a, b)]

    def edge_levels(self) -> np.ndarray:
        """Level of an edge: the maximum endpoint level."""
        return np.maximum(self.level[self.edges[:, 0]], self.level[self.edges[:, 1]])

    def center_coords(self, vertex_ids) -> np.ndarray:
        return self.space.coords[self.center[np.asarray(vertex_ids)]]

    def export_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# s={self.s:.12g} max_level={self.max_level}\n")
        for i in range(self.n_vertices):
            buf.write(f"v {i} {int(self.level[i])} {int(self.center[i])} {self.radius[i]:.12g}\n")
        for a, b in self.edges:
            buf.write(f"e {int(a)} {int(b)}\n")
        return buf.getvalue()


def build_filling(space: PointCloudSpace, s: float, max_level: int) -> Filling:
    """Construct the filling on levels 0..max_level."""
    if s <= 1:
        raise FillingError("scaling parameter s must be > 1")
    if max_level > space.k_max(s):
        raise FillingError(
            f"max_level {max_level} beyond resolution guard k_max={space.k_max(s)} (s^-k >= 4h)"
        )
    nets = [greedy_maximal_net(space, k, s) for k in range(1, max_level + 1)]

    centers = [np.array([0], dtype=np.int64)] + [n.members for n in nets]
    levels = [np.zeros(1, dtype=np.int64)] + [
        np.full(n.members.shape[0], k, dtype=np.int64) for k, n in enumerate(nets, start=1)
    ]
    center = np.concatenate(centers)
    level = np.concatenate(levels)
    radius = 2.0 * s ** (-level.astype(float))

    offsets = np.concatenate([[0], np.cumsum([c.shape[0] for c in centers])])
    trees = [cKDTree(space.coords[c]) for c in centers]

    edge_parts = []

    def _filter(pairs_a, pairs_b, rsum):
        d = space.metric_from_euclid(
            np.linalg.norm(space.coords[pairs_a] - space.coords[pairs_b], axis=1)
        )
        return d < rsum - EDGE_TOL

    for k in range(0, max_level + 1):
        rk = 2.0 * s ** (-k)
        # same-level pairs
        if centers[k].shape[0] > 1:
            pairs = trees[k].query_pairs(space.euclid_from_metric(2 * rk) * (1 + 1e-9), output_type="ndarray")
            if pairs.size:
                keep = _filter(centers[k][pairs[:, 0]], centers[k][pairs[:, 1]], 2 * rk)
                gp = pairs[keep] + offsets[k]
                edge_parts.append(np.sort(gp, axis=1))
        # cross-level pairs k -> k+1
        if k < max_level:
            rk1 = 2.0 * s ** (-(k + 1))
            rsum = rk + rk1
            hits = trees[k].query_ball_tree(trees[k + 1], space.euclid_from_metric(rsum) * (1 + 1e-9))
            ia = np.repeat(np.arange(len(hits)), [len(h) for h in hits])
            ib = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]) if ia.size else np.empty(0, np.int64)
            if ia.size:
                keep = _filter(centers[k][ia], centers[k + 1][ib], rsum)
                gp = np.column_stack([ia[keep] + offsets[k], ib[keep] + offsets[k + 1]])
                edge_parts.append(gp)

    if edge_parts:
        edges = np.concatenate(edge_parts)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
    else:
        edges = np.empty((0, 2), dtype=np.int64)

    deg = np.bincount(edges.ravel(), minlength=center.shape[0]) if edges.size else np.zeros(center.shape[0], int)
    filling = Filling(
        space=space,
        s=float(s),
        max_level=int(max_level),
        center=center,
        level=level,
        radius=radius,
        edges=edges.astype(np.int64),
        degree_bound=int(deg.max()) if deg.size else 0,
        nets=tuple(nets),
    )
    if filling.n_vertices > 1:
        ncomp, _ = csgraph.connected_components(filling.csr_unit, directed=False)
        if ncomp != 1:
            raise FillingError("filling graph is not connected")
    return filling


# ---------------------------------------------------------------------
# graph queries
# ---------------------------------------------------------------------


def unit_distances(filling: Filling, sources) -> np.ndarray:
    """Hop distances from the nearest source to every vertex (BFS)."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    return csgraph.dijkstra(filling.csr_unit, directed=False, indices=sources, unweighted=True, min_only=True)


def graph_distance(filling: Filling, u: int, v: int) -> int:
    """Smallest number of edges joining u and v."""
    if u == v:
        return 0
    d = unit_distances(filling, [u])[v]
    if not np.isfinite(d):
        raise FillingError("vertices are not connected")
    return int(d)


# ---------------------------------------------------------------------
# regions and set pairs
# ---------------------------------------------------------------------


@dataclass(eq=False)
class Region:
    """Sampled open region: union of open balls, or a closed-ball complement."""

    space: PointCloudSpace
    balls: tuple  # ((center point id, radius), ...)
    complement: bool
    members: np.ndarray

    @cached_property
    def member_coords(self) -> np.ndarray:
        return self.space.coords[self.members]

    @cached_property
    def member_tree(self) -> cKDTree:
        return cKDTree(self.member_coords)

    @cached_property
    def member_set(self) -> frozenset:
        return frozenset(int(i) for i in self.members)

    @cached_property
    def diam(self) -> float:
        return _exact_diameter(self.space, self.member_coords)

    def distances_to(self, coords: np.ndarray) -> np.ndarray:
        """Metric distance from each query coordinate to the region sample."""
        d, _ = self.member_tree.query(coords)
        return self.space.metric_from_euclid(d)

    def contains_points(self, point_ids) -> np.ndarray:
        return np.isin(np.asarray(point_ids), self.members)


def _exact_diameter(space: PointCloudSpace, coords: np.ndarray) -> float:
    if coords.shape[0] < 2:
        return 0.0
    if coords.shape[1] == 1:
        e = float(coords.max() - coords.min())
        return float(space.metric_from_euclid(e))
    pts = coords
    if coords.shape[0] > 16:
        try:
            pts = coords[ConvexHull(coords).vertices]
        except QhullError:
            pass  # degenerate (collinear) member sets: brute-force below
    best = 0.0
    for lo in range(0, pts.shape[0], 512):
        blk = pts[lo : lo + 512]
        d = np.linalg.norm(blk[:, None, :] - pts[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return float(space.metric_from_euclid(best))


def ball_region(space: PointCloudSpace, center: int, radius: float) -> Region:
    return union_region(space, [(center, radius)])


def union_region(space: PointCloudSpace, balls) -> Region:
    balls = tuple((int(c), float(r)) for c, r in balls)
    member_mask = np.zeros(space.n_points, dtype=bool)
    for c, r in balls:
        member_mask[space.neighbors_within(c, r)] = True
    members = np.flatnonzero(member_mask).astype(np.int64)
    if members.size == 0:
        raise FillingError("region has no sample members")
    return Region(space=space, balls=balls, complement=False, members=members)


def complement_ball_region(space: PointCloudSpace, center: int, radius: float) -> Region:
    """Sampled Z minus the closed ball B(center, radius)."""
    d = space.distances_from(int(center))
    members = np.flatnonzero(d > radius * (1 + 1e-12)).astype(np.int64)
    if members.size == 0:
        raise FillingError("complement region has no sample members")
    return Region(space=space, balls=((int(center), float(radius)),), complement=True, members=members)


@dataclass(eq=False)
class SetPair:
    a: Region
    b: Region
    dist: float
    delta: float


def region_distance(a: Region, b: Region) -> float:
    d, _ = a.member_tree.query(b.member_coords)
    return float(a.space.metric_from_euclid(d.min()))


def make_pair(a: Region, b: Region) -> SetPair:
    dist = region_distance(a, b)
    if dist <= 0:
        raise FillingError("set pair must have positive separation")
    md = min(a.diam, b.diam)
    if md <= 0:
        raise FillingError("set pair needs regions of positive diameter")
    return SetPair(a=a, b=b, dist=dist, delta=dist / md)


# ---------------------------------------------------------------------
# hulls and rings
# ---------------------------------------------------------------------


@dataclass(eq=False)
class Hull:
    region: Region
    j: int
    vertex_ids: np.ndarray

    @cached_property
    def vertex_set(self) -> frozenset:
        return frozenset(int(v) for v in self.vertex_ids)


def hull_level(diam: float, s: float) -> int:
    """The j with diam/s <= s^-j < diam."""
    j = int(math.floor(-math.log(diam) / math.log(s))) + 1
    while s ** (-j) >= diam:
        j += 1
    while s ** (-j) < diam / s:
        j -= 1
    return j


def _meets_region(filling: Filling, vertex_ids: np.ndarray, region: Region) -> np.ndarray:
    """Mask over vertex_ids: open vertex ball contains some region member."""
    if vertex_ids.size == 0:
        return np.zeros(0, dtype=bool)
    d = region.distances_to(filling.center_coords(vertex_ids))
    return d < filling.radius[vertex_ids] * (1 - 1e-12)


def hull(filling: Filling, region: Region) -> Hull:
    """All vertices of level >= j whose ball meets the region."""
    diam = region.diam
    if diam <= filling.s ** (-filling.max_level):
        raise FillingError("region too small for the built depth")
    j = hull_level(diam, filling.s)
    if j > filling.max_level:
        raise FillingError("region too small for the built depth")
    parts = []
    for k in range(j, filling.max_level + 1):
        vk = filling.vertices_at_level(k)
        parts.append(vk[_meets_region(filling, vk, region)])
    ids = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return Hull(region=region, j=j, vertex_ids=ids)


def ring_r_max(filling: Filling, z: int) -> float:
    """Largest r2 for which some hull-level vertex ball avoids B(z, r2)."""

    def ok(r: float) -> bool:
        try:
            reg = ball_region(filling.space, z, r)
        except FillingError:
            return False
        diam = reg.diam
        if diam <= 0:
            return False
        j = hull_level(diam, filling.s)
        if j > filling.max_level:
            return False
        for k in range(j, filling.max_level + 1):
            vk = filling.vertices_at_level(k)
            if not _meets_region(filling, vk, reg).all():
                return True
        return False

    # tiny radii fail (hull not constructible), large radii fail (nothing
    # avoids the ball); find a working radius, then bisect the upper edge
    lo = None
    for r in np.geomspace(8 * filling.space.resolution, 0.5, 24):
        if ok(float(r)):
            lo = float(r)
            break
    if lo is None:
        return 0.0
    hi = 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def ring_separation(filling: Filling, z: int, r1: float, r2: float) -> int:
    """Graph distance between H(B(z, r1)) and the complement of H(B(z, r2))."""
    if not (0 < r1 < r2):
        raise FillingError("need 0 < r1 < r2")
    if r2 >= ring_r_max(filling, z):
        raise FillingError("r2 >= R_max: complement hull is empty at this radius")
    h1 = hull(filling, ball_region(filling.space, z, r1))
    h2 = hull(filling, ball_region(filling.space, z, r2))
    outside = np.ones(filling.n_vertices, dtype=bool)
    outside[h2.vertex_ids] = False
    if h1.vertex_ids.size == 0:
        raise FillingError("inner hull empty")
    d = unit_distances(filling, h1.vertex_ids)
    vals = d[outside]
    if vals.size == 0:
        raise FillingError("complement of outer hull empty")
    return int(vals.min())


# ---------------------------------------------------------------------
# level graphs (kappa-approximations) and anchors
# ---------------------------------------------------------------------


@dataclass(eq=False)
class LevelGraph:
    """Level-n vertices with only same-level edges; a 2-approximation at scale n."""

    filling: Filling
    n: int
    vertex_ids: np.ndarray  # global vertex ids
    edges_local: np.ndarray  # (E, 2) local indices

    @property
    def n_vertices(self) -> int:
        return self.vertex_ids.shape[0]

    @cached_property
    def global_to_local(self) -> dict:
        return {int(g): i for i, g in enumerate(self.vertex_ids)}

    @cached_property
    def arcs(self):
        m = self.n_vertices
        if self.edges_local.size == 0:
            return np.zeros(m + 1, dtype=np.int64), np.empty(0, np.int64), np.empty(0, np.int64)
        u, v = self.edges_local[:, 0], self.edges_local[:, 1]
        heads = np.concatenate([u, v])
        tails = np.concatenate([v, u])
        eids = np.concatenate([np.arange(u.shape[0])] * 2)
        order = np.lexsort((tails, heads))
        heads, tails, eids = heads[order], tails[order], eids[order]
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(indptr, heads + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, tails.astype(np.int64), eids.astype(np.int64)


def level_graph(filling: Filling, n: int) -> LevelGraph:
    if not (1 <= n <= filling.max_level):
        raise FillingError("level out of range")
    lo, hi = filling.level_slices[n]
    ids = np.arange(lo, hi, dtype=np.int64)
    mask = (filling.level[filling.edges[:, 0]] == n) & (filling.level[filling.edges[:, 1]] == n)
    edges = filling.edges[mask] - lo
    return LevelGraph(filling=filling, n=n, vertex_ids=ids, edges_local=edges.astype(np.int64))


def anchors(filling: Filling, region: Region, n: int, pair_dist: float) -> np.ndarray:
    """Level-n vertices whose center lies in the region.

    The depth guard 2 s^-n < pair_dist/4 keeps every anchor ball inside the
    pair_dist/2 neighborhood of the region.
    """
    if n > filling.max_level:
        raise FillingError("anchor depth exceeds built levels")
    if 2.0 * filling.s ** (-n) >= pair_dist / 4.0:
        raise FillingError("depth too shallow for the separation guard (need 2 s^-n < dist/4)")
    vk = filling.vertices_at_level(n)
    inside = region.contains_points(filling.center[vk])
    return vk[inside]
