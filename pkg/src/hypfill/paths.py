"""Path machinery over fillings.

Weighted shortest paths double as the separation oracle for admissibility
checks.  Binary path structures (dyadic trees of level-increasing vertex
paths with disjoint doubled sibling balls) carry the cheap-ascending-path
bounds: the analytic series bound s_bound, the path-count average bound,
and the search that combines both to produce an ascending path of total
weight below a requested delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .filling import Filling
from .weak_norm import WeightFunction, weak_quantity


class PathError(ValueError):
    pass


# ---------------------------------------------------------------------
# weighted shortest paths
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class PathResult:
    path: tuple  # vertex ids; empty when the endpoint sets intersect
    length: float
    unreachable: bool = False


def arc_cost_array(graph, w: WeightFunction) -> np.ndarray:
    """Per-arc Dijkstra costs.

    Edge domain: arc (u -> v) costs w(edge uv).  Vertex domain: arc
    (u -> v) costs w(u) (tail cost), so a multi-source distance from S
    equals the path sum excluding the terminal vertex and including the
    source.
    """
    indptr, tails, eids = graph.arcs
    n = graph.n_vertices
    if w.domain == "edge":
        m = int(eids.max()) + 1 if eids.size else 0
        lut = np.zeros(m)
        for k, val in w.values.items():
            if 0 <= k < m:
                lut[k] = val
        return lut[eids] if eids.size else np.zeros(0)
    wv = np.zeros(n)
    for k, val in w.values.items():
        if 0 <= k < n:
            wv[k] = val
    heads = np.repeat(np.arange(n), np.diff(indptr))
    return wv[heads]


def dijkstra_multisource(graph, arc_cost: np.ndarray, sources, want_pred: bool = False):
    indptr, tails, _ = graph.arcs
    n = graph.n_vertices
    mat = sparse.csr_matrix((arc_cost, tails, indptr), shape=(n, n))
    idx = np.asarray(sources, dtype=np.int64)
    if want_pred:
        dist, pred, _src = csgraph.dijkstra(
            mat, directed=True, indices=idx, min_only=True, return_predecessors=True
        )
        return dist, pred
    return csgraph.dijkstra(mat, directed=True, indices=idx, min_only=True)


def min_weighted_path(graph, w: WeightFunction, from_set, to_set) -> PathResult:
    """Minimum-w path between vertex sets, lexicographic tie-break.

    Vertex-domain lengths include both endpoints.  Among all minimizing
    simple paths the lexicographically smallest vertex id sequence is
    returned; a shared endpoint yields the empty path of length 0.
    """
    from_set = sorted(int(x) for x in from_set)
    to_set_l = sorted(int(x) for x in to_set)
    if not from_set or not to_set_l:
        raise PathError("endpoint sets must be nonempty")
    to_mark = set(to_set_l)
    if any(a in to_mark for a in from_set):
        return PathResult(path=(), length=0.0)

    indptr, tails, _eids = graph.arcs
    n = graph.n_vertices
    cost = arc_cost_array(graph, w)
    if w.domain == "vertex":
        wv = np.zeros(n)
        for k, val in w.values.items():
            if 0 <= k < n:
                wv[k] = val
    else:
        wv = None

    d_from = dijkstra_multisource(graph, cost, from_set)
    d_to, pred_to = dijkstra_multisource(graph, cost, to_set_l, want_pred=True)
    # tail-cost arcs make d_to(v) the cheapest continuation v -> B excluding
    # w(v) (vertex domain) resp. the plain edge-sum (edge domain)

    if wv is None:
        totals = [d_from[b] for b in to_set_l]
    else:
        totals = [d_from[b] + wv[b] for b in to_set_l]
    opt = float(min(totals))
    if not np.isfinite(opt):
        return PathResult(path=(), length=float("inf"), unreachable=True)
    eps = 1e-9 * (1.0 + abs(opt))

    # walk the shortest-path DAG greedily by smallest vertex id; accumulated
    # float slop can strand the walk, in which case the whole path is rebuilt
    # from the predecessor tree of d_to (exact, deterministic, not lex-minimal)
    starts = [a for a in from_set if ((wv[a] if wv is not None else 0.0) + d_to[a]) <= opt + eps]
    if not starts:
        starts = from_set
    u0 = min(starts)

    def pred_chain(start):
        chain = [start]
        guard = 0
        while chain[-1] not in to_mark:
            nxt = int(pred_to[chain[-1]])
            guard += 1
            if nxt < 0 or guard > n + 1:
                raise PathError("path reconstruction failed")
            chain.append(nxt)
        return chain

    u = u0
    path = [u]
    visited = {u}
    acc = float(wv[u]) if wv is not None else 0.0
    stuck = False
    while u not in to_mark:
        if len(path) > n + 1:
            stuck = True
            break
        best = None
        best_step = 0.0
        for pos in range(indptr[u], indptr[u + 1]):
            v = int(tails[pos])
            if v in visited:
                continue
            step = float(cost[pos]) if wv is None else float(wv[v])
            if acc + step + d_to[v] <= opt + eps and (best is None or v < best):
                best = v
                best_step = step
        if best is None:
            stuck = True
            break
        acc += best_step
        path.append(best)
        visited.add(best)
        u = best
    if stuck:
        path = pred_chain(u0)
    return PathResult(path=tuple(path), length=float(opt))


# ---------------------------------------------------------------------
# binary path structures
# ---------------------------------------------------------------------


@dataclass(eq=False)
class StructureNode:
    vertex: int
    parent: int | None  # node index
    seg_vertices: tuple  # vertex ids from parent to self inclusive; root: (v,)
    seg_edges: tuple  # edge ids along seg_vertices


@dataclass(eq=False)
class BinaryPathStructure:
    filling: Filling
    root: int
    M: int
    nodes: list
    generations: list  # generations[k] = node indices with 2^k entries
    preamble: tuple = ()  # sidestep walk used in outside mode
    target: dict = field(default_factory=dict)

    @property
    def n_generations(self) -> int:
        return len(self.generations) - 1

    def edges_with_depth(self):
        """(edge id, depth, (u, v)) for every structure edge; depth counts from the root."""
        out = []
        for k in range(1, len(self.generations)):
            for ni in self.generations[k]:
                node = self.nodes[ni]
                base = (k - 1) * self.M
                for i, e in enumerate(node.seg_edges):
                    u, v = node.seg_vertices[i], node.seg_vertices[i + 1]
                    out.append((e, base + i + 1, (u, v)))
        return out

    def leaf_vertices(self) -> list:
        return [self.nodes[ni].vertex for ni in self.generations[-1]]


def _ball_contains(filling: Filling, outer: int, inner: int) -> bool:
    d = filling.space.distance(int(filling.center[outer]), int(filling.center[inner]))
    return d + filling.radius[inner] <= filling.radius[outer] * (1 + 1e-12)


def _doubled_disjoint(filling: Filling, a: int, b: int) -> bool:
    d = filling.space.distance(int(filling.center[a]), int(filling.center[b]))
    return d >= 2 * filling.radius[a] + 2 * filling.radius[b]


def vertex_split(filling: Filling, v: int, m_start: int = 1):
    """Two vertices M levels below v with balls in B_v and disjoint doubled balls.

    Searches increasing M and returns the lexicographically first success.
    """
    cv = int(filling.center[v])
    if filling.space.neighbors_within(cv, filling.radius[v]).size < 2:
        raise PathError("ball contains fewer than 2 sample points; split impossible")
    lv = int(filling.level[v])
    for m in range(max(1, m_start), filling.max_level - lv + 1):
        k = lv + m
        vk = filling.vertices_at_level(k)
        d = filling.space.metric_from_euclid(
            np.linalg.norm(filling.center_coords(vk) - filling.space.coords[cv], axis=1)
        )
        cand = vk[d + filling.radius[vk] <= filling.radius[v] * (1 + 1e-12)]
        if cand.size < 2:
            continue
        coords = filling.center_coords(cand)
        radsum = 2 * filling.radius[cand][:, None] + 2 * filling.radius[cand][None, :]
        dd = filling.space.metric_from_euclid(
            np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
        )
        ok = dd >= radsum
        for i in range(cand.size):
            js = np.flatnonzero(ok[i, i + 1 :])
            if js.size:
                return int(cand[i]), int(cand[i + 1 + js[0]]), m
    raise PathError("depth exhausted before a vertex split succeeded")


def _descend_segment(filling: Filling, w: int, w_child: int):
    """Level-by-level vertex path w -> w_child, one level per step."""
    lv, lc = int(filling.level[w]), int(filling.level[w_child])
    target = filling.space.coords[int(filling.center[w_child])]
    seq = [w]
    for k in range(lv + 1, lc):
        vk = filling.vertices_at_level(k)
        d = np.linalg.norm(filling.center_coords(vk) - target, axis=1)
        order = np.argsort(d, kind="stable")
        seq.append(int(vk[order[0]]))
    seq.append(w_child)
    edges = []
    for a, b in zip(seq, seq[1:]):
        try:
            edges.append(filling.edge_id(a, b))
        except KeyError:
            raise PathError("descent chain broke: consecutive balls do not intersect")
    return tuple(seq), tuple(edges)


def build_binary_structure(
    filling: Filling,
    v: int,
    generations: int,
    target: str = "inside_10B",
    region=None,
) -> BinaryPathStructure:
    """Repeated vertex splitting below v with a uniform splitting constant.

    inside_10B: v must lie in the hull of the ball region; every structure
    ball then sits inside 10B.  outside_Bbar: limits must avoid the closed
    ball; if 2B_v meets it, the root first sidesteps to a nearby same-level
    vertex whose doubled ball is clear.
    """
    if target not in ("inside_10B", "outside_Bbar"):
        raise PathError("unknown target mode")
    preamble = ()
    root = int(v)
    meta = {"mode": target}
    if region is not None:
        meta["ball"] = region.balls[0]
    if target == "outside_Bbar":
        if region is None:
            raise PathError("outside mode needs the ball region to avoid")
        root = _sidestep_root(filling, int(v), region)
        if root != int(v):
            hop = min_weighted_path(
                filling, WeightFunction("edge", {}), [int(v)], [root]
            )
            preamble = hop.path
    elif region is not None:
        d = region.distances_to(filling.center_coords([root]))[0]
        if d >= filling.radius[root]:
            raise PathError("inside mode requires the root ball to meet the region")

    m = 1
    while True:
        try:
            structure = _try_build(filling, root, generations, m)
            break
        except _NeedLargerM as bump:
            m = bump.m
        # PathError propagates: depth/resolution exhausted
    structure.preamble = preamble
    structure.target = meta
    verify_structure(structure)
    if region is not None:
        _check_target(structure, region, target)
    return structure


class _NeedLargerM(Exception):
    def __init__(self, m):
        self.m = m


def _try_build(filling: Filling, root: int, generations: int, m: int) -> BinaryPathStructure:
    nodes = [StructureNode(vertex=root, parent=None, seg_vertices=(root,), seg_edges=())]
    gens = [[0]]
    m_used = m
    for _ in range(generations):
        nxt = []
        for ni in gens[-1]:
            w = nodes[ni].vertex
            c1, c2, m_found = vertex_split(filling, w, m_start=m_used)
            if m_found != m_used:
                raise _NeedLargerM(max(m_found, m_used))
            for child in (c1, c2):
                seg_v, seg_e = _descend_segment(filling, w, child)
                nodes.append(StructureNode(vertex=child, parent=ni, seg_vertices=seg_v, seg_edges=seg_e))
                nxt.append(len(nodes) - 1)
        gens.append(nxt)
    return BinaryPathStructure(filling=filling, root=root, M=m_used, nodes=nodes, generations=gens)


def _sidestep_root(filling: Filling, v: int, region) -> int:
    """First vertex (by distance from v, then id) at level >= l(v) whose doubled ball avoids the region."""
    for k in range(int(filling.level[v]), filling.max_level + 1):
        vk = filling.vertices_at_level(k)
        dist_to_region = region.distances_to(filling.center_coords(vk))
        clear = dist_to_region >= 2 * filling.radius[vk]
        if clear.any():
            cand = vk[clear]
            d = np.linalg.norm(
                filling.center_coords(cand) - filling.space.coords[int(filling.center[v])], axis=1
            )
            order = np.argsort(d, kind="stable")
            return int(cand[order[0]])
    raise PathError("no clear sidestep vertex found; resolution exhausted")


def verify_structure(t: BinaryPathStructure):
    """Re-verify the defining properties of the structure; raises on violation."""
    f = t.filling
    for k, gen in enumerate(t.generations):
        if len(gen) != 2**k:
            raise PathError("generation sizes must double")
        for ni in gen:
            node = t.nodes[ni]
            if f.level[node.vertex] != f.level[t.root] + k * t.M:
                raise PathError("node level must be root level + k*M")
            if node.parent is not None:
                parent = t.nodes[node.parent]
                if not _ball_contains(f, parent.vertex, node.vertex):
                    raise PathError("child ball must lie in parent ball")
                levels = [int(f.level[x]) for x in node.seg_vertices]
                if levels != list(range(levels[0], levels[0] + len(levels))):
                    raise PathError("segment must strictly increase in level")
                pc = int(f.center[parent.vertex])
                for x in node.seg_vertices:
                    # ball of x stays inside the doubled parent ball
                    d = f.space.distance(pc, int(f.center[x]))
                    if d + f.radius[x] > 2 * f.radius[parent.vertex] * (1 + 1e-9):
                        raise PathError("segment ball escapes the doubled parent ball")
        for i in range(len(gen)):
            for j in range(i + 1, len(gen)):
                if not _doubled_disjoint(f, t.nodes[gen[i]].vertex, t.nodes[gen[j]].vertex):
                    raise PathError("doubled balls at a common generation must be disjoint")


def _check_target(t: BinaryPathStructure, region, mode: str):
    f = t.filling
    if mode == "inside_10B":
        (center, radius) = region.balls[0]
        cc = f.space.coords[int(center)]
        leaf = [t.nodes[ni].vertex for ni in t.generations[-1]]
        dl = f.space.metric_from_euclid(np.linalg.norm(f.center_coords(leaf) - cc, axis=1))
        lim = min(1.0, 10.0 * radius)
        if not np.all(dl + f.radius[leaf] <= lim + 1e-9):
            raise PathError("leaf balls escape 10B")
    else:
        ids = [n.vertex for n in t.nodes]
        d = region.distances_to(f.center_coords(ids))
        if not np.all(d >= f.radius[ids] * (1 - 1e-9)):
            raise PathError("structure ball meets the closed ball it must avoid")


# ---------------------------------------------------------------------
# ascending-path dynamic program and analytic bounds
# ---------------------------------------------------------------------


def _segment_cost(t: BinaryPathStructure, node: StructureNode, w: WeightFunction) -> float:
    if w.domain == "edge":
        return float(sum(w.get(e) for e in node.seg_edges))
    # exclude the shared parent vertex so concatenation counts each vertex once
    return float(sum(w.get(x) for x in node.seg_vertices[1:]))


def ascending_min_path(t: BinaryPathStructure, w: WeightFunction, depth: int | None = None):
    """Minimum-weight ascending path from the root to the requested generation.

    Returns (vertex path, length).  Vertex-domain lengths include every
    vertex of the path, the root once.
    """
    depth = t.n_generations if depth is None else depth
    if depth > t.n_generations:
        raise PathError("structure shallower than requested depth")
    best = {}
    choice = {}
    for k in range(depth, -1, -1):
        for ni in t.generations[k]:
            node = t.nodes[ni]
            own = _segment_cost(t, node, w)
            if k == depth:
                best[ni] = own
                choice[ni] = None
                continue
            kids = [c for c in _children(t, ni, k)]
            vals = [best[c] for c in kids]
            pick = int(np.argmin(vals))  # ties: smallest child index
            best[ni] = own + vals[pick]
            choice[ni] = kids[pick]
    root_ni = t.generations[0][0]
    total = best[root_ni]
    if w.domain == "vertex":
        total += w.get(t.root)
    path = list(t.nodes[root_ni].seg_vertices)
    ni = choice[root_ni]
    while ni is not None:
        path.extend(t.nodes[ni].seg_vertices[1:])
        ni = choice[ni]
    return tuple(path), float(total)


def _children(t: BinaryPathStructure, ni: int, k: int):
    if k + 1 >= len(t.generations):
        return []
    return [c for c in t.generations[k + 1] if t.nodes[c].parent == ni]


def s_bound(a: float, beta: float, m: int, p: float, tail_rel: float = 1e-9) -> float:
    """Series bound on the cheapest ascending path weight.

    S = M*beta*(N+1) + sum_{j>N} M*a / ((2^j - 1) M)^(1/p), with N chosen by
    (2^N - 1) M < (a/beta)^p <= (2^{N+1} - 1) M.  The series is truncated
    once a certified geometric tail bound drops below tail_rel of the
    partial sum.
    """
    if a <= 0 or beta <= 0:
        raise PathError("a and beta must be positive")
    if p <= 1:
        raise PathError("series comparison needs p > 1")
    if m < 1:
        raise PathError("splitting constant must be >= 1")
    log_ratio = p * (math.log(a) - math.log(beta))
    if log_ratio > 700:
        n_big = int(math.floor(log_ratio / math.log(2) - math.log(m) / math.log(2))) + 2
        n = max(0, n_big)
        while True:  # settle the bracket in log space
            lhs = (n) * math.log(2)  # log(2^N) ~ log(2^N - 1)
            if lhs + math.log(m) < log_ratio:
                n += 1
            else:
                break
        n -= 1
        n = max(n, 0)
    else:
        ratio = math.exp(log_ratio)
        n = 0
        while (2 ** (n + 1) - 1) * m < ratio:
            n += 1
    first = m * beta * (n + 1)
    total = 0.0
    j = n + 1
    decay = 2 ** (-1.0 / p)
    while True:
        try:
            term = m * a * ((2**j - 1) * m) ** (-1.0 / p)
        except OverflowError:
            break
        total += term
        # tail after j is bounded by the geometric series with ratio 2^(-1/p)
        tail = term * decay / (1 - decay)
        if tail <= tail_rel * max(total + first, 1e-300):
            break
        j += 1
        if j > n + 100000:
            break
    return float(first + total)


def path_count_bound(count: int, alpha: float, h: float) -> int:
    """At least ceil(count*(1 - alpha/h)) paths of a family with mean weight
    alpha have weight at most h."""
    if count < 1:
        raise PathError("count must be >= 1")
    if not (h > alpha >= 0):
        raise PathError("need h > alpha >= 0")
    return int(math.ceil(count * (1.0 - alpha / h) - 1e-12))


def path_count_check(lengths, h: float):
    """Verify the count bound on an explicit family; returns (bound, actual, ok)."""
    lengths = [float(x) for x in lengths]
    alpha = sum(lengths) / len(lengths)
    bound = path_count_bound(len(lengths), alpha, h)
    actual = sum(1 for x in lengths if x <= h)
    return bound, actual, actual >= bound


@dataclass(frozen=True)
class MainPathResult:
    status: str  # "found" | "precondition_failed" | "no_clean_subtree"
    path: tuple | None
    length: float | None
    beta: float
    ell0: int
    tail_bound: float
    detail: str = ""


def main_path_parameters(a: float, delta: float, m: int, p: float):
    """(beta, k, ell0) driving the main path search: the largest halving-search
    beta with 3*S(a, beta) < delta, and the smallest k with 2^(k-1) > (a/beta)^p + 1."""
    beta = 1.0
    while 3.0 * s_bound(a, beta, m, p) >= delta:
        beta *= 0.5
        if beta < 1e-300:
            raise PathError("could not realize 3*S(a, beta) < delta")
    ratio = (a / beta) ** p
    k = 1
    while 2 ** (k - 1) <= ratio + 1:
        k += 1
    return beta, k, k * m


def main_path_search(
    t: BinaryPathStructure, w: WeightFunction, delta: float, p: float, a: float
) -> MainPathResult:
    """Ascending path of weight < delta under the weak-norm precondition.

    Computes beta with 3*s_bound(a, beta) < delta and ell0 = k*M with
    2^(k-1) > (a/beta)^p + 1.  If the weights stay <= beta on all structure
    edges of depth <= ell0, picks a 2S-cheap generation-k prefix whose
    subtree carries no weight above beta and continues by dynamic program.
    """
    if weak_quantity(w, p) > a * (1 + 1e-9):
        raise PathError("precondition: weak quantity must be <= a")
    beta, k, ell0 = main_path_parameters(a, delta, t.M, p)
    s_val = s_bound(a, beta, t.M, p)
    if t.n_generations < k:
        raise PathError(f"structure shallower than the required {k} generations")

    edges = t.edges_with_depth()
    bad = [(e, d) for (e, d, _uv) in edges if d <= ell0 and w.get(e) > beta * (1 + 1e-12)]
    if w.domain == "vertex":
        vertex_depth = _vertex_depths(t)
        bad += [
            (x, dep)
            for x, dep in vertex_depth.items()
            if dep <= ell0 and w.get(x) > beta * (1 + 1e-12)
        ]
    if bad:
        return MainPathResult(
            status="precondition_failed",
            path=None,
            length=None,
            beta=beta,
            ell0=ell0,
            tail_bound=0.0,
            detail=f"{len(bad)} structure weights above beta at depth <= ell0",
        )

    # prefix costs to generation k
    prefix = _prefix_paths(t, w, k)
    cheap = [(cost, idx, ni) for idx, (ni, cost) in enumerate(prefix) if cost <= 2 * s_val * (1 + 1e-12)]
    cheap.sort(key=lambda x: x[1])
    for cost, _idx, ni in cheap:
        if _subtree_clear(t, ni, k, w, beta):
            sub_path, sub_cost = _subtree_min_path(t, ni, k, w)
            full = list(_prefix_vertices(t, ni)) + list(sub_path[1:])
            length = cost + sub_cost
            if w.domain == "vertex":
                length -= w.get(t.nodes[ni].vertex)  # shared vertex counted once
            tail = s_bound(a, beta, t.M, p) - _partial_s(t, a, beta, p, k)
            return MainPathResult(
                status="found",
                path=tuple(full),
                length=float(length),
                beta=beta,
                ell0=ell0,
                tail_bound=max(0.0, float(tail)),
            )
    return MainPathResult(
        status="no_clean_subtree",
        path=None,
        length=None,
        beta=beta,
        ell0=ell0,
        tail_bound=0.0,
        detail="no 2S-cheap prefix has a beta-free subtree at this resolution",
    )


def _vertex_depths(t: BinaryPathStructure) -> dict:
    out = {t.root: 0}
    for k in range(1, len(t.generations)):
        for ni in t.generations[k]:
            node = t.nodes[ni]
            base = (k - 1) * t.M
            for i, x in enumerate(node.seg_vertices[1:], start=1):
                out[x] = base + i
    return out


def _prefix_paths(t: BinaryPathStructure, w: WeightFunction, k: int):
    """(node index at generation k, prefix cost from root) for all 2^k prefixes."""
    cost = {t.generations[0][0]: _segment_cost(t, t.nodes[t.generations[0][0]], w)}
    if w.domain == "vertex":
        cost[t.generations[0][0]] += w.get(t.root)
    for g in range(1, k + 1):
        for ni in t.generations[g]:
            node = t.nodes[ni]
            cost[ni] = cost[node.parent] + _segment_cost(t, node, w)
    return [(ni, cost[ni]) for ni in t.generations[k]]


def _prefix_vertices(t: BinaryPathStructure, ni: int):
    chain = []
    while ni is not None:
        chain.append(ni)
        ni = t.nodes[ni].parent
    chain.reverse()
    verts = list(t.nodes[chain[0]].seg_vertices)
    for x in chain[1:]:
        verts.extend(t.nodes[x].seg_vertices[1:])
    return verts


def _subtree_nodes(t: BinaryPathStructure, ni: int, k: int):
    cur = [ni]
    yield ni
    for g in range(k + 1, len(t.generations)):
        nxt = [c for c in t.generations[g] if t.nodes[c].parent in cur]
        for c in nxt:
            yield c
        cur = nxt


def _subtree_clear(t, ni, k, w: WeightFunction, beta) -> bool:
    for c in _subtree_nodes(t, ni, k):
        node = t.nodes[c]
        if c != ni:
            if w.domain == "edge":
                if any(w.get(e) > beta * (1 + 1e-12) for e in node.seg_edges):
                    return False
            else:
                if any(w.get(x) > beta * (1 + 1e-12) for x in node.seg_vertices[1:]):
                    return False
    return True


def _subtree_min_path(t, ni, k, w: WeightFunction):
    """Min ascending continuation from node ni to the deepest generation."""
    depth = t.n_generations
    best = {}
    choice = {}
    members = set(_subtree_nodes(t, ni, k))
    for g in range(depth, k - 1, -1):
        for c in t.generations[g]:
            if c not in members:
                continue
            own = 0.0 if c == ni else _segment_cost(t, t.nodes[c], w)
            kids = [x for x in _children(t, c, g) if x in members]
            if not kids or g == depth:
                best[c] = own
                choice[c] = None
            else:
                vals = [best[x] for x in kids]
                pick = int(np.argmin(vals))
                best[c] = own + vals[pick]
                choice[c] = kids[pick]
    verts = [t.nodes[ni].vertex]
    c = choice[ni]
    while c is not None:
        verts.extend(t.nodes[c].seg_vertices[1:])
        c = choice[c]
    total = best[ni]
    if w.domain == "vertex":
        total += w.get(t.nodes[ni].vertex)
    return tuple(verts), float(total)


def _partial_s(t, a, beta, p, k_from: int) -> float:
    """The part of the series bound already covered by the built generations."""
    built = t.n_generations
    total = 0.0
    for j in range(k_from + 1, built):
        total += t.M * a * ((2**j - 1) * t.M) ** (-1.0 / p)
    return total
