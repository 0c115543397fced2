"""Combinatorial p-modulus on single-level graphs and level-selection probes.

A level graph is a 2-approximation at its scale: the vertex sets U_v are
the balls B_v, chains join the vertices whose balls meet A to those whose
balls meet B, and admissibility is the vertex-incidence rule: the chain's
vertex weights must sum to at least 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filling import Filling, SetPair, level_graph, _meets_region
from .weak_norm import WeightFunction, weak_quantity
from .capacity import TruncatedProblem, SubgraphView, modulus_solve, check_admissible


class LevelModulusError(ValueError):
    pass


@dataclass(eq=False)
class LevelModulusResult:
    level: int
    p: float
    value: float
    minimizer: WeightFunction  # vertex weights, global vertex ids
    pair: SetPair
    iterations: int
    gap: float
    converged: bool
    endpoints: tuple  # (count meeting A, count meeting B)


def _level_problem(filling: Filling, pair: SetPair, p: float, n: int):
    lg = level_graph(filling, n)
    lo = int(lg.vertex_ids[0]) if lg.n_vertices else 0
    touch_a = lg.vertex_ids[_meets_region(filling, lg.vertex_ids, pair.a)]
    touch_b = lg.vertex_ids[_meets_region(filling, lg.vertex_ids, pair.b)]
    view = SubgraphView(
        n_vertices=lg.n_vertices,
        edges=lg.edges_local,
        edge_ids=np.arange(lg.edges_local.shape[0], dtype=np.int64),
    )
    prob = TruncatedProblem(
        filling=filling,
        pair=pair,
        depth=n,
        p=p,
        anchors_a=(touch_a - lo).astype(np.int64),
        anchors_b=(touch_b - lo).astype(np.int64),
        graph=view,
    )
    return prob, lo


def mod_p_level(filling: Filling, pair: SetPair, p: float, n: int, tol: float = 1e-6,
                max_iter: int = 10_000) -> LevelModulusResult:
    """Vertex-weight combinatorial p-modulus of the connecting chains at level n."""
    if p <= 1:
        raise LevelModulusError("exponent must be > 1")
    scale = filling.s ** (-n)
    if scale > min(pair.a.diam, pair.b.diam) * (1 + 1e-12):
        raise LevelModulusError("scale condition violated: need s^-n <= min diam")
    prob, lo = _level_problem(filling, pair, p, n)
    if prob.anchors_a.size == 0 or prob.anchors_b.size == 0:
        return LevelModulusResult(
            level=n, p=p, value=0.0,
            minimizer=WeightFunction("vertex", {}),
            pair=pair, iterations=0, gap=0.0, converged=True,
            endpoints=(int(prob.anchors_a.size), int(prob.anchors_b.size)),
        )
    res = modulus_solve(prob, domain="vertex", tol=tol, max_iter=max_iter)
    if np.isfinite(res.min_length) and res.weights.values:
        rep = check_admissible(prob, res.weights)
        if not (rep.admissible or rep.unreachable):
            raise LevelModulusError("level minimizer failed its admissibility check")
    minimizer = WeightFunction(
        "vertex",
        {int(k) + lo: v for k, v in res.weights.values.items()},
        meta={"p": p, "method": "mod_p_level", "level": n},
    )
    return LevelModulusResult(
        level=n, p=p, value=res.value, minimizer=minimizer, pair=pair,
        iterations=res.iterations, gap=res.gap, converged=res.converged,
        endpoints=(int(prob.anchors_a.size), int(prob.anchors_b.size)),
    )


def level_restriction_norm(w: WeightFunction, filling: Filling, n: int, q: float) -> float:
    """Sum over the level-n restriction of (2 w)^q.

    Vertex weights restrict to level-n vertices; edge weights to edges with
    both endpoints at level n (the same-level subgraph convention).
    """
    total = 0.0
    if w.domain == "vertex":
        lo, hi = filling.level_slices[n]
        for k, v in w.values.items():
            if lo <= k < hi:
                total += (2.0 * v) ** q
    else:
        lu = filling.level[filling.edges[:, 0]]
        lv = filling.level[filling.edges[:, 1]]
        for k, v in w.values.items():
            if lu[k] == n and lv[k] == n:
                total += (2.0 * v) ** q
    return float(total)


@dataclass(frozen=True)
class GoodLevelReport:
    n: int
    value: float
    window_mean: float
    c_ratio: float  # window mean over weak_2 squared


def find_good_level_report(w: WeightFunction, filling: Filling, n_prime: int) -> GoodLevelReport:
    if n_prime < 1 or 2 * n_prime > filling.max_level:
        raise LevelModulusError("window [N', 2N'] exceeds the built depth")
    energies = []
    for n in range(n_prime, 2 * n_prime + 1):
        energies.append(level_restriction_norm(w, filling, n, 2.0) / 4.0)  # plain sum of w^2
    best = int(np.argmin(energies))
    mean = float(np.mean(energies))
    wq2 = weak_quantity(w, 2.0) ** 2
    c = mean / wq2 if wq2 > 0 else 0.0
    assert energies[best] <= mean * (1 + 1e-12)
    return GoodLevelReport(n=n_prime + best, value=float(energies[best]), window_mean=mean, c_ratio=float(c))


def find_good_level(w: WeightFunction, filling: Filling, n_prime: int) -> int:
    """An n in [N', 2N'] minimizing the level-n energy sum of w^2 (ties: smallest n)."""
    return find_good_level_report(w, filling, n_prime).n
