"""Weak ell^{p,infinity} quantities and related transforms.

The weak quantity is computed in two equivalent forms: the tail form
sup_lambda lambda * #{w > lambda}^(1/p) (supremum approached from below at
the distinct values), and the sorted form sup_k k^(1/p) * w_(k).  The
sorted form is the default compute path; the tail form re-derives the same
supremum from superlevel counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class WeakNormError(ValueError):
    pass


@dataclass(eq=False)
class WeightFunction:
    """Nonnegative weights in [0, 1] on the edges or vertices of a filling."""

    domain: str  # "edge" or "vertex"
    values: dict  # id -> weight
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in ("edge", "vertex"):
            raise WeakNormError("domain must be 'edge' or 'vertex'")
        bad = [k for k, v in self.values.items() if v < -1e-15 or v > 1 + 1e-12]
        if bad:
            raise WeakNormError(f"weights must lie in [0, 1]; offending ids {bad[:5]}")

    @property
    def support_size(self) -> int:
        return sum(1 for v in self.values.values() if v > 0)

    def array(self) -> np.ndarray:
        return np.asarray(list(self.values.values()), dtype=float)

    def get(self, i: int) -> float:
        return self.values.get(i, 0.0)

    @classmethod
    def from_arrays(cls, domain: str, ids, vals, meta=None) -> "WeightFunction":
        vals = np.clip(np.asarray(vals, dtype=float), 0.0, 1.0)
        d = {int(i): float(v) for i, v in zip(ids, vals) if v > 0.0}
        return cls(domain=domain, values=d, meta=meta or {})


def _as_values(w) -> np.ndarray:
    if isinstance(w, WeightFunction):
        return w.array()
    if isinstance(w, dict):
        return np.asarray(list(w.values()), dtype=float)
    return np.asarray(w, dtype=float)


def weak_quantity(w, p: float, mode: str = "sorted") -> float:
    """Weak ell^{p,inf} quantity of a finitely supported weight vector."""
    if p <= 0:
        raise WeakNormError("p must be positive")
    v = _as_values(w)
    v = v[v > 0]
    if v.size == 0:
        return 0.0
    v = np.sort(v)[::-1]
    if mode == "sorted":
        k = np.arange(1, v.size + 1, dtype=float)
        return float(np.max(k ** (1.0 / p) * v))
    if mode == "tail":
        # evaluate lambda -> lambda * #{w >= lambda}^(1/p) at the distinct values;
        # this is the supremum of the open-tail form approached from below
        vals, first = np.unique(v[::-1], return_index=True)
        count_ge = v.size - first
        return float(np.max(vals * count_ge.astype(float) ** (1.0 / p)))
    raise WeakNormError("mode must be 'sorted' or 'tail'")


def comparable_norm(w, q: float) -> float:
    """sup_n n^(-1+1/q) * (sum of the n largest values); a genuine norm for q > 1."""
    if q <= 1:
        raise WeakNormError("comparable norm needs q > 1")
    v = _as_values(w)
    v = np.sort(v[v > 0])[::-1]
    if v.size == 0:
        return 0.0
    n = np.arange(1, v.size + 1, dtype=float)
    return float(np.max(n ** (-1.0 + 1.0 / q) * np.cumsum(v)))


def lp_norm(w, p: float) -> float:
    """(sum w^p)^(1/p); dominates the weak quantity at the same exponent."""
    if p <= 0:
        raise WeakNormError("p must be positive")
    v = _as_values(w)
    v = v[v > 0]
    if v.size == 0:
        return 0.0
    out = float(np.sum(v**p) ** (1.0 / p))
    assert weak_quantity(v, p) <= out * (1 + 1e-12)
    return out


@dataclass(frozen=True)
class FlattenResult:
    weights: WeightFunction
    epsilon: float
    level: int | None  # level that received +epsilon; None when unchanged
    changed: bool


def flatten_below_one(w: WeightFunction, filling) -> FlattenResult:
    """Push value-1 weights down to 1-eps, compensating one level deeper.

    eps = (1-c)/2 where c is the largest value strictly below 1.  Every id
    with value 1 is lowered to 1-eps and eps is added on all domain elements
    of the first level beyond the deepest value-1 id, so any path through a
    lowered id still collects 1-eps + eps.  Admissibility is preserved and
    should be re-verified downstream on the truncated problem.
    """
    one_ids = [i for i, v in w.values.items() if v >= 1 - 1e-12]
    if not one_ids:
        eps = 1.0 - (max(w.values.values()) if w.values else 0.0)
        return FlattenResult(weights=w, epsilon=eps, level=None, changed=False)
    below = [v for v in w.values.values() if v < 1 - 1e-12]
    c = max(below) if below else 0.0
    if 1.0 - c < 1e-9:
        raise WeakNormError("values accumulate at 1; flatten undefined (weak norm infinite in spirit)")
    eps = (1.0 - c) / 2.0

    if w.domain == "vertex":
        level_of = lambda i: int(filling.level[i])
        all_ids_at = lambda L: [int(x) for x in filling.vertices_at_level(L)]
    else:
        elv = filling.edge_levels()
        level_of = lambda i: int(elv[i])
        all_ids_at = lambda L: [int(x) for x in np.flatnonzero(elv == L)]

    L = max(level_of(i) for i in one_ids) + 1
    if L > filling.max_level:
        raise WeakNormError("no level beyond the value-1 set; deepen the filling")

    vals = dict(w.values)
    for i in one_ids:
        vals[i] = 1.0 - eps
    for i in all_ids_at(L):
        vals[i] = vals.get(i, 0.0) + eps
    out = WeightFunction(domain=w.domain, values=vals, meta=dict(w.meta))
    return FlattenResult(weights=out, epsilon=eps, level=L, changed=True)
