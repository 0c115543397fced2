"""Relative-distance bookkeeping, control curves, and exponent sweeps.

The control curve is an empirical envelope: a seeded sample of ball pairs
at each target relative distance, never a claimed bound on the true
supremum.  Divergence of capacity below the critical exponent is
operationalized as geometric growth of the lower bounds across depths;
the thresholds are recorded in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .filling import Filling, SetPair, ball_region, make_pair, FillingError
from .capacity import (
    wcap_estimate,
    make_truncated_problem,
    greedy_disjoint_paths,
    price_disjoint_lower,
    CapacityError,
)

# verdict thresholds (stated in every report)
GROWTH_RATIO = 1.05  # lower bounds must grow at least geometrically by this factor
STABLE_SPREAD = 0.10  # upper bounds within 10 percent over the last two depths


class ExponentError(ValueError):
    pass


def relative_distance(pair: SetPair) -> float:
    """dist(A, B) / min(diam A, diam B) over the sampled member points."""
    if pair.dist <= 0:
        raise ExponentError("pair must be positively separated")
    return pair.dist / min(pair.a.diam, pair.b.diam)


def qs_transfer_bound(eta, t: float) -> float:
    """Phi(t) = 1 / (3 eta(1/t)); increasing in t for increasing eta."""
    if t <= 0:
        raise ExponentError("t must be positive")
    probes = [1.0 / t * 2.0**k for k in range(-2, 3)]
    vals = [eta(u) for u in probes]
    if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
        raise ExponentError("eta violates monotonicity on probed points")
    return 1.0 / (3.0 * eta(1.0 / t))


# ---------------------------------------------------------------------
# seeded pair generation (centers at net points)
# ---------------------------------------------------------------------


def _ball_pair_at(filling: Filling, ca: int, cb: int, radius: float) -> SetPair:
    return make_pair(
        ball_region(filling.space, ca, radius),
        ball_region(filling.space, cb, radius),
    )


def random_ball_pair(
    filling: Filling,
    rng: np.random.Generator,
    delta_target: float | None = None,
    delta_tol: float = 0.05,
    depth: int | None = None,
    tries: int = 300,
    net_level: int = 3,
    dist_range: tuple = (0.0, 1.0),
    interior_margin: float | None = None,
) -> SetPair:
    """Equal-radius ball pair centered at net points, calibrated to a target
    relative distance by bisection on the radius.

    The depth guard (anchors at the given depth) constrains admissible
    distances and radii; raises when the sample cannot realize the request.
    interior_margin (fraction of the coordinate span) keeps centers away
    from the sample's bounding box, suppressing boundary clipping.
    """
    depth = filling.max_level if depth is None else depth
    s = filling.s
    guard_dist = 8.0 * s ** (-depth) * 1.05
    min_radius = 3.0 * s ** (-depth)
    centers = filling.nets[net_level - 1].members
    if interior_margin:
        coords = filling.space.coords
        lo_box = coords.min(axis=0)
        hi_box = coords.max(axis=0)
        pad = interior_margin * (hi_box - lo_box)
        cc = coords[centers]
        keep = np.all((cc >= lo_box + pad) & (cc <= hi_box - pad), axis=1)
        if keep.any():
            centers = centers[keep]
    lo_d = max(guard_dist, dist_range[0])
    hi_d = dist_range[1]
    if lo_d >= hi_d:
        raise ExponentError("distance window empty under the depth guard")
    for _ in range(tries):
        ca, cb = (int(x) for x in rng.choice(centers, size=2, replace=False))
        d_cc = filling.space.distance(ca, cb)
        if not (lo_d * 1.2 < d_cc < hi_d):
            continue
        if delta_target is None:
            r = max(min_radius, d_cc / 6.0)
            try:
                pair = _ball_pair_at(filling, ca, cb, r)
            except FillingError:
                continue
            if pair.dist > guard_dist:
                return pair
            continue
        # Delta(r) decreases in r; bisect
        r_lo = min_radius
        r_hi = d_cc / 2.2
        if r_hi <= r_lo:
            continue
        try:
            pair_lo = _ball_pair_at(filling, ca, cb, r_lo)
        except FillingError:
            continue
        if pair_lo.delta < delta_target:
            continue
        ok = None
        for _ in range(48):
            mid = 0.5 * (r_lo + r_hi)
            try:
                pair = _ball_pair_at(filling, ca, cb, mid)
            except FillingError:
                r_hi = mid
                continue
            if pair.dist <= guard_dist:
                r_hi = mid
                continue
            if abs(pair.delta - delta_target) <= delta_tol * delta_target:
                ok = pair
                break
            if pair.delta > delta_target:
                r_lo = mid
            else:
                r_hi = mid
        if ok is not None and ok.dist > guard_dist:
            return ok
    raise ExponentError("cannot realize the requested pair within the sample")


def random_nested_triple(filling: Filling, rng: np.random.Generator, depth: int, tries: int = 300):
    """(pair, outer pair, part pairs) for monotonicity/subadditivity checks.

    A is a union of two overlapping balls A1, A2; A' and B' enlarge A and B
    with the same centers.  All four pairs satisfy the depth guard.
    """
    from .filling import union_region

    s = filling.s
    guard = 8.0 * s ** (-depth) * 1.1
    min_r = 2.6 * s ** (-depth)
    centers = filling.nets[2].members  # level-3 net
    space = filling.space
    for _ in range(tries):
        ca, cb = (int(x) for x in rng.choice(centers, size=2, replace=False))
        d_cc = space.distance(ca, cb)
        if not (guard + 6 * min_r < d_cc < 0.9):
            continue
        r = float(rng.uniform(min_r, 1.6 * min_r))
        near = space.neighbors_within(ca, 0.9 * r)
        if near.size < 2:
            continue
        ca2 = int(near[int(rng.integers(0, near.size))])
        grow = 1.35
        try:
            a1 = ball_region(space, ca, r)
            a2 = ball_region(space, ca2, r)
            a_un = union_region(space, [(ca, r), (ca2, r)])
            a_big = union_region(space, [(ca, grow * r), (ca2, grow * r)])
            b = ball_region(space, cb, r)
            b_big = ball_region(space, cb, grow * r)
            pair = make_pair(a_un, b)
            outer = make_pair(a_big, b_big)
            part1 = make_pair(a1, b)
            part2 = make_pair(a2, b)
        except FillingError:
            continue
        if outer.dist <= guard:
            continue
        return pair, outer, part1, part2
    raise ExponentError("could not realize a nested pair triple")


# ---------------------------------------------------------------------
# control curves
# ---------------------------------------------------------------------


@dataclass(eq=False)
class ControlCurve:
    p: float
    depth: int
    samples: list  # (t, max upper, max lower, pair count)
    seed: int

    def rows(self):
        for t, up, low, cnt in self.samples:
            yield {"p": self.p, "t": t, "upper_env": up, "lower_env": low, "pairs": cnt}


def phi_curve(
    filling: Filling,
    p: float,
    t_grid,
    pairs_per_t: int,
    depth: int,
    seed: int = 0,
    methods: tuple = ("modulus", "g"),
    max_iter: int = 10_000,
) -> ControlCurve:
    """Empirical control-function envelope over seeded pairs at each t."""
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] <= 0:
        raise ExponentError("t grid must be positive")
    rng = np.random.default_rng(seed)
    samples = []
    for t in t_grid:
        ups, lows = [], []
        for _ in range(pairs_per_t):
            pair = random_ball_pair(filling, rng, delta_target=t, depth=depth)
            est = wcap_estimate(filling, pair, p, depth, methods=methods, max_iter=max_iter)
            ups.append(est.upper)
            lows.append(est.lower)
        samples.append((t, float(max(ups)), float(max(lows)), pairs_per_t))
    return ControlCurve(p=p, depth=depth, samples=samples, seed=seed)


# ---------------------------------------------------------------------
# exponent sweeps
# ---------------------------------------------------------------------


@dataclass(eq=False)
class SweepReport:
    p_grid: tuple
    depths: tuple
    verdicts: dict  # p -> "growing" | "bounded" | "inconclusive"
    lower_medians: dict  # p -> [per depth]
    upper_medians: dict
    slopes: dict  # p -> fitted log growth rate of the lower bounds per depth
    bracket: tuple  # (max growing p, min bounded p); None entries when absent
    thresholds: dict
    seed: int
    raw: list = field(default_factory=list)


def _verdict(lowers, uppers):
    # stabilized upper bounds certify boundedness regardless of the packing
    # lower bounds, which keep rising pre-asymptotically at every exponent
    if len(uppers) >= 2 and uppers[-2] > 0:
        spread = abs(uppers[-1] - uppers[-2]) / uppers[-2]
        if spread <= STABLE_SPREAD:
            return "bounded"
    growing = len(lowers) >= 3 and all(
        b >= GROWTH_RATIO * a and a > 0 for a, b in zip(lowers, lowers[1:])
    )
    if growing:
        return "growing"
    return "inconclusive"


def exponent_sweep(
    filling: Filling,
    p_grid,
    pair_samples: int,
    depths,
    seed: int = 0,
    methods: tuple = ("modulus", "g"),
    max_iter: int = 120,
) -> SweepReport:
    """Divergence/boundedness verdicts per exponent from depth trends.

    Lower bounds reuse one greedy disjoint-path extraction per (pair,
    depth); upper bounds are the usual estimator with a bounded iteration
    budget (still valid upper bounds when unconverged).
    """
    p_grid = tuple(float(p) for p in p_grid)
    depths = tuple(int(n) for n in sorted(depths))
    if not p_grid:
        raise ExponentError("empty p grid")
    if not depths:
        raise ExponentError("empty depth grid")
    rng = np.random.default_rng(seed)
    pairs = [
        random_ball_pair(filling, rng, delta_target=None, depth=depths[0])
        for _ in range(pair_samples)
    ]
    lengths = {}
    for i, pair in enumerate(pairs):
        for n in depths:
            prob = make_truncated_problem(filling, pair, 2.0, n)
            lengths[(i, n)] = greedy_disjoint_paths(prob, node_disjoint=True)

    raw = []
    lower_med, upper_med, verdicts, slopes = {}, {}, {}, {}
    for p in p_grid:
        lows = np.zeros((len(pairs), len(depths)))
        ups = np.zeros((len(pairs), len(depths)))
        for i, pair in enumerate(pairs):
            for j, n in enumerate(depths):
                lows[i, j] = price_disjoint_lower(lengths[(i, n)], p, domain="vertex")
                est = wcap_estimate(
                    filling, pair, p, n, methods=methods, max_iter=max_iter, rescale="up_only"
                )
                ups[i, j] = est.upper
                raw.append(
                    {"pair": i, "p": p, "depth": n, "lower": lows[i, j], "upper": ups[i, j],
                     "winner": est.winner}
                )
        lmed = np.median(lows, axis=0)
        umed = np.median(ups, axis=0)
        lower_med[p] = [float(x) for x in lmed]
        upper_med[p] = [float(x) for x in umed]
        verdicts[p] = _verdict(lmed, umed)
        if np.all(lmed > 0) and len(lmed) >= 2:
            slopes[p] = float(np.polyfit(depths, np.log(lmed), 1)[0])
        else:
            slopes[p] = float("nan")
    growing = [p for p, v in verdicts.items() if v == "growing"]
    bounded = [p for p, v in verdicts.items() if v == "bounded"]
    bracket = (max(growing) if growing else None, min(bounded) if bounded else None)
    return SweepReport(
        p_grid=p_grid,
        depths=depths,
        verdicts=verdicts,
        lower_medians=lower_med,
        upper_medians=upper_med,
        slopes=slopes,
        bracket=bracket,
        thresholds={"growth_ratio": GROWTH_RATIO, "stable_spread": STABLE_SPREAD,
                    "min_depths_for_growth": 3},
        seed=seed,
        raw=raw,
    )


def cross_filling_ratio(space, pair_spec, p: float, depth: int, s_values=(2.0, 3.0)) -> dict:
    """Diagnostic: the same pair estimated on fillings with different scale
    parameters; capacities agree only up to multiplicative constants."""
    from .filling import build_filling

    out = {}
    for s in s_values:
        max_level = min(depth, space.k_max(s))
        filling = build_filling(space, s, max_level)
        (ca, cb, r) = pair_spec
        pair = _ball_pair_at(filling, ca, cb, r)
        est = wcap_estimate(filling, pair, p, max_level, methods=("modulus", "g"))
        out[s] = est.upper
    vals = list(out.values())
    return {"uppers": out, "ratio": max(vals) / max(min(vals), 1e-30)}
