"""Config-driven experiment tasks with reproducible outputs.

Configs are flat key=value text with dotted section names.  Every task
resolves to a deterministic function of (config, seed): outputs carry no
timestamps, randomness comes from spawned child seeds in a fixed order
independent of the job count, and the manifest echoes the fully resolved
config so a run can be reproduced byte for byte.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .spaces import make_model_space, greedy_maximal_net, regularity_probe, SpaceError
from .filling import build_filling, FillingError, ball_region, make_pair, ring_separation
from .weak_norm import WeightFunction, weak_quantity, lp_norm, flatten_below_one
from .capacity import (
    CapacityError,
    convert_weights,
    make_truncated_problem,
    modulus_solve,
    synthetic_problem,
    wcap_estimate,
)
from .level_modulus import mod_p_level, find_good_level_report
from .paths import s_bound, path_count_bound, path_count_check
from .exponents import ExponentError, phi_curve, exponent_sweep, random_ball_pair

TASKS = ("space", "fill-export", "capacity", "level-modulus", "phi-curve", "sweep", "lemma-suite")

# CLI subcommand aliases for the task names
TASK_ALIASES = {
    "space": "space",
    "fill": "fill-export",
    "cap": "capacity",
    "mod": "level-modulus",
    "phi": "phi-curve",
    "sweep": "sweep",
    "suite": "lemma-suite",
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _get(raw, key, cast, default=None, required=False):
    if key not in raw or raw[key] == "":
        if required:
            raise ConfigError(key, "required")
        return default
    try:
        return cast(raw[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {raw[key]!r}")


def _floats(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    seed: int
    space_kind: str
    space_params: dict
    filling_s: float
    max_level: int
    params: dict
    jobs: int = 1

    def resolved(self) -> dict:
        out = {
            "task": self.task,
            "seed": self.seed,
            "space.kind": self.space_kind,
            "filling.s": self.filling_s,
            "filling.max_level": self.max_level,
            "jobs": self.jobs,
        }
        for k, v in sorted(self.space_params.items()):
            out[f"space.{k}"] = v
        for k, v in sorted(self.params.items()):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def build_config(raw: dict, task: str | None = None, seed: int | None = None, jobs: int | None = None) -> ExperimentConfig:
    task = task or _get(raw, "task", str, required=True)
    task = TASK_ALIASES.get(task, task)
    if task not in TASKS:
        raise ConfigError("task", f"unknown task {task!r}; expected one of {TASKS}")
    if seed is None:
        seed = _get(raw, "seed", int, required=True)
    jobs = jobs if jobs is not None else _get(raw, "jobs", int, default=1)
    if jobs < 1:
        raise ConfigError("jobs", "must be >= 1")

    kind = _get(raw, "space.kind", str, default="square")
    space_params = {}
    for key, value in raw.items():
        if key.startswith("space.") and key != "space.kind":
            name = key.split(".", 1)[1]
            space_params[name] = int(value) if name == "d" else float(value)
    if kind != "carpet" and "h" not in space_params:
        space_params["h"] = 1.0 / 64
    s = _get(raw, "filling.s", float, default=2.0)
    if s <= 1:
        raise ConfigError("filling.s", "must be > 1")
    max_level = _get(raw, "filling.max_level", int, default=4)
    if max_level < 0:
        raise ConfigError("filling.max_level", "must be >= 0")

    params: dict = {}
    if task == "capacity":
        params["p"] = _get(raw, "cap.p", float, default=2.0)
        params["depth"] = _get(raw, "cap.depth", int, default=max_level)
        params["pairs"] = _get(raw, "cap.pairs", int, default=2)
        params["delta"] = _get(raw, "cap.delta", float, default=None)
        params["methods"] = tuple(str(_get(raw, "cap.methods", str, default="modulus,g")).split(","))
        params["max_iter"] = _get(raw, "cap.max_iter", int, default=10_000)
        if params["p"] <= 1:
            raise ConfigError("cap.p", "must be > 1")
        if params["depth"] > max_level:
            raise ConfigError("cap.depth", "exceeds filling.max_level")
    elif task == "level-modulus":
        params["p"] = _get(raw, "mod.p", float, default=2.0)
        params["levels"] = _get(raw, "mod.levels", _ints, default=(3,))
        params["pairs"] = _get(raw, "mod.pairs", int, default=2)
        if params["p"] <= 1:
            raise ConfigError("mod.p", "must be > 1")
        if max(params["levels"]) > max_level:
            raise ConfigError("mod.levels", "exceeds filling.max_level")
    elif task == "phi-curve":
        params["p"] = _get(raw, "phi.p", float, default=2.0)
        params["t_grid"] = _get(raw, "phi.t_grid", _floats, default=(0.5, 1.0, 2.0))
        params["pairs_per_t"] = _get(raw, "phi.pairs_per_t", int, default=2)
        params["depth"] = _get(raw, "phi.depth", int, default=max_level)
        params["methods"] = tuple(str(_get(raw, "phi.methods", str, default="g")).split(","))
        if not params["t_grid"]:
            raise ConfigError("phi.t_grid", "must be nonempty")
    elif task == "sweep":
        params["p_grid"] = _get(raw, "sweep.p_grid", _floats, default=(1.5, 2.5))
        params["pairs"] = _get(raw, "sweep.pairs", int, default=2)
        params["depths"] = _get(raw, "sweep.depths", _ints, default=(max(1, max_level - 2), max(1, max_level - 1), max_level))
        params["methods"] = tuple(str(_get(raw, "sweep.methods", str, default="g")).split(","))
        if not params["p_grid"]:
            raise ConfigError("sweep.p_grid", "must be nonempty")
        if max(params["depths"]) > max_level:
            raise ConfigError("sweep.depths", "exceeds filling.max_level")
    return ExperimentConfig(
        task=task,
        seed=int(seed),
        space_kind=kind,
        space_params=space_params,
        filling_s=float(s),
        max_level=int(max_level),
        params=params,
        jobs=int(jobs),
    )


@dataclass
class ExperimentResult:
    files: dict
    manifest: dict
    summary: dict


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def parallel_map(fn, items, jobs: int):
    """Deterministic map: results in item order regardless of job count."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    try:
        space = make_model_space(config.space_kind, config.space_params)
    except SpaceError as exc:
        raise ConfigError("space", str(exc))
    files: dict = {}
    summary: dict = {}
    if config.task == "space":
        files["space.txt"] = space.export_text()
        summary = {"points": space.n_points, "resolution": space.resolution}
    else:
        filling = build_filling(space, config.filling_s, config.max_level)
        if config.task == "fill-export":
            files["filling.txt"] = filling.export_text()
            summary = {
                "vertices": int(filling.n_vertices),
                "edges": int(filling.n_edges),
                "degree_bound": int(filling.degree_bound),
            }
        elif config.task == "capacity":
            files, summary = _run_capacity(filling, config)
        elif config.task == "level-modulus":
            files, summary = _run_level_modulus(filling, config)
        elif config.task == "phi-curve":
            files, summary = _run_phi(filling, config)
        elif config.task == "sweep":
            files, summary = _run_sweep(filling, config)
        elif config.task == "lemma-suite":
            files, summary = _run_suite(filling, config)
    manifest = {
        "version": __version__,
        "config": config.resolved(),
        "outputs": sorted(files),
        "summary": summary,
    }
    files["manifest.json"] = _json_text(manifest)
    return ExperimentResult(files=files, manifest=manifest, summary=summary)


def estimate_record(pair_id, est) -> dict:
    return {
        "pair_id": pair_id,
        "p": est.p,
        "depth": est.depth,
        "upper": est.upper,
        "lower": est.lower,
        "methods": {k: float(v) for k, v in sorted(est.methods.items())},
        "winner": est.winner,
        "iterations": est.iterations,
        "gap": est.gap,
        "witness_file": f"witness_{pair_id}.txt",
    }


def witness_text(w: WeightFunction) -> str:
    lines = [f"# domain={w.domain}"]
    for k in sorted(w.values):
        lines.append(f"{k} {w.values[k]:.12g}")
    return "\n".join(lines) + "\n"


def _pair_seeds(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _run_capacity(filling, config):
    p = config.params["p"]
    depth = config.params["depth"]
    rngs = _pair_seeds(config.seed, config.params["pairs"])

    def one(i_rng):
        i, rng = i_rng
        pair = random_ball_pair(filling, rng, delta_target=config.params["delta"], depth=depth)
        est = wcap_estimate(
            filling, pair, p, depth,
            methods=config.params["methods"], max_iter=config.params["max_iter"],
        )
        return i, pair, est

    results = parallel_map(one, list(enumerate(rngs)), config.jobs)
    files = {}
    records = []
    for i, pair, est in results:
        pid = f"pair{i}"
        records.append(estimate_record(pid, est))
        files[f"witness_{pid}.txt"] = witness_text(est.upper_witness)
    files["estimates.json"] = _json_text(records)
    summary = {"estimates": len(records), "upper_max": max(r["upper"] for r in records)}
    return files, summary


def _run_level_modulus(filling, config):
    p = config.params["p"]
    rngs = _pair_seeds(config.seed, config.params["pairs"])
    rows = []
    for i, rng in enumerate(rngs):
        pair = random_ball_pair(filling, rng, delta_target=None, depth=min(config.max_level, max(config.params["levels"])))
        for n in config.params["levels"]:
            try:
                res = mod_p_level(filling, pair, p, n)
            except Exception as exc:
                rows.append((f"pair{i}", p, n, pair.delta, float("nan"), 0, float("nan")))
                continue
            rows.append((f"pair{i}", p, n, pair.delta, res.value, res.iterations, res.gap))
    lines = ["pair_id,p,n,delta,modulus,iterations,gap"]
    for r in rows:
        lines.append(f"{r[0]},{r[1]:.12g},{r[2]},{r[3]:.12g},{r[4]:.12g},{r[5]},{r[6]:.12g}")
    files = {"level_modulus.csv": "\n".join(lines) + "\n"}
    return files, {"rows": len(rows)}


def _run_phi(filling, config):
    curve = phi_curve(
        filling,
        config.params["p"],
        config.params["t_grid"],
        config.params["pairs_per_t"],
        config.params["depth"],
        seed=config.seed,
        methods=config.params["methods"],
    )
    lines = ["p,t,upper_env,lower_env,pairs"]
    for row in curve.rows():
        lines.append(
            f"{row['p']:.12g},{row['t']:.12g},{row['upper_env']:.12g},{row['lower_env']:.12g},{row['pairs']}"
        )
    files = {"phi_curve.csv": "\n".join(lines) + "\n"}
    envs = [r["upper_env"] for r in curve.rows()]
    return files, {"t_points": len(envs), "upper_first": envs[0], "upper_last": envs[-1]}


def _run_sweep(filling, config):
    rep = exponent_sweep(
        filling,
        config.params["p_grid"],
        config.params["pairs"],
        config.params["depths"],
        seed=config.seed,
        methods=config.params["methods"],
    )
    payload = {
        "p_grid": list(rep.p_grid),
        "depths": list(rep.depths),
        "verdicts": {str(k): v for k, v in rep.verdicts.items()},
        "lower_medians": {str(k): v for k, v in rep.lower_medians.items()},
        "upper_medians": {str(k): v for k, v in rep.upper_medians.items()},
        "slopes": {str(k): (None if math.isnan(v) else v) for k, v in rep.slopes.items()},
        "bracket": list(rep.bracket),
        "thresholds": rep.thresholds,
        "seed": rep.seed,
        "raw": rep.raw,
    }
    files = {"sweep.json": _json_text(payload)}
    return files, {"verdicts": payload["verdicts"], "bracket": payload["bracket"]}


# ---------------------------------------------------------------------
# lemma suite: fast property checks of every module
# ---------------------------------------------------------------------


def _suite_checks(filling, seed: int):
    space = filling.space
    rng = np.random.default_rng(seed)
    checks = []

    def record(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"error: {exc}"
        checks.append((name, bool(ok), detail))

    def net_invariants():
        worst = 1.0
        for net in filling.nets:
            m = net.members
            if m.size > 1:
                d = space.distances_between(m, m)
                np.fill_diagonal(d, np.inf)
                worst = min(worst, float(d.min()) / net.separation)
            cover = space.distances_between(np.arange(space.n_points), m).min(axis=1)
            if cover.max() > net.separation * (1 + 1e-9):
                return False, f"maximality violated at level {net.level}"
        return worst >= 1 - 1e-9, f"min separation ratio {worst:.6f}"

    record("net_separation_maximality", net_invariants)

    def edge_rule():
        lv = filling.level
        present = set(map(tuple, filling.edges))
        bad = 0
        for k in range(filling.max_level + 1):
            for kk in (k, k + 1):
                if kk > filling.max_level:
                    continue
                va, vb = filling.vertices_at_level(k), filling.vertices_at_level(kk)
                if va.size == 0 or vb.size == 0:
                    continue
                d = space.distances_between(filling.center[va], filling.center[vb])
                rsum = filling.radius[va][:, None] + filling.radius[vb][None, :]
                should = d < rsum - 1e-12
                for i in range(va.size):
                    jstart = i + 1 if kk == k else 0
                    for j in range(jstart, vb.size):
                        a, b = int(va[i]), int(vb[j])
                        if a == b:
                            continue
                        e = (min(a, b), max(a, b))
                        if should[i, j] != (e in present):
                            bad += 1
        return bad == 0, f"{bad} mismatches"

    record("edge_rule_iff", edge_rule)

    def root_connectivity():
        roots = int(np.sum(filling.level == 0))
        from scipy.sparse import csgraph

        ncomp, _ = csgraph.connected_components(filling.csr_unit, directed=False)
        return roots == 1 and ncomp == 1, f"roots={roots} components={ncomp}"

    record("single_root_connected", root_connectivity)

    def weak_identities():
        for _ in range(200):
            v = rng.uniform(0, 1, size=int(rng.integers(1, 60)))
            a = weak_quantity(v, 2.0, mode="tail")
            b = weak_quantity(v, 2.0, mode="sorted")
            if abs(a - b) > 1e-12 * max(a, 1):
                return False, "tail/sorted mismatch"
            if weak_quantity(v, 2.0) > lp_norm(v, 2.0) * (1 + 1e-12):
                return False, "weak exceeds lp"
        return True, "200 vectors"

    record("weak_norm_identities", weak_identities)

    def flatten_ineq():
        ok_all = True
        for _ in range(20):
            p = float(rng.uniform(1.2, 3.0))
            q = p + 1
            ids = rng.choice(filling.n_vertices, size=20, replace=False)
            vals = rng.uniform(0.1, 0.6, size=20)
            vals[:2] = 1.0
            shallow = [int(i) for i in ids if filling.level[int(i)] < filling.max_level]
            if len(shallow) < 3:
                continue
            w = WeightFunction("vertex", {int(i): (1.0 if n < 2 else float(vals[n])) for n, i in enumerate(shallow)})
            res = flatten_below_one(w, filling)
            lhs = lp_norm(res.weights, q) ** q
            rhs = (q / (q - p)) * weak_quantity(res.weights, p) ** p * (1 - res.epsilon) ** (q - p)
            ok_all &= lhs <= rhs * (1 + 1e-9)
        return ok_all, "cross-exponent bound"

    record("flatten_cross_exponent", flatten_ineq)

    def s_bound_example():
        val = s_bound(1.0, 1.0, 1, 2.0)
        return abs(val - 3.8214) < 2e-3, f"S(1,1,1,2)={val:.4f}"

    record("s_bound_series", s_bound_example)

    def count_bound():
        bound, actual, ok = path_count_check([0.1] * 7 + [10.0], 2.0)
        return ok and path_count_bound(8, 1.0, 2.0) == 4, f"bound={bound} actual={actual}"

    record("path_count_bound", count_bound)

    def modulus_forms():
        prob = synthetic_problem(5, [(0, 1), (1, 2), (2, 3), (3, 4)], [0], [4], 2.0)
        res = modulus_solve(prob)
        ok1 = abs(res.value - 0.25) < 1e-6
        edges = [(0, 1), (1, 2), (3, 4), (4, 5)]
        prob2 = synthetic_problem(6, edges, [0, 3], [2, 5], 3.0)
        res2 = modulus_solve(prob2)
        ok2 = abs(res2.value - 2 * 2 ** (1 - 3.0)) < 1e-6
        return ok1 and ok2, f"single={res.value:.6f} disjoint={res2.value:.6f}"

    record("modulus_closed_forms", modulus_forms)

    def hull_nesting():
        from .filling import hull

        z = int(filling.center[filling.vertices_at_level(1)[0]])
        small = ball_region(space, z, 0.2)
        big = ball_region(space, z, 0.3)
        hs = hull(filling, small)
        hb = hull(filling, big)
        sub = set(map(int, hs.vertex_ids)) <= set(map(int, hb.vertex_ids))
        ok = sub or hs.j != hb.j  # nesting guaranteed at equal hull levels
        return ok, f"j_small={hs.j} j_big={hb.j}"

    record("hull_nesting", hull_nesting)

    def good_level():
        w = WeightFunction("vertex", {int(v): 0.5 for v in filling.vertices_at_level(1)})
        half = filling.max_level // 2
        rep = find_good_level_report(w, filling, max(1, half))
        return rep.value <= rep.window_mean + 1e-12, f"n={rep.n}"

    record("good_level_window", good_level)

    return checks


def _run_suite(filling, config):
    checks = _suite_checks(filling, config.seed)
    lines = ["check,passed,detail"]
    for name, ok, detail in checks:
        lines.append(f"{name},{'pass' if ok else 'FAIL'},{detail}")
    payload = [{"check": n, "passed": ok, "detail": d} for n, ok, d in checks]
    files = {"suite.csv": "\n".join(lines) + "\n", "suite.json": _json_text(payload)}
    n_pass = sum(1 for _, ok, _ in checks if ok)
    return files, {"passed": n_pass, "total": len(checks)}


def write_outputs(result: ExperimentResult, out_dir) -> list:
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in sorted(result.files):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(result.files[name])
        written.append(path)
    return written
