"""FastAPI service wrapping the filling laboratory.

Spaces and fillings are content-addressed by their build parameters and
cached in memory, so repeated capacity/modulus queries against the same
filling skip the expensive graph construction.  All computation is
deterministic given the request, which keeps responses reproducible.
"""

from __future__ import annotations

import hashlib
import json
import threading

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..spaces import make_model_space, SpaceError
from ..filling import (
    FillingError,
    ball_region,
    build_filling,
    complement_ball_region,
    graph_distance,
    make_pair,
    ring_separation,
    union_region,
)
from ..capacity import CapacityError, wcap_estimate
from ..level_modulus import LevelModulusError, mod_p_level
from ..exponents import ExponentError, phi_curve, exponent_sweep
from ..experiments import ConfigError, build_config, run_experiment
from ..paths import PathError
from . import schemas as sch

_USER_ERRORS = (SpaceError, FillingError, CapacityError, LevelModulusError, ExponentError, PathError, ValueError)


def _key(payload) -> str:
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


class Registry:
    def __init__(self):
        self.spaces = {}
        self.fillings = {}
        self.lock = threading.Lock()

    def get_space(self, spec: sch.SpaceSpec):
        sid = _key({"kind": spec.kind, "params": spec.params})
        with self.lock:
            if sid not in self.spaces:
                self.spaces[sid] = make_model_space(spec.kind, spec.params)
        return sid, self.spaces[sid]

    def get_filling(self, spec: sch.FillingSpec):
        sid, space = self.get_space(spec.space)
        fid = _key({"space": sid, "s": spec.s, "max_level": spec.max_level})
        with self.lock:
            if fid not in self.fillings:
                self.fillings[fid] = (sid, build_filling(space, spec.s, spec.max_level))
        return fid, self.fillings[fid][1]


def _region(space, spec: sch.RegionSpec):
    if spec.complement:
        if len(spec.balls) != 1:
            raise FillingError("complement regions take exactly one ball")
        b = spec.balls[0]
        return complement_ball_region(space, b.center, b.radius)
    if len(spec.balls) == 1:
        return ball_region(space, spec.balls[0].center, spec.balls[0].radius)
    return union_region(space, [(b.center, b.radius) for b in spec.balls])


def _pair(filling, spec: sch.PairSpec):
    a = _region(filling.space, spec.a)
    b = _region(filling.space, spec.b)
    return make_pair(a, b)


def _pair_info(pair) -> sch.PairInfo:
    return sch.PairInfo(dist=pair.dist, delta=pair.delta, diam_a=pair.a.diam, diam_b=pair.b.diam)


def create_app() -> FastAPI:
    app = FastAPI(title="hypfill", version=__version__)
    reg = Registry()

    def guard(fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail={"field": exc.field, "message": str(exc)})
        except _USER_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/health", response_model=sch.HealthResponse)
    def health():
        return sch.HealthResponse(
            status="ok", version=__version__, spaces=len(reg.spaces), fillings=len(reg.fillings)
        )

    @app.post("/spaces", response_model=sch.SpaceInfo)
    def make_space(spec: sch.SpaceSpec):
        sid, space = guard(reg.get_space, spec)
        return sch.SpaceInfo(
            space_id=sid, kind=space.kind, n_points=space.n_points, resolution=space.resolution
        )

    @app.get("/spaces/{space_id}/export", response_class=PlainTextResponse)
    def export_space(space_id: str):
        if space_id not in reg.spaces:
            raise HTTPException(status_code=404, detail="unknown space id")
        return reg.spaces[space_id].export_text()

    @app.post("/fillings", response_model=sch.FillingInfo)
    def make_filling(spec: sch.FillingSpec):
        fid, filling = guard(reg.get_filling, spec)
        sid = reg.fillings[fid][0]
        counts = [int(filling.vertices_at_level(k).size) for k in range(filling.max_level + 1)]
        return sch.FillingInfo(
            filling_id=fid,
            space_id=sid,
            s=filling.s,
            max_level=filling.max_level,
            n_vertices=filling.n_vertices,
            n_edges=filling.n_edges,
            degree_bound=filling.degree_bound,
            level_counts=counts,
        )

    def _filling(fid: str):
        if fid not in reg.fillings:
            raise HTTPException(status_code=404, detail="unknown filling id")
        return reg.fillings[fid][1]

    @app.get("/fillings/{fid}/export", response_class=PlainTextResponse)
    def export_filling(fid: str):
        return _filling(fid).export_text()

    @app.post("/fillings/{fid}/graph-distance", response_model=sch.GraphDistanceResponse)
    def graph_dist(fid: str, req: sch.GraphDistanceRequest):
        filling = _filling(fid)
        return sch.GraphDistanceResponse(distance=guard(graph_distance, filling, req.u, req.v))

    @app.post("/fillings/{fid}/ring-separation", response_model=sch.RingSeparationResponse)
    def ring_sep(fid: str, req: sch.RingSeparationRequest):
        filling = _filling(fid)
        return sch.RingSeparationResponse(
            separation=guard(ring_separation, filling, req.center, req.r1, req.r2)
        )

    @app.post("/fillings/{fid}/capacity", response_model=sch.CapacityResponse)
    def capacity(fid: str, req: sch.CapacityRequest):
        filling = _filling(fid)
        pair = guard(_pair, filling, req.pair)
        est = guard(
            wcap_estimate, filling, pair, req.p, req.depth,
            methods=tuple(req.methods), max_iter=req.max_iter,
        )
        witness = [
            sch.WitnessEntry(id=k, value=est.upper_witness.values[k])
            for k in sorted(est.upper_witness.values)
        ]
        return sch.CapacityResponse(
            pair=_pair_info(pair),
            p=est.p,
            depth=est.depth,
            upper=est.upper,
            lower=est.lower,
            methods={k: float(v) for k, v in est.methods.items()},
            winner=est.winner,
            iterations=est.iterations,
            gap=est.gap,
            witness_domain=est.upper_witness.domain,
            witness=witness,
        )

    @app.post("/fillings/{fid}/level-modulus", response_model=sch.LevelModulusResponse)
    def level_mod(fid: str, req: sch.LevelModulusRequest):
        filling = _filling(fid)
        pair = guard(_pair, filling, req.pair)
        res = guard(mod_p_level, filling, pair, req.p, req.level)
        return sch.LevelModulusResponse(
            pair=_pair_info(pair),
            p=res.p,
            level=res.level,
            value=res.value,
            iterations=res.iterations,
            gap=res.gap,
            converged=res.converged,
            endpoints=res.endpoints,
        )

    @app.post("/fillings/{fid}/phi-curve", response_model=sch.PhiCurveResponse)
    def phi(fid: str, req: sch.PhiCurveRequest):
        filling = _filling(fid)
        curve = guard(
            phi_curve, filling, req.p, req.t_grid, req.pairs_per_t, req.depth,
            seed=req.seed, methods=tuple(req.methods),
        )
        return sch.PhiCurveResponse(rows=[sch.PhiCurveRow(**row) for row in curve.rows()])

    @app.post("/fillings/{fid}/sweep", response_model=sch.SweepResponse)
    def sweep(fid: str, req: sch.SweepRequest):
        filling = _filling(fid)
        rep = guard(
            exponent_sweep, filling, req.p_grid, req.pair_samples, req.depths,
            seed=req.seed, methods=tuple(req.methods),
        )
        return sch.SweepResponse(
            verdicts={str(k): v for k, v in rep.verdicts.items()},
            lower_medians={str(k): v for k, v in rep.lower_medians.items()},
            upper_medians={str(k): v for k, v in rep.upper_medians.items()},
            bracket=list(rep.bracket),
            thresholds=rep.thresholds,
        )

    @app.post("/experiments", response_model=sch.ExperimentResponse)
    def experiment(req: sch.ExperimentRequest):
        config = guard(build_config, dict(req.config))
        result = guard(run_experiment, config)
        return sch.ExperimentResponse(
            manifest=result.manifest, files=result.files, summary=result.summary
        )

    return app
