"""Pydantic request/response models for the filling service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class SpaceSpec(BaseModel):
    kind: str = Field(..., description="interval | circle | square | sphere | carpet | snowflake")
    params: dict[str, float] = Field(default_factory=dict)


class SpaceInfo(BaseModel):
    space_id: str
    kind: str
    n_points: int
    resolution: float
    diameter: float = 1.0


class FillingSpec(BaseModel):
    space: SpaceSpec
    s: float = 2.0
    max_level: int


class FillingInfo(BaseModel):
    filling_id: str
    space_id: str
    s: float
    max_level: int
    n_vertices: int
    n_edges: int
    degree_bound: int
    level_counts: list[int]


class BallSpec(BaseModel):
    center: int
    radius: float


class RegionSpec(BaseModel):
    balls: list[BallSpec]
    complement: bool = False  # complement of the closed ball (single ball only)


class PairSpec(BaseModel):
    a: RegionSpec
    b: RegionSpec


class PairInfo(BaseModel):
    dist: float
    delta: float
    diam_a: float
    diam_b: float


class CapacityRequest(BaseModel):
    pair: PairSpec
    p: float = 2.0
    depth: int
    methods: list[str] = ["modulus", "g"]
    max_iter: int = 10_000


class WitnessEntry(BaseModel):
    id: int
    value: float


class CapacityResponse(BaseModel):
    pair: PairInfo
    p: float
    depth: int
    upper: float
    lower: float
    methods: dict[str, float]
    winner: str
    iterations: int
    gap: float
    witness_domain: str
    witness: list[WitnessEntry]


class LevelModulusRequest(BaseModel):
    pair: PairSpec
    p: float = 2.0
    level: int


class LevelModulusResponse(BaseModel):
    pair: PairInfo
    p: float
    level: int
    value: float
    iterations: int
    gap: float
    converged: bool
    endpoints: tuple[int, int]


class RingSeparationRequest(BaseModel):
    center: int
    r1: float
    r2: float


class RingSeparationResponse(BaseModel):
    separation: int


class GraphDistanceRequest(BaseModel):
    u: int
    v: int


class GraphDistanceResponse(BaseModel):
    distance: int


class PhiCurveRequest(BaseModel):
    p: float = 2.0
    t_grid: list[float]
    pairs_per_t: int = 2
    depth: int
    seed: int = 0
    methods: list[str] = ["g"]


class PhiCurveRow(BaseModel):
    p: float
    t: float
    upper_env: float
    lower_env: float
    pairs: int


class PhiCurveResponse(BaseModel):
    rows: list[PhiCurveRow]


class SweepRequest(BaseModel):
    p_grid: list[float]
    pair_samples: int = 2
    depths: list[int]
    seed: int = 0
    methods: list[str] = ["g"]


class SweepResponse(BaseModel):
    verdicts: dict[str, str]
    lower_medians: dict[str, list[float]]
    upper_medians: dict[str, list[float]]
    bracket: list[float | None]
    thresholds: dict[str, float]


class ExperimentRequest(BaseModel):
    config: dict[str, str] = Field(..., description="flat key=value config entries")


class ExperimentResponse(BaseModel):
    manifest: dict
    files: dict[str, str]
    summary: dict


class HealthResponse(BaseModel):
    status: str
    version: str
    spaces: int
    fillings: int
