"""Hyperbolic fillings of sampled compact metric spaces.

Builds leveled ball-intersection graphs over finite samples of model
spaces, and computes weak-capacity brackets, discrete p-modulus, and
control-function / critical-exponent diagnostics on them.
"""

__version__ = "0.1.0"

from .spaces import PointCloudSpace, Net, RegularityReport, make_model_space, greedy_maximal_net, regularity_probe
from .filling import (
    Filling,
    Region,
    SetPair,
    Hull,
    build_filling,
    graph_distance,
    hull,
    ring_separation,
    level_graph,
    anchors,
    ball_region,
    complement_ball_region,
    union_region,
    make_pair,
)
from .weak_norm import WeightFunction, weak_quantity, comparable_norm, lp_norm, flatten_below_one

__all__ = [
    "__version__",
    "PointCloudSpace",
    "Net",
    "RegularityReport",
    "make_model_space",
    "greedy_maximal_net",
    "regularity_probe",
    "Filling",
    "Region",
    "SetPair",
    "Hull",
    "build_filling",
    "graph_distance",
    "hull",
    "ring_separation",
    "level_graph",
    "anchors",
    "ball_region",
    "complement_ball_region",
    "union_region",
    "make_pair",
    "WeightFunction",
    "weak_quantity",
    "comparable_norm",
    "lp_norm",
    "flatten_below_one",
]
