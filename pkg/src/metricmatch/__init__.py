"""Low-distortion matching of metric patterns inside doubling metric spaces."""

from .metric import (
    FiniteMetric,
    Matching,
    Scale,
    distortion,
    expansion,
    load_metric,
    matching_distance,
    metric_to_json,
    rescale,
    validate_metric,
    verify_matching,
)
from .matcher import solve_distortion
from .distopt import decide_distortion, decide_expansions, min_distortion, min_distortion_naive
from .gadgets import gen_clique_instance, gen_min_distortion_instance, matching_to_clique
from .nets import build_navigating_net, build_r_net, scale_for
from .wspd import build_wspd, candidate_lengths

__version__ = "0.1.0"

__all__ = [
    "FiniteMetric",
    "Matching",
    "Scale",
    "distortion",
    "expansion",
    "matching_distance",
    "verify_matching",
    "rescale",
    "validate_metric",
    "load_metric",
    "metric_to_json",
    "solve_distortion",
    "decide_expansions",
    "decide_distortion",
    "min_distortion",
    "min_distortion_naive",
    "gen_clique_instance",
    "gen_min_distortion_instance",
    "matching_to_clique",
    "build_r_net",
    "build_navigating_net",
    "scale_for",
    "build_wspd",
    "candidate_lengths",
]
