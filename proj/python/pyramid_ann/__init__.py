"""Two-level HNSW approximate similarity search."""

from ._core import (
    BalanceInfeasibleError,
    DimensionError,
    Hnsw,
    Index,
    build_index,
    build_index_naive,
    gen_gaussian_mixture,
    gen_lognormal_norm,
    gen_uniform,
    ground_truth,
    precision,
)

__all__ = [
    "BalanceInfeasibleError",
    "DimensionError",
    "Hnsw",
    "Index",
    "build_index",
    "build_index_naive",
    "gen_gaussian_mixture",
    "gen_lognormal_norm",
    "gen_uniform",
    "ground_truth",
    "precision",
]
