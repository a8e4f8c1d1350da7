"""Joint and individual variation explained over L-moment blocks."""

from .decomposition import (
    JiveDecomposition,
    LMomentBlockMatrix,
    RankSelection,
    RawBlock,
    build_blocks,
    jive_decompose,
    normalize_blocks,
    score_cross_correlation,
    select_ranks_permutation,
    top_correlated,
)

__all__ = [
    "RawBlock",
    "LMomentBlockMatrix",
    "JiveDecomposition",
    "RankSelection",
    "build_blocks",
    "normalize_blocks",
    "jive_decompose",
    "select_ranks_permutation",
    "score_cross_correlation",
    "top_correlated",
]
