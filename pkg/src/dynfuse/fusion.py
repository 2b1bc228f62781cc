"""Ratio scoring, subset enumeration and selection, weighting, and matching.

The central quantity is the aliasing ratio of a similarity vector: the best
score divided by the best score found outside an exclusion window around the
best match. A high ratio means the vector has one dominant, unambiguous
peak; a ratio near one means a rival location scores almost as well (the
vector is perceptually aliased). Fused combinations of techniques are ranked
by this ratio, and the combination that maximizes it is selected per query.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator

import numpy as np

from .core import (
    TIE_BREAK_SMALLEST_SUBSET,
    FusionConfig,
    argmax_lowest_index,
    is_constant,
    minmax_normalize,
    zscore_normalize,
)
from .errors import TooFewTechniquesError, WindowCoversAllError


@dataclass(frozen=True)
class SubsetScore:
    """A candidate technique subset together with its fused-vector ratio."""

    subset: tuple[int, ...]
    score: float


def ratio_score(v, r_window: int, epsilon: float = 1e-12) -> float:
    """Best score divided by the best score outside the exclusion window.

    The window covers every index within ``r_window`` of the argmax
    (inclusive); argmax ties resolve to the lowest index before windowing.
    The denominator is clamped to ``epsilon`` so an empty-looking tail still
    yields a finite (large) score.

    Raises WindowCoversAllError when no index survives the exclusion, which
    means the window is too wide for this database.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("ratio_score needs a 1-D vector of length >= 2")
    best = argmax_lowest_index(arr)
    lo = max(0, best - r_window)
    hi = min(arr.size, best + r_window + 1)
    if lo == 0 and hi == arr.size:
        raise WindowCoversAllError(
            f"exclusion window +/-{r_window} around index {best} covers all "
            f"{arr.size} entries"
        )
    outside_max = -np.inf
    if lo > 0:
        outside_max = arr[:lo].max()
    if hi < arr.size:
        outside_max = max(outside_max, arr[hi:].max())
    return float(arr[best]) / max(float(outside_max), epsilon)


def enumerate_subsets(
    n: int,
    min_size: int,
    max_size: int,
    degenerate: Iterable[int] = (),
) -> Iterator[tuple[int, ...]]:
    """Yield every admissible technique subset in deterministic order.

    Order is ascending cardinality, then lexicographic by member indices.
    Degenerate techniques are excluded entirely; sizes above the remaining
    technique count are silently unreachable. With the full size range and
    no degenerates the subset count is 2**n - n - 1.
    """
    if not (2 <= min_size <= max_size <= n):
        raise ValueError(
            f"need 2 <= min_size <= max_size <= {n}, got [{min_size}, {max_size}]"
        )
    degenerate = frozenset(degenerate)
    available = [i for i in range(n) if i not in degenerate]
    if len(available) < min_size:
        raise TooFewTechniquesError(
            f"{len(available)} non-degenerate techniques remain, "
            f"need at least {min_size}"
        )
    for size in range(min_size, min(max_size, len(available)) + 1):
        yield from combinations(available, size)


def fuse_subset(normalized: np.ndarray, subset) -> np.ndarray:
    """Element-wise sum of the subset members' normalized vectors."""
    idx = list(subset)
    return np.asarray(normalized)[idx].sum(axis=0)


def normalize_query_slices(raw_slices: np.ndarray):
    """Min-max normalize each technique's vector for one query.

    Returns (normalized N x D array, frozenset of degenerate technique
    indices). Constant vectors become all-zeros and are flagged degenerate.
    """
    raw_slices = np.asarray(raw_slices, dtype=np.float64)
    normalized = np.empty_like(raw_slices)
    degenerate = set()
    for i in range(raw_slices.shape[0]):
        if is_constant(raw_slices[i]):
            normalized[i] = 0.0
            degenerate.add(i)
        else:
            normalized[i] = minmax_normalize(raw_slices[i])
    return normalized, frozenset(degenerate)


def _beats(candidate: SubsetScore, incumbent: SubsetScore, tie_break: str) -> bool:
    if candidate.score != incumbent.score:
        return candidate.score > incumbent.score
    if tie_break == TIE_BREAK_SMALLEST_SUBSET:
        key_c = (len(candidate.subset), candidate.subset)
        key_i = (len(incumbent.subset), incumbent.subset)
    else:
        key_c = candidate.subset
        key_i = incumbent.subset
    return key_c < key_i


def select_best_subset(
    normalized: np.ndarray,
    config: FusionConfig,
    degenerate: Iterable[int] = (),
) -> SubsetScore:
    """Exhaustively search all admissible subsets for the highest fused ratio.

    Subsets whose fused vector has no index outside the exclusion window are
    skipped; if every candidate is skipped the window error propagates.
    Score ties resolve per ``config.tie_break`` (default: smaller subset
    first, then lexicographic member order).
    """
    normalized = np.asarray(normalized, dtype=np.float64)
    n = normalized.shape[0]
    max_size = config.resolved_max_subset_size(n)
    best: SubsetScore | None = None
    any_candidate = False
    for subset in enumerate_subsets(n, config.min_subset_size, max_size, degenerate):
        any_candidate = True
        fused = fuse_subset(normalized, subset)
        try:
            score = ratio_score(fused, config.r_window, config.epsilon)
        except WindowCoversAllError:
            continue
        candidate = SubsetScore(subset=subset, score=score)
        if best is None or _beats(candidate, best, config.tie_break):
            best = candidate
    if best is None:
        if not any_candidate:
            raise TooFewTechniquesError("no admissible subsets to enumerate")
        raise WindowCoversAllError(
            "every candidate subset's exclusion window covered the whole vector"
        )
    return best


def technique_weights(
    normalized: np.ndarray,
    subset,
    config: FusionConfig,
) -> dict[int, float]:
    """Per-member confidence weights: each member's own aliasing ratio.

    A sharply peaked member earns a large weight; an ambiguous one weighs
    near 1. An all-zero (degenerate) member naturally weighs 0 because its
    best score is 0.
    """
    normalized = np.asarray(normalized, dtype=np.float64)
    return {
        int(m): ratio_score(normalized[m], config.r_window, config.epsilon)
        for m in subset
    }


def weighted_fuse_and_match(
    normalized: np.ndarray,
    subset,
    weights: dict[int, float],
):
    """Weighted sum of the subset, standardized, plus its best match index.

    Returns (standardized fused vector, match index, pre-normalization mean,
    pre-normalization sample std). The match index is taken from the raw
    weighted sum, so it is invariant to the standardization step by
    construction; a constant weighted sum skips standardization and the
    match falls to index 0 by the tie rule.
    """
    normalized = np.asarray(normalized, dtype=np.float64)
    fused = np.zeros(normalized.shape[1], dtype=np.float64)
    for m in subset:
        fused += weights[int(m)] * normalized[m]
    mean = float(fused.mean())
    std = float(fused.std(ddof=1))
    match = argmax_lowest_index(fused)
    return zscore_normalize(fused), match, mean, std
