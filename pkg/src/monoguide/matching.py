"""Brute-force Hamming matching of packed binary descriptors.

Raw nearest-neighbor matching floods the pose estimator with outliers,
so three individually toggleable filters sit on top: an absolute
distance cap, Lowe's ratio test against the second-nearest neighbor,
and a mutual cross-check. With the cross-check enabled the ratio test
is applied from both sides, which makes the result symmetric in the
two feature sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyFeatureSet
from .features import FeatureSet
from .geometry import CorrespondenceSet

_HAMMING_CHUNK = 256


@dataclass(frozen=True)
class MatchPair:
    index_a: int
    index_b: int
    distance: int


@dataclass(frozen=True)
class MatchParams:
    """Filters of the matcher; set a field to None/False to disable it."""

    max_distance: int | None = 64
    ratio: float | None = 0.8
    cross_check: bool = True


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Population count of the XOR of two packed 256-bit descriptors."""
    a = np.asarray(a, dtype=np.uint8).reshape(32)
    b = np.asarray(b, dtype=np.uint8).reshape(32)
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances, (Na, Nb) uint16.

    Descriptors are viewed as 4 uint64 words per row so the popcount runs
    wide; rows are chunked to bound the intermediate size.
    """
    a64 = np.ascontiguousarray(da, dtype=np.uint8).reshape(-1, 32).view(np.uint64)
    b64 = np.ascontiguousarray(db, dtype=np.uint8).reshape(-1, 32).view(np.uint64)
    out = np.empty((len(a64), len(b64)), dtype=np.uint16)
    for start in range(0, len(a64), _HAMMING_CHUNK):
        stop = min(start + _HAMMING_CHUNK, len(a64))
        xor = a64[start:stop, None, :] ^ b64[None, :, :]
        out[start:stop] = np.bitwise_count(xor).sum(axis=2, dtype=np.uint16)
    return out


def _nearest_two(dist: np.ndarray):
    """Per row: index of the nearest column (lowest index on ties), its
    distance, and the second-smallest distance (inf with one column)."""
    dist = np.ascontiguousarray(dist)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(dist))
    d1 = dist[rows, best].astype(float)
    if dist.shape[1] < 2:
        return best, d1, np.full(len(dist), np.inf)
    d2 = np.partition(dist, 1, axis=1)[:, 1].astype(float)
    return best, d1, d2


def match_features(
    fa: FeatureSet, fb: FeatureSet, params: MatchParams = MatchParams()
) -> tuple[list[MatchPair], CorrespondenceSet]:
    """Brute-force match of two feature sets.

    For each descriptor of ``fa`` the nearest and second-nearest
    neighbors in ``fb`` are found by Hamming distance; a pair survives if
    it passes every enabled filter. Output is ordered by index_a, and the
    matched keypoint coordinates are returned as a CorrespondenceSet.
    """
    if len(fa) == 0 or len(fb) == 0:
        raise EmptyFeatureSet("both feature sets must be non-empty")
    dist = hamming_matrix(fa.descriptors, fb.descriptors)
    best_b, d1, d2_a = _nearest_two(dist)
    keep = np.ones(len(fa), dtype=bool)
    if params.max_distance is not None:
        keep &= d1 <= params.max_distance
    if params.ratio is not None:
        keep &= d1 < params.ratio * d2_a
    if params.cross_check:
        best_a_of_b, _, d2_b = _nearest_two(dist.T)
        keep &= best_a_of_b[best_b] == np.arange(len(fa))
        if params.ratio is not None:
            keep &= d1 < params.ratio * d2_b[best_b]

    idx_a = np.nonzero(keep)[0]
    pairs = [MatchPair(int(i), int(best_b[i]), int(d1[i])) for i in idx_a]
    pos_a = fa.positions()
    pos_b = fb.positions()
    corr = CorrespondenceSet(
        points_a=pos_a[idx_a].reshape(-1, 2),
        points_b=pos_b[best_b[idx_a]].reshape(-1, 2),
    )
    return pairs, corr
