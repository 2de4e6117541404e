"""
Amended Pearson correlation between user profiles

Means are taken over each user's full profile, sums over the overlap only.
The raw coefficient is then amended: no overlap and zero variance return
fixed defaults, and overlaps smaller than the penalty P are scaled by n/P.
"""

import math
from dataclasses import dataclass
from threading import Lock
from typing import Optional

from .dataset import UserProfile, mean_vote

# Product-of-variances below this is treated as zero
ZERO_VARIANCE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SimilarityParams:
    overlap_penalty: int = 100
    no_overlap_default: float = 0.0
    zero_variance_default: float = 0.0

    def __post_init__(self) -> None:
        if self.overlap_penalty < 1:
            raise ValueError("overlap_penalty must be at least 1")


def overlap(u: UserProfile, v: UserProfile) -> list[int]:
    """Sorted ids of the movies both users voted on"""
    return sorted(u.votes.keys() & v.votes.keys())


def pearson_amended(
    u: UserProfile, v: UserProfile, params: Optional[SimilarityParams] = None
) -> float:
    """
    Amended Pearson correlation of two users

    Args:
        u: First profile (non-empty)
        v: Second profile (non-empty)
        params: Penalty and default values

    Returns:
        float: Correlation in [-1, 1], at most n/P in magnitude

    Raises:
        DataError: If either profile is empty
    """
    params = params or SimilarityParams()
    u_mean = mean_vote(u)
    v_mean = mean_vote(v)
    common = overlap(u, v)
    n = len(common)
    if n == 0:
        return params.no_overlap_default

    numerator = 0.0
    u_square = 0.0
    v_square = 0.0
    for movie in common:
        du = u.votes[movie] - u_mean
        dv = v.votes[movie] - v_mean
        numerator += du * dv
        u_square += du * du
        v_square += dv * dv

    variance_product = u_square * v_square
    if variance_product <= ZERO_VARIANCE_TOLERANCE:
        return params.zero_variance_default

    r = numerator / math.sqrt(variance_product)
    r = max(-1.0, min(1.0, r))
    if n < params.overlap_penalty:
        r *= n / params.overlap_penalty
    return r


class SimilarityCache:
    """
    Memoised correlations between dataset reviewers

    Keys are unordered user-id pairs, so the cache is only valid for
    profiles that are never rewritten (full dataset users, not training
    users with a reserved vote removed).
    """

    def __init__(self, params: Optional[SimilarityParams] = None) -> None:
        self.params = params or SimilarityParams()
        self._values: dict[tuple[int, int], float] = {}
        self._lock = Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._values)

    def __call__(self, u: UserProfile, v: UserProfile) -> float:
        if u.user_id > v.user_id:
            u, v = v, u
        key = (u.user_id, v.user_id)
        value = self._values.get(key)
        if value is not None:
            self.hits += 1
            return value
        value = pearson_amended(u, v, self.params)
        with self._lock:
            self._values[key] = value
            self.misses += 1
        return value
