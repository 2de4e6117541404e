"""
Neighbourhood construction

Neighbourhoods are built by Simple Pearson top-k selection, by the immune
network, or from a fixed member list weighted either way. Community
characteristics summarise a neighbourhood against its test case.
"""

import itertools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Optional, Union

import pandas as pd

from .ais import (
    AisParams,
    AisState,
    PairSimilarity,
    add_antibody,
    new_ais,
    reset_and_differentiate,
    run_selection,
)
from .dataset import TestCase, UserProfile
from .logger import log
from .similarity import SimilarityParams, pearson_amended

NEIGHBORHOOD_COLUMNS = [
    "test_user",
    "neighbor_user",
    "r",
    "concentration",
    "weight",
    "method",
]


class NeighborhoodMethod(str, Enum):
    """How a neighbourhood was selected and weighted"""

    SP = "SP"
    AIS = "AIS"
    FIXED_SP = "fixed-SP-weighted"
    FIXED_AIS = "fixed-AIS-weighted"


class Weighting(str, Enum):
    """Weighting scheme applied to a fixed member list"""

    SP = "SP"
    AIS = "AIS"


@dataclass(frozen=True)
class NeighborEntry:
    profile: UserProfile
    r: float
    concentration: Optional[float]
    weight: float

    @property
    def user_id(self) -> int:
        return self.profile.user_id


@dataclass(frozen=True)
class Neighborhood:
    test_user: UserProfile
    entries: tuple[NeighborEntry, ...]
    method: NeighborhoodMethod
    reviewers_seen: int = 0

    def __post_init__(self) -> None:
        ids = [entry.user_id for entry in self.entries]
        if self.test_user.user_id in ids:
            raise ValueError(
                f"test user {self.test_user.user_id} cannot be its own neighbour"
            )
        if len(set(ids)) != len(ids):
            raise ValueError("neighbour user ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def member_ids(self) -> frozenset[int]:
        return frozenset(entry.user_id for entry in self.entries)

    @property
    def members(self) -> list[UserProfile]:
        return [entry.profile for entry in self.entries]


@dataclass(frozen=True)
class Characteristics:
    size: int = 0
    overlap_count: int = 0
    mean_abs_corr_to_test: float = 0.0
    mean_inter_neighbor_abs_corr: float = 0.0


def select_sp(
    reviewers: Iterable[UserProfile],
    test_user: UserProfile,
    k: int,
    target_movie: Optional[int] = None,
    sim: Optional[SimilarityParams] = None,
) -> Neighborhood:
    """
    Simple Pearson neighbourhood: the k strongest absolute correlations

    Reviewers with zero correlation are skipped, as are reviewers who did
    not vote on target_movie when one is given. Ties on |r| go to the lower
    user id, so the result does not depend on stream order.

    Args:
        reviewers: Candidate neighbours (the whole stream is scanned)
        test_user: Training profile of the test user
        k: Maximum neighbourhood size
        target_movie: Movie to be predicted, if any
        sim: Similarity parameters

    Returns:
        Neighborhood: Entries weighted by their signed correlation
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    sim = sim or SimilarityParams()
    candidates: list[tuple[float, int, UserProfile, float]] = []
    seen = 0
    for reviewer in reviewers:
        seen += 1
        if reviewer.user_id == test_user.user_id:
            continue
        if target_movie is not None and target_movie not in reviewer.votes:
            continue
        r = pearson_amended(test_user, reviewer, sim)
        if r == 0:
            continue
        candidates.append((-abs(r), reviewer.user_id, reviewer, r))

    candidates.sort(key=lambda item: (item[0], item[1]))
    entries = tuple(
        NeighborEntry(profile=reviewer, r=r, concentration=None, weight=r)
        for _, _, reviewer, r in candidates[:k]
    )
    if not entries:
        log.debug(f"Empty SP neighbourhood for user {test_user.user_id}")
    return Neighborhood(test_user, entries, NeighborhoodMethod.SP, seen)


def neighborhood_from_state(
    state: AisState,
    test_user: UserProfile,
    method: NeighborhoodMethod = NeighborhoodMethod.AIS,
) -> Neighborhood:
    """
    Turn the antibodies of a network into weighted neighbours

    The dynamics use |r|; weights use the signed correlation times the
    antibody concentration.
    """
    entries = []
    for antibody in state.antibodies:
        r = pearson_amended(test_user, antibody.profile, state.sim)
        entries.append(
            NeighborEntry(
                profile=antibody.profile,
                r=r,
                concentration=antibody.concentration,
                weight=r * antibody.concentration,
            )
        )
    return Neighborhood(test_user, tuple(entries), method, state.reviewers_seen)


def select_ais(
    reviewers: Iterable[UserProfile],
    test_user: UserProfile,
    params: Optional[AisParams] = None,
    sim: Optional[SimilarityParams] = None,
    pair_similarity: Optional[PairSimilarity] = None,
    record_trajectory: bool = False,
) -> Neighborhood:
    """
    Immune network neighbourhood

    Runs selection over the reviewer stream, then resets and differentiates
    the surviving antibodies. An empty pool yields an empty neighbourhood.

    Raises:
        DifferentiationCapError: If differentiation never saturates an antibody
    """
    state = new_ais(
        test_user,
        params,
        sim,
        pair_similarity=pair_similarity,
        record_trajectory=record_trajectory,
    )
    run_selection(state, reviewers)
    if len(state) == 0:
        log.debug(f"Empty AIS neighbourhood for user {test_user.user_id}")
        return Neighborhood(test_user, (), NeighborhoodMethod.AIS, state.reviewers_seen)
    reset_and_differentiate(state)
    return neighborhood_from_state(state, test_user)


def inject_fixed(
    members: Sequence[UserProfile],
    test_user: UserProfile,
    weighting: Weighting,
    params: Optional[AisParams] = None,
    sim: Optional[SimilarityParams] = None,
    pair_similarity: Optional[PairSimilarity] = None,
) -> Neighborhood:
    """
    Weight a given member list without changing its membership

    SP weighting uses the signed correlation. AIS weighting loads every
    member as an antibody and runs only the reset and differentiation pass.

    Raises:
        ValueError: If members is empty or contains the test user
        DifferentiationCapError: AIS weighting only
    """
    if not members:
        raise ValueError("a fixed neighbourhood needs at least one member")
    if any(member.user_id == test_user.user_id for member in members):
        raise ValueError("a fixed neighbourhood cannot contain the test user")
    sim = sim or SimilarityParams()
    weighting = Weighting(weighting)

    if weighting is Weighting.SP:
        entries = []
        for member in members:
            r = pearson_amended(test_user, member, sim)
            entries.append(NeighborEntry(member, r, None, r))
        return Neighborhood(test_user, tuple(entries), NeighborhoodMethod.FIXED_SP)

    params = params or AisParams()
    if len(members) > params.pool_size:
        params = replace(params, pool_size=len(members))
    state = new_ais(test_user, params, sim, pair_similarity=pair_similarity)
    for member in members:
        add_antibody(state, member)
    reset_and_differentiate(state)
    nh = neighborhood_from_state(state, test_user, NeighborhoodMethod.FIXED_AIS)
    return replace(nh, reviewers_seen=0)


def characteristics(
    nh: Neighborhood,
    test_case: TestCase,
    sim: Optional[SimilarityParams] = None,
    pair_similarity: Optional[PairSimilarity] = None,
) -> Characteristics:
    """
    Community characteristics of a neighbourhood

    Overlap counts the test user's (training) votes that some neighbour also
    voted on. Inter-neighbour correlation is the mean |r| over all unordered
    neighbour pairs.
    """
    if not nh.entries:
        return Characteristics()
    sim = sim or SimilarityParams()
    if pair_similarity is None:
        pair_similarity = partial(pearson_amended, params=sim)

    covered: set[int] = set()
    for entry in nh.entries:
        covered.update(entry.profile.votes)
    overlap_count = len(test_case.training_user.votes.keys() & covered)

    mean_corr = sum(abs(entry.r) for entry in nh.entries) / len(nh.entries)
    pairs = [
        abs(pair_similarity(a.profile, b.profile))
        for a, b in itertools.combinations(nh.entries, 2)
    ]
    inter = sum(pairs) / len(pairs) if pairs else 0.0
    return Characteristics(
        size=len(nh.entries),
        overlap_count=overlap_count,
        mean_abs_corr_to_test=mean_corr,
        mean_inter_neighbor_abs_corr=inter,
    )


def neighborhoods_frame(neighborhoods: Iterable[Neighborhood]) -> pd.DataFrame:
    rows = [
        {
            "test_user": nh.test_user.user_id,
            "neighbor_user": entry.user_id,
            "r": entry.r,
            "concentration": entry.concentration,
            "weight": entry.weight,
            "method": nh.method.value,
        }
        for nh in neighborhoods
        for entry in nh.entries
    ]
    return pd.DataFrame(rows, columns=NEIGHBORHOOD_COLUMNS)


def write_neighborhoods(
    path: Union[str, Path], neighborhoods: Iterable[Neighborhood]
) -> None:
    """Dump neighbourhood memberships and weights as CSV"""
    frame = neighborhoods_frame(neighborhoods)
    frame.to_csv(path, index=False)
    log.info(f"Wrote {len(frame)} neighbour rows to {path}")
