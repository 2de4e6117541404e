"""
Idiotypic immune network used for neighbourhood selection

The test user is encoded as the single antigen and reviewers are added as
antibodies. Concentrations follow the simplified Farmer dynamics

    dx_i/dt = k1 m_i x_i y - (k2 / n) sum_j m_ij x_i x_j - k3 x_i

integrated with explicit Euler steps applied synchronously to the whole
pool. Antibodies that fall below the removal threshold leave the pool;
concentrations saturate at conc_max.
"""

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd

from .dataset import UserProfile, mean_vote
from .errors import DifferentiationCapError, PoolFullError
from .logger import log
from .similarity import SimilarityParams, pearson_amended

PairSimilarity = Callable[[UserProfile, UserProfile], float]

TRAJECTORY_COLUMNS = ["phase", "iteration", "antibody_user_id", "concentration"]


@dataclass(frozen=True)
class AisParams:
    """
    Rate constants and bounds of the immune network

    k1, k2 and k3 are the stimulation, suppression and death rates. When
    normalise_by_pool is set the suppression sum is divided by pool_size
    instead of the current number of antibodies.
    """

    k1: float = 0.3
    k2: float = 0.2
    k3: float = 0.1
    pool_size: int = 100
    conc_init: float = 10.0
    conc_max: float = 100.0
    conc_min: float = 0.0
    antigen_conc: float = 10.0
    removal_threshold: float = 1.0
    stability_window: int = 10
    dt: float = 1.0
    max_differentiation_iters: int = 10000
    include_self_suppression: bool = False
    normalise_by_pool: bool = False

    def __post_init__(self) -> None:
        if min(self.k1, self.k2, self.k3) < 0:
            raise ValueError("rate constants k1, k2 and k3 must be non-negative")
        if self.pool_size < 1:
            raise ValueError("pool_size must be at least 1")
        if not (
            self.conc_min
            <= self.removal_threshold
            < self.conc_init
            < self.conc_max
        ):
            raise ValueError(
                "concentrations must satisfy "
                "conc_min <= removal_threshold < conc_init < conc_max"
            )
        if self.stability_window < 1:
            raise ValueError("stability_window must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_differentiation_iters < 1:
            raise ValueError("max_differentiation_iters must be at least 1")


@dataclass(frozen=True)
class Antibody:
    profile: UserProfile
    concentration: float
    antigen_match: float


@dataclass
class AisState:
    """
    Live antibody pool for one antigen

    Concentrations, antigen matches and the antibody-antibody match matrix
    are parallel numpy arrays indexed like `profiles`. The match matrix has
    a diagonal of 1.
    """

    antigen: UserProfile
    params: AisParams
    sim: SimilarityParams
    pair_similarity: PairSimilarity
    profiles: list[UserProfile] = field(default_factory=list)
    concentrations: np.ndarray = field(default_factory=lambda: np.empty(0))
    antigen_match: np.ndarray = field(default_factory=lambda: np.empty(0))
    match_matrix: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    size_history: deque = field(default_factory=deque)
    reviewers_seen: int = 0
    iterations: int = 0
    differentiation_steps: int = 0
    trajectory: Optional[list[tuple[str, int, int, float]]] = None

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def antibodies(self) -> tuple[Antibody, ...]:
        return tuple(
            Antibody(profile, float(x), float(m))
            for profile, x, m in zip(
                self.profiles, self.concentrations, self.antigen_match
            )
        )

    @property
    def is_full(self) -> bool:
        return len(self.profiles) >= self.params.pool_size


def new_ais(
    antigen: UserProfile,
    params: Optional[AisParams] = None,
    sim: Optional[SimilarityParams] = None,
    pair_similarity: Optional[PairSimilarity] = None,
    record_trajectory: bool = False,
) -> AisState:
    """
    Create an empty immune network around an antigen

    Args:
        antigen: Profile of the user to make predictions for
        params: Network parameters (validated on construction)
        sim: Similarity parameters for antigen and antibody matching
        pair_similarity: Antibody-antibody correlation function, e.g. a
            SimilarityCache shared across trials
        record_trajectory: Keep every concentration update for write_trajectory

    Raises:
        DataError: If the antigen has no votes
    """
    params = params or AisParams()
    sim = sim or SimilarityParams()
    mean_vote(antigen)
    if pair_similarity is None:
        pair_similarity = partial(pearson_amended, params=sim)

    return AisState(
        antigen=antigen,
        params=params,
        sim=sim,
        pair_similarity=pair_similarity,
        size_history=deque(maxlen=params.stability_window),
        trajectory=[] if record_trajectory else None,
    )


def add_antibody(state: AisState, reviewer: UserProfile) -> bool:
    """
    Offer a reviewer to the pool

    The reviewer enters at conc_init with its antigen match and a new row
    and column of the match matrix. The antigen's own user and reviewers
    already in the pool are rejected. reviewers_seen counts every offer.

    Returns:
        bool: True if the reviewer was added

    Raises:
        PoolFullError: If the pool is already at pool_size
    """
    if state.is_full:
        raise PoolFullError(
            f"pool already holds {state.params.pool_size} antibodies; "
            "iterate before adding"
        )
    state.reviewers_seen += 1
    if reviewer.user_id == state.antigen.user_id:
        log.debug(f"Rejected reviewer {reviewer.user_id}: same user as antigen")
        return False
    if any(p.user_id == reviewer.user_id for p in state.profiles):
        log.debug(f"Rejected reviewer {reviewer.user_id}: already in the pool")
        return False

    match = abs(pearson_amended(reviewer, state.antigen, state.sim))
    row = np.array(
        [abs(state.pair_similarity(reviewer, other)) for other in state.profiles]
        + [1.0]
    )
    size = len(state.profiles)
    grown = np.empty((size + 1, size + 1))
    grown[:size, :size] = state.match_matrix
    grown[size, :] = row
    grown[:, size] = row

    state.profiles.append(reviewer)
    state.match_matrix = grown
    state.concentrations = np.append(state.concentrations, state.params.conc_init)
    state.antigen_match = np.append(state.antigen_match, match)
    return True


def _rates(state: AisState) -> np.ndarray:
    p = state.params
    x = state.concentrations
    n = p.pool_size if p.normalise_by_pool else len(x)
    if n == 0:
        return np.empty(0)
    suppression = state.match_matrix @ x
    if not p.include_self_suppression:
        suppression = suppression - np.diag(state.match_matrix) * x
    return (
        p.k1 * state.antigen_match * x * p.antigen_conc
        - (p.k2 / n) * x * suppression
        - p.k3 * x
    )


def derivative(state: AisState, i: int) -> float:
    """Instantaneous concentration rate of antibody i"""
    if not 0 <= i < len(state.profiles):
        raise IndexError(f"antibody index {i} out of range")
    return float(_rates(state)[i])


def _euler_step(state: AisState) -> np.ndarray:
    p = state.params
    stepped = state.concentrations + p.dt * _rates(state)
    return np.clip(stepped, p.conc_min, p.conc_max)


def _record(state: AisState, phase: str, iteration: int) -> None:
    if state.trajectory is None:
        return
    state.trajectory.extend(
        (phase, iteration, profile.user_id, float(x))
        for profile, x in zip(state.profiles, state.concentrations)
    )


def iterate(state: AisState) -> list[int]:
    """
    Advance the pool by one synchronous Euler step

    Antibodies that end the step below removal_threshold are removed and
    the match matrix is compacted.

    Returns:
        list[int]: User ids of the removed antibodies

    Raises:
        ValueError: If the pool is empty
    """
    if not state.profiles:
        raise ValueError("cannot iterate an empty pool")
    state.concentrations = _euler_step(state)
    state.iterations += 1
    _record(state, "selection", state.iterations)

    keep = state.concentrations >= state.params.removal_threshold
    removed = [p.user_id for p, kept in zip(state.profiles, keep) if not kept]
    if removed:
        state.profiles = [p for p, kept in zip(state.profiles, keep) if kept]
        state.concentrations = state.concentrations[keep]
        state.antigen_match = state.antigen_match[keep]
        state.match_matrix = state.match_matrix[np.ix_(keep, keep)]
    state.size_history.append(len(state.profiles))
    return removed


def is_stable(state: AisState) -> bool:
    """True once the last stability_window iterations left the size unchanged"""
    history = state.size_history
    if len(history) < state.params.stability_window:
        return False
    return len(set(history)) == 1


def run_selection(state: AisState, reviewers: Iterable[UserProfile]) -> AisState:
    """
    Fill the pool from a reviewer stream until it stabilises

    Each reviewer is added in turn; whenever the pool is at full size it is
    iterated until it is either stable or loses an antibody. Stops when the
    pool is stable or the stream is exhausted.
    """
    stream = iter(reviewers)
    while not is_stable(state):
        reviewer = next(stream, None)
        if reviewer is None:
            break
        add_antibody(state, reviewer)
        while state.is_full and not is_stable(state):
            iterate(state)

    log.debug(
        f"Selection for user {state.antigen.user_id}: {len(state)} antibodies "
        f"after {state.reviewers_seen} reviewers and {state.iterations} iterations"
        f"{'' if is_stable(state) else ' (stream exhausted)'}"
    )
    return state


def reset_and_differentiate(state: AisState) -> AisState:
    """
    Re-run the dynamics from conc_init until one antibody saturates

    Nothing is removed during this phase; the resulting concentrations
    weight the neighbours.

    Raises:
        ValueError: If the pool is empty
        DifferentiationCapError: If max_differentiation_iters is reached,
            or a step leaves every concentration unchanged, before any
            antibody reaches conc_max
    """
    if not state.profiles:
        raise ValueError("cannot differentiate an empty pool")
    p = state.params
    state.concentrations = np.full(len(state.profiles), p.conc_init)
    state.differentiation_steps = 0
    _record(state, "differentiation", 0)

    while not np.any(state.concentrations >= p.conc_max):
        if state.differentiation_steps >= p.max_differentiation_iters:
            raise DifferentiationCapError(
                f"no antibody reached {p.conc_max} after "
                f"{state.differentiation_steps} iterations",
                state=state,
                iterations=state.differentiation_steps,
            )
        stepped = _euler_step(state)
        state.differentiation_steps += 1
        stationary = np.array_equal(stepped, state.concentrations)
        state.concentrations = stepped
        _record(state, "differentiation", state.differentiation_steps)
        if stationary:
            raise DifferentiationCapError(
                "concentrations became stationary below "
                f"{p.conc_max} after {state.differentiation_steps} iterations",
                state=state,
                iterations=state.differentiation_steps,
            )
    return state


def write_trajectory(state: AisState, path: Union[str, Path]) -> None:
    """
    Write the recorded concentration updates as CSV

    Raises:
        ValueError: If the state was created without record_trajectory
    """
    if state.trajectory is None:
        raise ValueError("trajectory recording was not enabled for this state")
    frame = pd.DataFrame(state.trajectory, columns=TRAJECTORY_COLUMNS)
    frame.to_csv(path, index=False)
    log.info(f"Wrote {len(frame)} trajectory rows to {path}")
