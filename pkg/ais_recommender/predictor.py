"""
Vote prediction and recommendation from a neighbourhood
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .dataset import UserProfile, quantize
from .neighborhood import Neighborhood


@dataclass(frozen=True)
class PredictionOptions:
    """
    Prediction behaviour

    default_vote, when set, stands in for neighbours who did not vote on
    the film. absolute_denominator divides by sum |w| instead of sum w.
    """

    default_vote: Optional[float] = None
    clamp_output: bool = True
    weight_sum_epsilon: float = 1e-9
    absolute_denominator: bool = False

    def __post_init__(self) -> None:
        if self.default_vote is not None:
            object.__setattr__(self, "default_vote", quantize(self.default_vote))
        if self.weight_sum_epsilon <= 0:
            raise ValueError("weight_sum_epsilon must be positive")


class Prediction(NamedTuple):
    value: float
    fallback: bool


@dataclass(frozen=True)
class Recommendation:
    movie_id: int
    predicted_score: float
    rank: int


def predict(
    test_user: UserProfile,
    nh: Neighborhood,
    movie: int,
    opts: Optional[PredictionOptions] = None,
) -> Prediction:
    """
    Predict the test user's vote on a movie

    p = mean(u) + sum w (v_i - mean(v)) / sum w over the neighbours who
    voted on the movie (or all neighbours when a default vote is set).
    Falls back to the user's mean when no neighbour contributes or the
    weight sum is numerically zero.

    Raises:
        ValueError: If the neighbourhood was built for another user
        DataError: If the test user has no votes
    """
    opts = opts or PredictionOptions()
    if nh.test_user.user_id != test_user.user_id:
        raise ValueError(
            f"neighbourhood belongs to user {nh.test_user.user_id}, "
            f"not {test_user.user_id}"
        )
    user_mean = test_user.mean

    numerator = 0.0
    denominator = 0.0
    contributors = 0
    for entry in nh.entries:
        vote = entry.profile.votes.get(movie, opts.default_vote)
        if vote is None:
            continue
        contributors += 1
        numerator += entry.weight * (vote - entry.profile.mean)
        denominator += abs(entry.weight) if opts.absolute_denominator else entry.weight

    if contributors == 0 or abs(denominator) < opts.weight_sum_epsilon:
        return Prediction(user_mean, True)

    value = user_mean + numerator / denominator
    if opts.clamp_output:
        value = min(1.0, max(0.0, value))
    return Prediction(value, False)


def recommend(
    test_user: UserProfile,
    nh: Neighborhood,
    opts: Optional[PredictionOptions] = None,
) -> list[Recommendation]:
    """
    Rank every film voted on by some neighbour

    Ordered by descending predicted score, then ascending movie id.
    """
    candidates: set[int] = set()
    for entry in nh.entries:
        candidates.update(entry.profile.votes)
    scored = [
        (movie, predict(test_user, nh, movie, opts).value) for movie in candidates
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [
        Recommendation(movie_id=movie, predicted_score=score, rank=rank)
        for rank, (movie, score) in enumerate(scored, start=1)
    ]
