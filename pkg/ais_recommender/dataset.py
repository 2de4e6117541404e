"""
Vote data for the recommender engine

This module loads, validates, serialises and synthesises vote data, and
produces leave-one-out test cases by reserving one vote of a test user.
"""

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import IO, Optional, Union

import numpy as np

from .errors import DataError
from .logger import log

# Quantized vote scale, 0 is the worst
SCORES: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

_SCORE_TOLERANCE = 1e-6


class VoteFormat(str, Enum):
    """Encodings accepted for the score column of a vote file"""

    RAW0TO5 = "raw0to5"
    NORMALIZED = "normalized"


def quantize(value: float) -> float:
    """
    Map a normalized score onto the six-value scale

    Args:
        value: Score expected to be one of 0.0, 0.2, ..., 1.0

    Returns:
        float: The canonical value from SCORES

    Raises:
        DataError: If the value is not on the scale
    """
    if not math.isfinite(value):
        raise DataError(f"score {value} is out of range")
    step = round(value * 5)
    if not 0 <= step <= 5 or abs(value * 5 - step) > _SCORE_TOLERANCE:
        raise DataError(f"score {value} is out of range")
    return SCORES[step]


@dataclass(frozen=True)
class Vote:
    movie_id: int
    score: float


@dataclass(frozen=True)
class UserProfile:
    """A user's sparse vote vector (movie id -> quantized score)"""

    user_id: int
    votes: Mapping[int, float]

    @cached_property
    def mean(self) -> float:
        return mean_vote(self)

    def __len__(self) -> int:
        return len(self.votes)


@dataclass(frozen=True)
class Dataset:
    users: tuple[UserProfile, ...]
    cluster_of: Optional[Mapping[int, int]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for user in self.users:
            if user.user_id in seen:
                raise DataError(f"duplicate user id {user.user_id}")
            seen.add(user.user_id)

    @cached_property
    def movie_ids(self) -> frozenset[int]:
        return frozenset(m for user in self.users for m in user.votes)

    @cached_property
    def by_id(self) -> dict[int, UserProfile]:
        return {user.user_id: user for user in self.users}

    @property
    def n_votes(self) -> int:
        return sum(len(user.votes) for user in self.users)


@dataclass(frozen=True)
class TestCase:
    """A test user with one vote hidden from the predictor"""

    __test__ = False  # not a pytest class

    training_user: UserProfile
    reserved: Vote
    original_user_id: int


def mean_vote(profile: UserProfile) -> float:
    """
    Average vote of a user over all of their films

    Args:
        profile: User profile with at least one vote

    Returns:
        float: Arithmetic mean of every vote in the profile

    Raises:
        DataError: If the profile is empty
    """
    if not profile.votes:
        raise DataError(f"user {profile.user_id} has no votes")
    return math.fsum(profile.votes.values()) / len(profile.votes)


def _parse_id(text: str, what: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise DataError(f"{what} {text!r} is not an integer", line=line) from None
    if value <= 0:
        raise DataError(f"{what} {value} must be positive", line=line)
    return value


def _parse_score(text: str, fmt: VoteFormat, line: int) -> float:
    if fmt is VoteFormat.RAW0TO5:
        try:
            raw = int(text)
        except ValueError:
            raise DataError(f"score {text!r} is not an integer", line=line) from None
        if not 0 <= raw <= 5:
            raise DataError(f"score {raw} is out of range", line=line)
        return SCORES[raw]
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"score {text!r} is not a number", line=line) from None
    try:
        return quantize(value)
    except DataError as e:
        raise DataError(str(e), line=line) from None


def build_dataset(
    votes: Mapping[int, Mapping[int, float]],
    cluster_of: Optional[Mapping[int, int]] = None,
) -> Dataset:
    """
    Assemble a Dataset from a user -> {movie -> score} mapping

    Users are ordered by id so every downstream iteration is deterministic.
    """
    users = tuple(
        UserProfile(user_id, dict(sorted(movies.items())))
        for user_id, movies in sorted(votes.items())
    )
    return Dataset(users=users, cluster_of=cluster_of)


def load_votes(
    source: Union[IO[bytes], IO[str]], fmt: VoteFormat = VoteFormat.RAW0TO5
) -> Dataset:
    """
    Parse a vote file into a Dataset

    Args:
        source: Line-oriented `user_id,movie_id,score` stream (bytes or text)
        fmt: Encoding of the score column

    Returns:
        Dataset: Validated, quantized votes grouped by user

    Raises:
        DataError: On a malformed line, an out-of-range score or a
            duplicate (user, movie) pair
    """
    fmt = VoteFormat(fmt)
    votes: dict[int, dict[int, float]] = {}
    for number, raw_line in enumerate(source, start=1):
        if isinstance(raw_line, bytes):
            try:
                text = raw_line.decode("utf-8")
            except UnicodeDecodeError:
                raise DataError("not valid UTF-8", line=number) from None
        else:
            text = raw_line
        text = text.strip()
        if not text or text.startswith("#"):
            continue
        fields = [part.strip() for part in text.split(",")]
        if len(fields) != 3:
            raise DataError(
                f"expected 'user_id,movie_id,score', got {text!r}", line=number
            )
        user_id = _parse_id(fields[0], "user id", number)
        movie_id = _parse_id(fields[1], "movie id", number)
        score = _parse_score(fields[2], fmt, number)
        user_votes = votes.setdefault(user_id, {})
        if movie_id in user_votes:
            raise DataError(
                f"duplicate vote for user {user_id} on movie {movie_id}", line=number
            )
        user_votes[movie_id] = score

    dataset = build_dataset(votes)
    log.debug(
        f"Loaded {dataset.n_votes} votes from {len(dataset.users)} users "
        f"on {len(dataset.movie_ids)} movies"
    )
    return dataset


def read_votes(path: Union[str, Path], fmt: VoteFormat = VoteFormat.RAW0TO5) -> Dataset:
    """
    Load a vote file from disk

    Raises:
        FileNotFoundError: If the path does not exist
        DataError: If the content is invalid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Vote file not found: {path}")
    with path.open("rb") as stream:
        dataset = load_votes(stream, fmt)
    log.info(
        f"Vote file loaded: {path} ({len(dataset.users)} users, "
        f"{dataset.n_votes} votes)"
    )
    return dataset


def dump_votes(
    dataset: Dataset, stream: IO[str], fmt: VoteFormat = VoteFormat.RAW0TO5
) -> None:
    """Write a Dataset in the vote file format, one line per vote"""
    fmt = VoteFormat(fmt)
    for user in dataset.users:
        for movie_id, score in sorted(user.votes.items()):
            if fmt is VoteFormat.RAW0TO5:
                encoded = str(SCORES.index(score))
            else:
                encoded = f"{score:.1f}"
            stream.write(f"{user.user_id},{movie_id},{encoded}\n")


def write_votes(
    dataset: Dataset, path: Union[str, Path], fmt: VoteFormat = VoteFormat.RAW0TO5
) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as stream:
        dump_votes(dataset, stream, fmt)
    log.info(f"Wrote {dataset.n_votes} votes to {path}")


def sample_test_users(
    dataset: Dataset, count: int, min_votes: int, rng: np.random.Generator
) -> list[UserProfile]:
    """
    Draw test users uniformly without replacement

    Args:
        dataset: Source of candidate users
        count: Number of test users wanted
        min_votes: Minimum profile size for a user to be eligible
        rng: Seeded generator

    Returns:
        list[UserProfile]: Sampled users in draw order

    Raises:
        ValueError: On count < 1 or min_votes < 2
        DataError: If fewer than count users are eligible
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if min_votes < 2:
        raise ValueError("min_votes must be at least 2")
    eligible = [user for user in dataset.users if len(user.votes) >= min_votes]
    if len(eligible) < count:
        raise DataError(
            f"need {count} test users with at least {min_votes} votes but only "
            f"{len(eligible)} are eligible (short by {count - len(eligible)})"
        )
    picks = rng.choice(len(eligible), size=count, replace=False)
    return [eligible[int(i)] for i in picks]


def reserve_vote(profile: UserProfile, rng: np.random.Generator) -> TestCase:
    """
    Hide one uniformly chosen vote of a test user

    Raises:
        DataError: If the profile has fewer than two votes
    """
    if len(profile.votes) < 2:
        raise DataError(
            f"user {profile.user_id} needs at least 2 votes to reserve one"
        )
    movies = sorted(profile.votes)
    reserved_movie = movies[int(rng.integers(len(movies)))]
    training = UserProfile(
        profile.user_id,
        {m: s for m, s in profile.votes.items() if m != reserved_movie},
    )
    return TestCase(
        training_user=training,
        reserved=Vote(reserved_movie, profile.votes[reserved_movie]),
        original_user_id=profile.user_id,
    )


def generate_synthetic(
    users: int,
    movies: int,
    clusters: int,
    sparsity: float,
    noise: float,
    rng: np.random.Generator,
) -> Dataset:
    """
    Generate a clustered vote dataset

    Each cluster has a preferred score per movie. A user belongs to one
    cluster and votes on ceil(sparsity * movies) movies; each vote is the
    cluster preference with probability 1 - noise, otherwise a uniform score.

    Returns:
        Dataset: Users 1..users over movies 1..movies, with cluster_of set
    """
    if users <= 0 or movies <= 0:
        raise ValueError("users and movies must be positive")
    if clusters < 1:
        raise ValueError("clusters must be at least 1")
    if not 0 < sparsity <= 1:
        raise ValueError("sparsity must be in (0, 1]")
    if not 0 <= noise <= 1:
        raise ValueError("noise must be in [0, 1]")

    per_user = min(movies, math.ceil(sparsity * movies - 1e-9))
    preferences = rng.integers(0, len(SCORES), size=(clusters, movies))
    membership = rng.integers(0, clusters, size=users)

    votes: dict[int, dict[int, float]] = {}
    cluster_of: dict[int, int] = {}
    for index in range(users):
        cluster = int(membership[index])
        chosen = rng.choice(movies, size=per_user, replace=False)
        noisy = rng.random(per_user) < noise
        random_scores = rng.integers(0, len(SCORES), size=per_user)
        steps = np.where(noisy, random_scores, preferences[cluster, chosen])
        user_id = index + 1
        votes[user_id] = {
            int(movie) + 1: SCORES[int(step)] for movie, step in zip(chosen, steps)
        }
        cluster_of[user_id] = cluster

    dataset = build_dataset(votes, cluster_of=cluster_of)
    log.debug(
        f"Generated {users} users x {movies} movies in {clusters} clusters "
        f"({per_user} votes per user)"
    )
    return dataset


def iter_others(dataset: Dataset, user_id: int) -> Iterable[UserProfile]:
    """Every user of the dataset except the given one, in id order"""
    return (user for user in dataset.users if user.user_id != user_id)
