"""
Tests for the dataset module

Vote parsing, serialisation, sampling, vote reservation and the synthetic
generator.
"""

import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ais_recommender.dataset import (
    SCORES,
    Dataset,
    VoteFormat,
    build_dataset,
    dump_votes,
    generate_synthetic,
    iter_others,
    load_votes,
    mean_vote,
    quantize,
    read_votes,
    reserve_vote,
    sample_test_users,
    write_votes,
)
from ais_recommender.errors import DataError
from ais_recommender.similarity import SimilarityParams, pearson_amended
from tests.helpers import profile


def _load(text: str, fmt: VoteFormat = VoteFormat.RAW0TO5) -> Dataset:
    return load_votes(io.StringIO(text), fmt)


@pytest.mark.unit
@pytest.mark.core
class TestLoadVotes:
    """Test vote file parsing"""

    def test_raw_score_is_normalized(self):
        """Test that raw score 4 becomes 0.8"""
        dataset = _load("7,42,4\n")
        assert dataset.by_id[7].votes == {42: 0.8}

    def test_normalized_score_is_kept(self):
        """Test the normalized encoding of the same vote"""
        dataset = _load("7,42,0.8\n", VoteFormat.NORMALIZED)
        assert dataset.by_id[7].votes == {42: 0.8}

    def test_bytes_input(self):
        """Test that byte streams are accepted"""
        dataset = load_votes(io.BytesIO(b"1,1,5\n1,2,0\n"))
        assert dataset.by_id[1].votes == {1: 1.0, 2: 0.0}

    def test_out_of_range_raw_score(self):
        """Test that raw score 7 is rejected with its line number"""
        with pytest.raises(DataError, match="line 2: score 7 is out of range"):
            _load("1,1,3\n7,42,7\n")

    def test_off_scale_normalized_score(self):
        """Test that normalized scores must sit on the six-value scale"""
        with pytest.raises(DataError, match="out of range"):
            _load("1,1,0.5\n", VoteFormat.NORMALIZED)

    def test_malformed_line(self):
        """Test that lines without three fields are rejected"""
        with pytest.raises(DataError, match="line 1"):
            _load("1,2\n")

    def test_non_integer_id(self):
        """Test that ids must be integers"""
        with pytest.raises(DataError, match="user id 'abc' is not an integer"):
            _load("abc,1,3\n")

    def test_duplicate_vote(self):
        """Test that a repeated (user, movie) pair is rejected"""
        with pytest.raises(DataError, match="duplicate vote for user 1 on movie 2"):
            _load("1,2,3\n1,2,4\n")

    def test_blank_lines_and_comments_are_skipped(self):
        """Test that blank and comment lines carry no votes"""
        dataset = _load("# header\n\n1,1,1\n")
        assert dataset.n_votes == 1

    def test_users_are_sorted_by_id(self):
        """Test deterministic user order"""
        dataset = _load("9,1,1\n3,1,2\n5,1,3\n")
        assert [u.user_id for u in dataset.users] == [3, 5, 9]

    def test_read_votes_missing_file(self, tmp_path):
        """Test that a missing path names the path"""
        missing = tmp_path / "nope.csv"
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            read_votes(missing)

    def test_write_then_read(self, tmp_path):
        """Test that a written vote file reloads to the same dataset"""
        dataset = _load("1,1,0\n1,3,5\n2,1,2\n")
        path = tmp_path / "votes.csv"
        write_votes(dataset, path)
        assert read_votes(path) == dataset

    @pytest.mark.property
    @settings(max_examples=50, deadline=None)
    @given(
        votes=st.dictionaries(
            st.integers(min_value=1, max_value=30),
            st.dictionaries(
                st.integers(min_value=1, max_value=30),
                st.sampled_from(SCORES),
                min_size=1,
                max_size=8,
            ),
            min_size=1,
            max_size=8,
        ),
        fmt=st.sampled_from(list(VoteFormat)),
    )
    def test_serialised_dataset_reloads_unchanged(self, votes, fmt):
        """Test that dump_votes output parses back to an equal dataset"""
        dataset = build_dataset(votes)
        stream = io.StringIO()
        dump_votes(dataset, stream, fmt)
        stream.seek(0)
        assert load_votes(stream, fmt) == dataset


@pytest.mark.unit
@pytest.mark.core
class TestQuantize:
    """Test score quantisation"""

    def test_canonical_values(self):
        """Test that near-scale floats snap to the canonical score"""
        assert quantize(0.6000000001) == 0.6
        assert quantize(0.0) == 0.0

    def test_rejects_off_scale(self):
        """Test rejection of values between steps"""
        with pytest.raises(DataError):
            quantize(0.3)

    def test_rejects_nan(self):
        """Test rejection of NaN"""
        with pytest.raises(DataError):
            quantize(float("nan"))


@pytest.mark.unit
@pytest.mark.core
class TestMeanVote:
    """Test full-profile means"""

    def test_symmetric_mean(self):
        """Test mean of 0.2, 0.4, 0.6"""
        assert mean_vote(profile(1, {1: 0.2, 2: 0.4, 3: 0.6})) == pytest.approx(0.4)

    def test_single_vote(self):
        """Test mean of a single vote"""
        assert mean_vote(profile(1, {1: 1.0})) == 1.0

    def test_four_votes(self):
        """Test mean of 0, 1, 1, 1"""
        votes = {1: 0.0, 2: 1.0, 3: 1.0, 4: 1.0}
        assert mean_vote(profile(1, votes)) == pytest.approx(0.75)

    def test_empty_profile(self):
        """Test that an empty profile has no mean"""
        with pytest.raises(DataError, match="user 1 has no votes"):
            mean_vote(profile(1, {}))


@pytest.mark.unit
@pytest.mark.core
class TestSampling:
    """Test test-user sampling and vote reservation"""

    def setup_method(self):
        """Set up a dataset of ten eligible users and one ineligible"""
        votes = {u: {1: 0.2, 2: 0.4, 3: 0.6} for u in range(1, 11)}
        votes[11] = {1: 0.8}
        self.dataset = build_dataset(votes)

    def test_exhaustive_sample(self):
        """Test sampling every eligible user"""
        users = sample_test_users(self.dataset, 10, 2, np.random.default_rng(1))
        assert sorted(u.user_id for u in users) == list(range(1, 11))

    def test_same_seed_same_sample(self):
        """Test sampling determinism"""
        first = sample_test_users(self.dataset, 3, 2, np.random.default_rng(5))
        second = sample_test_users(self.dataset, 3, 2, np.random.default_rng(5))
        assert [u.user_id for u in first] == [u.user_id for u in second]

    def test_shortfall_is_named(self):
        """Test error when too few users are eligible"""
        with pytest.raises(DataError, match="short by 1"):
            sample_test_users(self.dataset, 11, 2, np.random.default_rng(0))

    def test_invalid_min_votes(self):
        """Test that min_votes below 2 is rejected"""
        with pytest.raises(ValueError, match="min_votes"):
            sample_test_users(self.dataset, 1, 1, np.random.default_rng(0))

    def test_forced_partition(self):
        """Test reserving from a two-vote profile"""
        user = profile(4, {1: 0.2, 2: 0.8})
        case = reserve_vote(user, np.random.default_rng(3))
        assert case.reserved.movie_id in (1, 2)
        assert set(case.training_user.votes) == {1, 2} - {case.reserved.movie_id}
        assert case.original_user_id == 4

    def test_reserve_is_deterministic(self):
        """Test that the same seed reserves the same movie"""
        user = profile(4, {1: 0.2, 2: 0.8, 3: 0.4})
        first = reserve_vote(user, np.random.default_rng(9))
        second = reserve_vote(user, np.random.default_rng(9))
        assert first.reserved == second.reserved

    def test_iter_others(self):
        """Test the reviewer pool leaves out the given user"""
        ids = [u.user_id for u in iter_others(self.dataset, 4)]
        assert ids == [1, 2, 3, 5, 6, 7, 8, 9, 10, 11]

    def test_single_vote_profile(self):
        """Test that a single vote cannot be reserved"""
        with pytest.raises(DataError, match="at least 2 votes"):
            reserve_vote(profile(1, {1: 0.2}), np.random.default_rng(0))

    @pytest.mark.property
    @settings(max_examples=50, deadline=None)
    @given(
        votes=st.dictionaries(
            st.integers(min_value=1, max_value=100),
            st.sampled_from(SCORES),
            min_size=2,
            max_size=20,
        ),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_reservation_partitions_profile(self, votes, seed):
        """Test that training votes plus the reserved vote rebuild the profile"""
        user = profile(1, votes)
        case = reserve_vote(user, np.random.default_rng(seed))
        rebuilt = dict(case.training_user.votes)
        rebuilt[case.reserved.movie_id] = case.reserved.score
        assert rebuilt == dict(user.votes)
        assert case.reserved.movie_id not in case.training_user.votes


@pytest.mark.unit
@pytest.mark.core
class TestSynthetic:
    """Test the synthetic generator"""

    def test_degenerate_generator(self):
        """Test that one noiseless dense cluster gives identical profiles"""
        dataset = generate_synthetic(20, 15, 1, 1.0, 0.0, np.random.default_rng(0))
        first = dataset.users[0].votes
        assert all(user.votes == first for user in dataset.users)
        assert len(first) == 15

    def test_deterministic(self):
        """Test that the same seed gives the same dataset"""
        a = generate_synthetic(30, 20, 3, 0.3, 0.2, np.random.default_rng(11))
        b = generate_synthetic(30, 20, 3, 0.3, 0.2, np.random.default_rng(11))
        assert a == b
        assert a.cluster_of == b.cluster_of

    def test_votes_per_user(self):
        """Test ceil(sparsity * movies) votes per user on the score scale"""
        dataset = generate_synthetic(10, 200, 2, 0.25, 0.5, np.random.default_rng(1))
        assert all(len(user.votes) == 50 for user in dataset.users)
        assert all(
            score in SCORES for user in dataset.users for score in user.votes.values()
        )
        assert dataset.movie_ids <= set(range(1, 201))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"users": 0},
            {"movies": 0},
            {"clusters": 0},
            {"sparsity": 0.0},
            {"sparsity": 1.5},
            {"noise": -0.1},
        ],
    )
    def test_invalid_parameters(self, kwargs):
        """Test parameter validation"""
        params = {
            "users": 5,
            "movies": 5,
            "clusters": 1,
            "sparsity": 0.5,
            "noise": 0.0,
        } | kwargs
        with pytest.raises(ValueError):
            generate_synthetic(rng=np.random.default_rng(0), **params)

    @pytest.mark.slow
    def test_within_cluster_correlation_dominates(self, desk_dataset):
        """Test that same-cluster users correlate more than cross-cluster users"""
        raw = SimilarityParams(overlap_penalty=1)
        users = desk_dataset.users[:150]
        within, across = [], []
        for u, v in itertools.combinations(users, 2):
            r = pearson_amended(u, v, raw)
            if desk_dataset.cluster_of[u.user_id] == desk_dataset.cluster_of[v.user_id]:
                within.append(r)
            else:
                across.append(r)
        assert np.mean(within) > np.mean(across)
