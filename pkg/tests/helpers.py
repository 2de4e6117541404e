"""
Profile builders shared by the test modules
"""

from ais_recommender.dataset import UserProfile


def profile(user_id: int, votes: dict[int, float]) -> UserProfile:
    """Build a UserProfile from a movie -> score dict"""
    return UserProfile(user_id, dict(sorted(votes.items())))


def shared_profile(user_id: int, scores: list[float], start: int = 1) -> UserProfile:
    """Profile voting `scores` on consecutive movies from `start`"""
    return profile(user_id, {start + i: s for i, s in enumerate(scores)})
