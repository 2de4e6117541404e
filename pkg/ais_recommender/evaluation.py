"""
Evaluation metrics

Mean absolute error, Kendall's tau over the recommendation overlap, the
Wilcoxon signed-rank test used for every paired comparison, and the
per-run summary statistics.
"""

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

from .errors import DataError, InsufficientOverlapError, StatisticsError
from .logger import log
from .neighborhood import Characteristics

RESULT_COLUMNS = [
    "test_user",
    "movie",
    "actual",
    "predicted",
    "fallback",
    "neighbors",
    "reviewers",
    "recs",
    "overlap",
    "tau",
    "mean_corr",
    "inter_corr",
    "capped",
    "error",
]

# Differences are rounded before ranking so float noise cannot split ties
_DIFFERENCE_DECIMALS = 12

# Smallest sample the normal approximation is used for
MIN_NORMAL_APPROXIMATION_N = 6


@dataclass(frozen=True)
class PredictionRecord:
    """One reserved-vote trial"""

    test_user_id: int
    movie_id: int
    actual: float
    predicted: float
    fallback: bool
    neighborhood_size: int
    reviewers_seen: int
    n_recommendations: int
    overlap_count: int
    tau: Optional[float]
    characteristics: Characteristics = field(default_factory=Characteristics)
    capped: bool = False
    error: Optional[str] = None

    @property
    def abs_error(self) -> float:
        return abs(self.actual - self.predicted)

    def as_row(self) -> dict[str, Any]:
        return {
            "test_user": self.test_user_id,
            "movie": self.movie_id,
            "actual": self.actual,
            "predicted": self.predicted,
            "fallback": self.fallback,
            "neighbors": self.neighborhood_size,
            "reviewers": self.reviewers_seen,
            "recs": self.n_recommendations,
            "overlap": self.overlap_count,
            "tau": self.tau,
            "mean_corr": self.characteristics.mean_abs_corr_to_test,
            "inter_corr": self.characteristics.mean_inter_neighbor_abs_corr,
            "capped": self.capped,
            "error": self.error,
        }


@dataclass(frozen=True)
class WilcoxonResult:
    n_effective: int
    w_plus: float
    w_minus: float
    p_two_sided: Optional[float] = None


@dataclass(frozen=True)
class Summary:
    """Means and (population) standard deviations over a run's records"""

    count: int
    mae: float
    mae_std: float
    fallbacks: int
    capped: int
    errors: int
    tau_mean: Optional[float]
    tau_std: Optional[float]
    tau_count: int
    recs_mean: float
    recs_std: float
    overlap_mean: float
    overlap_std: float
    neighbors_mean: float
    neighbors_std: float
    reviewers_mean: float
    reviewers_std: float
    mean_corr_mean: float
    inter_corr_mean: float

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def mae(records: Sequence[PredictionRecord]) -> float:
    """
    Mean absolute error over all records, fallbacks included

    Raises:
        ValueError: If records is empty
    """
    if not records:
        raise ValueError("mae needs at least one record")
    return math.fsum(record.abs_error for record in records) / len(records)


def kendall_tau(pairs: Sequence[tuple[int, float, float]]) -> float:
    """
    Kendall's tau between actual and predicted rankings

    Both rankings order films by descending vote with ties broken by
    ascending movie id. Films are taken in actual-rank order and the
    discordant pairs of their predicted ranks are counted:
    tau = 1 - 4 N_D / (n (n - 1)).

    Args:
        pairs: (movie_id, actual, predicted) per overlapping film

    Raises:
        InsufficientOverlapError: If fewer than two films are given
    """
    n = len(pairs)
    if n < 2:
        raise InsufficientOverlapError(
            f"kendall tau needs at least 2 overlapping films, got {n}"
        )
    by_actual = sorted(pairs, key=lambda p: (-p[1], p[0]))
    by_predicted = sorted(pairs, key=lambda p: (-p[2], p[0]))
    predicted_rank = {movie: rank for rank, (movie, _, _) in enumerate(by_predicted)}
    ranks = np.array([predicted_rank[movie] for movie, _, _ in by_actual])
    discordant = int(np.triu(ranks[:, None] > ranks[None, :], k=1).sum())
    return 1.0 - 4.0 * discordant / (n * (n - 1))


def wilcoxon_ranks(paired: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """
    Signed-rank sums of paired observations

    Zero differences are dropped and tied magnitudes share their mid-rank.

    Returns:
        WilcoxonResult: Rank sums without a p-value

    Raises:
        StatisticsError: If there are no pairs or every difference is zero
    """
    if not paired:
        raise StatisticsError("wilcoxon test needs at least one pair")
    differences = np.round(
        np.array([a - b for a, b in paired], dtype=float), _DIFFERENCE_DECIMALS
    )
    nonzero = differences[differences != 0]
    if nonzero.size == 0:
        raise StatisticsError("all paired differences are zero")
    ranks = rankdata(np.abs(nonzero), method="average")
    return WilcoxonResult(
        n_effective=int(nonzero.size),
        w_plus=float(ranks[nonzero > 0].sum()),
        w_minus=float(ranks[nonzero < 0].sum()),
    )


def wilcoxon_p(n_effective: int, w: float) -> float:
    """
    Two-sided p-value of a signed-rank sum by normal approximation

    Uses a continuity correction of 0.5 towards the mean.

    Raises:
        StatisticsError: If n_effective is too small for the approximation
    """
    if n_effective < MIN_NORMAL_APPROXIMATION_N:
        raise StatisticsError(
            f"normal approximation needs n >= {MIN_NORMAL_APPROXIMATION_N}, "
            f"got {n_effective}; use an exact test instead"
        )
    n = n_effective
    mu = n * (n + 1) / 4
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24)
    z = (w + 0.5 * np.sign(mu - w) - mu) / sigma
    return float(2 * norm.sf(abs(z)))


def wilcoxon(paired: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Rank sums plus the p-value when the sample is large enough"""
    result = wilcoxon_ranks(paired)
    if result.n_effective < MIN_NORMAL_APPROXIMATION_N:
        return result
    return WilcoxonResult(
        result.n_effective,
        result.w_plus,
        result.w_minus,
        wilcoxon_p(result.n_effective, result.w_plus),
    )


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    array = np.asarray(values, dtype=float)
    return float(array.mean()), float(array.std())


def summarize(records: Sequence[PredictionRecord]) -> Summary:
    """
    Aggregate a run's records

    Raises:
        ValueError: If records is empty
    """
    if not records:
        raise ValueError("summarize needs at least one record")
    mae_mean, mae_std = _mean_std([r.abs_error for r in records])
    taus = [r.tau for r in records if r.tau is not None]
    tau_mean, tau_std = _mean_std(taus) if taus else (None, None)
    recs_mean, recs_std = _mean_std([r.n_recommendations for r in records])
    overlap_mean, overlap_std = _mean_std([r.overlap_count for r in records])
    neighbors_mean, neighbors_std = _mean_std([r.neighborhood_size for r in records])
    reviewers_mean, reviewers_std = _mean_std([r.reviewers_seen for r in records])
    return Summary(
        count=len(records),
        mae=mae_mean,
        mae_std=mae_std,
        fallbacks=sum(r.fallback for r in records),
        capped=sum(r.capped for r in records),
        errors=sum(r.error is not None for r in records),
        tau_mean=tau_mean,
        tau_std=tau_std,
        tau_count=len(taus),
        recs_mean=recs_mean,
        recs_std=recs_std,
        overlap_mean=overlap_mean,
        overlap_std=overlap_std,
        neighbors_mean=neighbors_mean,
        neighbors_std=neighbors_std,
        reviewers_mean=reviewers_mean,
        reviewers_std=reviewers_std,
        mean_corr_mean=_mean_std(
            [r.characteristics.mean_abs_corr_to_test for r in records]
        )[0],
        inter_corr_mean=_mean_std(
            [r.characteristics.mean_inter_neighbor_abs_corr for r in records]
        )[0],
    )


def records_frame(records: Sequence[PredictionRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=RESULT_COLUMNS)


def write_records(records: Sequence[PredictionRecord], path: Union[str, Path]) -> None:
    """Write one CSV row per record"""
    records_frame(records).to_csv(path, index=False)
    log.info(f"Wrote {len(records)} records to {path}")


def read_records(path: Union[str, Path]) -> list[PredictionRecord]:
    """
    Load records written by write_records

    Raises:
        FileNotFoundError: If the path does not exist
        DataError: If required columns are missing
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Results file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path} is missing columns: {', '.join(missing)}")

    records = []
    for row in frame.itertuples(index=False):
        records.append(
            PredictionRecord(
                test_user_id=int(row.test_user),
                movie_id=int(row.movie),
                actual=float(row.actual),
                predicted=float(row.predicted),
                fallback=bool(row.fallback),
                neighborhood_size=int(row.neighbors),
                reviewers_seen=int(row.reviewers),
                n_recommendations=int(row.recs),
                overlap_count=int(row.overlap),
                tau=None if pd.isna(row.tau) else float(row.tau),
                characteristics=Characteristics(
                    size=int(row.neighbors),
                    overlap_count=int(row.overlap),
                    mean_abs_corr_to_test=float(row.mean_corr),
                    mean_inter_neighbor_abs_corr=float(row.inter_corr),
                ),
                capped=bool(row.capped),
                error=None if pd.isna(row.error) else str(row.error),
            )
        )
    return records
