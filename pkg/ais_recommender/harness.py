"""
Experiment harness

Runs the leave-one-out evaluation loop over sampled test users, parameter
sweeps over the stimulation and suppression rates, and the fixed
neighbourhood swap experiment. Every artifact is a pure function of the
dataset, the configuration and its seed: seeds are derived per test user
and per repeat, so thread scheduling cannot change any result.
"""

import itertools
import statistics
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar, Union

import numpy as np
import pandas as pd

from .ais import AisParams
from .dataset import (
    Dataset,
    TestCase,
    UserProfile,
    iter_others,
    reserve_vote,
    sample_test_users,
)
from .errors import AisRecommenderError, DifferentiationCapError, StatisticsError
from .evaluation import (
    RESULT_COLUMNS,
    PredictionRecord,
    kendall_tau,
    summarize,
    wilcoxon,
)
from .logger import log
from .neighborhood import (
    Characteristics,
    Neighborhood,
    NeighborhoodMethod,
    Weighting,
    characteristics,
    inject_fixed,
    neighborhood_from_state,
    select_ais,
    select_sp,
)
from .predictor import PredictionOptions, predict, recommend
from .similarity import SimilarityCache, SimilarityParams

T = TypeVar("T")

# Seed stream keys under the run seed
_SAMPLING_STREAM = 0
_TRIAL_STREAM = 1
_REPEAT_STREAM = 2

SWEEP_STATISTICS = [
    "mae",
    "tau_mean",
    "recs_mean",
    "overlap_mean",
    "neighbors_mean",
    "reviewers_mean",
    "mean_corr_mean",
    "inter_corr_mean",
]

SWEEP_COLUMNS = (
    ["param", "value", "repeat"]
    + SWEEP_STATISTICS
    + [
        "mae_std",
        "tau_std",
        "recs_std",
        "overlap_std",
        "neighbors_std",
        "reviewers_std",
        "tau_count",
        "fallbacks",
        "capped",
        "errors",
    ]
)

COMPARISON_COLUMNS = [
    "metric",
    "pred1",
    "nh1",
    "pred2",
    "nh2",
    "median1",
    "median2",
    "n",
    "wplus",
    "wminus",
    "p",
]

CHARACTERISTIC_COLUMNS = [
    "pred1",
    "pred2",
    "characteristic",
    "mean1",
    "mean2",
    "n",
    "wplus",
    "wminus",
    "p",
]

MEMBERSHIP_COLUMNS = [
    "test_user",
    "sp_size",
    "ais_size",
    "common",
    "unique_sp",
    "unique_ais",
    "union",
]

SCATTER_COLUMNS = [
    "test_user",
    "neighbors",
    "overlap",
    "mean_corr",
    "inter_corr",
    "tau",
]


class Algorithm(str, Enum):
    """Neighbourhood selection algorithm of a run"""

    SP = "sp"
    AIS = "ais"
    MATCHED_SP = "matched-sp"


class SweepParam(str, Enum):
    """Rate constant varied by a sweep"""

    STIMULATION = "stim"
    SUPPRESSION = "supp"


# (predictor weighting, neighbourhood source) in comparison order
Regime = tuple[Weighting, Weighting]
REGIMES: list[Regime] = [
    (Weighting.SP, Weighting.SP),
    (Weighting.AIS, Weighting.SP),
    (Weighting.SP, Weighting.AIS),
    (Weighting.AIS, Weighting.AIS),
]


@dataclass(frozen=True)
class ExperimentConfig:
    algo: Algorithm = Algorithm.AIS
    sim: SimilarityParams = field(default_factory=SimilarityParams)
    ais: AisParams = field(default_factory=AisParams)
    pred_opts: PredictionOptions = field(default_factory=PredictionOptions)
    n_test_users: int = 100
    max_reviewers: int = 15000
    sp_k: int = 100
    seed: int = 0
    repeats: int = 5
    min_votes: int = 2
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "algo", Algorithm(self.algo))
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.n_test_users < 1:
            raise ValueError("n_test_users must be at least 1")
        if self.max_reviewers < 1:
            raise ValueError("max_reviewers must be at least 1")
        if self.sp_k < 1:
            raise ValueError("sp_k must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.min_votes < 2:
            raise ValueError("min_votes must be at least 2")

    def as_dict(self) -> dict[str, Any]:
        """Every setting, defaults included, as plain JSON-ready values"""
        resolved = asdict(self)
        resolved["algo"] = self.algo.value
        return resolved


@dataclass(frozen=True)
class Trial:
    """A test case and the reviewer stream offered to its selectors"""

    test_case: TestCase
    reviewers: tuple[UserProfile, ...]

    @property
    def user(self) -> UserProfile:
        return self.test_case.training_user


@dataclass
class SwapResult:
    records: dict[Regime, list[PredictionRecord]]
    comparisons: pd.DataFrame
    characteristics: pd.DataFrame
    membership: pd.DataFrame
    scatter: pd.DataFrame

    def records_frame(self) -> pd.DataFrame:
        rows = [
            {
                "regime_predictor": predictor.value,
                "regime_neighborhood": source.value,
                **record.as_row(),
            }
            for (predictor, source), records in self.records.items()
            for record in records
        ]
        return pd.DataFrame(
            rows, columns=["regime_predictor", "regime_neighborhood"] + RESULT_COLUMNS
        )


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def derive_seed(seed: int, repeat: int) -> int:
    """Seed of one repeat of a run"""
    sequence = np.random.SeedSequence([seed, _REPEAT_STREAM, repeat])
    return int(sequence.generate_state(1)[0])


def prepare_trial(dataset: Dataset, user: UserProfile, cfg: ExperimentConfig) -> Trial:
    """
    Reserve a vote of a test user and shuffle the other users into a stream

    The stream is truncated at max_reviewers.
    """
    rng = _rng(cfg.seed, _TRIAL_STREAM, user.user_id)
    test_case = reserve_vote(user, rng)
    others = list(iter_others(dataset, user.user_id))
    order = rng.permutation(len(others))[: cfg.max_reviewers]
    return Trial(test_case, tuple(others[int(i)] for i in order))


def evaluate_neighborhood(
    trial: Trial,
    nh: Neighborhood,
    cfg: ExperimentConfig,
    cache: Optional[SimilarityCache] = None,
    capped: bool = False,
) -> PredictionRecord:
    """Predict the reserved vote and score the recommendations of a neighbourhood"""
    user = trial.user
    reserved = trial.test_case.reserved
    prediction = predict(user, nh, reserved.movie_id, cfg.pred_opts)
    recommendations = recommend(user, nh, cfg.pred_opts)
    overlapping = [
        (rec.movie_id, user.votes[rec.movie_id], rec.predicted_score)
        for rec in recommendations
        if rec.movie_id in user.votes
    ]
    tau = kendall_tau(overlapping) if len(overlapping) >= 2 else None
    return PredictionRecord(
        test_user_id=trial.test_case.original_user_id,
        movie_id=reserved.movie_id,
        actual=reserved.score,
        predicted=prediction.value,
        fallback=prediction.fallback,
        neighborhood_size=len(nh),
        reviewers_seen=nh.reviewers_seen,
        n_recommendations=len(recommendations),
        overlap_count=len(overlapping),
        tau=tau,
        characteristics=characteristics(nh, trial.test_case, cfg.sim, cache),
        capped=capped,
    )


def _error_record(
    user: UserProfile, trial: Optional[Trial], error: Exception
) -> PredictionRecord:
    if trial is None:
        movie_id, actual, predicted = 0, user.mean, user.mean
    else:
        movie_id = trial.test_case.reserved.movie_id
        actual = trial.test_case.reserved.score
        predicted = trial.user.mean
    return PredictionRecord(
        test_user_id=user.user_id,
        movie_id=movie_id,
        actual=actual,
        predicted=predicted,
        fallback=True,
        neighborhood_size=0,
        reviewers_seen=0,
        n_recommendations=0,
        overlap_count=0,
        tau=None,
        error=f"{type(error).__name__}: {error}",
    )


def _ais_neighborhood(
    trial: Trial, cfg: ExperimentConfig, cache: Optional[SimilarityCache]
) -> tuple[Neighborhood, bool]:
    try:
        return select_ais(trial.reviewers, trial.user, cfg.ais, cfg.sim, cache), False
    except DifferentiationCapError as e:
        log.warning(
            f"User {trial.user.user_id}: {e}; using partially differentiated weights"
        )
        return neighborhood_from_state(e.state, trial.user), True


def _fixed_neighborhood(
    members: Sequence[UserProfile],
    trial: Trial,
    weighting: Weighting,
    cfg: ExperimentConfig,
    cache: Optional[SimilarityCache],
) -> tuple[Neighborhood, bool]:
    if not members:
        method = (
            NeighborhoodMethod.FIXED_SP
            if weighting is Weighting.SP
            else NeighborhoodMethod.FIXED_AIS
        )
        return Neighborhood(trial.user, (), method), False
    try:
        nh = inject_fixed(members, trial.user, weighting, cfg.ais, cfg.sim, cache)
        return nh, False
    except DifferentiationCapError as e:
        log.warning(
            f"User {trial.user.user_id}: {e}; using partially differentiated weights"
        )
        nh = neighborhood_from_state(e.state, trial.user, NeighborhoodMethod.FIXED_AIS)
        return nh, True


def build_neighborhood(
    trial: Trial, cfg: ExperimentConfig, cache: Optional[SimilarityCache] = None
) -> tuple[Neighborhood, bool]:
    """
    Select the neighbourhood of a trial with the configured algorithm

    Matched SP runs the immune network first, then Simple Pearson with k
    set to the network's size over the reviewers the network looked at.

    Returns:
        tuple: The neighbourhood and whether differentiation was capped
    """
    reserved = trial.test_case.reserved.movie_id
    if cfg.algo is Algorithm.SP:
        nh = select_sp(trial.reviewers, trial.user, cfg.sp_k, reserved, cfg.sim)
        return nh, False

    ais_nh, capped = _ais_neighborhood(trial, cfg, cache)
    if cfg.algo is Algorithm.AIS:
        return ais_nh, capped

    seen = ais_nh.reviewers_seen
    if len(ais_nh) == 0:
        return Neighborhood(trial.user, (), NeighborhoodMethod.SP, seen), False
    nh = select_sp(trial.reviewers[:seen], trial.user, len(ais_nh), reserved, cfg.sim)
    return nh, False


def _run_user(
    dataset: Dataset,
    user: UserProfile,
    cfg: ExperimentConfig,
    cache: SimilarityCache,
) -> tuple[PredictionRecord, Optional[Neighborhood]]:
    trial = None
    try:
        trial = prepare_trial(dataset, user, cfg)
        nh, capped = build_neighborhood(trial, cfg, cache)
        record = evaluate_neighborhood(trial, nh, cfg, cache, capped)
    except (AisRecommenderError, ValueError, ArithmeticError) as e:
        log.warning(f"Trial for user {user.user_id} failed: {e}")
        return _error_record(user, trial, e), None
    log.debug(
        f"User {user.user_id}: {record.neighborhood_size} neighbours from "
        f"{record.reviewers_seen} reviewers, predicted {record.predicted:.3f} "
        f"for actual {record.actual:.1f}"
    )
    return record, nh


def _map_users(
    work: Callable[[UserProfile], T], users: Sequence[UserProfile], workers: int
) -> list[T]:
    if workers == 1:
        return [work(user) for user in users]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, users))


def _check_cache(
    cfg: ExperimentConfig, cache: Optional[SimilarityCache]
) -> SimilarityCache:
    if cache is None:
        return SimilarityCache(cfg.sim)
    if cache.params != cfg.sim:
        raise ValueError("similarity cache was built with different parameters")
    return cache


def run_experiment_with_neighborhoods(
    dataset: Dataset, cfg: ExperimentConfig, cache: Optional[SimilarityCache] = None
) -> tuple[list[PredictionRecord], list[Neighborhood]]:
    """run_experiment that also returns the neighbourhood of every successful trial"""
    cache = _check_cache(cfg, cache)
    users = sample_test_users(
        dataset, cfg.n_test_users, cfg.min_votes, _rng(cfg.seed, _SAMPLING_STREAM)
    )
    log.info(
        f"Running {cfg.algo.value} for {len(users)} test users "
        f"(seed {cfg.seed}, k1={cfg.ais.k1}, k2={cfg.ais.k2})"
    )
    results = _map_users(
        lambda user: _run_user(dataset, user, cfg, cache), users, cfg.workers
    )
    results.sort(key=lambda item: item[0].test_user_id)
    records = [record for record, _ in results]
    neighborhoods = [nh for _, nh in results if nh is not None]
    return records, neighborhoods


def run_experiment(
    dataset: Dataset, cfg: ExperimentConfig, cache: Optional[SimilarityCache] = None
) -> list[PredictionRecord]:
    """
    Evaluate one algorithm over sampled test users

    Args:
        dataset: Vote data
        cfg: Experiment configuration, including the seed
        cache: Reviewer correlation cache shared across runs on one dataset

    Returns:
        list[PredictionRecord]: One record per test user, sorted by user id.
            Failed trials are kept as flagged records.
    """
    records, _ = run_experiment_with_neighborhoods(dataset, cfg, cache)
    return records


def sweep(
    dataset: Dataset,
    base: ExperimentConfig,
    param: SweepParam,
    values: Sequence[float],
    cache: Optional[SimilarityCache] = None,
) -> pd.DataFrame:
    """
    Run an experiment for every value x repeat of one rate constant

    Each repeat uses a seed derived from the base seed; the same repeat
    seeds are used for every value, so values are compared on the same
    test users.

    Returns:
        pd.DataFrame: One summary row per (value, repeat), SWEEP_COLUMNS
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    param = SweepParam(param)
    cache = _check_cache(base, cache)
    rows = []
    for value in values:
        if param is SweepParam.STIMULATION:
            ais = replace(base.ais, k1=value)
        else:
            ais = replace(base.ais, k2=value)
        for repeat in range(base.repeats):
            cfg = replace(base, ais=ais, seed=derive_seed(base.seed, repeat))
            summary = summarize(run_experiment(dataset, cfg, cache))
            rows.append(
                {"param": param.value, "value": value, "repeat": repeat}
                | summary.as_dict()
            )
            log.info(
                f"Sweep {param.value}={value} repeat {repeat + 1}/{base.repeats}: "
                f"MAE {summary.mae:.4f}, neighbours {summary.neighbors_mean:.1f}"
            )
    return pd.DataFrame(rows)[SWEEP_COLUMNS]


def aggregate_sweep(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard deviation of each statistic across repeats

    Suppression sweeps that include the value 0 also get `<stat>_delta`
    columns relative to that zero-suppression baseline.
    """
    frame = frame.astype({stat: float for stat in SWEEP_STATISTICS})
    grouped = frame.groupby(["param", "value"], sort=False)[SWEEP_STATISTICS]
    means = grouped.mean()
    spreads = grouped.std(ddof=0).add_suffix("_sd")
    table = means.join(spreads).reset_index()
    table.insert(2, "repeats", grouped.size().to_numpy())

    is_suppression = (table["param"] == SweepParam.SUPPRESSION.value).all()
    baseline = table[table["value"] == 0]
    if is_suppression and len(baseline) == 1:
        for stat in SWEEP_STATISTICS:
            table[f"{stat}_delta"] = table[stat] - baseline[stat].iloc[0]
    return table


def _paired_row(pairs: list[tuple[float, float]]) -> dict[str, Any]:
    if not pairs:
        return {"n": 0, "wplus": 0.0, "wminus": 0.0, "p": float("nan")}
    try:
        result = wilcoxon(pairs)
    except StatisticsError:
        return {"n": 0, "wplus": 0.0, "wminus": 0.0, "p": float("nan")}
    return {
        "n": result.n_effective,
        "wplus": result.w_plus,
        "wminus": result.w_minus,
        "p": float("nan") if result.p_two_sided is None else result.p_two_sided,
    }


def compare_regimes(records: dict[Regime, list[PredictionRecord]]) -> pd.DataFrame:
    """
    Wilcoxon comparison of every pair of regimes

    Prediction compares absolute errors; recommendation compares tau over
    test users where both regimes have one. wplus sums the ranks where the
    first regime's value is larger.
    """
    metrics: list[tuple[str, Callable[[PredictionRecord], Optional[float]]]] = [
        ("prediction", lambda r: r.abs_error),
        ("recommendation", lambda r: r.tau),
    ]
    rows = []
    for metric, value_of in metrics:
        for first, second in itertools.combinations(REGIMES, 2):
            pairs = []
            for a, b in zip(records[first], records[second]):
                va, vb = value_of(a), value_of(b)
                if va is not None and vb is not None:
                    pairs.append((va, vb))
            firsts = [a for a, _ in pairs]
            seconds = [b for _, b in pairs]
            rows.append(
                {
                    "metric": metric,
                    "pred1": first[0].value,
                    "nh1": first[1].value,
                    "pred2": second[0].value,
                    "nh2": second[1].value,
                    "median1": statistics.median(firsts) if pairs else None,
                    "median2": statistics.median(seconds) if pairs else None,
                }
                | _paired_row(pairs)
            )
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def compare_characteristics(
    sp: list[Characteristics], ais: list[Characteristics]
) -> pd.DataFrame:
    """Wilcoxon comparison of SP and AIS community characteristics"""
    fields: list[tuple[str, Callable[[Characteristics], float]]] = [
        ("neighbours", lambda c: c.size),
        ("overlap", lambda c: c.overlap_count),
        ("correlation", lambda c: c.mean_abs_corr_to_test),
        ("neighbour correlation", lambda c: c.mean_inter_neighbor_abs_corr),
    ]
    rows = []
    for name, value_of in fields:
        pairs = [(float(value_of(a)), float(value_of(b))) for a, b in zip(sp, ais)]
        rows.append(
            {
                "pred1": Weighting.SP.value,
                "pred2": Weighting.AIS.value,
                "characteristic": name,
                "mean1": float(np.mean([a for a, _ in pairs])) if pairs else None,
                "mean2": float(np.mean([b for _, b in pairs])) if pairs else None,
            }
            | _paired_row(pairs)
        )
    return pd.DataFrame(rows, columns=CHARACTERISTIC_COLUMNS)


def _swap_user(
    dataset: Dataset,
    user: UserProfile,
    cfg: ExperimentConfig,
    cache: SimilarityCache,
) -> tuple[dict[Regime, PredictionRecord], dict[str, int]]:
    trial = None
    try:
        trial = prepare_trial(dataset, user, cfg)
        reserved = trial.test_case.reserved.movie_id
        sources = {
            Weighting.SP: select_sp(
                trial.reviewers, trial.user, cfg.sp_k, reserved, cfg.sim
            ),
            Weighting.AIS: _ais_neighborhood(trial, cfg, cache)[0],
        }
        records = {}
        for predictor, source in REGIMES:
            members = sources[source].members
            nh, capped = _fixed_neighborhood(members, trial, predictor, cfg, cache)
            nh = replace(nh, reviewers_seen=sources[source].reviewers_seen)
            records[(predictor, source)] = evaluate_neighborhood(
                trial, nh, cfg, cache, capped
            )
    except (AisRecommenderError, ValueError, ArithmeticError) as e:
        log.warning(f"Swap trial for user {user.user_id} failed: {e}")
        failed = _error_record(user, trial, e)
        return {regime: failed for regime in REGIMES}, {
            "test_user": user.user_id,
            "sp_size": 0,
            "ais_size": 0,
            "common": 0,
            "unique_sp": 0,
            "unique_ais": 0,
            "union": 0,
        }

    sp_ids = sources[Weighting.SP].member_ids
    ais_ids = sources[Weighting.AIS].member_ids
    membership = {
        "test_user": user.user_id,
        "sp_size": len(sp_ids),
        "ais_size": len(ais_ids),
        "common": len(sp_ids & ais_ids),
        "unique_sp": len(sp_ids - ais_ids),
        "unique_ais": len(ais_ids - sp_ids),
        "union": len(sp_ids | ais_ids),
    }
    return records, membership


def swap_experiment(
    dataset: Dataset, cfg: ExperimentConfig, cache: Optional[SimilarityCache] = None
) -> SwapResult:
    """
    Evaluate both predictors on both algorithms' neighbourhoods

    For each test user the SP and AIS neighbourhoods are recorded, then
    each is re-weighted by both predictors with its membership held fixed.

    Returns:
        SwapResult: Per-regime records, pairwise regime comparisons,
            characteristic comparisons, membership counts and the AIS
            characteristic/tau scatter
    """
    cache = _check_cache(cfg, cache)
    users = sample_test_users(
        dataset, cfg.n_test_users, cfg.min_votes, _rng(cfg.seed, _SAMPLING_STREAM)
    )
    log.info(f"Running swap experiment for {len(users)} test users (seed {cfg.seed})")
    results = _map_users(
        lambda user: _swap_user(dataset, user, cfg, cache), users, cfg.workers
    )
    results.sort(key=lambda item: item[1]["test_user"])

    records = {regime: [r[regime] for r, _ in results] for regime in REGIMES}
    sp_records = records[(Weighting.SP, Weighting.SP)]
    ais_records = records[(Weighting.AIS, Weighting.AIS)]
    scatter = pd.DataFrame(
        [
            {
                "test_user": r.test_user_id,
                "neighbors": r.characteristics.size,
                "overlap": r.characteristics.overlap_count,
                "mean_corr": r.characteristics.mean_abs_corr_to_test,
                "inter_corr": r.characteristics.mean_inter_neighbor_abs_corr,
                "tau": r.tau,
            }
            for r in ais_records
        ],
        columns=SCATTER_COLUMNS,
    )
    return SwapResult(
        records=records,
        comparisons=compare_regimes(records),
        characteristics=compare_characteristics(
            [r.characteristics for r in sp_records],
            [r.characteristics for r in ais_records],
        ),
        membership=pd.DataFrame([m for _, m in results], columns=MEMBERSHIP_COLUMNS),
        scatter=scatter,
    )


def write_swap(result: SwapResult, prefix: Union[str, Path]) -> list[Path]:
    """
    Write every swap artifact as `<prefix><name>.csv`

    Returns:
        list[Path]: Paths written
    """
    prefix = str(prefix)
    outputs = {
        "records": result.records_frame(),
        "comparisons": result.comparisons,
        "characteristics": result.characteristics,
        "membership": result.membership,
        "scatter": result.scatter,
    }
    written = []
    for name, frame in outputs.items():
        path = Path(f"{prefix}{name}.csv")
        frame.to_csv(path, index=False)
        written.append(path)
    log.info(f"Wrote swap results: {', '.join(str(p) for p in written)}")
    return written
