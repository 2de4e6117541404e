#!/usr/bin/env python3
"""
Command-line interface for the AIS recommender

Every command takes its settings from flags only; the resolved experiment
configuration is echoed to standard error before a run so a results file
can always be traced back to the settings that produced it.
"""

import json
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, Optional

import numpy as np
import pandas as pd
import typer

from . import __version__
from .ais import AisParams
from .dataset import VoteFormat, generate_synthetic, quantize, read_votes, write_votes
from .errors import DataError, StatisticsError
from .evaluation import read_records, summarize, wilcoxon, write_records
from .harness import (
    Algorithm,
    ExperimentConfig,
    SweepParam,
    aggregate_sweep,
    run_experiment_with_neighborhoods,
    swap_experiment,
    sweep,
    write_swap,
)
from .logger import log, set_log_level
from .neighborhood import write_neighborhoods
from .predictor import PredictionOptions
from .similarity import SimilarityParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (
    DataError,
    StatisticsError,
    FileNotFoundError,
    pd.errors.ParserError,
    pd.errors.EmptyDataError,
)


def _click_exception(name: str) -> Any:
    """Exception class of the click copy that typer runs on"""
    for cls in typer.BadParameter.__mro__:
        if cls.__name__ == name:
            return cls
    raise ImportError(f"typer.BadParameter does not derive from {name}")


UsageError = _click_exception("UsageError")
ClickException = _click_exception("ClickException")

app = typer.Typer(
    name="ais-recommender",
    help="Immune network neighbourhoods for collaborative filtering",
    add_completion=False,
)

# Shared option types
VotesOption = Annotated[
    Path, typer.Option("--votes", help="Vote file (user,movie,score)")
]
FormatOption = Annotated[
    VoteFormat, typer.Option("--format", help="Encoding of the score column")
]
StimOption = Annotated[
    Optional[float], typer.Option("--stim", help="Stimulation rate k1")
]
SuppOption = Annotated[
    Optional[float], typer.Option("--supp", help="Suppression rate k2")
]
DeathOption = Annotated[float, typer.Option("--death", help="Death rate k3")]
PoolOption = Annotated[int, typer.Option("--pool", help="Antibody pool size")]
TestUsersOption = Annotated[
    int, typer.Option("--test-users", help="Number of test users per run")
]
MaxReviewersOption = Annotated[
    int, typer.Option("--max-reviewers", help="Reviewers offered per test user")
]
SpKOption = Annotated[
    int, typer.Option("--sp-k", help="Simple Pearson neighbourhood size")
]
SeedOption = Annotated[int, typer.Option("--seed", help="Run seed")]
DefaultVoteOption = Annotated[
    str,
    typer.Option(
        "--default-vote",
        help="'none', or a score used for neighbours who did not vote on a film",
    ),
]
MinVotesOption = Annotated[
    int, typer.Option("--min-votes", help="Minimum votes for a test user")
]
WorkersOption = Annotated[int, typer.Option("--workers", help="Parallel trial threads")]
PenaltyOption = Annotated[
    int, typer.Option("--overlap-penalty", help="Overlap penalty P of the correlation")
]
NormaliseOption = Annotated[
    bool,
    typer.Option(
        "--normalise-by-pool",
        help="Divide suppression by the pool size instead of the antibody count",
    ),
]
AbsoluteOption = Annotated[
    bool,
    typer.Option(
        "--absolute-denominator", help="Divide predictions by the sum of |weights|"
    ),
]


def version_callback(value: bool) -> None:
    """Print version and exit"""
    if value:
        typer.echo(f"ais-recommender {__version__}")
        raise typer.Exit()


@app.callback()
def root(
    version: Annotated[
        Optional[bool],
        typer.Option(
            "--version",
            callback=version_callback,
            is_eager=True,
            help="Show version and exit",
        ),
    ] = None,
    verbose: Annotated[
        bool, typer.Option("--verbose", "-v", help="Log per-trial details")
    ] = False,
    quiet: Annotated[
        bool, typer.Option("--quiet", "-q", help="Only log warnings and errors")
    ] = False,
) -> None:
    """Immune network neighbourhoods for collaborative filtering"""
    if verbose and quiet:
        raise UsageError("--verbose and --quiet are mutually exclusive")
    if verbose:
        set_log_level("DEBUG")
    elif quiet:
        set_log_level("WARNING")
    else:
        set_log_level("INFO")


@contextmanager
def _exit_on_error() -> Iterator[None]:
    try:
        yield
    except (typer.Exit, ClickException):
        raise
    except _DATA_ERRORS as e:
        log.error(f"Error: {e}")
        raise typer.Exit(EXIT_DATA) from e
    except Exception as e:
        log.error(f"Unexpected error: {e}")
        raise typer.Exit(EXIT_RUNTIME) from e


def parse_default_vote(text: str) -> Optional[float]:
    """'none' or a score on the vote scale"""
    if text.strip().lower() == "none":
        return None
    try:
        return quantize(float(text))
    except ValueError:
        raise typer.BadParameter(
            f"{text!r} is not 'none' or one of 0, 0.2, 0.4, 0.6, 0.8, 1",
            param_hint="--default-vote",
        ) from None


def parse_values(text: str) -> list[float]:
    """Comma-separated list of sweep values"""
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(
            f"{text!r} is not a comma-separated list of numbers", param_hint="--values"
        ) from None
    if not values:
        raise typer.BadParameter(
            "at least one value is required", param_hint="--values"
        )
    return values


def build_config(
    algo: Algorithm,
    stim: Optional[float],
    supp: Optional[float],
    death: float = 0.1,
    pool: int = 100,
    test_users: int = 100,
    max_reviewers: int = 15000,
    sp_k: int = 100,
    seed: int = 0,
    repeats: int = 5,
    default_vote: str = "none",
    min_votes: int = 2,
    workers: int = 1,
    overlap_penalty: int = 100,
    normalise_by_pool: bool = False,
    absolute_denominator: bool = False,
) -> ExperimentConfig:
    """
    Turn command flags into a validated ExperimentConfig

    Raises:
        UsageError: If a required rate is missing or a value is invalid
    """
    if algo is not Algorithm.SP and (stim is None or supp is None):
        raise UsageError(
            f"--stim and --supp are required for --algo {algo.value}"
        )
    defaults = AisParams()
    try:
        return ExperimentConfig(
            algo=algo,
            sim=SimilarityParams(overlap_penalty=overlap_penalty),
            ais=AisParams(
                k1=defaults.k1 if stim is None else stim,
                k2=defaults.k2 if supp is None else supp,
                k3=death,
                pool_size=pool,
                normalise_by_pool=normalise_by_pool,
            ),
            pred_opts=PredictionOptions(
                default_vote=parse_default_vote(default_vote),
                absolute_denominator=absolute_denominator,
            ),
            n_test_users=test_users,
            max_reviewers=max_reviewers,
            sp_k=sp_k,
            seed=seed,
            repeats=repeats,
            min_votes=min_votes,
            workers=workers,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def echo_config(cfg: ExperimentConfig, **extra: object) -> None:
    """Print the resolved configuration as JSON on standard error"""
    resolved = cfg.as_dict() | extra
    typer.echo(json.dumps(resolved, indent=2, sort_keys=True, default=str), err=True)


@app.command()
def synth(
    out: Annotated[Path, typer.Option("--out", help="Vote file to write")],
    users: Annotated[int, typer.Option("--users", help="Number of users")] = 500,
    movies: Annotated[int, typer.Option("--movies", help="Number of movies")] = 200,
    clusters: Annotated[int, typer.Option("--clusters", help="Taste clusters")] = 5,
    sparsity: Annotated[
        float, typer.Option("--sparsity", help="Share of movies each user votes on")
    ] = 0.2,
    noise: Annotated[
        float, typer.Option("--noise", help="Probability a vote is uniform noise")
    ] = 0.1,
    seed: SeedOption = 0,
    fmt: FormatOption = VoteFormat.RAW0TO5,
) -> None:
    """Generate a clustered synthetic vote file"""
    with _exit_on_error():
        try:
            dataset = generate_synthetic(
                users, movies, clusters, sparsity, noise, np.random.default_rng(seed)
            )
        except ValueError as e:
            raise UsageError(str(e)) from None
        write_votes(dataset, out, fmt)


@app.command()
def validate(votes: VotesOption, fmt: FormatOption = VoteFormat.RAW0TO5) -> None:
    """Check a vote file and print its size"""
    with _exit_on_error():
        dataset = read_votes(votes, fmt)
        typer.echo(f"users={len(dataset.users)}")
        typer.echo(f"movies={len(dataset.movie_ids)}")
        typer.echo(f"votes={dataset.n_votes}")


@app.command()
def run(
    votes: VotesOption,
    out: Annotated[Path, typer.Option("--out", help="Results CSV to write")],
    algo: Annotated[
        Algorithm, typer.Option("--algo", help="Neighbourhood algorithm")
    ] = Algorithm.AIS,
    stim: StimOption = None,
    supp: SuppOption = None,
    death: DeathOption = 0.1,
    pool: PoolOption = 100,
    test_users: TestUsersOption = 100,
    max_reviewers: MaxReviewersOption = 15000,
    sp_k: SpKOption = 100,
    seed: SeedOption = 0,
    default_vote: DefaultVoteOption = "none",
    min_votes: MinVotesOption = 2,
    workers: WorkersOption = 1,
    overlap_penalty: PenaltyOption = 100,
    normalise_by_pool: NormaliseOption = False,
    absolute_denominator: AbsoluteOption = False,
    neighborhoods_out: Annotated[
        Optional[Path],
        typer.Option("--neighborhoods-out", help="Also write every neighbourhood"),
    ] = None,
    fmt: FormatOption = VoteFormat.RAW0TO5,
) -> None:
    """Evaluate one algorithm over sampled test users"""
    cfg = build_config(
        algo,
        stim,
        supp,
        death=death,
        pool=pool,
        test_users=test_users,
        max_reviewers=max_reviewers,
        sp_k=sp_k,
        seed=seed,
        default_vote=default_vote,
        min_votes=min_votes,
        workers=workers,
        overlap_penalty=overlap_penalty,
        normalise_by_pool=normalise_by_pool,
        absolute_denominator=absolute_denominator,
    )
    echo_config(cfg, command="run", votes=str(votes))
    with _exit_on_error():
        dataset = read_votes(votes, fmt)
        records, neighborhoods = run_experiment_with_neighborhoods(dataset, cfg)
        write_records(records, out)
        if neighborhoods_out is not None:
            write_neighborhoods(neighborhoods_out, neighborhoods)
        summary = summarize(records)
        typer.echo(
            f"MAE {summary.mae:.4f} over {summary.count} test users "
            f"({summary.fallbacks} fallbacks, {summary.capped} capped, "
            f"{summary.errors} errors)"
        )


@app.command(name="sweep")
def sweep_command(
    votes: VotesOption,
    param: Annotated[SweepParam, typer.Option("--param", help="Rate to vary")],
    values: Annotated[
        str, typer.Option("--values", help="Comma-separated values, e.g. 0,0.1,0.2")
    ],
    out: Annotated[Path, typer.Option("--out", help="Per-repeat CSV to write")],
    repeats: Annotated[int, typer.Option("--repeats", help="Repeats per value")] = 5,
    aggregate_out: Annotated[
        Optional[Path],
        typer.Option("--aggregate-out", help="Also write means across repeats"),
    ] = None,
    algo: Annotated[
        Algorithm, typer.Option("--algo", help="Neighbourhood algorithm")
    ] = Algorithm.AIS,
    stim: StimOption = None,
    supp: SuppOption = None,
    death: DeathOption = 0.1,
    pool: PoolOption = 100,
    test_users: TestUsersOption = 100,
    max_reviewers: MaxReviewersOption = 15000,
    sp_k: SpKOption = 100,
    seed: SeedOption = 0,
    default_vote: DefaultVoteOption = "none",
    min_votes: MinVotesOption = 2,
    workers: WorkersOption = 1,
    overlap_penalty: PenaltyOption = 100,
    normalise_by_pool: NormaliseOption = False,
    absolute_denominator: AbsoluteOption = False,
    fmt: FormatOption = VoteFormat.RAW0TO5,
) -> None:
    """Run every value of one rate constant several times"""
    swept = parse_values(values)
    # The swept rate is filled in per value, so only the other one is required
    if param is SweepParam.STIMULATION and stim is None:
        stim = swept[0]
    if param is SweepParam.SUPPRESSION and supp is None:
        supp = swept[0]
    cfg = build_config(
        algo,
        stim,
        supp,
        death=death,
        pool=pool,
        test_users=test_users,
        max_reviewers=max_reviewers,
        sp_k=sp_k,
        seed=seed,
        repeats=repeats,
        default_vote=default_vote,
        min_votes=min_votes,
        workers=workers,
        overlap_penalty=overlap_penalty,
        normalise_by_pool=normalise_by_pool,
        absolute_denominator=absolute_denominator,
    )
    echo_config(cfg, command="sweep", param=param.value, values=swept, votes=str(votes))
    with _exit_on_error():
        dataset = read_votes(votes, fmt)
        try:
            frame = sweep(dataset, cfg, param, swept)
        except ValueError as e:
            if isinstance(e, DataError):
                raise
            raise UsageError(str(e)) from None
        frame.to_csv(out, index=False)
        log.info(f"Wrote {len(frame)} sweep rows to {out}")
        if aggregate_out is not None:
            aggregate_sweep(frame).to_csv(aggregate_out, index=False)
            log.info(f"Wrote sweep aggregate to {aggregate_out}")


@app.command()
def swap(
    votes: VotesOption,
    out_prefix: Annotated[
        str, typer.Option("--out-prefix", help="Prefix of the swap CSV files")
    ],
    stim: StimOption = None,
    supp: SuppOption = None,
    death: DeathOption = 0.1,
    pool: PoolOption = 100,
    test_users: TestUsersOption = 100,
    max_reviewers: MaxReviewersOption = 15000,
    sp_k: SpKOption = 100,
    seed: SeedOption = 0,
    default_vote: DefaultVoteOption = "none",
    min_votes: MinVotesOption = 2,
    workers: WorkersOption = 1,
    overlap_penalty: PenaltyOption = 100,
    normalise_by_pool: NormaliseOption = False,
    fmt: FormatOption = VoteFormat.RAW0TO5,
) -> None:
    """Evaluate both predictors on both algorithms' neighbourhoods"""
    cfg = build_config(
        Algorithm.AIS,
        stim,
        supp,
        death=death,
        pool=pool,
        test_users=test_users,
        max_reviewers=max_reviewers,
        sp_k=sp_k,
        seed=seed,
        default_vote=default_vote,
        min_votes=min_votes,
        workers=workers,
        overlap_penalty=overlap_penalty,
        normalise_by_pool=normalise_by_pool,
    )
    echo_config(cfg, command="swap", votes=str(votes), out_prefix=out_prefix)
    with _exit_on_error():
        dataset = read_votes(votes, fmt)
        result = swap_experiment(dataset, cfg)
        write_swap(result, out_prefix)


@app.command(name="wilcoxon")
def wilcoxon_command(
    source: Annotated[Path, typer.Option("--in", help="CSV of paired values")],
    col_a: Annotated[str, typer.Option("--col-a", help="First column")],
    col_b: Annotated[str, typer.Option("--col-b", help="Second column")],
) -> None:
    """Wilcoxon signed-rank test of two paired columns"""
    with _exit_on_error():
        if not source.exists():
            raise FileNotFoundError(f"Input file not found: {source}")
        frame = pd.read_csv(source, float_precision="round_trip")
        missing = [c for c in (col_a, col_b) if c not in frame.columns]
        if missing:
            raise DataError(f"{source} has no column {', '.join(missing)}")
        paired = frame[[col_a, col_b]].dropna()
        if len(paired) < len(frame):
            log.warning(f"Dropped {len(frame) - len(paired)} rows with missing values")
        result = wilcoxon(
            [(float(a), float(b)) for a, b in paired.itertuples(index=False)]
        )
        typer.echo(f"n={result.n_effective}")
        typer.echo(f"w_plus={result.w_plus}")
        typer.echo(f"w_minus={result.w_minus}")
        p = "NA" if result.p_two_sided is None else f"{result.p_two_sided:.6g}"
        typer.echo(f"p={p}")


@app.command()
def report(
    source: Annotated[Path, typer.Option("--in", help="Results CSV from run")],
    out: Annotated[Path, typer.Option("--out", help="Summary CSV to write")],
) -> None:
    """Summarise a results file"""
    with _exit_on_error():
        records = read_records(source)
        if not records:
            raise DataError(f"{source} contains no records")
        summary = summarize(records)
        pd.DataFrame([summary.as_dict()]).to_csv(out, index=False)
        log.info(f"Wrote summary of {summary.count} records to {out}")
        typer.echo(f"MAE {summary.mae:.4f} over {summary.count} records")


def main(argv: Optional[list[str]] = None) -> int:
    """
    Run the CLI and return its exit code

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        int: 0 on success, 1 on a usage error, 2 on a data error and 3 on
            any other failure
    """
    command = typer.main.get_command(app)
    try:
        result = command.main(
            args=sys.argv[1:] if argv is None else argv,
            prog_name="ais-recommender",
            standalone_mode=False,
        )
    except typer.Exit as e:
        return e.exit_code
    except UsageError as e:
        e.show()
        return EXIT_USAGE
    except ClickException as e:
        e.show()
        return EXIT_RUNTIME
    except typer.Abort:
        return EXIT_RUNTIME
    except _DATA_ERRORS as e:
        log.error(f"Error: {e}")
        return EXIT_DATA
    except Exception as e:
        log.error(f"Unexpected error: {e}")
        return EXIT_RUNTIME
    return result if isinstance(result, int) else EXIT_OK


def cli_main() -> None:
    """Entry point for the CLI"""
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
