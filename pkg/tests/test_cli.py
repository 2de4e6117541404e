"""
Tests for CLI module

Test suite for the command-line interface functionality.
"""

import numpy as np
import pandas as pd
import pytest
import typer
from typer.testing import CliRunner

from ais_recommender import __version__, cli
from ais_recommender.cli import app, parse_default_vote, parse_values
from ais_recommender.dataset import generate_synthetic, write_votes
from ais_recommender.evaluation import RESULT_COLUMNS

SMALL_RUN = ["--pool", "10", "--test-users", "5", "--max-reviewers", "30"]


@pytest.fixture(scope="module")
def votes_file(tmp_path_factory):
    """Small clustered vote file shared by the CLI tests"""
    path = tmp_path_factory.mktemp("votes") / "votes.csv"
    dataset = generate_synthetic(40, 30, 3, 0.5, 0.1, np.random.default_rng(5))
    write_votes(dataset, path)
    return path


@pytest.mark.unit
@pytest.mark.cli
class TestTyperCLI:
    """Test Typer CLI functionality"""

    def setup_method(self):
        """Set up test fixtures"""
        self.runner = CliRunner()

    def test_help_command(self):
        """Test that help lists every command"""
        result = self.runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("synth", "validate", "run", "sweep", "swap", "wilcoxon"):
            assert command in result.stdout

    def test_version_command(self):
        """Test version command"""
        result = self.runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert f"ais-recommender {__version__}" in result.stdout

    def test_synth_then_validate(self, tmp_path):
        """Test a generated file validates with the expected size"""
        path = tmp_path / "synth.csv"
        result = self.runner.invoke(
            app,
            ["synth", "--out", str(path), "--users", "20", "--movies", "10"]
            + ["--sparsity", "0.5", "--seed", "3"],
        )
        assert result.exit_code == 0
        result = self.runner.invoke(app, ["validate", "--votes", str(path)])
        assert result.exit_code == 0
        assert "users=20" in result.stdout
        assert "votes=100" in result.stdout

    def test_synth_normalized_format(self, tmp_path):
        """Test synth writes normalized scores on request"""
        path = tmp_path / "synth.csv"
        result = self.runner.invoke(
            app,
            ["synth", "--out", str(path), "--users", "5", "--movies", "5"]
            + ["--format", "normalized"],
        )
        assert result.exit_code == 0
        scores = {line.split(",")[2] for line in path.read_text().splitlines()}
        assert scores <= {"0.0", "0.2", "0.4", "0.6", "0.8", "1.0"}

    def test_run_sp(self, votes_file, tmp_path):
        """Test a Simple Pearson run writes one row per test user"""
        out = tmp_path / "results.csv"
        result = self.runner.invoke(
            app,
            ["run", "--votes", str(votes_file), "--out", str(out), "--algo", "sp"]
            + SMALL_RUN,
        )
        assert result.exit_code == 0
        assert "MAE" in result.stdout
        frame = pd.read_csv(out)
        assert list(frame.columns) == RESULT_COLUMNS
        assert len(frame) == 5

    def test_run_ais_with_neighbourhoods(self, votes_file, tmp_path):
        """Test an immune network run can also write its neighbourhoods"""
        out = tmp_path / "results.csv"
        nh_out = tmp_path / "nh.csv"
        result = self.runner.invoke(
            app,
            ["run", "--votes", str(votes_file), "--out", str(out)]
            + ["--stim", "0.3", "--supp", "0.2", "--neighborhoods-out", str(nh_out)]
            + SMALL_RUN,
        )
        assert result.exit_code == 0
        neighbours = pd.read_csv(nh_out)
        assert set(neighbours["method"]) <= {"AIS"}
        assert (neighbours.groupby("test_user").size() <= 10).all()

    def test_identical_runs(self, votes_file, tmp_path):
        """Test two runs with the same seed write identical files"""
        outputs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            result = self.runner.invoke(
                app,
                ["run", "--votes", str(votes_file), "--out", str(out)]
                + ["--stim", "0.3", "--supp", "0.2", "--seed", "9"]
                + SMALL_RUN,
            )
            assert result.exit_code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_report(self, votes_file, tmp_path):
        """Test report summarises a results file"""
        out = tmp_path / "results.csv"
        summary = tmp_path / "summary.csv"
        self.runner.invoke(
            app,
            ["run", "--votes", str(votes_file), "--out", str(out), "--algo", "sp"]
            + SMALL_RUN,
        )
        result = self.runner.invoke(
            app, ["report", "--in", str(out), "--out", str(summary)]
        )
        assert result.exit_code == 0
        frame = pd.read_csv(summary)
        assert frame["count"].iloc[0] == 5
        assert 0.0 <= frame["mae"].iloc[0] <= 1.0

    def test_sweep(self, votes_file, tmp_path):
        """Test a sweep writes one row per value and repeat"""
        out = tmp_path / "sweep.csv"
        agg = tmp_path / "agg.csv"
        result = self.runner.invoke(
            app,
            ["sweep", "--votes", str(votes_file), "--param", "supp"]
            + ["--values", "0,0.4", "--stim", "0.3", "--repeats", "2"]
            + ["--out", str(out), "--aggregate-out", str(agg)]
            + SMALL_RUN,
        )
        assert result.exit_code == 0
        assert len(pd.read_csv(out)) == 4
        aggregate = pd.read_csv(agg)
        assert list(aggregate["repeats"]) == [2, 2]
        assert "mae_delta" in aggregate.columns

    def test_swap(self, votes_file, tmp_path):
        """Test the swap experiment writes every artifact"""
        prefix = tmp_path / "swap_"
        result = self.runner.invoke(
            app,
            ["swap", "--votes", str(votes_file), "--out-prefix", str(prefix)]
            + ["--stim", "0.3", "--supp", "0.2", "--sp-k", "10"]
            + SMALL_RUN,
        )
        assert result.exit_code == 0
        for name in ("records", "comparisons", "characteristics", "membership"):
            assert (tmp_path / f"swap_{name}.csv").exists()
        assert len(pd.read_csv(tmp_path / "swap_comparisons.csv")) == 12

    def test_wilcoxon(self, tmp_path):
        """Test the signed-rank output of a small table"""
        path = tmp_path / "paired.csv"
        path.write_text("a,b\n1,0\n0,2\n3,0\n")
        result = self.runner.invoke(
            app, ["wilcoxon", "--in", str(path), "--col-a", "a", "--col-b", "b"]
        )
        assert result.exit_code == 0
        assert "n=3" in result.stdout
        assert "w_plus=4.0" in result.stdout
        assert "w_minus=2.0" in result.stdout
        assert "p=NA" in result.stdout

    def test_wilcoxon_missing_column(self, tmp_path):
        """Test an unknown column is a data error"""
        path = tmp_path / "paired.csv"
        path.write_text("a,b\n1,0\n")
        result = self.runner.invoke(
            app, ["wilcoxon", "--in", str(path), "--col-a", "a", "--col-b", "c"]
        )
        assert result.exit_code == 2

    def test_missing_vote_file(self, tmp_path):
        """Test a missing vote file is a data error"""
        result = self.runner.invoke(
            app, ["validate", "--votes", str(tmp_path / "missing.csv")]
        )
        assert result.exit_code == 2


@pytest.mark.unit
@pytest.mark.cli
class TestExitCodes:
    """Test exit codes returned by main"""

    def test_success(self, tmp_path):
        """Test a good command returns 0"""
        argv = ["synth", "--out", str(tmp_path / "v.csv"), "--users", "5"]
        assert cli.main(argv) == 0

    def test_version(self):
        """Test --version returns 0"""
        assert cli.main(["--version"]) == 0

    def test_missing_rates(self, votes_file, tmp_path):
        """Test the network needs both rates"""
        argv = ["run", "--votes", str(votes_file), "--out", str(tmp_path / "r.csv")]
        assert cli.main(argv) == 1
        assert cli.main(argv + ["--stim", "0.3"]) == 1

    def test_usage_errors_share_typer_click(self):
        """Test usage errors are the classes typer's own parser raises"""
        assert issubclass(typer.BadParameter, cli.UsageError)
        assert issubclass(cli.UsageError, cli.ClickException)
        with pytest.raises(cli.UsageError):
            parse_default_vote("0.45")

    def test_unknown_flag(self):
        """Test an unknown flag is a usage error"""
        assert cli.main(["validate", "--bogus"]) == 1

    def test_unknown_command(self):
        """Test an unknown command is a usage error"""
        assert cli.main(["frobnicate"]) == 1

    def test_verbose_and_quiet(self, votes_file):
        """Test conflicting verbosity flags"""
        assert cli.main(["-v", "-q", "validate", "--votes", str(votes_file)]) == 1

    def test_invalid_setting(self, votes_file, tmp_path):
        """Test an out-of-range setting is a usage error"""
        argv = ["run", "--votes", str(votes_file), "--out", str(tmp_path / "r.csv")]
        assert cli.main(argv + ["--algo", "sp", "--test-users", "0"]) == 1
        assert cli.main(argv + ["--algo", "sp", "--default-vote", "0.45"]) == 1

    def test_missing_file(self, tmp_path):
        """Test a missing vote file returns 2"""
        assert cli.main(["validate", "--votes", str(tmp_path / "none.csv")]) == 2

    def test_bad_vote_data(self, tmp_path):
        """Test an out-of-range score returns 2"""
        path = tmp_path / "bad.csv"
        path.write_text("1,1,3\n1,2,9\n")
        assert cli.main(["validate", "--votes", str(path)]) == 2

    def test_too_many_test_users(self, votes_file, tmp_path):
        """Test asking for more test users than the data has returns 2"""
        argv = ["run", "--votes", str(votes_file), "--out", str(tmp_path / "r.csv")]
        assert cli.main(argv + ["--algo", "sp", "--test-users", "500"]) == 2

    def test_config_echoed(self, votes_file, tmp_path, capsys):
        """Test the resolved configuration is written to stderr"""
        argv = ["run", "--votes", str(votes_file), "--out", str(tmp_path / "r.csv")]
        assert cli.main(argv + ["--algo", "sp", "--seed", "5"] + SMALL_RUN) == 0
        err = capsys.readouterr().err
        assert '"seed": 5' in err
        assert '"pool_size": 10' in err


@pytest.mark.unit
@pytest.mark.cli
class TestParsers:
    """Test flag value parsers"""

    @pytest.mark.parametrize(
        "text, expected", [("none", None), ("NONE", None), ("0.4", 0.4), ("1", 1.0)]
    )
    def test_default_vote(self, text, expected):
        """Test accepted default votes"""
        assert parse_default_vote(text) == expected

    def test_values(self):
        """Test comma-separated sweep values"""
        assert parse_values("0, 0.1,0.25") == [0.0, 0.1, 0.25]
