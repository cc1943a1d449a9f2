"""Tests for the spherecover command line."""
import json
import math

import pytest

from app.core import config
from app.main import main
from app.services.report import column, dumps, read_csv

BERNOULLI = {"source_alphabet": ["0", "1"], "P": [0.6, 0.4], "M": "P", "rho": "hamming"}
COUNTING = {"source_alphabet": ["0", "1"], "P": [0.4, 0.6], "M": "counting", "rho": "hamming"}
HYPOTHESIS = {"source_alphabet": ["0", "1"], "P": [0.2, 0.8], "M": [0.5, 0.5], "rho": "hamming"}


def write_model(tmp_path, payload, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def run(tmp_path, *args, name="out.csv"):
    """Run the CLI writing to a CSV file; returns (exit code, parsed table or None)."""
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, (read_csv(out) if code == 0 else None)


class TestExitCodes:
    """Test cases for error reporting."""

    def test_unknown_subcommand(self, capsys):
        assert main(["nonsense"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_model_file(self, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        assert main(["rate", "--model", str(missing), "--D", "0.1"]) == 2
        assert "absent.json" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        path = write_model(tmp_path, COUNTING)
        out = tmp_path / "missing" / "rate.csv"
        assert main(["rate", "--model", path, "--D", "0.1", "--out", str(out)]) == 1
        assert "cannot write" in capsys.readouterr().err
        assert not out.exists()

    def test_invalid_model(self, tmp_path):
        path = write_model(tmp_path, dict(COUNTING, P=[0.0, 1.0]))
        assert main(["rate", "--model", path, "--D", "0.1"]) == 2

    def test_bad_grid(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        assert main(["rate", "--model", path, "--grid", "0.3:0.1:0.1"]) == 1

    def test_unsorted_distortions(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        assert main(["rate", "--model", path, "--D", "0.3,0.1"]) == 1

    def test_cap_exceeded(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        assert main(["simulate", "--model", path, "--exhaustive", "--n", "5", "--R", "0.3", "--D", "0"]) == 4

    def test_both_rate_flags(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        assert main(["exponent", "--model", path, "--R", "-0.62", "--r", "0.62", "--D", "0.3"]) == 1


class TestRateCommand:
    """Test cases for the rate subcommand."""

    def test_grid_rows_and_metadata(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        code, table = run(tmp_path, "rate", "--model", path, "--grid", "0.0:0.3:0.1")
        assert code == 0
        assert column(table, "D") == [0.0, 0.1, 0.2, 0.3]
        assert table.metadata["units"] == "nats"
        assert len(table.metadata["model"]) == 16

    def test_bits_and_nats_differ_by_log2(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        _, nats = run(tmp_path, "rate", "--model", path, "--D", "0.1,0.3", name="nats.csv")
        _, bits = run(tmp_path, "rate", "--model", path, "--D", "0.1,0.3", "--units", "bits", name="bits.csv")
        for a, b in zip(column(nats, "rate"), column(bits, "rate")):
            assert a == pytest.approx(b * config.LN2, rel=1e-12)

    def test_empty_grid_writes_header_only(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        code, table = run(tmp_path, "rate", "--model", path)
        assert code == 0
        assert table.columns == ["D", "rate", "lambda"]
        assert table.rows == []

    def test_hypothesis_model_at_zero(self, tmp_path):
        """P = P1, M = P0 at D = 0 gives -H(P1||P0)."""
        path = write_model(tmp_path, HYPOTHESIS)
        _, table = run(tmp_path, "rate", "--model", path, "--D", "0")
        divergence = 0.2 * math.log(0.2 / 0.5) + 0.8 * math.log(0.8 / 0.5)
        assert column(table, "rate") == [pytest.approx(-divergence, abs=1e-9)]

    def test_csv_round_trips(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        out = tmp_path / "rate.csv"
        assert main(["rate", "--model", path, "--grid", "0.0:0.6:0.1", "--out", str(out)]) == 0
        assert dumps(read_csv(out)) == out.read_text()


class TestExponentCommands:
    """Test cases for the exponent subcommands."""

    def test_sweep_regimes(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        code, table = run(tmp_path, "exponent-sweep", "--model", path, "--D", "0.3", "--grid", "0.60:0.65:0.01")
        assert code == 0
        assert table.columns == ["r", "D", "exponent", "regime"]
        regimes = column(table, "regime")
        assert regimes[0] == "infinite"
        assert regimes[-1] == "zero"
        assert "finite" in regimes
        assert float(table.metadata["r_infinite"]) == pytest.approx(0.610864, abs=1e-5)

    def test_sweep_is_byte_identical_across_runs(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        args = ["exponent-sweep", "--model", path, "--D", "0.3", "--grid", "0.612:0.638:0.002"]
        first, second = tmp_path / "first.csv", tmp_path / "second.csv"
        assert main(args + ["--out", str(first)]) == 0
        assert main(args + ["--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        assert set(column(read_csv(first), "regime")) == {"finite"}

    def test_single_exponent(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        code, table = run(tmp_path, "exponent", "--model", path, "--r", "0.625", "--D", "0.3")
        assert code == 0
        assert column(table, "regime") == ["finite"]
        assert 0 < column(table, "exponent")[0] < math.inf

    def test_hoeffding_in_bits(self, tmp_path):
        path = write_model(tmp_path, HYPOTHESIS)
        code, table = run(tmp_path, "hoeffding", "--model", path, "--r", "0.05", "--units", "bits")
        assert code == 0
        assert column(table, "r") == [pytest.approx(0.05)]
        assert column(table, "regime") == ["finite"]

    def test_marton_regimes(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        code, table = run(tmp_path, "marton", "--model", path, "--R", "0.3,0.36,0.5", "--D", "0.1")
        assert code == 0
        assert column(table, "regime") == ["zero", "finite", "infinite"]

    def test_concentration_reports_bound(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        code, table = run(tmp_path, "concentration", "--model", path, "--r", "0.625", "--D", "0.3")
        assert code == 0
        assert column(table, "talagrand") == [pytest.approx(0.3**2 / 2 - 0.625)]


class TestSimulateAndOracle:
    """Test cases for simulation and oracle subcommands."""

    def test_exhaustive_optimum(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        code, table = run(
            tmp_path, "simulate", "--model", path, "--exhaustive", "--n", "3", "--R", repr(math.log(4) / 3), "--D", "0"
        )
        assert code == 0
        assert column(table, "error_prob")[0] == pytest.approx(0.352, abs=1e-12)
        assert table.columns[:3] == ["n", "D", "R_nats"]

    def test_simulate_rows_per_n(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        code, table = run(
            tmp_path, "simulate", "--model", path, "--n", "6,8", "--r", "0.625", "--D", "0.3",
            "--trials", "2", "--seed", "7",
        )
        assert code == 0
        assert column(table, "n") == [6, 8]
        assert column(table, "seed") == [7, 7]
        assert column(table, "R_nats") == [pytest.approx(-0.625)] * 2
        for floor, error in zip(column(table, "error_floor"), column(table, "error_prob")):
            assert 0.0 <= floor <= error + 1e-9

    def test_universality_rows(self, tmp_path):
        path = write_model(tmp_path, COUNTING)
        code, table = run(
            tmp_path, "simulate", "--model", path, "--n", "6", "--R", "0.5", "--D", "0.2",
            "--sources", "0.4,0.6;0.5,0.5",
        )
        assert code == 0
        assert len(table.rows) == 2
        assert table.columns[-1] == "source"

    def test_rate_oracle(self, tmp_path):
        path = write_model(tmp_path, BERNOULLI)
        code, table = run(tmp_path, "oracle", "--model", path, "--D", "0.3", "--mesh", "200")
        assert code == 0
        assert column(table, "rate")[0] == pytest.approx(-0.639323, abs=1e-6)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
