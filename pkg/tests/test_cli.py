"""End-to-end tests for the construct, verify and trace commands."""
import json
from fractions import Fraction
from pathlib import Path

import pytest

from slow_birkhoff.main import build_parser, main
from slow_birkhoff.services.reports import REPORT_FIELDS, TRACE_FIELDS, VERIFY_FIELDS
from slow_birkhoff.utils.config import reload_settings

from tests.conftest import FAST_CONFIG, read_rows


def write_spec(path, towers, f0="constant:1"):
    path.write_text(json.dumps({"version": "1.0", "f0": f0, "towers": towers}), encoding="utf-8")
    return path


ONE_TOWER = [{"d": "1/2^14", "height": 1024, "rank_floor": 10}]

LATTICE_CONFIG = """\
dimension = 2
f0 = "constant:1"
deviations = ["1/8"]
lower_scales = [1]
budget = "1/4"
delta0 = "1/8"
precision = 20
safety = 1

[mc]
samples = 500
seed = 0
"""

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def constructed(tmp_path_factory):
    """Run the fast two-stage config once for the whole module."""
    root = tmp_path_factory.mktemp("construct")
    config = root / "run.toml"
    config.write_text(FAST_CONFIG, encoding="utf-8")
    out = root / "out"
    code = main(["construct", "--config", str(config), "--out", str(out)])
    return code, out


class TestConstruct:

    def test_exit_and_files(self, constructed):
        code, out = constructed
        assert code == 0
        assert (out / "function_spec.json").exists()
        header = (out / "report.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(REPORT_FIELDS)

    def test_report_rows(self, constructed):
        _, out = constructed
        rows = read_rows(out / "report.csv")
        assert [row["k"] for row in rows] == ["1", "2"]
        assert [row["N_k"] for row in rows] == ["4", "2048"]
        assert rows[1]["integral_fk"] == "105/128"
        assert rows[0]["eps_k"] == "1/8"
        assert all(Fraction(row["final_prob"]) > Fraction(row["floor"]) - Fraction(float(row["final_radius"]))
                   for row in rows)

    def test_rerun_is_byte_identical(self, constructed, fast_config, tmp_path):
        _, out = constructed
        assert main(["construct", "--config", str(fast_config), "--out", str(tmp_path)]) == 0
        for name in ["report.csv", "function_spec.json"]:
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_lattice_run(self, tmp_path):
        config = tmp_path / "lattice.toml"
        config.write_text(LATTICE_CONFIG, encoding="utf-8")
        out = tmp_path / "out"
        assert main(["construct", "--config", str(config), "--out", str(out)]) == 0
        rows = read_rows(out / "report.csv")
        assert [(row["N_k"], row["h_k"]) for row in rows] == [("2", "64")]
        assert rows[0]["eps_k"] == "1/4"
        assert rows[0]["integral_fk"] == "3/4"
        assert rows[0]["method"] == "monte-carlo"
        spec = json.loads((out / "function_spec.json").read_text(encoding="utf-8"))
        assert spec["dimension"] == 2
        assert spec["towers"] == [{"d": "1/2^7", "height": 64, "rank_floor": 6, "dimension": 2}]
        assert main(["verify", "--spec", str(out / "function_spec.json")]) == 0
        verified = read_rows(out / "verify.csv")
        assert verified[0]["final_prob"] == rows[0]["final_prob"]

    def test_over_budget_config(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('deviations = ["1/8", "1/16"]\nlower_scales = [1, 2]\nbudget = "1/4"\n', encoding="utf-8")
        assert main(["construct", "--config", str(path), "--out", str(tmp_path)]) == 1
        assert not (tmp_path / "report.csv").exists()


class TestVerify:

    def test_round_trip_is_bit_for_bit(self, constructed):
        _, out = constructed
        assert main(["verify", "--spec", str(out / "function_spec.json")]) == 0
        verified = read_rows(out / "verify.csv")
        reported = read_rows(out / "report.csv")
        assert list(verified[0].keys()) == VERIFY_FIELDS
        assert [row["final_prob"] for row in verified] == [row["final_prob"] for row in reported]
        assert all(row["passed"] == "true" for row in verified)

    def test_deleted_tower_fails_its_stage(self, constructed, tmp_path):
        _, out = constructed
        raw = json.loads((out / "function_spec.json").read_text(encoding="utf-8"))
        del raw["towers"][1]
        spec = tmp_path / "function_spec.json"
        spec.write_text(json.dumps(raw), encoding="utf-8")
        assert main(["verify", "--spec", str(spec)]) == 2
        rows = read_rows(tmp_path / "verify.csv")
        assert [row["passed"] for row in rows] == ["true", "false"]

    def test_truncated_spec(self, constructed, tmp_path):
        _, out = constructed
        text = (out / "function_spec.json").read_text(encoding="utf-8")
        spec = tmp_path / "function_spec.json"
        spec.write_text(text[:40], encoding="utf-8")
        assert main(["verify", "--spec", str(spec)]) == 1

    def test_stage_override(self, tmp_path):
        spec = write_spec(tmp_path / "function_spec.json", ONE_TOWER)
        code = main(["verify", "--spec", str(spec), "--stage", "4,1/32,1/20", "--samples", "500"])
        assert code == 0
        rows = read_rows(tmp_path / "verify.csv")
        assert rows[0]["floor"] == "9/10"
        assert rows[0]["integral_f"] == "15/16"

    def test_bad_stage_option(self, tmp_path):
        spec = write_spec(tmp_path / "function_spec.json", ONE_TOWER)
        assert main(["verify", "--spec", str(spec), "--stage", "4,1/32"]) == 1


class TestTrace:

    def test_constant_has_no_deviation(self, tmp_path):
        spec = write_spec(tmp_path / "function_spec.json", [])
        assert main(["trace", "--spec", str(spec), "--points", "3", "--nmax", "20"]) == 0
        rows = read_rows(tmp_path / "trace.csv")
        assert list(rows[0].keys()) == TRACE_FIELDS
        assert len(rows) == 60
        assert all(row["abs_deviation"] == "0/1" for row in rows)

    def test_point_in_first_level(self, tmp_path):
        # level 1 of the tower over [0, 2^-14) is the cell starting at 1/2
        spec = write_spec(tmp_path / "function_spec.json", ONE_TOWER)
        assert main(["trace", "--spec", str(spec), "--x", "1/2", "--nmax", "1023"]) == 0
        rows = read_rows(tmp_path / "trace.csv")
        assert len(rows) == 1023
        assert all(row["abs_deviation"] == "15/16" for row in rows)

    def test_exact_cycle_row(self, tmp_path):
        f0 = [{"value": "3", "intervals": ["[0,1/4)"]}, {"value": "1", "intervals": ["[1/4,1)"]}]
        spec = write_spec(tmp_path / "function_spec.json", [], f0=f0)
        assert main(["trace", "--spec", str(spec), "--points", "5", "--nmax", "4", "--seed", "3"]) == 0
        rows = [row for row in read_rows(tmp_path / "trace.csv") if row["N"] == "4"]
        assert len(rows) == 5
        assert all(row["abs_deviation"] == "0/1" for row in rows)

    def test_log_spaced(self, tmp_path):
        spec = write_spec(tmp_path / "function_spec.json", ONE_TOWER)
        assert main(["trace", "--spec", str(spec), "--x", "1/2", "--nmax", "100000", "--log-spaced"]) == 0
        rows = read_rows(tmp_path / "trace.csv")
        assert rows[-1]["N"] == "100000"

    def test_step_budget(self, tmp_path):
        reload_settings(trace_max_steps=10)
        spec = write_spec(tmp_path / "function_spec.json", [])
        assert main(["trace", "--spec", str(spec), "--points", "1", "--nmax", "100"]) == 1

    def test_bad_point(self, tmp_path):
        spec = write_spec(tmp_path / "function_spec.json", [])
        assert main(["trace", "--spec", str(spec), "--x", "3/2", "--nmax", "5"]) == 1


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


@pytest.mark.slow
def test_desk_scale_rerun_is_byte_identical(tmp_path):
    config = CONFIGS / "desk_scale.toml"
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["construct", "--config", str(config), "--out", str(first)]) == 0
    assert main(["construct", "--config", str(config), "--out", str(second)]) == 0
    assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
    rows = read_rows(first / "report.csv")
    assert [row["k"] for row in rows] == ["1", "2", "3"]
