"""Tests for configuration loading and rational parsing."""
from fractions import Fraction

import pytest
from pydantic import ValidationError

from slow_birkhoff.utils.config import (
    PieceConfig,
    expand_geometric,
    get_settings,
    load_run_config,
    parse_run_config,
    reload_settings,
)
from slow_birkhoff.utils.errors import ConfigError
from slow_birkhoff.utils.rationals import format_rational, parse_rational


class TestRationals:

    @pytest.mark.parametrize("value, expected", [
        ("1/16", Fraction(1, 16)),
        ("3/2^5", Fraction(3, 32)),
        ("0.125", Fraction(1, 8)),
        (0.1, Fraction(1, 10)),
        (7, Fraction(7)),
        (Fraction(2, 3), Fraction(2, 3)),
    ])
    def test_parse(self, value, expected):
        assert parse_rational(value) == expected

    @pytest.mark.parametrize("value", [True, "abc", "1/0", None, [1]])
    def test_parse_rejects(self, value):
        with pytest.raises(ValueError):
            parse_rational(value)

    def test_format(self):
        assert format_rational(Fraction(3)) == "3/1"
        assert format_rational(Fraction(6, 8)) == "3/4"


class TestRunConfig:

    def test_load(self, fast_config):
        config = load_run_config(fast_config)
        assert config.deviations == [Fraction(1, 16), Fraction(1, 32)]
        assert config.lower_scales == [3, 63]
        assert config.mc.samples == 2000 and config.mc.seed == 7
        assert config.safety == 2
        assert config.stages == 2

    def test_geometric(self):
        assert expand_geometric("geometric:1/16,1/2,3") == [Fraction(1, 16), Fraction(1, 32), Fraction(1, 64)]
        config = parse_run_config({
            "deviations": "geometric:1/16,1/2,3",
            "lower_scales": "geometric:10,10,3",
        })
        assert config.lower_scales == [10, 100, 1000]

    def test_over_budget(self):
        with pytest.raises(ConfigError, match="exceeds budget"):
            parse_run_config({"deviations": ["1/8", "1/16"], "lower_scales": [1, 2], "budget": "1/4"})

    def test_scales_must_increase(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            parse_run_config({"deviations": ["1/64", "1/64"], "lower_scales": [5, 5]})

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match="mc.sample"):
            parse_run_config({"mc": {"sample": 10}})

    def test_syntax_error_has_position(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("dimension = 1\ndeviations = [\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="line"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.toml")

    def test_bad_f0(self):
        with pytest.raises(ConfigError, match="f0"):
            parse_run_config({"f0": "linear:2"})

    def test_piece_region(self):
        with pytest.raises(ValidationError):
            PieceConfig(value="1", intervals=["[0,1)"], boxes=[["[0,1)"]])
        with pytest.raises(ValidationError):
            PieceConfig(value="1")
        assert PieceConfig(value="1/2", intervals=["[0,1)"]).model_dump(mode="json")["value"] == "1/2"


class TestEngineSettings:

    def test_singleton(self):
        assert get_settings() is get_settings()

    def test_reload(self):
        settings = reload_settings(exact_threshold=16, log_level="debug")
        assert get_settings() is settings
        assert settings.log_level == "DEBUG"

    def test_invalid_log_level(self):
        with pytest.raises(ConfigError):
            reload_settings(log_level="LOUD")
