"""
Unit tests for validators module
"""
import json

import pytest

from utils.params import RawConfig
from utils.validators import ConfigValidator, ValidationResult


@pytest.fixture
def validator():
    return ConfigValidator()


@pytest.fixture
def valid_config():
    return {"N": 8, "K": 2, "X": 4, "T": 1, "X_delta": 1, "K_c": 1, "xi": 1, "seed": 7}


@pytest.mark.unit
class TestLoadJson:

    def test_reads_document(self, validator, tmp_path, valid_config):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(valid_config), encoding="utf-8")
        result = validator.load_json(path)
        assert result.valid
        assert result.cleaned == valid_config

    def test_missing_file(self, validator, tmp_path):
        result = validator.load_json(tmp_path / "absent.json")
        assert not result.valid
        assert "File not found" in result.errors[0]

    def test_malformed_json(self, validator, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"N\": 8,", encoding="utf-8")
        result = validator.load_json(path)
        assert not result.valid
        assert "Invalid JSON" in result.errors[0]


@pytest.mark.unit
class TestValidateConfig:

    def test_valid_config(self, validator, valid_config):
        result = validator.validate_config(valid_config)
        assert result.valid
        assert result.errors == []
        assert RawConfig(**result.cleaned).N == 8

    def test_optional_field_size(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "q": 11})
        assert result.valid
        assert result.cleaned["q"] == 11

    def test_null_field_size_allowed(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "q": None})
        assert result.valid
        assert result.cleaned["q"] is None

    def test_not_an_object(self, validator):
        result = validator.validate_config([1, 2, 3])
        assert not result.valid
        assert "JSON object" in result.errors[0]

    def test_unknown_key(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "servers": 8})
        assert not result.valid
        assert any("servers" in e for e in result.errors)

    def test_missing_key(self, validator, valid_config):
        del valid_config["X_delta"]
        result = validator.validate_config(valid_config)
        assert not result.valid
        assert any("X_delta" in e for e in result.errors)

    @pytest.mark.parametrize("value", [True, 2.0, "8", None])
    def test_non_integer_rejected(self, validator, valid_config, value):
        result = validator.validate_config({**valid_config, "N": value})
        assert not result.valid
        assert any("N must be an integer" in e for e in result.errors)

    @pytest.mark.parametrize("key", ["N", "K", "X", "T", "K_c", "xi"])
    def test_positive_keys(self, validator, valid_config, key):
        result = validator.validate_config({**valid_config, key: 0})
        assert not result.valid
        assert any(f"{key} must be >= 1" in e for e in result.errors)

    def test_negative_increment_security(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "X_delta": -1})
        assert not result.valid

    def test_tiny_field_rejected(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "q": 1})
        assert not result.valid

    def test_errors_are_collected(self, validator):
        result = validator.validate_config({"N": 0, "bogus": 1})
        assert not result.valid
        assert len(result.errors) >= 3

    def test_warnings(self, validator, valid_config):
        result = validator.validate_config({**valid_config, "X_delta": 0, "xi": 200_000, "q": 100_003})
        assert result.valid
        assert len(result.warnings) == 3


@pytest.mark.unit
class TestValidateSchedule:

    def test_valid_schedule(self, validator):
        data = [
            {"read_dropouts": [3], "write_dropouts": [7, 5]},
            {"read_dropouts": [], "write_dropouts": []},
        ]
        result = validator.validate_schedule(data, N=8)
        assert result.valid
        assert result.cleaned == [((3,), (5, 7)), ((), ())]

    def test_empty_schedule(self, validator):
        result = validator.validate_schedule([])
        assert result.valid
        assert result.cleaned == []

    def test_not_an_array(self, validator):
        result = validator.validate_schedule({"read_dropouts": []})
        assert not result.valid

    def test_wrong_keys(self, validator):
        result = validator.validate_schedule([{"read_dropouts": [1]}])
        assert not result.valid
        assert "Round 1" in result.errors[0]

    def test_duplicate_server(self, validator):
        result = validator.validate_schedule([{"read_dropouts": [2, 2], "write_dropouts": []}])
        assert not result.valid
        assert "duplicate" in result.errors[0]

    def test_out_of_range(self, validator):
        data = [{"read_dropouts": [], "write_dropouts": []},
                {"read_dropouts": [], "write_dropouts": [9]}]
        result = validator.validate_schedule(data, N=8)
        assert not result.valid
        assert result.errors[0].startswith("Round 2")

    def test_range_unchecked_without_server_count(self, validator):
        result = validator.validate_schedule([{"read_dropouts": [], "write_dropouts": [9]}])
        assert result.valid

    def test_boolean_server_rejected(self, validator):
        result = validator.validate_schedule([{"read_dropouts": [True], "write_dropouts": []}])
        assert not result.valid


@pytest.mark.unit
class TestValidationResult:

    def test_defaults(self):
        result = ValidationResult(valid=True)
        assert result.errors == []
        assert result.warnings == []
        assert result.cleaned is None
