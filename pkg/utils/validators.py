"""
Validators for configuration and schedule documents
Checks key sets, types and ranges before anything is derived
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import structlog

logger = structlog.get_logger()


@dataclass
class ValidationResult:
    """Result of document validation"""
    valid: bool
    errors: List[str] = None
    warnings: List[str] = None
    cleaned: Any = None

    def __post_init__(self):
        if self.errors is None:
            self.errors = []
        if self.warnings is None:
            self.warnings = []


class ConfigValidator:
    """Validates scheme configuration and dropout schedule documents"""

    REQUIRED_KEYS = ['N', 'K', 'X', 'T', 'X_delta', 'K_c', 'xi', 'seed']
    OPTIONAL_KEYS = ['q']
    SCHEDULE_KEYS = {'read_dropouts', 'write_dropouts'}

    # Soft limits that only produce warnings
    LARGE_XI = 100_000
    LARGE_FIELD_FACTOR = 1000

    def load_json(self, path: Union[str, Path]) -> ValidationResult:
        """
        Read a JSON document

        Args:
            path: File to read

        Returns:
            ValidationResult with the parsed document in `cleaned`
        """
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return ValidationResult(valid=True, cleaned=json.load(f))
        except FileNotFoundError:
            return ValidationResult(valid=False, errors=[f"File not found: {path}"])
        except json.JSONDecodeError as e:
            return ValidationResult(valid=False, errors=[f"Invalid JSON in {path}: {e}"])

    def validate_config(self, data: Any) -> ValidationResult:
        """
        Validate a configuration document

        Args:
            data: Parsed JSON object

        Returns:
            ValidationResult with a keyword dict for RawConfig in `cleaned`
        """
        result = ValidationResult(valid=True)

        if not isinstance(data, dict):
            result.valid = False
            result.errors.append("Configuration must be a JSON object")
            return result

        allowed = set(self.REQUIRED_KEYS) | set(self.OPTIONAL_KEYS)
        unknown = sorted(set(data) - allowed)
        if unknown:
            result.errors.append(f"Unknown configuration keys: {', '.join(unknown)}")
        missing = [key for key in self.REQUIRED_KEYS if key not in data]
        if missing:
            result.errors.append(f"Missing configuration keys: {', '.join(missing)}")

        cleaned: Dict[str, Any] = {}
        for key in self.REQUIRED_KEYS + self.OPTIONAL_KEYS:
            if key not in data:
                continue
            value = data[key]
            if key == 'q' and value is None:
                cleaned[key] = None
                continue
            if isinstance(value, bool) or not isinstance(value, int):
                result.errors.append(f"{key} must be an integer, got {value!r}")
                continue
            cleaned[key] = value

        for key in ('N', 'K', 'X', 'T', 'K_c', 'xi'):
            if key in cleaned and cleaned[key] < 1:
                result.errors.append(f"{key} must be >= 1, got {cleaned[key]}")
        if 'X_delta' in cleaned and cleaned['X_delta'] < 0:
            result.errors.append(f"X_delta must be >= 0, got {cleaned['X_delta']}")
        if cleaned.get('q') is not None and cleaned['q'] < 2:
            result.errors.append(f"q must be >= 2, got {cleaned['q']}")

        if result.errors:
            result.valid = False
            return result

        if cleaned['X_delta'] == 0:
            result.warnings.append("X_delta=0: increments are not protected")
        if cleaned['xi'] > self.LARGE_XI:
            result.warnings.append(f"xi={cleaned['xi']} makes every round slow")
        q = cleaned.get('q')
        if q is not None and q > self.LARGE_FIELD_FACTOR * cleaned['N']:
            result.warnings.append(f"q={q} is far larger than needed; audits will be out of budget")

        result.cleaned = cleaned
        return result

    def validate_schedule(self, data: Any, N: Optional[int] = None) -> ValidationResult:
        """
        Validate a dropout schedule document

        Args:
            data: Parsed JSON array of {"read_dropouts": [...], "write_dropouts": [...]}
            N: Server count, when known, for range checks

        Returns:
            ValidationResult with a list of (read, write) tuples in `cleaned`
        """
        result = ValidationResult(valid=True)

        if not isinstance(data, list):
            result.valid = False
            result.errors.append("Schedule must be a JSON array")
            return result

        rounds = []
        for index, entry in enumerate(data, start=1):
            if not isinstance(entry, dict):
                result.errors.append(f"Round {index}: entry must be an object")
                continue
            if set(entry) != self.SCHEDULE_KEYS:
                result.errors.append(
                    f"Round {index}: keys must be exactly read_dropouts, write_dropouts"
                )
                continue
            phases = []
            for key in ('read_dropouts', 'write_dropouts'):
                servers = entry[key]
                if not isinstance(servers, list) or any(
                    isinstance(n, bool) or not isinstance(n, int) for n in servers
                ):
                    result.errors.append(f"Round {index}: {key} must be a list of integers")
                    break
                if len(set(servers)) != len(servers):
                    result.errors.append(f"Round {index}: duplicate server in {key}")
                    break
                if N is not None and any(not 1 <= n <= N for n in servers):
                    result.errors.append(f"Round {index}: {key} outside servers 1..{N}")
                    break
                phases.append(tuple(sorted(servers)))
            else:
                rounds.append((phases[0], phases[1]))

        if result.errors:
            result.valid = False
            logger.debug("Schedule rejected", errors=len(result.errors))
            return result

        result.cleaned = rounds
        return result
