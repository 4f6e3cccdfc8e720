"""
Configuration settings for the private read/write simulator
"""
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import structlog


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


@dataclass
class SchemeConfig:
    """Simulation behaviour"""
    max_workers: int = int(os.getenv("MAX_WORKERS", str(min(8, os.cpu_count() or 1))))
    verify_rounds: bool = _env_flag("VERIFY_ROUNDS", "true")
    default_seed: int = int(os.getenv("DEFAULT_SEED", "0"))


@dataclass
class AuditConfig:
    """Exact-enumeration limits"""
    enumeration_budget: int = int(os.getenv("ENUMERATION_BUDGET", str(10 ** 7)))
    chunk_size: int = int(os.getenv("AUDIT_CHUNK_SIZE", str(2 ** 18)))


@dataclass
class OutputConfig:
    """Where traces and snapshots go by default"""
    output_dir: Path = Path(os.getenv("OUTPUT_DIR", "./data/traces"))

    def ensure_output_dir(self) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir


@dataclass
class AppConfig:
    """Main application configuration"""
    app_name: str = "Coded Private Read/Write Simulator"
    app_version: str = "1.0.0"
    debug_mode: bool = _env_flag("DEBUG", "false")
    log_level: str = os.getenv("LOG_LEVEL", "INFO")


@dataclass
class Config:
    """Main configuration container"""
    scheme: SchemeConfig = None
    audit: AuditConfig = None
    output: OutputConfig = None
    app: AppConfig = None

    def __post_init__(self):
        self.scheme = self.scheme or SchemeConfig()
        self.audit = self.audit or AuditConfig()
        self.output = self.output or OutputConfig()
        self.app = self.app or AppConfig()


def configure_logging(level: Optional[str] = None) -> None:
    """Route structlog output to stderr, filtered at the given level"""
    name = (level or config.app.log_level).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level}")
    if config.app.debug_mode:
        numeric = logging.DEBUG

    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


# Global config instance
config = Config()
