from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

from dotenv import load_dotenv

from irg_ldp.domain.errors import ConfigError

_ENV_LOADED = False
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _load_environment() -> None:
    global _ENV_LOADED

    if not _ENV_LOADED:
        load_dotenv()
        _ENV_LOADED = True


def require_env(name: str) -> str:
    _load_environment()
    value = os.environ.get(name, "").strip()
    if not value:
        raise ConfigError(f"Missing required environment variable: {name}")
    return value


def optional_env(name: str, default: str) -> str:
    _load_environment()
    return os.environ.get(name, default).strip()


def parse_positive_int(name: str, raw_value: str) -> int:
    try:
        value = int(raw_value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer") from exc
    if value < 1:
        raise ConfigError(f"{name} must be at least 1")
    return value


def parse_weights(name: str, raw_value: str) -> tuple[float, ...]:
    parts = [part.strip() for part in raw_value.split(",") if part.strip()]
    if not parts:
        raise ConfigError(f"{name} must include at least one weight")

    weights: list[float] = []
    invalid: list[str] = []
    for part in parts:
        try:
            value = float(part)
        except ValueError:
            invalid.append(part)
            continue
        if not math.isfinite(value) or value <= 0:
            invalid.append(part)
            continue
        weights.append(value)

    if invalid:
        joined = ", ".join(invalid)
        raise ConfigError(
            f"{name} contains invalid weights: {joined}. Expected positive finite numbers."
        )

    return tuple(weights)


def _parse_log_level(raw_value: str) -> str:
    level = raw_value.upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"IRG_LDP_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
    return level


@dataclass(frozen=True)
class SimulationSettings:
    seed: int
    threads: int
    size_cap: int
    weight_store_cap: int
    pool_size: int
    draws: int
    results_dir: str
    log_level: str

    @classmethod
    def from_env(cls) -> SimulationSettings:
        raw_seed = optional_env("IRG_LDP_SEED", "20240917")
        try:
            seed = int(raw_seed)
        except ValueError as exc:
            raise ConfigError("IRG_LDP_SEED must be an integer") from exc
        if seed < 0:
            raise ConfigError("IRG_LDP_SEED must be non-negative")

        return cls(
            seed=seed,
            threads=parse_positive_int("IRG_LDP_THREADS", optional_env("IRG_LDP_THREADS", "1")),
            size_cap=parse_positive_int(
                "IRG_LDP_SIZE_CAP", optional_env("IRG_LDP_SIZE_CAP", "10000")
            ),
            weight_store_cap=parse_positive_int(
                "IRG_LDP_WEIGHT_STORE_CAP", optional_env("IRG_LDP_WEIGHT_STORE_CAP", "64")
            ),
            pool_size=parse_positive_int(
                "IRG_LDP_POOL_SIZE", optional_env("IRG_LDP_POOL_SIZE", "100000")
            ),
            draws=parse_positive_int("IRG_LDP_DRAWS", optional_env("IRG_LDP_DRAWS", "10000")),
            results_dir=optional_env("IRG_LDP_RESULTS_DIR", "results") or "results",
            log_level=_parse_log_level(optional_env("IRG_LDP_LOG_LEVEL", "WARNING")),
        )

    def configure_logging(self) -> None:
        logging.basicConfig(
            level=getattr(logging, self.log_level),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
