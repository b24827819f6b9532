"""
Run Configuration
=================

Settings of one command-line run, merged from a JSON config file, the
environment and command-line flags (flags win).
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import find_dotenv, load_dotenv

from models.gmm_model import GmmFitConfig
from models.mixture import MoeEmConfig, NoisyMoeConfig
from models.regression import LtsConfig
from models.simulation import SimulationConfig
from models.transition import EgConfig
from utils.exceptions import ConfigError, UnsupportedFamily, ValidationError
from utils.helpers import default_threads

logger = logging.getLogger(__name__)

SEED_ENV = "NOISY_MOE_SEED"

SECTION_KEYS = frozenset({"gmm", "lts", "eg", "moe"})
NOISY_KEYS = frozenset({"alpha", "gmm_pool", "screen_radius", "error_family"})

COMMAND_KEYS = {
    "fit": frozenset(
        {"method", "k", "response", "k_candidates", "threshold"}
        | NOISY_KEYS
        | SECTION_KEYS
    ),
    "predict": frozenset(),
    "simulate": frozenset({"simulation", "emit_latents", "corruption"}),
    "bench": frozenset(
        {
            "simulation",
            "grid_kind",
            "grid",
            "corruption",
            "methods",
            "reps",
            "freeze_truth",
            "timing",
        }
        | NOISY_KEYS
        | SECTION_KEYS
    ),
    "evaluate": frozenset(
        {"method", "methods", "k", "n_train", "reps", "standardize", "response"}
        | NOISY_KEYS
        | SECTION_KEYS
    ),
    "select-k": frozenset({"k_candidates", "threshold", "gmm"}),
}


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON config file whose top level is an object

    Raises:
        ConfigError: If the file is missing, not JSON or not an object
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")
    return data


def resolve_seed(flag: Optional[int], file_value: Optional[Any]) -> int:
    """
    Seed precedence: flag, then config file, then NOISY_MOE_SEED, then 0

    A .env file in the working directory is honoured for the variable.
    """
    if flag is not None:
        return _non_negative_int(flag, "seed")
    if file_value is not None:
        return _non_negative_int(file_value, "seed")
    load_dotenv(find_dotenv(usecwd=True))
    env_value = os.getenv(SEED_ENV)
    if env_value not in (None, ""):
        try:
            return _non_negative_int(int(env_value), SEED_ENV)
        except ValueError as e:
            raise ConfigError(
                f"{SEED_ENV} must be an integer, got {env_value!r}"
            ) from e
    return 0


def _non_negative_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class RunConfig:
    """
    Validated settings of one command

    Attributes:
        command (str): Subcommand name
        seed (int): Base seed of every random stream in the run
        threads (int): Thread count fed to every n_jobs setting
        settings (Dict[str, Any]): Command-specific settings
    """

    command: str
    seed: int = 0
    threads: int = 1
    settings: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMAND_KEYS:
            raise ConfigError(f"Unknown command: {self.command}")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int):
            raise ConfigError(f"threads must be an integer, got {self.threads!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        unknown = set(self.settings) - COMMAND_KEYS[self.command]
        if unknown:
            raise ConfigError(
                f"Unknown settings for '{self.command}': {sorted(unknown)}"
            )
        for name in SECTION_KEYS | {"simulation"}:
            section = self.settings.get(name)
            if section is None:
                continue
            if not isinstance(section, dict):
                raise ConfigError(f"Config section '{name}' must be an object")
            if "seed" in section or "n_jobs" in section:
                raise ConfigError(
                    f"Set seed and threads at the top level, not in '{name}'"
                )

        # build every algorithm config once so bad values fail before running
        self.gmm_config()
        self.lts_config()
        self.eg_config()
        self.moe_config()
        self.noisy_config()
        if "simulation" in self.settings:
            self.simulation_config()

    @classmethod
    def build(
        cls,
        command: str,
        file_data: Optional[Dict[str, Any]] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> "RunConfig":
        """
        Merge config file values with flag values

        Args:
            command (str): Subcommand name
            file_data (Dict[str, Any], optional): Parsed config file
            overrides (Dict[str, Any], optional): Flag values; None entries
                mean the flag was not given

        Returns:
            RunConfig: Validated configuration

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        file_data = dict(file_data or {})
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

        seed = resolve_seed(overrides.pop("seed", None), file_data.pop("seed", None))
        threads = overrides.pop("threads", file_data.pop("threads", None))
        if threads is None:
            threads = default_threads()

        settings = file_data
        settings.update(overrides)
        logger.debug(f"Run config for {command}: seed={seed}, threads={threads}")
        return cls(command=command, seed=seed, threads=threads, settings=settings)

    def get(self, key: str, default: Any = None) -> Any:
        value = self.settings.get(key)
        return default if value is None else value

    def _section(self, name: str, builder, **fixed):
        data = dict(self.settings.get(name) or {})
        data.update(fixed)
        try:
            return builder(data)
        except (ValidationError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid '{name}' settings: {e}") from e

    def gmm_config(self) -> GmmFitConfig:
        return self._section(
            "gmm", GmmFitConfig.from_dict, seed=self.seed, n_jobs=self.threads
        )

    def lts_config(self) -> LtsConfig:
        return self._section(
            "lts", LtsConfig.from_dict, seed=self.seed, n_jobs=self.threads
        )

    def eg_config(self) -> EgConfig:
        return self._section("eg", EgConfig.from_dict)

    def moe_config(self) -> MoeEmConfig:
        return self._section(
            "moe", MoeEmConfig.from_dict, seed=self.seed, n_jobs=self.threads
        )

    def noisy_config(self) -> NoisyMoeConfig:
        values = {k: v for k, v in self.settings.items() if k in NOISY_KEYS}
        try:
            return NoisyMoeConfig(
                gmm=self.gmm_config(),
                lts=self.lts_config(),
                eg=self.eg_config(),
                n_jobs=self.threads,
                **values,
            )
        except (ValidationError, UnsupportedFamily, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid noisy MoE settings: {e}") from e

    def simulation_config(self) -> SimulationConfig:
        return self._section(
            "simulation", SimulationConfig.from_dict, seed=self.seed
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "threads": self.threads,
            "settings": dict(self.settings),
        }
