"""
Settings for the solvers and benchmarks.

Resolution order: built-in defaults, then a psnp.toml file, then environment
variables (a .env file in the project root is loaded first). Command-line
flags are applied on top by the caller.
"""
import copy
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import toml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).absolute().parent.parent.parent
CONFIG_FILENAME = "psnp.toml"

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "solver": {
        "sigma": 1e-4,
        "gamma": 0.5,
        "max_iter": 10_000,
        "max_backtracks": 50,
        "max_newton_backtracks": 20,
        "dense_threshold": 500,
    },
    "bench": {
        "trials": 20,
        "threads": 1,
        "seed": 0,
    },
    "logging": {
        "level": "INFO",
    },
}

# environment variable -> (section, key)
ENV_OVERRIDES: Dict[str, Tuple[str, str]] = {
    "PSNP_THREADS": ("bench", "threads"),
    "PSNP_TRIALS": ("bench", "trials"),
    "PSNP_SEED": ("bench", "seed"),
    "PSNP_MAX_ITER": ("solver", "max_iter"),
    "PSNP_LOG_LEVEL": ("logging", "level"),
}


def find_config_file() -> Optional[Path]:
    """Check PSNP_CONFIG, then psnp.toml in the project root and in src/."""
    explicit = os.getenv("PSNP_CONFIG")
    if explicit:
        path = Path(explicit)
        if not path.exists():
            raise FileNotFoundError(f"PSNP_CONFIG points to a missing file: {path}")
        return path

    possible_paths = [
        PROJECT_ROOT / CONFIG_FILENAME,
        PROJECT_ROOT / "src" / CONFIG_FILENAME,
    ]
    for path in possible_paths:
        if path.exists():
            return path
    return None


def _coerce(value: Any, default: Any, name: str) -> Any:
    """Convert value to the type of default."""
    caster: Callable[[Any], Any] = type(default)
    if caster is str:
        return str(value).upper() if name == "level" else str(value)
    try:
        if caster is int and isinstance(value, str):
            return int(float(value)) if "e" in value.lower() else int(value)
        return caster(value)
    except (TypeError, ValueError):
        raise ValueError(f"Setting '{name}' expects {caster.__name__}, got {value!r}")


def _merge(settings: Dict[str, Dict[str, Any]], overrides: Dict[str, Any], source: str) -> None:
    for section, values in overrides.items():
        if section not in settings or not isinstance(values, dict):
            logger.warning(f"Ignoring unknown section [{section}] in {source}")
            continue
        for key, value in values.items():
            if key not in settings[section]:
                logger.warning(f"Ignoring unknown setting {section}.{key} in {source}")
                continue
            settings[section][key] = _coerce(value, DEFAULTS[section][key], key)


def load_settings(config_path: Optional[str] = None, env_file: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """
    Resolve settings from defaults, TOML and the environment.

    Args:
        config_path: TOML file to use instead of the usual search
        env_file: .env file to load instead of the one in the project root

    Returns:
        Nested dict {section: {key: value}}
    """
    load_dotenv(env_file or PROJECT_ROOT / ".env", override=False)
    settings = copy.deepcopy(DEFAULTS)

    path = Path(config_path) if config_path else find_config_file()
    if path is not None:
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            data = toml.load(path)
        except toml.TomlDecodeError as e:
            raise ValueError(f"Could not parse {path}: {e}")
        _merge(settings, data, str(path))
        logger.debug(f"Loaded settings from {path}")

    for variable, (section, key) in ENV_OVERRIDES.items():
        value = os.getenv(variable)
        if value is not None and value != "":
            settings[section][key] = _coerce(value, DEFAULTS[section][key], key)

    if settings["bench"]["threads"] < 1:
        raise ValueError(f"bench.threads must be at least 1, got {settings['bench']['threads']}")
    return settings
