import os
import json
from typing import Dict, Any, Optional
from dotenv import load_dotenv

from common.errors import DataValidationError, InputFileError

SEED_ENV_VAR = "UOPTIME_SEED"

# Built-in run defaults, overridden by config.json and then by CLI flags
DEFAULT_ANALYSIS = {
    "metric": "rmad",
    "threshold": 0.01,
    "seed": 0,
    "resamples": 10000,
    "confidence": 0.99,
    "min_repetitions": 3,
    "relevance": 0.03,
    "workers": 1,
    "output_dir": "./results",
}


class ConfigManager:
    def __init__(self, project_root: str, config_path: Optional[str] = None):
        self.project_root = project_root
        load_dotenv(os.path.join(project_root, '.env'))  # Load environment variables
        self.explicit_path = config_path is not None
        self.config_path = config_path or os.path.join(project_root, "config.json")
        self.config = self._load_config()
        self._process_paths()
        self._process_env_vars()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from config.json, layered over the built-in defaults."""
        config = {"analysis": dict(DEFAULT_ANALYSIS)}
        if not os.path.exists(self.config_path):
            if self.explicit_path:
                raise InputFileError(f"config file not found: {self.config_path}")
            return config
        try:
            with open(self.config_path, encoding="utf-8") as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"invalid JSON in {self.config_path}: {e}") from e
        except OSError as e:
            raise InputFileError(f"cannot read config file {self.config_path}: {e}") from e
        config["analysis"].update(loaded.get("analysis", {}))
        return config

    def _process_paths(self) -> None:
        """Convert relative paths to absolute paths."""
        output_dir = self.config["analysis"]["output_dir"]
        # Relative paths are taken relative to the config file, not the working directory
        if not os.path.isabs(output_dir):
            base = os.path.dirname(os.path.abspath(self.config_path))
            self.config["analysis"]["output_dir"] = os.path.normpath(os.path.join(base, output_dir))

    def _process_env_vars(self) -> None:
        """Process environment variables."""
        seed = os.getenv(SEED_ENV_VAR)
        if seed is None or not seed.strip():
            return
        try:
            self.config["analysis"]["seed"] = int(seed)
        except ValueError as e:
            raise DataValidationError(f"{SEED_ENV_VAR} must be an integer, got {seed!r}") from e

    def get_config(self) -> Dict[str, Any]:
        """Get the processed configuration."""
        return self.config
