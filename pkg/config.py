"""
Configuration module for lindblad-forge.
Environment overrides and run defaults live here; numerical defaults are in
configs/settings.yaml.
"""

from typing import Any, Dict, Optional, Union
from pathlib import Path
import os

import yaml

# Load environment variables from .env file if it exists
try:
    from dotenv import load_dotenv

    env_path = Path(__file__).parent / ".env"
    if env_path.exists():
        load_dotenv(env_path)
except ImportError:
    # python-dotenv not installed, skip loading .env file
    pass

PROJECT_ROOT = Path(__file__).parent
SETTINGS_PATH = PROJECT_ROOT / "configs" / "settings.yaml"
METHODS_PATH = PROJECT_ROOT / "configs" / "methods.yaml"

# Environment overrides
#   LINDBLAD_FORGE_THREADS     worker threads for ensemble runs (when --threads is not given)
#   LINDBLAD_FORGE_OUTPUT_DIR  results directory (when --out-dir is not given)
#   LINDBLAD_FORGE_LOG_LEVEL   root logger level
ENV_THREADS = "LINDBLAD_FORGE_THREADS"
ENV_OUTPUT_DIR = "LINDBLAD_FORGE_OUTPUT_DIR"
ENV_LOG_LEVEL = "LINDBLAD_FORGE_LOG_LEVEL"


def load_settings(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """settings.yaml contents with environment overrides applied on top."""
    settings_path = Path(path) if path else SETTINGS_PATH
    settings: Dict[str, Any] = {}
    if settings_path.exists():
        with open(settings_path, "r", encoding="utf-8") as f:
            settings = yaml.safe_load(f) or {}
    threads = os.getenv(ENV_THREADS)
    if threads:
        settings["concurrency"] = int(threads)
    if os.getenv(ENV_OUTPUT_DIR):
        settings["output_dir"] = os.getenv(ENV_OUTPUT_DIR)
    if os.getenv(ENV_LOG_LEVEL):
        settings["logging_level"] = os.getenv(ENV_LOG_LEVEL)
    settings.setdefault("output_dir", "data/runs")
    settings.setdefault("concurrency", 1)
    settings.setdefault("logging_level", "INFO")
    return settings
