"""
Runtime configuration.

Values come from the environment (a ``.env`` file is loaded first), an
optional flat ``key = value`` file mirroring the CLI flags, and the flags
themselves. Precedence: flag > file > environment > default.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel

from .exceptions import BadParams

load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# -----------------------------
# Settings
# -----------------------------
class Settings(BaseModel):
    seed: int = 0
    output_dir: str = "out"
    log_level: str = "INFO"
    max_nodes: int = 200000
    max_level: int = 12
    radius_cap: int = 64

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            seed=int(os.getenv("PSEUDODYN_SEED", "0")),
            output_dir=os.getenv("PSEUDODYN_OUTPUT_DIR", "out"),
            log_level=os.getenv("PSEUDODYN_LOG_LEVEL", "INFO"),
            max_nodes=int(os.getenv("PSEUDODYN_MAX_NODES", "200000")),
            max_level=int(os.getenv("PSEUDODYN_MAX_LEVEL", "12")),
            radius_cap=int(os.getenv("PSEUDODYN_RADIUS_CAP", "64")),
        )


settings = Settings.from_env()


def load_config_file(path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, keys may use dashes."""
    values: Dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise BadParams(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    logger.debug("read %d settings from %s", len(values), path)
    return values


def resolve(flags: Mapping[str, Any], file_values: Optional[Mapping[str, Any]] = None,
            base: Optional[Settings] = None) -> Dict[str, Any]:
    """Merge defaults, environment, config file and explicit flags (``None`` flags are unset)."""
    merged: Dict[str, Any] = (base or Settings.from_env()).dict()
    merged.update(file_values or {})
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def configure_logging(level: Optional[str] = None) -> None:
    name = (level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(name), int):
        raise BadParams(f"unknown log level {level!r}")
    logging.basicConfig(level=name, format=LOG_FORMAT)
