"""Two-lane freeway simulator with V2I road hazard warnings and surrogate safety measures."""

from .config import SimConfig, parse_config, serialize_config, validate
from .sim import RunResult, run

__all__ = ["SimConfig", "RunResult", "parse_config", "run", "serialize_config", "validate"]
__version__ = "0.1.0"
