"""
Run configuration.

Values are layered: dataclass defaults, then an optional flat ``key = value``
file, then command-line overrides. The default output directory comes from the
QPREDUCE_OUTPUT_DIR environment variable.
"""

import os
import math
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from qpreduce.errors import ConfigError

logger = logging.getLogger(__name__)

GOLDEN_OMEGA: Tuple[float, ...] = (1.0, (math.sqrt(5.0) - 1.0) / 2.0)

DEFAULT_FIELD_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data', 'golden_sparse.jsonl'
)


def default_output_dir() -> str:
    """Output directory from the environment, falling back to ./results"""
    return os.environ.get('QPREDUCE_OUTPUT_DIR', 'results')


@dataclass
class RunConfig:
    """All knobs of a pipeline run"""
    omega: Tuple[float, ...] = GOLDEN_OMEGA
    field_path: str = DEFAULT_FIELD_PATH
    lambda0: float = 0.8
    lambda_interval: Tuple[float, float] = (0.6, 1.1)
    epsilon: Tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    K: int = 3
    K_SE: int = 3
    n_max: int = 6
    N_check: int = 64
    C1: Optional[float] = None
    sigma: float = 0.5
    grid_size: int = 10000
    T: float = 10.0
    h: float = 1e-3
    divisor_floor: float = 1e-8
    output_dir: str = field(default_factory=default_output_dir)
    jobs: int = 1
    k_max_enum: int = 4
    image_stride: int = 50
    dot_dir: Optional[str] = None
    dump_trajectory: bool = False

    @property
    def dimension(self) -> int:
        return len(self.omega)

    def cutoff_constant(self) -> float:
        """C1, either explicit or |eps|^sigma at the largest configured eps"""
        if self.C1 is not None:
            return self.C1
        return max(abs(e) for e in self.epsilon) ** self.sigma

    def validate(self) -> 'RunConfig':
        """Check ranges; raise ConfigError on the first violation"""
        if self.dimension < 1:
            raise ConfigError("omega must have at least one component")
        for name in ('K', 'K_SE', 'n_max', 'N_check', 'grid_size', 'jobs', 'k_max_enum', 'image_stride'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        for name in ('T', 'h', 'divisor_floor', 'sigma'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.C1 is not None and self.C1 <= 0:
            raise ConfigError(f"C1 must be positive, got {self.C1}")
        if not self.epsilon:
            raise ConfigError("at least one epsilon value is required")
        if self.N_check > 2 ** self.n_max:
            raise ConfigError(f"N_check={self.N_check} exceeds 2^n_max={2 ** self.n_max}")
        a, b = self.lambda_interval
        if not a < b:
            raise ConfigError(f"lambda interval must satisfy a < b, got [{a}, {b}]")
        if self.T / self.h > 1e7:
            raise ConfigError(f"T/h = {self.T / self.h:.3g} exceeds the step budget 1e7")
        return self


def _parse_floats(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(',') if part.strip())


_PARSERS = {
    'omega': _parse_floats,
    'epsilon': _parse_floats,
    'lambda_interval': _parse_floats,
    'field_path': str,
    'output_dir': str,
    'dot_dir': str,
    'lambda0': float,
    'C1': float,
    'sigma': float,
    'T': float,
    'h': float,
    'divisor_floor': float,
    'K': int,
    'K_SE': int,
    'n_max': int,
    'N_check': int,
    'grid_size': int,
    'jobs': int,
    'k_max_enum': int,
    'image_stride': int,
    'dump_trajectory': lambda text: text.strip().lower() in ('1', 'true', 'yes', 'on'),
}


def parse_config_text(text: str, source: str = '<string>') -> Dict[str, Any]:
    """Parse flat key = value lines into typed overrides"""
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from e
    if 'lambda_interval' in values and len(values['lambda_interval']) != 2:
        raise ConfigError(f"{source}: lambda_interval needs exactly two numbers")
    return values


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a config file from disk"""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, 'r') as f:
        values = parse_config_text(f.read(), source=path)
    logger.info(f"Loaded {len(values)} settings from {path}")
    return values


def build_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then file, then explicit overrides"""
    config = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if config_path:
        config = replace(config, **load_config_file(config_path))
    if overrides:
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"Unknown settings: {', '.join(sorted(unknown))}")
        config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    return config.validate()


def config_items(config: RunConfig) -> List[Tuple[str, Any]]:
    """Settings as (name, value) pairs, for logging and summaries"""
    return [(f.name, getattr(config, f.name)) for f in fields(config)]
