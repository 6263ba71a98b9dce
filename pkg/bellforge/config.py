"""
Run configuration: a JSON file with command-line overrides.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Union

from .errors import ConfigError
from .logging import PrettyLogger
from .utils import PathLike, to_path

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

THREADS_VARIABLE = "BELLFORGE_THREADS"
NOISE_KINDS = ("none", "depolarizing")


def thread_count() -> int:
    """
    The number of worker threads, read from BELLFORGE_THREADS (default 1).
    """
    raw = os.environ.get(THREADS_VARIABLE)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as error:
        raise ConfigError(f"{THREADS_VARIABLE} must be an integer, got {raw!r}") from error
    if value < 1:
        raise ConfigError(f"{THREADS_VARIABLE} must be positive, got {value}")
    return value


@dataclass(frozen=True)
class NoiseSpec:
    """
    Noise applied to every Bell pair of a factorized strategy.
    """
    kind: str = "none"
    p: float = 0.0

    def validate(self) -> 'NoiseSpec':
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"noise.kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"noise.p must lie in [0, 1], got {self.p}")
        if self.kind == "none" and self.p != 0.0:
            raise ConfigError("noise.p must be 0 when noise.kind is 'none'")
        return self

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.p > 0.0


@dataclass(frozen=True)
class SpecialsSpec:
    """
    Either an explicit list of special questions (digit strings) or a request to
    draw `count` random ones with at least `min_z_fraction` of z symbols.
    """
    explicit: Optional[List[str]] = None
    count: int = 1
    min_z_fraction: float = 0.0

    def validate(self) -> 'SpecialsSpec':
        if self.explicit is not None:
            if not self.explicit:
                raise ConfigError("specials must not be an empty list")
            return self
        if self.count < 1:
            raise ConfigError(f"specials.count must be positive, got {self.count}")
        if not 0.0 <= self.min_z_fraction <= 1.0:
            raise ConfigError(
                f"specials.min_z_fraction must lie in [0, 1], got {self.min_z_fraction}"
            )
        return self


# pylint: disable=too-many-instance-attributes
@dataclass(frozen=True)
class RunConfig:
    """
    Everything a pipeline run needs. All randomness derives from `seed`.
    """
    n: int = 2
    m: int = 5
    specials: SpecialsSpec = field(default_factory=SpecialsSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    trials_per_cell: int = 0
    alpha: float = 0.01
    tolerance: float = 1e-9
    seed: int = 0
    gate: float = 1e-9
    prep_bound: float = 0.0
    strategy: str = "honest"
    out: str = "reports"

    def validate(self) -> 'RunConfig':
        if self.n < 1:
            raise ConfigError(f"n must be at least 1, got {self.n}")
        if self.m < 2:
            raise ConfigError(f"m must be at least 2, got {self.m}")
        if self.trials_per_cell < 0:
            raise ConfigError(f"trials_per_cell must be non-negative, got {self.trials_per_cell}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.tolerance <= 0.0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.gate < 0.0:
            raise ConfigError(f"gate must be non-negative, got {self.gate}")
        if self.prep_bound < 0.0:
            raise ConfigError(f"prep_bound must be non-negative, got {self.prep_bound}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64 bit integer, got {self.seed}")
        self.specials.validate()
        self.noise.validate()
        return self

    def with_overrides(self, **overrides: Any) -> 'RunConfig':
        """
        Apply command-line overrides. `None` values leave the field untouched.
        """
        changes = {key: value for key, value in overrides.items() if value is not None}
        unknown = sorted(set(changes) - set(self.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"Unknown configuration fields: {', '.join(unknown)}")
        return replace(self, **changes).validate()


def _parse_specials(raw: Union[List[Any], Dict[str, Any], None]) -> SpecialsSpec:
    if raw is None:
        return SpecialsSpec()
    if isinstance(raw, list):
        return SpecialsSpec(explicit=[str(item) for item in raw])
    if isinstance(raw, dict):
        extra = sorted(set(raw) - {"count", "min_z_fraction"})
        if extra:
            raise ConfigError(f"Unknown keys in specials: {', '.join(extra)}")
        return SpecialsSpec(
            count=int(raw.get("count", 1)),
            min_z_fraction=float(raw.get("min_z_fraction", 0.0)),
        )
    raise ConfigError(f"specials must be a list or an object, got {type(raw).__name__}")


def _parse_noise(raw: Optional[Dict[str, Any]]) -> NoiseSpec:
    if raw is None:
        return NoiseSpec()
    if not isinstance(raw, dict):
        raise ConfigError(f"noise must be an object, got {type(raw).__name__}")
    return NoiseSpec(kind=str(raw.get("kind", "none")), p=float(raw.get("p", 0.0)))


def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    """
    Build a validated config from a parsed JSON object.
    """
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown configuration fields: {', '.join(unknown)}")

    values: Dict[str, Any] = {
        key: value for key, value in raw.items() if key not in ("specials", "noise")
    }
    try:
        config = RunConfig(
            specials=_parse_specials(raw.get("specials")),
            noise=_parse_noise(raw.get("noise")),
            **values,
        )
        # Types are not enforced by dataclasses, so coerce the numeric fields here
        config = replace(
            config,
            n=int(config.n), m=int(config.m), trials_per_cell=int(config.trials_per_cell),
            alpha=float(config.alpha), tolerance=float(config.tolerance),
            seed=int(config.seed), gate=float(config.gate), prep_bound=float(config.prep_bound),
            strategy=str(config.strategy), out=str(config.out),
        )
    except (TypeError, ValueError) as error:
        raise ConfigError(f"Malformed configuration: {error}") from error
    return config.validate()


def load_config(path: Optional[PathLike]) -> RunConfig:
    """
    Load a config file, or return the defaults if no path is given.
    """
    if path is None:
        return RunConfig().validate()
    target = to_path(path)
    try:
        with open(target, "r", encoding="utf-8") as file:
            raw = json.load(file)
    except OSError as error:
        raise ConfigError(f"Could not read config {str(target)!r}: {error}") from error
    except json.JSONDecodeError as error:
        raise ConfigError(f"Config {str(target)!r} is not valid JSON: {error}") from error
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {str(target)!r} must contain a JSON object")
    LOGGER.debug("Loaded config from %s", target)
    return config_from_dict(raw)
