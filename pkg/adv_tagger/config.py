"""
Run configuration: a `key = value` text file layered over built-in defaults.

Precedence is defaults < config file < explicit overrides (CLI flags).

Example usage:
    >>> cfg = load_config(overrides={"alpha": 0.01, "max_epochs": 20})
    >>> cfg.train.max_epochs
    20
"""
import logging
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .adversarial import AdvConfig
from .exceptions import ConfigError, TaggerError
from .trainer import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_FILE = Path.home() / ".adv_tagger_config"
RESOURCE_PROFILES = ("english", "other", "low")
TRUE_WORDS = {"true", "yes", "on", "1"}
FALSE_WORDS = {"false", "no", "off", "0"}

# config-file key -> AdvConfig field
ADV_KEYS = {"alpha": "alpha", "gamma": "gamma", "adversarial_enabled": "enabled"}


@dataclass(frozen=True)
class ArchitectureConfig:
    """Model sizes; word_hidden and resource_profile are derived from the data when unset."""
    word_dim: int = 100
    char_dim: int = 30
    char_hidden: int = 50
    word_hidden: Optional[int] = None
    min_count: int = 1
    resource_profile: Optional[str] = None

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "char_hidden", "min_count"):
            if getattr(self, name) < 1:
                raise TaggerError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.word_hidden is not None and self.word_hidden < 1:
            raise TaggerError(f"word_hidden must be >= 1, got {self.word_hidden}")
        if self.resource_profile is not None and self.resource_profile not in RESOURCE_PROFILES:
            raise TaggerError(f"resource_profile must be one of {RESOURCE_PROFILES}, got {self.resource_profile!r}")


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    adversarial: AdvConfig = field(default_factory=lambda: AdvConfig(enabled=False))
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)

    def to_dict(self) -> Dict[str, Any]:
        values: Dict[str, Any] = {}
        for f in fields(self.train):
            values[f.name] = getattr(self.train, f.name)
        for key, name in ADV_KEYS.items():
            values[key] = getattr(self.adversarial, name)
        for f in fields(self.architecture):
            values[f.name] = getattr(self.architecture, f.name)
        return values

    def dump(self) -> str:
        """Serializes to the key = value format read by parse_config."""
        lines = []
        for key, value in self.to_dict().items():
            text = "none" if value is None else str(value).lower() if isinstance(value, bool) else str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def _sections() -> Dict[str, Tuple[str, str, Any]]:
    """config key -> (section, field name, field type)."""
    keys: Dict[str, Tuple[str, str, Any]] = {}
    for f in fields(TrainConfig):
        keys[f.name] = ("train", f.name, f.type)
    adv_types = {f.name: f.type for f in fields(AdvConfig)}
    for key, name in ADV_KEYS.items():
        keys[key] = ("adversarial", name, adv_types[name])
    for f in fields(ArchitectureConfig):
        keys[f.name] = ("architecture", f.name, f.type)
    return keys


def coerce(value: Any, kind: Any) -> Any:
    """Converts a string (or an already typed value) to the annotated field type."""
    if typing.get_origin(kind) is Union:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "")):
            return None
        kind = next(arg for arg in typing.get_args(kind) if arg is not type(None))
    if not isinstance(value, str):
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, kind):
            return value
        raise ValueError(f"expected {kind.__name__}, got {value!r}")
    text = value.strip()
    if kind is bool:
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    return kind(text)


def parse_config(text: str, source: str = "<config>") -> Dict[str, Tuple[str, int]]:
    """
    Parses `key = value` lines; `#` starts a comment, blank lines are ignored.

    Returns:
        Dict[str, Tuple[str, int]]: key -> (raw value, 1-based line number).

    Raises:
        ConfigError: On a line without `=`, an unknown key or a repeated key.
    """
    known = _sections()
    entries: Dict[str, Tuple[str, int]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {line!r}")
        if key not in known:
            raise ConfigError(f"{source}:{number}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"{source}:{number}: key {key!r} repeated (first on line {entries[key][1]})")
        entries[key] = (value.strip(), number)
    return entries


def build_config(values: Mapping[str, Any], base: Optional[RunConfig] = None, source: str = "<overrides>") -> RunConfig:
    """
    Applies key -> value pairs (strings or typed values) on top of a RunConfig.

    Values may be (value, line) pairs as returned by parse_config, so errors
    point at the offending line.

    Raises:
        ConfigError: On an unknown key, a value that does not coerce, or an
                     out-of-range combination.
    """
    known = _sections()
    base = base or RunConfig()
    changes: Dict[str, Dict[str, Any]] = {"train": {}, "adversarial": {}, "architecture": {}}
    for key, raw in values.items():
        value, line = raw if isinstance(raw, tuple) else (raw, None)
        where = f"{source}:{line}" if line is not None else source
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        section, name, kind = known[key]
        try:
            changes[section][name] = coerce(value, kind)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{where}: bad value for {key!r}: {e}") from e
    try:
        return RunConfig(
            train=replace(base.train, **changes["train"]),
            adversarial=replace(base.adversarial, **changes["adversarial"]),
            architecture=replace(base.architecture, **changes["architecture"]),
        )
    except TaggerError as e:
        raise ConfigError(f"{source}: {e}") from e


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Loads defaults, then the config file, then the overrides.

    Args:
        path: Config file; when omitted, ~/.adv_tagger_config is read if it exists.
        overrides: Typed values (e.g. from CLI flags); None values are ignored.

    Raises:
        FileNotFoundError: If an explicitly given file does not exist.
        ConfigError: On any bad key or value.
    """
    config = RunConfig()
    if path is None and CONFIG_FILE.exists():
        path = CONFIG_FILE
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file {path} not found.")
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError(f"{path}: not valid UTF-8 ({e.reason} at byte {e.start})") from e
        config = build_config(parse_config(text, str(path)), config, str(path))
        logger.info(f"Loaded configuration from {path}")
    if overrides:
        config = build_config({k: v for k, v in overrides.items() if v is not None}, config)
    return config
