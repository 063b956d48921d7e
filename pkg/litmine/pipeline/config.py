"""
Pipeline configuration.

Sources, lowest precedence first:
1. dataclass defaults (mirrored in params.yaml)
2. config file: YAML with a ``litmine:`` root key, or flat ``key=value`` lines
3. environment: LITMINE_MASTER_ADDR, LITMINE_STORE_ROOT
4. CLI flags (applied by the caller through ``override``)
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from litmine.errors import StorageIOError, ValidationError
from litmine.sched.protocol import parse_address

logger = logging.getLogger(__name__)

ENV_OVERRIDES = {
    "LITMINE_MASTER_ADDR": "master_addr",
    "LITMINE_STORE_ROOT": "store_root",
}


@dataclass(frozen=True)
class PipelineConfig:
    store_root: str = "./data/store"
    index_root: str = "./data/index"
    master_addr: str = "127.0.0.1:7070"
    http_port: int = 8080
    serve_port: int = 8090
    batch_size: int = 1000
    model_ref: str = "current"
    heartbeat_interval_s: float = 2.0
    missed_heartbeats: int = 3
    task_timeout_s: float = 600.0
    max_attempts: int = 5
    converged: bool = True
    worker_slots: int = 1
    metadata_source: Optional[str] = None
    articles_dir: Optional[str] = None
    source_name: str = "cord19"
    l2: float = 1e-4
    epochs: int = 30
    seed: int = 42
    log_level: str = "INFO"
    log_file: Optional[str] = None

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], origin: str = "config") -> "PipelineConfig":
        return cls().override(values, origin)

    def override(self, values: Mapping[str, Any], origin: str = "override") -> "PipelineConfig":
        """Return a copy with the given (non-None) values coerced to field types."""
        known = {f.name: f for f in fields(self)}
        updates: Dict[str, Any] = {}
        for name, raw in values.items():
            if raw is None:
                continue
            if name not in known:
                raise ValidationError(f"Unknown configuration key {name!r} in {origin}")
            updates[name] = _coerce(name, raw, getattr(PipelineConfig, name, None), origin)
        return replace(self, **updates)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, env: Optional[Mapping[str, str]] = None) -> "PipelineConfig":
        """
        Build the effective configuration from file and environment.

        Raises:
            ValidationError: Unreadable file, unknown keys or bad values
        """
        config = cls()
        if path is not None:
            config = config.override(read_config_file(path), origin=str(path))
        env = os.environ if env is None else env
        env_values = {field_name: env[var] for var, field_name in ENV_OVERRIDES.items() if env.get(var)}
        if env_values:
            config = config.override(env_values, origin="environment")
        return config

    def validate(self) -> "PipelineConfig":
        """
        Check invariants and create the store and index roots.

        Raises:
            ValidationError: Out-of-range values
            StorageIOError: Roots cannot be created
        """
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.batch_size > 1000:
            raise ValidationError(f"batch_size must be <= 1000, got {self.batch_size}")
        for name in ("http_port", "serve_port"):
            port = getattr(self, name)
            if not 0 <= port <= 65535:
                raise ValidationError(f"{name} must be a TCP port, got {port}")
        parse_address(self.master_addr)
        for name in ("heartbeat_interval_s", "task_timeout_s", "l2"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("missed_heartbeats", "max_attempts", "worker_slots", "epochs"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValidationError(f"Unknown log_level {self.log_level!r}")
        for root in (self.store_root, self.index_root):
            try:
                Path(root).mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise StorageIOError(f"Cannot create {root}: {e}") from e
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(name: str, raw: Any, default: Any, origin: str) -> Any:
    target = type(default) if default is not None else str
    try:
        if target is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "yes", "1", "on"):
                return True
            if text in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target is int:
            if isinstance(raw, bool):
                raise ValueError(f"not an integer: {raw!r}")
            return int(raw)
        if target is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Bad value for {name} in {origin}: {e}") from e


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML (``litmine:`` section) or key=value config file.

    Raises:
        ValidationError: Missing or malformed file
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"Cannot read config file {path}: {e}") from e

    if path.suffix in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ValidationError(f"Malformed YAML in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ValidationError(f"{path} must contain a mapping")
        section = data.get("litmine", data)
        if not isinstance(section, dict):
            raise ValidationError(f"'litmine' section of {path} must be a mapping")
        return dict(section)

    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values
