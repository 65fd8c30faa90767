"""Run configuration: hyperparameters plus I/O bindings.

Serialized as a sectioned key-value text file (``configparser`` dialect).
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError

METHODS = ("FA", "FA_STAR", "HECKMAN_C", "NAIVE")
TRAINING_METHODS = ("FA", "FA_STAR")


@dataclass(frozen=True)
class IOConfig:
    data_path: str | None = None
    test_path: str | None = None
    outcome: str = "y"
    features: tuple[str, ...] | None = None
    indicator: str | None = None
    bias_column: str | None = None
    bias_comparator: str | None = None
    bias_threshold: float | None = None
    train_fraction: float = 0.7
    standardize: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one Heckman-FA run.

    ``rho_min``/``rho_max`` have no default: the admissible range of the
    noise correlation is domain knowledge the user must supply.
    """

    c: float = 0.75
    T: int = 4000
    alpha: float = 0.1
    tau: float = 1.0
    B: int = 1000
    rho_min: float | None = None
    rho_max: float | None = None
    seed: int = 0
    method: str = "FA"
    io: IOConfig = field(default_factory=IOConfig)

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ConfigError(f"c must lie in (0, 1), got {self.c}")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")
        if not self.alpha >= 0.0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not self.tau > 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.B < 1:
            raise ConfigError(f"B must be >= 1, got {self.B}")
        if (self.rho_min is None) != (self.rho_max is None):
            raise ConfigError("set both rho_min and rho_max or neither")
        if self.rho_min is not None and not self.rho_min < self.rho_max:
            raise ConfigError(f"empty rho range [{self.rho_min}, {self.rho_max}]")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def rho_range(self) -> tuple[float, float]:
        if self.rho_min is None:
            raise ConfigError("rho_min/rho_max are required for extraction")
        return self.rho_min, self.rho_max

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["train"] = {
            k: _fmt(v) for k, v in asdict(self).items() if k != "io" and v is not None
        }
        cp["data"] = {k: _fmt(v) for k, v in asdict(self.io).items() if v is not None}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TRAIN_TYPES = {"c": float, "T": int, "alpha": float, "tau": float, "B": int,
                "rho_min": float, "rho_max": float, "seed": int, "method": str}


def _convert(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is tuple:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


_IO_TYPES = {
    "data_path": str, "test_path": str, "outcome": str, "features": tuple,
    "indicator": str, "bias_column": str, "bias_comparator": str,
    "bias_threshold": float, "train_fraction": float, "standardize": bool,
}


def parse_sections(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return cp


def from_ini(text: str, required: tuple[str, ...] = ()) -> RunConfig:
    """Parse a config; keys listed in ``required`` must appear in ``[train]``."""
    cp = parse_sections(text)
    train = cp["train"] if cp.has_section("train") else {}
    data = cp["data"] if cp.has_section("data") else {}
    for key in required:
        if key not in train:
            raise ConfigError(f"missing required config field [train] {key}")
    for key in train:
        if key not in _TRAIN_TYPES:
            raise ConfigError(f"unknown config field [train] {key}")
    for key in data:
        if key not in _IO_TYPES:
            raise ConfigError(f"unknown config field [data] {key}")
    kw = {k: _convert("train", k, train[k], _TRAIN_TYPES[k]) for k in train}
    io_kw = {k: _convert("data", k, data[k], _IO_TYPES[k]) for k in data}
    return RunConfig(io=IOConfig(**io_kw), **kw)


def field_names() -> list[str]:
    return [f.name for f in fields(RunConfig) if f.name != "io"]
