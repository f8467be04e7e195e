"""Run configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .lattice import DEFAULT_DT, DEFAULT_SCHEME, SCHEMES, ChainParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    N: int = 128
    beta: float = 1.0
    target_energy: float = 200.0
    dt: float = DEFAULT_DT
    t_transient: float = 1e5
    t_record: float = 1e5
    sample_stride: int = 10
    seed: int = 0
    omega_cut: float | None = None
    output_dir: str = "out"
    scheme: str = DEFAULT_SCHEME

    def __post_init__(self):
        try:
            ChainParams(self.N, self.beta, self.target_energy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.dt > 0 or not self.t_record > 0:
            raise ConfigError("dt and t_record must be positive")
        if not self.t_transient >= 0:
            raise ConfigError("t_transient must be nonnegative")
        if self.sample_stride < 1:
            raise ConfigError("sample_stride must be a positive integer")
        if self.omega_cut is not None and not self.omega_cut > 0:
            raise ConfigError("omega_cut must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        # eta >= 1, so the bare period bounds the renormalised one from above
        slowest = 2 * math.pi / (2 * math.sin(math.pi / self.N))
        if self.t_record < 10 * slowest:
            raise ConfigError(
                f"t_record={self.t_record} does not cover 10 periods of the slowest mode ({10 * slowest:.4g})"
            )

    @property
    def params(self) -> ChainParams:
        return ChainParams(self.N, self.beta, self.target_energy)

    @property
    def sample_interval(self) -> float:
        return self.dt * self.sample_stride

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return (base or RunConfig()).with_overrides(**values) if values else (base or RunConfig())


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
