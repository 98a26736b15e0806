"""Service configuration: defaults, key=value file loading, flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ValidationFailure


@dataclass
class Config:
    store_path: str = "imobe-store.ndjson"
    listen_address: str = "127.0.0.1:8000"
    token_secret: str = "change-me"
    token_ttl_s: int = 3600
    phase_timeout_ms: int = 5000
    workflow_budget_ms: int = 15000
    anomaly_r: int = 5
    anomaly_w_s: int = 60
    attainment_threshold: float = 0.5

    def __post_init__(self):
        for name in ("token_ttl_s", "phase_timeout_ms", "workflow_budget_ms", "anomaly_w_s"):
            if getattr(self, name) <= 0:
                raise ValidationFailure(f"{name} must be > 0")
        if not 0 < self.attainment_threshold < 1:
            raise ValidationFailure("attainment_threshold must be in (0,1)")


def load_config(path: str | None = None, overrides: dict | None = None) -> Config:
    """Read key=value lines (# comments allowed); explicit overrides win."""
    values: dict = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationFailure(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    typed: dict = {}
    for f in fields(Config):
        if f.name not in values:
            continue
        raw = values[f.name]
        typed[f.name] = _convert(f.type, raw)
    unknown = set(values) - {f.name for f in fields(Config)}
    if unknown:
        raise ValidationFailure(f"unknown config keys: {sorted(unknown)}")
    return Config(**typed)


def _convert(ftype, raw):
    if ftype in (int, "int"):
        return int(raw)
    if ftype in (float, "float"):
        return float(raw)
    return str(raw)
