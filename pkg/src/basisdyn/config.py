"""Experiment configuration: a fixed JSON schema, validated per kind."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

KINDS = ("kr", "smf", "ostd", "logistic", "ack-synthetic")

_REQUIRED = {
    "kr": ("d", "sigma", "alpha", "eta", "max_iters", "seed"),
    "smf": ("d", "r_over", "sigma", "alpha", "eta", "max_iters", "seed"),
    "ostd": ("d", "r_over", "order_l", "sigma", "alpha", "gamma_align", "eta", "max_iters", "seed"),
    "logistic": ("sigma", "alpha", "eta", "max_iters"),
    "ack-synthetic": ("classes", "features", "samples", "eta", "max_iters", "seed"),
}

_INT_KEYS = ("d", "r", "r_over", "order_l", "max_iters", "seed", "record_every", "classes", "features", "samples")
_REAL_KEYS = ("alpha", "gamma_align", "eta", "rank_tol")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    eta: float
    max_iters: int
    seed: int = 0
    d: Optional[int] = None
    r: Optional[int] = None
    r_over: Optional[int] = None
    order_l: Optional[int] = None
    sigma: Optional[tuple] = None
    alpha: Optional[float] = None
    gamma_align: Optional[float] = None
    classes: Optional[int] = None
    features: Optional[int] = None
    samples: Optional[int] = None
    rank_tol: float = 1e-12
    thresholds: tuple = (0.5, 0.99)
    record_every: int = 1
    output_path: Optional[str] = None

    @property
    def signals(self) -> tuple:
        return tuple(s for s in (self.sigma or ()) if s != 0)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def _check_int(key, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    return v


def _check_real(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a finite number, got {v!r}")
    return float(v)


def _check_real_list(key, v):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return tuple(_check_real(key, x) for x in v)


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a decoded document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in doc:
        if key not in _FIELD_NAMES:
            raise ConfigError(key, "unknown key")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
    for key in _REQUIRED[kind]:
        if key not in doc or doc[key] is None:
            raise ConfigError(key, f"required for kind {kind!r}")

    vals = {"kind": kind}
    for key, v in doc.items():
        if key == "kind" or v is None:
            continue
        if key in _INT_KEYS:
            vals[key] = _check_int(key, v)
        elif key in _REAL_KEYS:
            vals[key] = _check_real(key, v)
        elif key in ("sigma", "thresholds"):
            vals[key] = _check_real_list(key, v)
        elif key == "output_path":
            if not isinstance(v, str) or not v:
                raise ConfigError(key, "expected a non-empty string")
            vals[key] = v
    cfg = ExperimentConfig(**vals)
    _validate(cfg)
    return cfg


def _positive(cfg, *keys):
    for key in keys:
        v = getattr(cfg, key)
        if v is not None and not v > 0:
            raise ConfigError(key, f"must be > 0, got {v}")


def _validate(cfg: ExperimentConfig):
    _positive(cfg, "eta", "alpha", "d", "r", "r_over", "order_l", "record_every", "classes", "features", "samples")
    if cfg.max_iters < 0:
        raise ConfigError("max_iters", "must be >= 0")
    if cfg.rank_tol < 0:
        raise ConfigError("rank_tol", "must be >= 0")
    for t in cfg.thresholds:
        if not (0 < t <= 1):
            raise ConfigError("thresholds", f"fractions must lie in (0, 1], got {t}")
    if cfg.gamma_align is not None and not (0 <= cfg.gamma_align < 1):
        raise ConfigError("gamma_align", "must lie in [0, 1)")
    if cfg.kind in ("kr", "smf", "ostd"):
        if len(cfg.sigma) > cfg.d:
            raise ConfigError("sigma", f"{len(cfg.sigma)} values do not fit in d={cfg.d}")
        mags = [abs(s) for s in cfg.sigma]
        if any(b > a for a, b in zip(mags, mags[1:])):
            raise ConfigError("sigma", "magnitudes must be non-increasing")
        if cfg.kind != "kr" and min(cfg.sigma) < 0:
            raise ConfigError("sigma", "eigenvalues must be non-negative")
        if not cfg.signals:
            raise ConfigError("sigma", "needs at least one nonzero value")
        if cfg.r is not None and cfg.r != len(cfg.signals):
            raise ConfigError("r", f"r={cfg.r} but sigma has {len(cfg.signals)} nonzero values")
    if cfg.r_over is not None and cfg.sigma is not None and cfg.r_over < len(cfg.signals):
        raise ConfigError("r_over", "must be at least the number of nonzero sigma values")
    if cfg.order_l is not None and cfg.order_l < 3:
        raise ConfigError("order_l", "tensor order must be >= 3")
    if cfg.kind == "kr" and not cfg.eta < 1:
        raise ConfigError("eta", "kernel regression needs eta < 1")
    if cfg.kind == "logistic":
        if len(cfg.sigma) != 1 or not cfg.sigma[0] > 0:
            raise ConfigError("sigma", "logistic runs take a single positive sigma")
        if not cfg.alpha <= cfg.sigma[0]:
            raise ConfigError("alpha", "must not exceed sigma")
        if not cfg.eta * cfg.sigma[0] < 1:
            raise ConfigError("eta", "need eta * sigma < 1")
    if cfg.kind == "ack-synthetic" and not cfg.eta < 1:
        raise ConfigError("eta", "must lie in (0, 1)")


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    return parse_config_text(text)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Only fields that differ from None, with tuples as lists."""
    out = {}
    for key, v in asdict(cfg).items():
        if v is None:
            continue
        out[key] = list(v) if isinstance(v, tuple) else v
    return out


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"
