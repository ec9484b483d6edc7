"""Run configuration: one flat ``key = value`` file with ``#`` comments.

Every key has a default, so an empty file is a valid configuration.  Values
are checked on load and a bad line is reported as ``path:line: message``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import FormatError
from .likelihood import LikelihoodParams
from .relation import RelationConfig
from .search import SearchConfig
from .synth import SynthParams


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("none", "inf", "") else float(text)


def _optional_int(text: str):
    return None if text.strip().lower() in ("none", "inf", "") else int(text)


def _bins(text: str) -> tuple:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError("bins must look like 15x20x10")
    return tuple(int(p) for p in parts)


def _paths(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class Config:
    # generative model, shared by synthesis and the likelihood
    a: float = 1.0
    b: float = 1e-7
    # synthesis
    noise_sigma: float = 0.5
    outlier_count: int = 0
    outlier_fraction: float = 0.05
    pixel_pitch: float = 2.0
    surface_point_budget: int = 30000
    # point relations
    R: float = 15.0
    eps: float = 1.0
    sample_len: int = 50
    bins: tuple = (15, 20, 10)
    alpha: float = 0.5
    # likelihood
    delta_s: float = 5.0
    theta: float = 16000.0
    ref_density: float = 1e-7
    self_occlusion: bool = False
    # search
    xi: float = 60.0
    max_hypotheses: int = 250
    delta_rot: float = math.radians(1.0)
    delta_t: float = 2.0
    max_triple_distance: float = None
    fallback: bool = False
    merge_symmetric: bool = True
    max_objects: int = 2
    # hash index
    q_d: float = 5.0
    gamma_init: float = 0.1
    # training
    feature_radius: float = 3.0
    nonfeature_margin: float = 8.0
    nonfeature_per_scan: int = 300
    train_sample_len: int = 200
    # curvature baseline
    curvature_radius: float = 15.0
    # evaluation
    rot_tol_deg: float = 3.0
    trans_tol: float = 5.0
    suite_size: int = 50
    # files
    models: tuple = ()
    density: str = ""
    index: str = ""

    def __post_init__(self):
        # build every parameter object once so invalid values fail at load
        self.synth_params(0)
        self.relation_config()
        self.likelihood_params()
        self.search_config()
        if self.q_d <= 0:
            raise ValueError("q_d must be > 0")
        if not 0 < self.gamma_init < 1:
            raise ValueError("gamma_init must be in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.max_objects < 1:
            raise ValueError("max_objects must be >= 1")
        for name in ("feature_radius", "nonfeature_margin", "curvature_radius", "rot_tol_deg", "trans_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("nonfeature_per_scan", "train_sample_len", "suite_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def synth_params(self, seed: int) -> SynthParams:
        return SynthParams(a=self.a, b=self.b, noise_sigma=self.noise_sigma, outlier_count=self.outlier_count,
                           outlier_fraction=self.outlier_fraction, pixel_pitch=self.pixel_pitch,
                           surface_point_budget=self.surface_point_budget, rng_seed=seed)

    def relation_config(self) -> RelationConfig:
        return RelationConfig(self.R, self.eps, self.sample_len, self.bins)

    def likelihood_params(self) -> LikelihoodParams:
        return LikelihoodParams(a=self.a, b=self.b, delta_s=self.delta_s, theta=self.theta,
                                ref_density=self.ref_density, self_occlusion=self.self_occlusion)

    def search_config(self) -> SearchConfig:
        return SearchConfig(xi=self.xi, theta=None, max_hypotheses=self.max_hypotheses,
                            delta_rot=self.delta_rot, delta_t=self.delta_t,
                            max_triple_distance=self.max_triple_distance, fallback=self.fallback,
                            merge_symmetric=self.merge_symmetric)


_PARSERS = {
    "bins": _bins,
    "models": _paths,
    "max_hypotheses": _optional_int,
    "max_triple_distance": _optional_float,
    "density": str,
    "index": str,
}


def _parser_for(f):
    if f.name in _PARSERS:
        return _PARSERS[f.name]
    default = f.default
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    return float


FIELDS = {f.name: f for f in fields(Config)}


def parse_config(text: str, path="<config>") -> Config:
    values, where = {}, {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", path, no)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in FIELDS:
            raise FormatError(f"unknown key {key!r}", path, no)
        if key in values:
            raise FormatError(f"duplicate key {key!r}", path, no)
        try:
            values[key] = _parser_for(FIELDS[key])(value)
        except ValueError as exc:
            raise FormatError(f"{key}: {exc}", path, no) from None
        where[key] = no
    try:
        return Config(**values)
    except ValueError as exc:
        # point at the offending key when the message names one
        msg = str(exc)
        line = next((where[k] for k in sorted(where, key=len, reverse=True) if msg.startswith(k)), None)
        raise FormatError(msg, path, line) from None


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config ({exc.strerror})", path) from None
    return parse_config(text, path)


def with_overrides(cfg: Config, **kw) -> Config:
    return replace(cfg, **kw)
