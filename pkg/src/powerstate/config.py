"""Pipeline configuration: defaults < config file < command-line flags."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .frame import MS_PER_DAY
from .ingest import DEFAULT_TIMESTAMP_FORMAT
from .util import canonical_json, sha256_text

# fields that do not influence any result and so stay out of the config hash
_UNHASHED = ("output_dir", "n_jobs")

# settings each cached artifact depends on, cumulatively
_STAGES = {
    "features": ("location", "data_dir", "timestamp_format", "ecd_glob", "harmonics_glob",
                 "grid_period_ms", "imputation", "phase_mode"),
    "states": ("standardize", "k", "k_min", "k_max", "restarts", "silhouette_sample",
               "discover_start", "discover_end", "train_start", "train_end", "seed"),
    "forest": ("forest",),
}


@dataclass
class ImputationSettings:
    enabled: bool = True
    max_lookback_days: int = 7
    max_lookahead_days: int = 7
    fallback: str = "linear-interpolate"
    donors_per_side: int = 1
    match_day_type: bool = False


@dataclass
class ForestSettings:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: str | int = "sqrt"


@dataclass
class PipelineConfig:
    location: str = "india-4"
    data_dir: str = "data"
    output_dir: str = "out"
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT
    ecd_glob: str = "*[Ee][Cc][Dd]*.csv"
    harmonics_glob: str = "*[Hh]armonic*.csv"
    grid_period_ms: int | None = None
    imputation: ImputationSettings = field(default_factory=ImputationSettings)
    phase_mode: str = "mean-of-phases"
    standardize: bool = False
    k: int | None = None
    k_min: int = 1
    k_max: int = 20
    restarts: int = 10
    silhouette_sample: int | None = None
    discover_start: str | None = None
    discover_end: str | None = None
    train_start: str | None = None
    train_end: str | None = None
    eval_dates: list = field(default_factory=list)
    assign_with: str = "forest"
    forest: ForestSettings = field(default_factory=ForestSettings)
    averaging: str = "macro"
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if isinstance(self.imputation, dict):
            self.imputation = ImputationSettings(**self.imputation)
        if isinstance(self.forest, dict):
            self.forest = ForestSettings(**self.forest)
        if isinstance(self.eval_dates, str):
            self.eval_dates = [d for d in self.eval_dates.split(",") if d]
        self.eval_dates = list(self.eval_dates)

    def validate(self):
        if self.phase_mode in ("mean", "concat"):
            self.phase_mode = {"mean": "mean-of-phases", "concat": "concat-phases"}[self.phase_mode]
        if self.phase_mode not in ("mean-of-phases", "concat-phases"):
            raise ConfigError(f"unknown phase_mode {self.phase_mode!r}")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError(f"bad k range {self.k_min}..{self.k_max}")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.assign_with not in ("forest", "centroid"):
            raise ConfigError("assign_with must be 'forest' or 'centroid'")
        if self.averaging not in ("macro", "weighted", "micro"):
            raise ConfigError("averaging must be macro, weighted or micro")
        if self.imputation.fallback not in ("linear-interpolate", "carry-nearest", "leave-missing"):
            raise ConfigError(f"unknown fallback {self.imputation.fallback!r}")
        for d in [self.train_start, self.train_end, self.discover_start, self.discover_end,
                  *self.eval_dates]:
            if d is not None:
                day_ms(d)
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None

    def hash(self):
        d = self.to_dict()
        for k in _UNHASHED:
            d.pop(k, None)
        return sha256_text(canonical_json(d))[:16]

    def stage_hash(self, stage):
        """Hash of the settings that determine a cached ``features``, ``states`` or ``forest``."""
        d = self.to_dict()
        keys = []
        for name, fields in _STAGES.items():
            keys.extend(fields)
            if name == stage:
                break
        else:
            raise ValueError(f"unknown stage {stage!r}")
        return sha256_text(canonical_json({k: d[k] for k in keys}))[:16]

    def path(self, *parts):
        return os.path.join(self.output_dir, *parts)

    def train_window(self):
        return _window(self.train_start, self.train_end)

    def discover_window(self):
        if self.discover_start is None and self.discover_end is None:
            return self.train_window()
        return _window(self.discover_start, self.discover_end)


def day_ms(iso_date):
    try:
        return int(np.datetime64(str(iso_date), "D").astype("datetime64[ms]").astype(np.int64))
    except ValueError:
        raise ConfigError(f"not an ISO date: {iso_date!r}") from None


def _window(start, end):
    """[start day 00:00, end day + 1 day) in ms; None for an open side."""
    lo = None if start is None else day_ms(start)
    hi = None if end is None else day_ms(end) + MS_PER_DAY
    if lo is not None and hi is not None and hi <= lo:
        raise ConfigError(f"window end {end} before start {start}")
    return lo, hi


def iso_day(ms):
    return str(np.datetime64(int(ms), "ms").astype("datetime64[D]"))
