"""Pipeline commands behind the CLI.

Each ``cmd_*`` takes a validated :class:`PipelineConfig`, writes its
artifacts under ``config.output_dir`` and returns the in-memory results.
Outputs depend only on the config and the input data, so repeated runs are
byte-identical.
"""
from __future__ import annotations

import glob
import io
import json
import logging
import os

import numpy as np
import pandas as pd

from . import __version__
from .classify import ForestModel, evaluate_day, predict, train_forest
from .cluster import StateModel, assign_nearest, fit_state_model, model_space, sweep_k
from .config import PipelineConfig, day_ms, iso_day
from .errors import ConfigError, DataError, EmptyFile
from .features import (apply_scaling, fit_scaling, odd_current_channels,
                       read_feature_csv, resample_frame, resample_mean,
                       select_odd_current_harmonics, write_feature_csv)
from .frame import MS_PER_DAY, MS_PER_MINUTE
from .impute import Fallback, ImputationPolicy, impute_same_timestamp
from .ingest import (ECD_CHANNELS, HARMONICS_CHANNELS, concat_frames, detect_gaps,
                     format_timestamps, observed_period, parse_ecd_csv, parse_harmonics_csv,
                     write_frame_csv)
from .reduce import pca_fit, project
from .util import atomic_write, canonical_json

log = logging.getLogger(__name__)

ISO = "%Y-%m-%d %H:%M:%S"


def provenance(cfg):
    return f"powerstate {__version__} config_hash={cfg.hash()} seed={cfg.seed}"


def _meta(cfg, stage=None):
    m = {"tool": "powerstate", "version": __version__, "config_hash": cfg.hash(),
         "seed": cfg.seed}
    if stage:
        m["stage_hash"] = cfg.stage_hash(stage)
    return m


def _stage_line(cfg, stage):
    return f"stage_hash={cfg.stage_hash(stage)}"


def _header_has(path, line):
    """True when the comment header of ``path`` contains ``line``."""
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if not raw.startswith("#"):
                return False
            if raw[1:].strip() == line:
                return True
    return False


def _csv(df, cfg, extra=()):
    lines = [f"# {provenance(cfg)}"] + [f"# {x}" for x in extra]
    buf = io.StringIO()
    df.to_csv(buf, index=False, lineterminator="\n")
    return "\n".join(lines) + "\n" + buf.getvalue()


def echo_config(cfg):
    atomic_write(cfg.path("config.effective.json"),
                 canonical_json({"config": cfg.to_dict(), "meta": _meta(cfg)}))


# ---------------------------------------------------------------- inputs

def find_files(cfg, kind):
    pattern = cfg.ecd_glob if kind == "ecd" else cfg.harmonics_glob
    root = os.path.join(cfg.data_dir, cfg.location)
    if not os.path.isdir(root):
        root = cfg.data_dir
    files = sorted(glob.glob(os.path.join(root, pattern)))
    if not files:
        raise EmptyFile(f"no {kind} files matching {pattern!r} in {root}")
    return files


def load_harmonics(cfg, select=None):
    frames = [parse_harmonics_csv(f, cfg.timestamp_format, select) for f in find_files(cfg, "harmonics")]
    return concat_frames(frames)


def load_ecd(cfg, select=None):
    frames = [parse_ecd_csv(f, cfg.timestamp_format, select) for f in find_files(cfg, "ecd")]
    return concat_frames(frames)


# ---------------------------------------------------------------- ingest

def cmd_ingest(cfg):
    """Validate every input file and write a gap report per file."""
    rows, reports = [], {}
    for kind, parse, channels in (("ecd", parse_ecd_csv, ECD_CHANNELS),
                                  ("harmonics", parse_harmonics_csv, HARMONICS_CHANNELS)):
        try:
            files = find_files(cfg, kind)
        except EmptyFile:
            log.warning("no %s files for %s", kind, cfg.location)
            continue
        for f in files:
            # the full header is validated; only one channel is kept in memory
            frame = parse(f, cfg.timestamp_format, select=channels[:1])
            rep = (detect_gaps(frame, cfg.grid_period_ms or _grid_period(frame))
                   if len(frame) else None)
            reports[f] = rep
            rows.append({
                "file": os.path.basename(f), "kind": kind, "rows": len(frame),
                "expected": rep.expected_count if rep else 0,
                "present": rep.present_count if rep else 0,
                "missing_fraction": rep.missing_fraction if rep else 1.0,
                "gap_spans": len(rep.gap_spans) if rep else 0,
                "duplicates_dropped": frame.duplicates_dropped,
                "first": format_timestamps(frame.timestamps[:1], ISO)[0] if len(frame) else "",
                "last": format_timestamps(frame.timestamps[-1:], ISO)[0] if len(frame) else "",
            })
    if not rows:
        raise EmptyFile(f"no input files for {cfg.location} in {cfg.data_dir}")
    cols = ["file", "kind", "rows", "expected", "present", "missing_fraction", "gap_spans",
            "duplicates_dropped", "first", "last"]
    atomic_write(cfg.path("ingest", f"{cfg.location}_gaps.csv"),
                 _csv(pd.DataFrame(rows, columns=cols), cfg))
    return reports


# ---------------------------------------------------------------- clean / features

def _policy(cfg):
    s = cfg.imputation
    return ImputationPolicy(s.max_lookback_days, s.max_lookahead_days, Fallback(s.fallback),
                            s.donors_per_side, s.match_day_type)


def _grid_period(frame):
    # the observed cadence, when it tiles a day; otherwise the schema's nominal one
    p = observed_period(frame.timestamps)
    if p and MS_PER_DAY % p == 0:
        return p
    return frame.nominal_period


def build_features(cfg):
    """Harmonics files -> odd current channels -> imputed grid -> 1-minute means."""
    needed, _ = odd_current_channels(cfg.phase_mode)
    raw = load_harmonics(cfg, select=needed)
    if len(raw) == 0:
        raise DataError("harmonics files contain no rows")
    sel = select_odd_current_harmonics(raw, cfg.phase_mode)
    del raw
    return _impute_and_resample(cfg, sel)


def features_from_frame(cfg, harmonics):
    """The in-memory half of :func:`build_features`."""
    return _impute_and_resample(cfg, select_odd_current_harmonics(harmonics, cfg.phase_mode))


def _impute_and_resample(cfg, sel):
    n_imputed = 0
    if cfg.imputation.enabled:
        period = int(cfg.grid_period_ms or _grid_period(sel))
        span = (int(sel.timestamps[-1]) - int(sel.timestamps[0])) // period + 1
        if len(sel) < 0.5 * span:
            log.warning("only %d of %d grid points have data; check the timestamp format "
                        "and grid period", len(sel), span)
        res = impute_same_timestamp(
            sel, (int(sel.timestamps[0]), int(sel.timestamps[-1]), period), _policy(cfg))
        n_imputed = int(res.imputed.sum())
        sel = res.frame
    fm = resample_mean(sel)
    fm.meta["imputed_cells"] = n_imputed
    return fm


def build_activept(cfg):
    """Per-minute mean ActivePT, or None without ECD files."""
    try:
        ecd = load_ecd(cfg, select=("ActivePT",))
    except EmptyFile:
        return None
    return resample_frame(ecd, MS_PER_MINUTE)


def cmd_clean(cfg):
    fm = build_features(cfg)
    extra = [f"phase_mode={cfg.phase_mode} imputed_cells={fm.meta['imputed_cells']} "
             f"empty_windows={len(fm.empty_windows)}"]
    write_feature_csv(fm, cfg.path("features", f"{cfg.location}.csv"),
                      header_lines=[provenance(cfg), _stage_line(cfg, "features")] + extra)
    ap = build_activept(cfg)
    if ap is not None:
        df = pd.DataFrame({"timestamp": format_timestamps(ap.timestamps, ISO),
                           "ActivePT": ap.values[:, 0]})
        atomic_write(cfg.path("features", f"{cfg.location}_activept.csv"),
                     _csv(df, cfg, [_stage_line(cfg, "features")]))
    return fm


def get_features(cfg):
    """Cached features when built with the current settings, else rebuild."""
    path = cfg.path("features", f"{cfg.location}.csv")
    if os.path.exists(path) and _header_has(path, _stage_line(cfg, "features")):
        return read_feature_csv(path)
    return cmd_clean(cfg)


def _window_rows(fm, window, what):
    lo, hi = window
    lo = fm.timestamps[0] if lo is None else lo
    hi = fm.timestamps[-1] + 1 if hi is None else hi
    sub = fm.between(lo, hi)
    if len(sub) == 0:
        raise DataError(f"no feature rows in the {what} window")
    return sub


# ---------------------------------------------------------------- discover

def cmd_discover(cfg):
    """k-sweep (unless k is fixed) and the state model on the training window."""
    sweep, sm = discover_states(cfg, get_features(cfg))
    if sweep is not None:
        rows = [{"k": k_, "inertia": i, "silhouette": "" if s is None else s,
                 "in_elbow_band": int(sweep.elbow_band.k_lo <= k_ <= sweep.elbow_band.k_hi),
                 "chosen": int(k_ == sweep.chosen_k)} for k_, i, s in sweep.rows()]
        extra = [f"selection_rule={sweep.selection_rule} elbow_band={sweep.elbow_band.k_lo}-"
                 f"{sweep.elbow_band.k_hi} distinct_elbow={int(sweep.elbow_band.distinct)} "
                 f"degenerate={int(sweep.degenerate)}"]
        atomic_write(cfg.path("models", f"{cfg.location}_sweep.csv"),
                     _csv(pd.DataFrame(rows), cfg, extra))
    d = sm.to_dict()
    d["meta"] = _meta(cfg, "states")
    atomic_write(cfg.path("models", f"{cfg.location}_state_model.json"), canonical_json(d))
    return sweep, sm


def discover_states(cfg, fm):
    """Sweep and state model for a feature matrix, without touching disk."""
    train = _window_rows(fm, cfg.train_window(), "training")
    scaling = fit_scaling(train.values, train.feature_names) if cfg.standardize else None
    span = (int(train.timestamps[0]), int(train.timestamps[-1]))
    if cfg.k is not None:
        sm = fit_state_model(apply_scaling(train, scaling), cfg.k, cfg.seed, cfg.restarts,
                             span, cfg.n_jobs)
        return None, sm
    disc = apply_scaling(_window_rows(fm, cfg.discover_window(), "discovery"), scaling)
    sweep = sweep_k(disc, (cfg.k_min, min(cfg.k_max, len(disc))), cfg.seed, cfg.restarts,
                    cfg.silhouette_sample, cfg.n_jobs)
    if cfg.discover_window() == cfg.train_window():
        sm = fit_state_model(disc, sweep, cfg.seed, cfg.restarts, span, cfg.n_jobs)
    else:
        sm = fit_state_model(apply_scaling(train, scaling), sweep.chosen_k, cfg.seed,
                             cfg.restarts, span, cfg.n_jobs)
    return sweep, sm


def load_state_model(cfg):
    path = cfg.path("models", f"{cfg.location}_state_model.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        if d.get("meta", {}).get("stage_hash") == cfg.stage_hash("states"):
            return StateModel.from_dict(d)
    return cmd_discover(cfg)[1]


# ---------------------------------------------------------------- forest

def train_state_forest(cfg, fm=None, sm=None):
    fm = fm if fm is not None else get_features(cfg)
    sm = sm if sm is not None else load_state_model(cfg)
    train = _window_rows(fm, cfg.train_window(), "training")
    labels = assign_nearest(sm, train)
    f = cfg.forest
    forest = train_forest(train, labels, f.n_trees, f.max_depth, f.min_samples_leaf,
                          f.max_features, cfg.seed, cfg.n_jobs)
    d = forest.to_dict()
    d["meta"] = _meta(cfg, "forest")
    atomic_write(cfg.path("models", f"{cfg.location}_forest.json"),
                 json.dumps(d, sort_keys=True, separators=(",", ":")) + "\n")
    return forest


def load_forest(cfg, fm=None, sm=None):
    path = cfg.path("models", f"{cfg.location}_forest.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        if d.get("meta", {}).get("stage_hash") == cfg.stage_hash("forest"):
            return ForestModel.from_dict(d)
    return train_state_forest(cfg, fm, sm)


def _day(fm, date):
    start = day_ms(date)
    return fm.between(start, start + MS_PER_DAY)


# ---------------------------------------------------------------- assign

def _read_activept(cfg):
    path = cfg.path("features", f"{cfg.location}_activept.csv")
    if not os.path.exists(path):
        return None
    df = pd.read_csv(path, comment="#", dtype={"timestamp": str}, float_precision="round_trip")
    from .ingest import parse_timestamps

    return pd.Series(df["ActivePT"].to_numpy(), index=parse_timestamps(df["timestamp"], ISO))


def cmd_assign(cfg, dates=None):
    """Per-day state files, PCA projections and ActivePT-vs-time series."""
    dates = list(dates if dates is not None else cfg.eval_dates)
    fm = get_features(cfg)
    sm = load_state_model(cfg)
    forest = load_forest(cfg, fm, sm) if cfg.assign_with == "forest" else None
    train = _window_rows(fm, cfg.train_window(), "training")
    pca = pca_fit(model_space(sm, train), 2) if len(train) > 2 else None
    activept = _read_activept(cfg)
    names = list(sm.feature_names)
    cents = sm.centroids_original_units()
    out = {}
    for date in dates:
        day = _day(fm, date)
        if forest is not None and len(day):
            asg = predict(forest, day)
        else:
            asg = assign_nearest(sm, day)
        pop = np.bincount(asg.labels, minlength=sm.k) if len(asg) else np.zeros(sm.k, int)
        extra = [f"location={cfg.location} date={date} source={cfg.assign_with} k={sm.k} "
                 f"distinct_states={asg.distinct()}",
                 ",".join(["state_label", "population", *names])]
        extra += [",".join(["state", str(s), str(int(pop[s])), *(repr(float(v)) for v in cents[s])])
                  for s in range(sm.k)]
        body = pd.DataFrame({"timestamp": format_timestamps(day.timestamps, ISO),
                             "state_label": asg.labels})
        atomic_write(cfg.path("results", cfg.location, f"{date}.csv"), _csv(body, cfg, extra))
        if pca is not None:
            proj = project(pca, model_space(sm, day)) if len(day) else np.empty((0, 2))
            df = pd.DataFrame({"timestamp": body["timestamp"], "component_1": proj[:, 0],
                               "component_2": proj[:, 1], "state_label": asg.labels})
            atomic_write(cfg.path("results", cfg.location, f"{date}_pca.csv"),
                         _csv(df, cfg, [f"explained_variance={pca.explained_variance.tolist()}"]))
        if activept is not None:
            ap = activept.reindex(day.timestamps).to_numpy()
            df = pd.DataFrame({"timestamp": body["timestamp"], "ActivePT": ap,
                               "state_label": asg.labels})
            atomic_write(cfg.path("results", cfg.location, f"{date}_activept.csv"), _csv(df, cfg))
        out[date] = asg
    return out


# ---------------------------------------------------------------- eval

LEADERBOARD_COLUMNS = ["date", "f1_macro", "f1_micro", "f1_weighted", "n_states_pred",
                       "n_states_truth", "model_hash", "seed"]


def cmd_eval(cfg):
    """Train (or load) the forest and score each evaluation day."""
    fm = get_features(cfg)
    sm = load_state_model(cfg)
    rows, reports = [], []
    if cfg.eval_dates:
        forest = load_forest(cfg, fm, sm)
        digest = forest.digest()
        for date in cfg.eval_dates:
            day = _day(fm, date)
            if len(day) == 0:
                raise DataError(f"no feature rows on {date}")
            rep = evaluate_day(forest, sm, day, date, cfg.averaging)
            reports.append(rep)
            rows.append({"date": date, "f1_macro": rep.f1_macro, "f1_micro": rep.f1_micro,
                         "f1_weighted": rep.f1_weighted, "n_states_pred": rep.n_states_pred,
                         "n_states_truth": rep.n_states_truth, "model_hash": digest,
                         "seed": cfg.seed})
    df = pd.DataFrame(rows, columns=LEADERBOARD_COLUMNS)
    atomic_write(cfg.path("leaderboard", f"{cfg.location}.csv"), _csv(df, cfg))
    return reports


# ---------------------------------------------------------------- synth

def cmd_synth(profile, n_days, out_dir, location=None, timestamp_format=None):
    """Write synthetic ECD, harmonics and truth CSVs in the ingest formats."""
    from .ingest import DEFAULT_TIMESTAMP_FORMAT
    from .synth import generate_days

    fmt = timestamp_format or DEFAULT_TIMESTAMP_FORMAT
    location = location or profile.name
    data = generate_days(profile, n_days)
    root = os.path.join(out_dir, location)
    write_frame_csv(data.harmonics, os.path.join(root, f"{location}_Harmonics.csv"), fmt)
    write_frame_csv(data.ecd, os.path.join(root, f"{location}_ECD.csv"), fmt)
    truth = pd.DataFrame({"timestamp": format_timestamps(data.truth.timestamps, ISO),
                          "state": data.truth.labels})
    buf = io.StringIO()
    truth.to_csv(buf, index=False, lineterminator="\n")
    atomic_write(os.path.join(root, f"{location}_truth.csv"), buf.getvalue())
    atomic_write(os.path.join(root, f"{location}_profile.json"), canonical_json(profile.to_dict()))
    return data


# ---------------------------------------------------------------- report

def cmd_report(cfg):
    """Plain-text summary of whatever artifacts exist for the location."""
    lines = ["# " + provenance(cfg), f"location: {cfg.location}"]
    sweep = cfg.path("models", f"{cfg.location}_sweep.csv")
    if os.path.exists(sweep):
        df = pd.read_csv(sweep, comment="#")
        chosen = df.loc[df["chosen"] == 1, "k"]
        band = df.loc[df["in_elbow_band"] == 1, "k"]
        lines.append(f"k sweep: {df['k'].min()}..{df['k'].max()}, elbow band "
                     f"{band.min()}-{band.max()}, chosen k = {int(chosen.iloc[0])}")
    model = cfg.path("models", f"{cfg.location}_state_model.json")
    if os.path.exists(model):
        with open(model, encoding="utf-8") as fh:
            sm = StateModel.from_dict(json.load(fh))
        lines.append(f"state model: k = {sm.k}, training populations {sm.populations.tolist()}")
    lb = cfg.path("leaderboard", f"{cfg.location}.csv")
    if os.path.exists(lb):
        df = pd.read_csv(lb, comment="#")
        for r in df.itertuples():
            lines.append(f"{r.date}: F1 macro {r.f1_macro:.3f} micro {r.f1_micro:.3f} "
                         f"weighted {r.f1_weighted:.3f}; states pred {r.n_states_pred} "
                         f"truth {r.n_states_truth}")
    text = "\n".join(lines) + "\n"
    atomic_write(cfg.path("report", f"{cfg.location}.txt"), text)
    return text


def run_all(cfg):
    cmd_clean(cfg)
    cmd_discover(cfg)
    if cfg.eval_dates:
        cmd_eval(cfg)
        cmd_assign(cfg)
    return cmd_report(cfg)


__all__ = ["PipelineConfig", "ConfigError", "cmd_ingest", "cmd_clean", "cmd_discover",
           "cmd_assign", "cmd_eval", "cmd_synth", "cmd_report", "run_all", "iso_day"]
