"""File-based stage orchestration from raw streams to the analysis outputs.

Every stage reads its inputs from and writes its outputs to the run directory,
so any stage can be rerun on its own. Each stage leaves a JSON fragment under
``report/``; these are merged into the single ``run_report.json``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from . import arousal, edaprep, featsel, fuzzy, geomap, som
from .config import RunConfig
from .core import (
    ENV_CHANNELS,
    FEATURE_NAMES,
    NOMINAL_HZ,
    Channel,
    EventVector,
    IsovistDescriptor,
    ResponseLabel,
    read_compiled,
    read_stream,
    write_compiled,
    write_stream,
)
from .errors import (
    DecompositionFailed,
    DegeneratePolygon,
    DegenerateStep,
    OriginInsideObstacle,
    StageFailure,
    TooShort,
    UrbanFusionError,
)
from .fusion import full_windows, mark_windows, pair, stack, window_means
from .ingest import align, apply_clock_offset, read_frame, upsample_linear, write_alignment_report, write_frame
from .isovist import IsovistParams, ObstacleMap, isovist_at, load_obstacles, project_gps, track_headings
from .predictors import PredictorSpec, cross_validate, write_metrics_table, write_roc

PRE_STAGES = ("ingest", "qc", "smooth", "arousal", "isovist", "fuse")
STAGES = PRE_STAGES + ("train", "fuzzy", "featsel", "som", "geomap")
ISO_HEADER = ("window_index", "iso_area", "iso_perimeter", "iso_compactness", "iso_occlusivity")


def _read_eda(cfg: RunConfig, p):
    s = read_stream(p.streams[Channel.EDA_US], Channel.EDA_US, p.id, NOMINAL_HZ[Channel.EDA_US])
    return apply_clock_offset(s, p.clock_offset_s)


def _accepted(cfg: RunConfig) -> list:
    path = cfg.out / "qc_report.csv"
    if not path.is_file():
        raise FileNotFoundError(f"{path} missing; run the qc stage first")
    with path.open(newline="", encoding="utf-8") as fh:
        ok = {r["participant_id"] for r in csv.DictReader(fh) if r["verdict"] == edaprep.Verdict.CLEAN.value}
    return [p for p in cfg.participants if p.id in ok]


def _subsample(n: int, max_rows: int, seed: int) -> np.ndarray:
    if not max_rows or n <= max_rows:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, max_rows, replace=False))


def _origin(cfg: RunConfig):
    if cfg.origin is not None:
        return cfg.origin
    # South-west-most first fix across participants keeps the frame deterministic.
    fixes = []
    for p in cfg.participants:
        f = cfg.out / "frames" / f"{p.id}.csv"
        if f.is_file():
            fr = read_frame(f, p.id)
            fixes.append((float(fr.column(Channel.GPS_LAT)[0]), float(fr.column(Channel.GPS_LON)[0])))
    if not fixes:
        raise StageFailure("isovist", "no aligned frames to anchor the local projection")
    return min(fixes)


# -- stages -----------------------------------------------------------------


def stage_ingest(cfg: RunConfig) -> dict:
    out = cfg.out / "frames"
    out.mkdir(parents=True, exist_ok=True)
    frames, info = [], {}
    for p in cfg.participants:
        streams = []
        for ch in ENV_CHANNELS:
            s = read_stream(p.streams[ch], ch, p.id, NOMINAL_HZ[ch])
            if s.nominal_hz < 1.0:
                s = upsample_linear(s, 1.0)
            streams.append(s)
        frame = align(streams)
        write_frame(frame, out / f"{p.id}.csv")
        frames.append(frame)
        info[p.id] = {"rows_kept": len(frame), "rows_dropped": frame.dropped}
    write_alignment_report(frames, cfg.out / "alignment_report.csv")
    return {"participants": info}


def stage_qc(cfg: RunConfig) -> dict:
    th = edaprep.QcThresholds(cfg.eda_prep.two_level_fraction, cfg.eda_prep.zero_fraction,
                              cfg.eda_prep.loss_fraction)
    results = {p.id: edaprep.classify_profile(_read_eda(cfg, p), th) for p in cfg.participants}
    cfg.out.mkdir(parents=True, exist_ok=True)
    edaprep.write_qc_report(results, cfg.out / "qc_report.csv")
    return {
        "verdicts": {pid: pc.verdict.value for pid, pc in results.items()},
        "discarded": sorted(pid for pid, pc in results.items() if pc.verdict != edaprep.Verdict.CLEAN),
    }


def stage_smooth(cfg: RunConfig) -> dict:
    out = cfg.out / "eda"
    out.mkdir(parents=True, exist_ok=True)
    info = {}
    for p in _accepted(cfg):
        s = edaprep.smooth(_read_eda(cfg, p), cfg.eda_prep.theta, cfg.eda_prep.threshold_mode)
        marks = edaprep.read_marks(p.marks) if p.marks else edaprep.TruncationMarks(((p.walk_start, p.walk_end),))
        s = edaprep.truncate(s, marks)
        write_stream(s, out / f"{p.id}.csv")
        info[p.id] = {"samples": len(s)}
    return {"participants": info}


def stage_arousal(cfg: RunConfig) -> dict:
    a = cfg.arousal
    out = cfg.out / "events"
    out.mkdir(parents=True, exist_ok=True)
    params = arousal.CdaParams(tau1=a.tau1, tau2=a.tau2, optimize=a.optimize, restarts=a.restarts,
                               residual_cap=a.residual_cap, seed=cfg.seed)
    info, discarded = {}, {}
    for p in _accepted(cfg):
        eda = read_stream(cfg.out / "eda" / f"{p.id}.csv", Channel.EDA_US, p.id, NOMINAL_HZ[Channel.EDA_US])
        events, cover, diag = [], [], []
        for frag in arousal.split_fragments(eda):
            try:
                dec = arousal.decompose(frag, params)
            except (TooShort, DecompositionFailed) as exc:
                diag.append({"start": frag.timestamps[0], "end": frag.timestamps[-1], "skipped": str(exc)})
                continue
            events += arousal.detect_scr(dec, a.amp_threshold, (a.rise_time_min, a.rise_time_max))
            cover.append((float(frag.timestamps[0]), float(frag.timestamps[-1])))
            diag.append({"start": cover[-1][0], "end": cover[-1][1], "tau1": dec.tau1, "tau2": dec.tau2,
                         "residual_rmse": dec.residual_rmse})
        if not cover:
            discarded[p.id] = "no fragment could be decomposed"
            continue
        arousal.write_events(events, out / f"{p.id}.csv")
        edaprep.write_marks(edaprep.TruncationMarks(tuple(cover)), out / f"{p.id}_coverage.csv")
        info[p.id] = {"events": len(events), "fragments": diag}
    if not info:
        raise StageFailure("arousal", "no participant yielded a usable decomposition")
    return {"participants": info, "discarded": discarded}


def _load_obstacles(cfg: RunConfig, origin) -> ObstacleMap:
    return load_obstacles(cfg.obstacles, *origin) if cfg.obstacles else ObstacleMap(())


def stage_isovist(cfg: RunConfig) -> dict:
    out = cfg.out / "isovist"
    out.mkdir(parents=True, exist_ok=True)
    origin = _origin(cfg)
    obstacles = _load_obstacles(cfg, origin)
    params = IsovistParams(cfg.isovist.fov_deg, cfg.isovist.radius, cfg.isovist.angular_step_deg)
    info = {}
    for p in cfg.participants:
        frame = read_frame(cfg.out / "frames" / f"{p.id}.csv", p.id)
        qw = window_means(frame, full_windows(mark_windows(p.walk_start, p.walk_end, cfg.window_seconds)))
        lat = frame.column(Channel.GPS_LAT)[qw.first_rows]
        lon = frame.column(Channel.GPS_LON)[qw.first_rows]
        x, y = project_gps(lat, lon, *origin)
        pts = np.column_stack([x, y])
        try:
            heads = track_headings(pts)
        except DegenerateStep:
            heads = np.zeros(len(pts))
        failed = {}
        with (out / f"{p.id}.csv").open("w", encoding="utf-8") as fh:
            fh.write(",".join(ISO_HEADER) + "\n")
            for w, pt, h in zip(qw.windows, pts, heads):
                try:
                    d = isovist_at(pt, h, obstacles, params)
                except (OriginInsideObstacle, DegeneratePolygon) as exc:
                    failed[w.index] = type(exc).__name__
                    continue
                fh.write(",".join([str(w.index)] + [repr(float(v)) for v in d.as_tuple()]) + "\n")
        info[p.id] = {"windows": len(qw.windows) - len(failed), "failed": failed}
    return {"origin": list(origin), "participants": info}


def _read_isovists(path) -> dict:
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            out[int(r["window_index"])] = IsovistDescriptor(*(float(r[k]) for k in ISO_HEADER[1:]))
    return out


def stage_fuse(cfg: RunConfig) -> dict:
    resp_dir = cfg.out / "responses"
    resp_dir.mkdir(parents=True, exist_ok=True)
    parts, info = [], {}
    for p in _accepted(cfg):
        ev_path = cfg.out / "events" / f"{p.id}.csv"
        if not ev_path.is_file():
            continue
        events = arousal.read_events(ev_path)
        cover = edaprep.read_marks(cfg.out / "events" / f"{p.id}_coverage.csv").keep_intervals
        frame = read_frame(cfg.out / "frames" / f"{p.id}.csv", p.id)
        windows = mark_windows(p.walk_start, p.walk_end, cfg.window_seconds)
        partial = sum(w.partial for w in windows)
        qw = window_means(frame, full_windows(windows))
        isos = _read_isovists(cfg.out / "isovist" / f"{p.id}.csv")
        slack = 1.0 / NOMINAL_HZ[Channel.EDA_US]
        covered = np.array([any(a - slack <= w.start and w.end <= b + slack for a, b in cover) for w in qw.windows],
                           dtype=bool)
        counts = arousal.count_per_window(events, qw.windows)
        evs, resps, no_iso, uncovered = [], [], 0, 0
        for k, w in enumerate(qw.windows):
            if w.index not in isos:
                no_iso += 1
                continue
            if not covered[k]:
                uncovered += 1
                continue
            r = qw.first_rows[k]
            evs.append(EventVector(w, *map(float, qw.means[k]), isos[w.index],
                                   float(frame.column(Channel.GPS_LAT)[r]), float(frame.column(Channel.GPS_LON)[r])))
            b, m = arousal.label(int(counts[k]), cfg.arousal.ha_boundary)
            resps.append(ResponseLabel(w, int(counts[k]), b, m))
        arousal.write_responses([r.window for r in resps], [r.nscr for r in resps], resp_dir / f"{p.id}.csv",
                                cfg.arousal.ha_boundary)
        parts.append(pair(evs, resps, p.id))
        info[p.id] = {"rows": len(evs), "dropped_partial": partial, "dropped_empty": len(qw.dropped),
                      "dropped_no_isovist": no_iso, "dropped_uncovered": uncovered}
    if not parts:
        raise StageFailure("fuse", "no participant reached fusion")
    data = stack(parts)
    write_compiled(data, cfg.out / "compiled.csv")
    return {"rows": len(data), "participants": info}


def _compiled(cfg: RunConfig):
    return read_compiled(cfg.out / "compiled.csv")


def stage_train(cfg: RunConfig) -> dict:
    t = cfg.train
    data = _compiled(cfg)
    idx = _subsample(len(data), t.max_rows, cfg.seed)
    X, y = data.X[idx], data.labels(t.target)[idx]
    out = cfg.out / "models"
    out.mkdir(parents=True, exist_ok=True)
    res = {}
    for kind in t.kinds:
        spec = PredictorSpec(kind, dict(getattr(t, kind)), cfg.seed)
        cv = cross_validate(spec, X, y, t.folds, cfg.seed)
        write_metrics_table(cv, out / f"metrics_{kind}.csv", kind)
        write_roc(cv, out / f"roc_{kind}.csv", kind)
        res[kind] = {"accuracy": cv.accuracy, "rows": len(y)}
    return res


def stage_fuzzy(cfg: RunConfig) -> dict:
    f = cfg.fuzzy
    data = _compiled(cfg)
    X, y = data.X, data.labels(f.target)
    params = {"grow_fraction": f.grow_fraction, "min_precision": f.min_precision, "max_rules": f.max_rules}
    out = cfg.out / "rules"
    out.mkdir(parents=True, exist_ok=True)
    cv = cross_validate(PredictorSpec("furia", params, cfg.seed), X, y, f.folds, cfg.seed)
    write_metrics_table(cv, out / "metrics_furia.csv", "furia")
    model = fuzzy.FuzzyClassifier(feature_names=FEATURE_NAMES, seed=cfg.seed, **params).fit(X, y)
    fuzzy.write_rules(model.rules_, out / "rules.txt")
    observed = {n: (float(X[:, j].min()), float(X[:, j].max())) for j, n in enumerate(FEATURE_NAMES)}
    fuzzy.write_ranges(fuzzy.rule_ranges(model.rules_, observed), out / "ranges.csv")
    return {"cv_accuracy": cv.accuracy, "rules": len(model.rules_)}


def stage_featsel(cfg: RunConfig) -> dict:
    f = cfg.featsel
    data = _compiled(cfg)
    idx = _subsample(len(data), f.max_rows, cfg.seed)
    specs = [PredictorSpec(k, dict(getattr(cfg.train, k, {})), cfg.seed) for k in f.kinds]
    h = featsel.backward_eliminate(specs, data.X[idx], data.labels(f.target)[idx], FEATURE_NAMES, cfg.seed,
                                   f.resplit_per_level, f.top_k)
    featsel.write_hierarchy(h, cfg.out / "bfe.csv")
    return {"rows": len(idx), "agreement": {str(k): [list(s) for s in v] for k, v in h.agreement.items() if v}}


def stage_som(cfg: RunConfig) -> dict:
    s = cfg.som
    data = _compiled(cfg)
    grid = som.train_som(data.X, s.width, s.height, s.epochs, s.finetune, cfg.seed)
    out = cfg.out / "som"
    out.mkdir(parents=True, exist_ok=True)
    som.write_grid(som.u_matrix(grid), out / "u_matrix.csv")
    for j, name in enumerate(FEATURE_NAMES):
        som.write_grid(som.f_matrix(grid, j), out / f"f_{name}.csv")
    lm = som.l_matrix(grid, data.X, data.labels("binary"), data.participant_ids)
    som.write_grid(lm.label, out / "l_label.csv")
    som.write_grid(lm.participant, out / "l_participant.csv")
    som.write_grid(lm.hits, out / "hits.csv")
    return {"qe_rough": grid.qe_rough, "qe_fine": grid.qe_fine}


def stage_geomap(cfg: RunConfig) -> dict:
    g = cfg.geomap
    data = _compiled(cfg)
    bins = geomap.normalize(geomap.bin_dataset(data, g.grid_meters, cfg.origin, g.divide_by_total))
    geomap.export_geojson(bins, cfg.out / "geomap.geojson")
    return {"bins": len(bins)}


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "qc": stage_qc,
    "smooth": stage_smooth,
    "arousal": stage_arousal,
    "isovist": stage_isovist,
    "fuse": stage_fuse,
    "train": stage_train,
    "fuzzy": stage_fuzzy,
    "featsel": stage_featsel,
    "som": stage_som,
    "geomap": stage_geomap,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def run_stage(cfg: RunConfig, name: str) -> dict:
    """Run one stage, write its report fragment and refresh the run report."""
    if name not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {name!r}")
    t0 = time.perf_counter()
    try:
        result = STAGE_FUNCS[name](cfg)
    except StageFailure:
        raise
    except (UrbanFusionError, OSError, ValueError) as exc:
        raise StageFailure(name, exc) from exc
    frag = {"stage": name, "seconds": time.perf_counter() - t0, "result": result}
    rep = cfg.out / "report"
    rep.mkdir(parents=True, exist_ok=True)
    (rep / f"{name}.json").write_text(json.dumps(_jsonable(frag), indent=1, sort_keys=True), encoding="utf-8")
    write_run_report(cfg)
    return frag


def write_run_report(cfg: RunConfig) -> dict:
    stages, timings = {}, {}
    for name in STAGES:
        f = cfg.out / "report" / f"{name}.json"
        if f.is_file():
            frag = json.loads(f.read_text(encoding="utf-8"))
            stages[name] = frag["result"]
            timings[name] = frag["seconds"]
    report = {
        "status": "ok",
        "seed": cfg.seed,
        "window_seconds": cfg.window_seconds,
        "participants": [p.id for p in cfg.participants],
        "timings_s": timings,
        "stages": stages,
    }
    (cfg.out / "run_report.json").write_text(json.dumps(report, indent=1, sort_keys=True), encoding="utf-8")
    return report


def run_pipeline(cfg: RunConfig, stages=None) -> dict:
    """Run the preprocessing stages and the configured analyses in order."""
    order = list(stages) if stages is not None else list(PRE_STAGES) + [a for a in STAGES if a in cfg.analyses]
    cfg.out.mkdir(parents=True, exist_ok=True)
    for old in (cfg.out / "report").glob("*.json") if stages is None else ():
        old.unlink()
    for name in order:
        run_stage(cfg, name)
    return write_run_report(cfg)


def window_sweep(cfg: RunConfig, widths, label_noise=None, kind: str = "reptree", positive: str = "A",
                 folds: int = 10) -> dict:
    """Operating point of ``kind`` on the data fused at each window width.

    Needs the ingest to arousal stages already in ``cfg.out``. ``label_noise``
    maps a width to the fraction of binary labels flipped (seeded) before
    cross-validation. The base-width isovist and fusion outputs are restored.
    """
    import dataclasses

    rng = np.random.default_rng(cfg.seed)
    out = {}
    try:
        for t in widths:
            c = dataclasses.replace(cfg, window_seconds=float(t))
            stage_isovist(c)
            stage_fuse(c)
            data = _compiled(c)
            y = data.labels("binary").copy()
            flip = rng.random(len(y)) < (label_noise or {}).get(t, 0.0)
            y[flip] = np.where(y[flip] == "A", "N", "A")
            cv = cross_validate(PredictorSpec(kind, {}, cfg.seed), data.X, y, folds, cfg.seed)
            fpr, tpr = cv.roc_point(positive)
            out[t] = {"rows": len(y), "accuracy": cv.accuracy, "fpr": fpr, "tpr": tpr}
    finally:
        stage_isovist(cfg)
        stage_fuse(cfg)
    return out
