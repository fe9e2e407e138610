"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import build_suite, read_counts
from urbanfusion import geomap
from urbanfusion.config import load_config
from urbanfusion.core import FEATURE_NAMES, Channel, SignalStream, read_compiled
from urbanfusion.edaprep import inverse_swt, swt_haar
from urbanfusion.featsel import backward_eliminate
from urbanfusion.fuzzy import FuzzyClassifier
from urbanfusion.ingest import upsample_linear
from urbanfusion.isovist import IsovistParams, ObstacleMap, isovist_at, polygon_area, visibility_polygon
from urbanfusion.pipeline import run_pipeline, window_sweep
from urbanfusion.predictors import ClassCounts, PredictorSpec, confusion_metrics, cross_validate
from urbanfusion.som import hex_neighbors, train_som, u_matrix
from urbanfusion.synth import generate_suite


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def test_criterion_01_metric_arithmetic(verdict):
    t0 = time.perf_counter()
    binary = confusion_metrics(ClassCounts(3105, 405, 2162, 396))
    ha = confusion_metrics(ClassCounts(161, 236, 5346, 325))
    elapsed = time.perf_counter() - t0
    checks = [
        abs(binary.recall - 0.89) <= 0.005,
        abs(binary.precision - 0.88) <= 0.005,
        abs(binary.specificity - 0.84) <= 0.005,
        abs(binary.accuracy - 0.868) <= 0.005,
        abs(ha.recall - 0.33) <= 0.005,
        abs(ha.specificity - 0.96) <= 0.005,
        elapsed < 1e-3,
    ]
    verdict(1, all(checks), f"binary R={binary.recall:.4f} P={binary.precision:.4f} S={binary.specificity:.4f} "
            f"acc={binary.accuracy:.4f}; HA R={ha.recall:.4f} S={ha.specificity:.4f}; {elapsed * 1e3:.3f} ms")


def test_criterion_02_swt_round_trip(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = max(np.max(np.abs(x - inverse_swt(swt_haar(x)))) for x in rng.normal(size=(100, 1024)))
    elapsed = time.perf_counter() - t0
    verdict(2, worst <= 1e-9 and elapsed < 1.0, f"max error {worst:.2e}, {elapsed:.3f} s")


def test_criterion_03_affine_upsampling(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        a, b, t0 = rng.normal(scale=10), rng.normal(scale=100), rng.uniform(1e9, 2e9)
        t = t0 + np.arange(200) / 0.4
        s = SignalStream("p", "sound_db", t, a * (t - t0) + b, 0.4)
        up = upsample_linear(s, 1.0)
        worst = max(worst, float(np.max(np.abs(up.values - (a * (up.timestamps - t0) + b)))))
    verdict(3, worst <= 1e-9, f"max error {worst:.2e}")


def _raster_area(origin, heading, rects, radius=100.0, fov=180.0, cell=0.25):
    """Visible area counted on a square grid: a cell centre is visible when the
    straight line from the origin crosses no obstacle edge."""
    ox, oy = origin
    g = np.arange(-radius + cell / 2, radius, cell)
    X, Y = np.meshgrid(ox + g, oy + g)
    dx, dy = X - ox, Y - oy
    ux, uy = math.cos(heading), math.sin(heading)
    inside = (dx * dx + dy * dy <= radius * radius) & (np.cos(np.radians(fov / 2)) * np.hypot(dx, dy) <= dx * ux + dy * uy)
    px, py = X[inside], Y[inside]
    blocked = np.zeros(px.size, dtype=bool)
    for x0, y0, x1, y1 in rects:
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        for (ax, ay), (bx, by) in zip(corners, corners[1:] + corners[:1]):
            d1 = (bx - ax) * (oy - ay) - (by - ay) * (ox - ax)
            d2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            d3 = (px - ox) * (ay - oy) - (py - oy) * (ax - ox)
            d4 = (px - ox) * (by - oy) - (py - oy) * (bx - ox)
            blocked |= (d1 * d2 < 0) & (d3 * d4 < 0)
        blocked |= (px > x0) & (px < x1) & (py > y0) & (py < y1)
    return float((~blocked).sum()) * cell * cell


def _random_rects(rng, k):
    rects = []
    while len(rects) < k:
        cx, cy = rng.uniform(-90, 90, 2)
        w, h = rng.uniform(4, 30, 2)
        r = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        if not (r[0] - 1 < 0 < r[2] + 1 and r[1] - 1 < 0 < r[3] + 1):
            rects.append(r)
    return rects


def _obstacles(rects):
    return ObstacleMap(tuple(np.array([(a, b), (c, b), (c, d), (a, d)]) for a, b, c, d in rects))


def test_criterion_04_isovist(verdict):
    poly = visibility_polygon((0.0, 0.0), 0.0, ObstacleMap(()), 180.0, 100.0, 1.0)
    d = isovist_at((0.0, 0.0), 0.0, ObstacleMap(()))
    area_err = abs(d.area - 15707.96) / 15707.96
    per_err = abs(d.perimeter - 514.16) / 514.16
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(6):
        rects = _random_rects(rng, int(rng.integers(3, 9)))
        h = float(rng.uniform(0, 2 * math.pi))
        got = polygon_area(visibility_polygon((0.0, 0.0), h, _obstacles(rects)).vertices)
        ref = _raster_area((0.0, 0.0), h, rects)
        worst = max(worst, abs(got - ref) / ref)
    obs = _obstacles(_random_rects(rng, 20))
    pts = []
    while len(pts) < 100:
        p = rng.uniform(-60, 60, 2)
        if not obs.contains_strictly(p) and all(np.hypot(*(p - v).T).min() > 1e-3 for v in obs.polygons):
            pts.append(p)
    t0 = time.perf_counter()
    for p in pts:
        try:
            isovist_at(p, float(rng.uniform(0, 2 * math.pi)), obs, IsovistParams())
        except Exception:
            pass
    elapsed = time.perf_counter() - t0
    ok = area_err <= 0.005 and per_err <= 0.005 and worst <= 0.02 and elapsed < 5.0 and len(poly.vertices) > 3
    verdict(4, ok, f"half-disc area err {area_err:.2e}, perimeter err {per_err:.2e}; raster worst {worst:.4f}; "
            f"100 positions {elapsed:.2f} s")


def test_criterion_05_arousal_closure(verdict, noiseless_suite, tmp_path):
    cfg = noiseless_suite
    hits = total = 0
    for p in cfg.participants:
        truth = read_counts(p.streams[Channel.EDA_US].parent / "truth.csv")
        got = read_counts(cfg.out / "responses" / f"{p.id}.csv")
        hits += sum(truth[k] == v for k, v in got.items())
        total += len(got)
    tiny = build_suite(tmp_path, 3, pulse_amplitude=(0.005, 0.005), min_observable=None)
    tiny_counts = [n for p in tiny.participants for n in read_counts(tiny.out / "responses" / f"{p.id}.csv").values()]
    frac = hits / total
    ok = frac >= 0.98 and total > 3000 and max(tiny_counts) == 0
    verdict(5, ok, f"nscr match {frac:.4f} over {total} windows; 0.005 uS pulses max count {max(tiny_counts)}")


def _edges(rules, feature):
    """Points where a rule's membership on ``feature`` crosses 0.5."""
    out = []
    for r in rules:
        for name, a, b, c, d in r.antecedents:
            if name != feature:
                continue
            if math.isfinite(a):
                out.append(0.5 * (a + b))
            if math.isfinite(d):
                out.append(0.5 * (c + d))
    return out


def test_criterion_06_planted_rule(verdict, tmp_path):
    t0 = time.perf_counter()
    clean = build_suite(tmp_path / "clean", 10, sensor_noise=1.0)
    noisy = build_suite(tmp_path / "noisy", 10, sensor_noise=1.0, label_noise=0.1)
    dc, dn = read_compiled(clean.out / "compiled.csv"), read_compiled(noisy.out / "compiled.csv")
    tree = PredictorSpec("reptree", {}, 0)
    acc_clean = cross_validate(tree, dc.X, dc.labels(), 10, 0).accuracy
    acc_noisy = cross_validate(tree, dn.X, dn.labels(), 10, 0).accuracy
    model = FuzzyClassifier(feature_names=FEATURE_NAMES, seed=0).fit(dc.X, dc.labels())
    errs = {}
    for feat, target in (("sound_db", 66.0), ("illuminance_lux", 580.0)):
        col = dc.X[:, FEATURE_NAMES.index(feat)]
        edges = _edges(model.rules_, feat)
        errs[feat] = max(abs(e - target) for e in edges) / (col.max() - col.min()) if edges else math.inf
    furia_noisy = cross_validate(PredictorSpec("furia", {}, 0), dn.X, dn.labels(), 10, 0).accuracy
    elapsed = time.perf_counter() - t0
    ok = (acc_clean >= 0.95 and acc_noisy >= 0.80 and all(e <= 0.05 for e in errs.values())
          and furia_noisy >= 0.65 and elapsed < 60)
    verdict(6, ok, f"REP-Tree CV {acc_clean:.4f} clean / {acc_noisy:.4f} at 10% label noise; threshold error "
            f"sound {errs['sound_db']:.4f}, illuminance {errs['illuminance_lux']:.4f} of range; "
            f"fuzzy CV noisy {furia_noisy:.4f}; {elapsed:.1f} s")


def test_criterion_07_window_width_ordering(verdict, noisy_suite):
    widths = (5, 10, 15, 20, 25)
    res = window_sweep(noisy_suite, widths, {t: 0.02 * t / 5 for t in widths})
    a, b = res[5], res[25]
    ok = a["tpr"] > b["tpr"] and a["fpr"] <= b["fpr"]
    pts = ", ".join(f"t={t}: ({v['tpr']:.3f}, {v['fpr']:.3f})" for t, v in res.items())
    verdict(7, ok, f"(TPR, FPR) {pts}")


def test_criterion_08_bfe_recovery(verdict):
    names = [f"f{i}" for i in range(9)]
    specs = [PredictorSpec(k, {}, 0) for k in ("reptree", "mlp", "svm")]
    wins, chains = 0, True
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        X = np.column_stack([rng.uniform(0, 1, (300, 2)), rng.normal(size=(300, 7))])
        y = np.where((X[:, 0] > 0.6) | (X[:, 1] < 0.25), "A", "N")
        h = backward_eliminate(specs, X, y, names, seed)
        pair_kept = all(next(s for s in lad if s.size == 2).subset == ("f0", "f1") for lad in h.ladders.values())
        wins += pair_kept
        for lad in h.ladders.values():
            chains &= all(set(b.subset) < set(a.subset) and len(b.subset) == len(a.subset) - 1
                          for a, b in zip(lad, lad[1:]))
    verdict(8, wins >= 9 and chains, f"pair kept at size 2 in {wins}/10 runs (all three predictors); "
            f"strict chains {chains}")


def test_criterion_09_som_separation(verdict):
    rng = np.random.default_rng(9)
    X = np.vstack([rng.normal(0, 1, (3000, 9)), rng.normal(8, 1, (3000, 9))])
    lab = np.repeat([0, 1], 3000)
    t0 = time.perf_counter()
    som = train_som(X, 20, 20, seed=0)
    elapsed = time.perf_counter() - t0
    bmu = som.bmu(X)
    a, b = set(bmu[lab == 0]), set(bmu[lab == 1])
    owner = np.full(400, -1)
    owner[list(a)] = 0
    owner[list(b)] = 1
    U = u_matrix(som).ravel()
    nbrs = hex_neighbors(20, 20)
    interior = np.array([owner[k] >= 0 and all(owner[j] == owner[k] for j in nbrs[k]) for k in range(400)])
    ridge, inner = U[~interior].max(), np.median(U[interior])
    ok = not (a & b) and ridge > 2 * inner and som.qe_fine <= som.qe_rough and elapsed < 30
    verdict(9, ok, f"BMU overlap {len(a & b)}; ridge {ridge:.3f} vs intra median {inner:.3f}; "
            f"QE {som.qe_rough:.4f} -> {som.qe_fine:.4f}; {elapsed:.2f} s")


def test_criterion_10_geo_aggregation(verdict):
    rng = np.random.default_rng(10)
    lat = 47.37 + rng.uniform(0, 0.002, 400)
    lon = 8.54 + rng.uniform(0, 0.003, 400)
    pid = rng.choice(["a", "b", "c", "d"], 400)
    val = rng.integers(0, 8, 400).astype(float)
    base = geomap.bin_responses(lat, lon, pid, val, 10.0)
    busy = max(base, key=lambda g: g.n_participants)
    p0 = sorted(busy.contributions)[0]
    cells = [geomap.bin_responses(lat[[i]], lon[[i]], pid[[i]], val[[i]], 10.0, (lat.min(), lon.min()))[0].cell
             for i in range(400)]
    dup = [i for i in range(400) if cells[i] == busy.cell and pid[i] == p0]
    idx = np.r_[np.arange(400), dup * 5]
    again = geomap.bin_responses(lat[idx], lon[idx], pid[idx], val[idx], 10.0, (lat.min(), lon.min()))
    same = {g.cell: g.r_mean for g in base} == {g.cell: g.r_mean for g in again}
    norm = geomap.normalize(base)
    r = [g.r_norm for g in norm]
    ok = same and min(r) == 0.0 and max(r) == 1.0
    verdict(10, ok, f"r_mean unchanged after duplicating {len(dup) * 5} rows: {same}; "
            f"normalised range [{min(r)}, {max(r)}]")


def _outputs(run: Path):
    return sorted(p.relative_to(run) for p in run.rglob("*")
                  if p.is_file() and p.parent.name != "report" and p.name != "run_report.json")


def test_criterion_11_scale_and_determinism(verdict, tmp_path):
    cfg_path = generate_suite(tmp_path / "suite", 30, seed=11, sensor_noise=1.0)
    cfg = load_config(cfg_path)
    t0 = time.perf_counter()
    run_pipeline(cfg)
    elapsed = time.perf_counter() - t0
    cfg2 = load_config(cfg_path, ["out=rerun"])
    run_pipeline(cfg2)
    files = _outputs(cfg.out)
    identical = files == _outputs(cfg2.out) and all(
        filecmp.cmp(cfg.out / f, cfg2.out / f, shallow=False) for f in files)
    rows = len(read_compiled(cfg.out / "compiled.csv"))
    verdict(11, elapsed < 60 and identical, f"30 participants x 29 min, {rows} rows, {elapsed:.1f} s; "
            f"{len(files)} output files byte-identical on rerun: {identical}")
