"""Tonic/phasic decomposition of EDA and significant-SCR counting.

The phasic model convolves a nonnegative driver with the Bateman impulse
response ``exp(-t/tau1) - exp(-t/tau2)``, normalised to unit area. Sampled at
``fs`` the kernel is the impulse response of a second-order recursive filter::

    H(z) = c z^-1 / ((1 - a z^-1)(1 - b z^-1)),  a = exp(-dt/tau1), b = exp(-dt/tau2)

so convolution is an ``lfilter`` call and exact deconvolution is a three-tap
FIR. The tonic level is found by interpolating the deconvolved signal through
its quiet minima; the phasic driver is the nonnegative remainder, refined by
projected-gradient least squares against the tonic-free signal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import minimize
from scipy.signal import find_peaks, lfilter, lfilter_zi

from .core import SignalStream, TimeWindow
from .errors import DecompositionFailed, TooShort


@dataclass(frozen=True)
class CdaParams:
    tau1: float = 2.0
    tau2: float = 0.75
    # Number of optimisation runs; the first starts at (tau1, tau2).
    restarts: int = 2
    optimize: bool = True
    max_evals: int = 60
    # Gaussian smoothing sigma in seconds.
    smoothing_window: float = 0.2
    tonic_grid: float = 10.0
    negativity_weight: float = 1.0
    spread_weight: float = 1.0
    refine_iters: int = 50
    residual_cap: float = 0.5
    min_duration: float = 60.0
    seed: int = 0


@dataclass(frozen=True)
class DetectParams:
    amp_threshold: float = 0.01
    # Admissible trough-to-peak rise time in seconds.
    rise_time: tuple = (1.0, 3.7)


@dataclass(frozen=True, eq=False)
class Decomposition:
    timestamps: np.ndarray
    tonic: np.ndarray
    driver: np.ndarray
    phasic: np.ndarray
    tau1: float
    tau2: float
    residual_rmse: float
    fs: float

    def driver_peaks(self, min_fraction: float = 0.05) -> np.ndarray:
        """Times of driver local maxima above ``min_fraction`` of the largest one."""
        top = float(self.driver.max()) if self.driver.size else 0.0
        if top <= 0:
            return np.empty(0)
        idx, _ = find_peaks(np.r_[0.0, self.driver, 0.0], height=min_fraction * top)
        return self.timestamps[idx - 1]


@dataclass(frozen=True)
class ScrEvent:
    onset: float
    peak_time: float
    amplitude: float


def bateman(t, tau1: float, tau2: float):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, np.exp(-np.clip(t, 0, None) / tau1) - np.exp(-np.clip(t, 0, None) / tau2), 0.0)


def bateman_peak(tau1: float, tau2: float) -> tuple[float, float]:
    """Return (time, value) of the Bateman maximum."""
    tp = tau1 * tau2 * math.log(tau1 / tau2) / (tau1 - tau2)
    return tp, float(bateman(tp, tau1, tau2))


def _coeffs(tau1: float, tau2: float, fs: float):
    a = math.exp(-1.0 / (fs * tau1))
    b = math.exp(-1.0 / (fs * tau2))
    area = (a - b) / ((1 - a) * (1 - b))
    num = np.array([0.0, (a - b) / area])
    den = np.array([1.0, -(a + b), a * b])
    return num, den


def convolve_irf(driver, tau1: float, tau2: float, fs: float, steady: bool = False) -> np.ndarray:
    """Causal convolution with the unit-area kernel.

    With ``steady=True`` the filter starts in equilibrium with ``driver[0]``,
    i.e. the driver is assumed constant before the first sample.
    """
    d = np.asarray(driver, dtype=float)
    num, den = _coeffs(tau1, tau2, fs)
    if steady and d.size:
        out, _ = lfilter(num, den, d, zi=lfilter_zi(num, den) * d[0])
        return out
    return lfilter(num, den, d)


def _adjoint(v, num, den):
    return lfilter(num, den, v[::-1])[::-1]


def deconvolve_irf(signal, tau1: float, tau2: float, fs: float) -> np.ndarray:
    """Exact inverse of :func:`convolve_irf` (edges padded by replication)."""
    y = np.asarray(signal, dtype=float)
    num, den = _coeffs(tau1, tau2, fs)
    yp = np.concatenate(([y[0]], y, [y[-1]]))
    return (yp[2:] + den[1] * yp[1:-1] + den[2] * yp[:-2]) / num[1]


def _tonic_driver(D: np.ndarray, fs: float, params: CdaParams) -> np.ndarray:
    n = D.size
    sigma = params.smoothing_window * fs
    Ds = gaussian_filter1d(D, sigma, mode="nearest") if sigma > 0 else D
    g = max(2, int(round(params.tonic_grid * fs)))
    nseg = -(-n // g)
    padded = np.full(nseg * g, np.inf)
    padded[:n] = Ds
    # Edge samples carry boundary artefacts of smoothing and deconvolution.
    edge = int(math.ceil(fs))
    if n > 4 * edge:
        padded[:edge] = np.inf
        padded[n - edge : n] = np.inf
    blocks = padded.reshape(nseg, g)
    valid = np.isfinite(blocks).any(axis=1)
    idx = (np.arange(nseg) * g + np.argmin(blocks, axis=1))[valid]
    vals = Ds[idx]
    if idx.size == 1:
        tonic = np.full(n, vals[0])
    else:
        xs = np.concatenate(([0], idx, [n - 1])) if idx[0] > 0 or idx[-1] < n - 1 else idx
        ys = np.concatenate(([vals[0]], vals, [vals[-1]])) if xs.size != idx.size else vals
        xs, keep = np.unique(xs, return_index=True)
        tonic = PchipInterpolator(xs, ys[keep])(np.arange(n))
    return gaussian_filter1d(tonic, sigma, mode="nearest") if sigma > 0 else tonic


def _split(y: np.ndarray, fs: float, tau1: float, tau2: float, params: CdaParams):
    D = deconvolve_irf(y, tau1, tau2, fs)
    tdrv = _tonic_driver(D, fs, params)
    tonic = convolve_irf(tdrv, tau1, tau2, fs, steady=True)
    raw = D - tdrv
    driver = np.maximum(raw, 0.0)
    return tonic, driver, raw


def _objective(y, fs, tau1, tau2, params):
    """Residual + negativity + driver spread (lower is better).

    Residual and negativity alone are minimised by a vanishing kernel, where the
    driver is the signal itself; the spread term, the fraction of samples on
    which the driver exceeds 5% of its maximum, rewards compact driver bursts.
    """
    if not (tau1 > tau2 + 0.01 and tau2 > 0.01):
        return 1e6
    tonic, driver, raw = _split(y, fs, tau1, tau2, params)
    resid = y - tonic - convolve_irf(driver, tau1, tau2, fs)
    scale = float(np.sqrt(np.mean(raw**2))) + 1e-12
    neg = float(np.sqrt(np.mean(np.minimum(raw, 0.0) ** 2))) / scale
    top = float(driver.max())
    spread = float(np.mean(driver > 0.05 * top)) if top > 0 else 0.0
    rmse = float(np.sqrt(np.mean(resid**2)))
    return rmse + params.negativity_weight * neg + params.spread_weight * spread


def _refine(y_phasic, driver, tau1, tau2, fs, iters):
    """FISTA on min ||k * d - y||^2, d >= 0; the kernel has unit gain, so step 1."""
    num, den = _coeffs(tau1, tau2, fs)
    x = driver.copy()
    z = x.copy()
    t = 1.0
    for _ in range(iters):
        grad = _adjoint(lfilter(num, den, z) - y_phasic, num, den)
        x_new = np.maximum(z - grad, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
    return x


def optimize_taus(y: np.ndarray, fs: float, params: CdaParams) -> tuple[float, float]:
    x0 = np.array([params.tau1, params.tau2])
    best_x, best_f = x0, _objective(y, fs, *x0, params)
    if not params.optimize or params.restarts <= 0:
        return float(x0[0]), float(x0[1])
    rng = np.random.default_rng(params.seed)
    fun = lambda x: _objective(y, fs, x[0], x[1], params)  # noqa: E731
    for k in range(params.restarts):
        start = x0 if k == 0 else x0 * rng.uniform(0.8, 1.25, size=2)
        res = minimize(
            fun,
            start,
            method="Nelder-Mead",
            bounds=[(0.5, 10.0), (0.1, 5.0)],
            options={"maxfev": params.max_evals, "xatol": 1e-3, "fatol": 1e-9},
        )
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return float(best_x[0]), float(best_x[1])


def decompose(eda: SignalStream, params: CdaParams = CdaParams()) -> Decomposition:
    """Continuous decomposition of a (smoothed, truncated) EDA recording."""
    if len(eda) < 3 or eda.duration < params.min_duration:
        raise TooShort(f"{eda.participant_id}: need >= {params.min_duration} s of EDA, got {eda.duration:.1f} s")
    fs = eda.nominal_hz
    y = eda.values.astype(float)
    tau1, tau2 = optimize_taus(y, fs, params)
    tonic, driver, _ = _split(y, fs, tau1, tau2, params)
    if params.refine_iters > 0:
        driver = _refine(y - tonic, driver, tau1, tau2, fs, params.refine_iters)
    phasic = convolve_irf(driver, tau1, tau2, fs)
    rmse = float(np.sqrt(np.mean((y - tonic - phasic) ** 2)))
    if not math.isfinite(rmse) or rmse > params.residual_cap:
        raise DecompositionFailed(f"{eda.participant_id}: residual rmse {rmse:.4f} exceeds {params.residual_cap}")
    return Decomposition(eda.timestamps, tonic, driver, phasic, tau1, tau2, rmse, fs)


def _flank_foot(p: np.ndarray, pk: int, floor: int, frac: float = 0.1) -> int:
    """Walk back from a peak to the foot of its rising flank.

    The walk stops where the signal stops rising or where the rise per sample
    falls below ``frac`` of the steepest rise seen on the flank so far, so slow
    drifts and the tails of earlier responses are not counted as rise.
    """
    j = pk
    steepest = 0.0
    while j > floor:
        step = p[j] - p[j - 1]
        if step <= 0 or step < frac * steepest:
            break
        steepest = max(steepest, step)
        j -= 1
    return j


def detect_scr(dec: Decomposition, amp_threshold: float = 0.01, rise_time=(1.0, 3.7)) -> list[ScrEvent]:
    """Significant responses in the reconvolved phasic component.

    Each local maximum is paired with the foot of its rising flank (the onset
    trough); it counts when the trough-to-peak amplitude reaches
    ``amp_threshold`` and the rise time lies in ``rise_time``. A flank that
    reaches back to the first sample is censored and skipped.
    """
    p = dec.phasic
    if p.size < 3 or not np.any(p > 0):
        return []
    cand, _ = find_peaks(p, prominence=0.5 * amp_threshold)
    lo, hi = rise_time
    reach = int(math.ceil(2 * hi * dec.fs))
    events = []
    prev = 0
    for pk in cand:
        trough = _flank_foot(p, pk, max(prev, pk - reach))
        prev = pk
        if trough == 0:
            # Rise already under way when the recording starts: no observed foot.
            continue
        amp = float(p[pk] - p[trough])
        rise = (pk - trough) / dec.fs
        if amp >= amp_threshold and lo - 1e-9 <= rise <= hi + 1e-9:
            events.append(ScrEvent(float(dec.timestamps[trough]), float(dec.timestamps[pk]), amp))
    return events


def count_nscr(events: Sequence[ScrEvent], window: TimeWindow) -> int:
    return sum(1 for ev in events if window.start <= ev.onset < window.end)


def count_per_window(events: Sequence[ScrEvent], windows: Sequence[TimeWindow]) -> np.ndarray:
    onsets = np.sort(np.array([ev.onset for ev in events], dtype=float))
    starts = np.array([w.start for w in windows], dtype=float)
    ends = np.array([w.end for w in windows], dtype=float)
    return np.searchsorted(onsets, ends, side="left") - np.searchsorted(onsets, starts, side="left")


def label(nscr: int, ha_boundary: str = "ge6") -> tuple[str, str]:
    """Map an nSCR count to its (binary, multiclass) labels."""
    if nscr < 0:
        raise ValueError("nscr must be >= 0")
    if ha_boundary not in ("ge6", "gt6"):
        raise ValueError(f"unknown ha_boundary {ha_boundary!r}")
    if nscr == 0:
        return "N", "N"
    high = nscr >= 6 if ha_boundary == "ge6" else nscr > 6
    return "A", "HA" if high else "LA"


def split_fragments(eda: SignalStream, gap_factor: float = 1.5) -> list[SignalStream]:
    """Split a truncated stream at gaps longer than ``gap_factor`` sample periods."""
    t = eda.timestamps
    if t.size < 2:
        return [eda]
    cuts = np.flatnonzero(np.diff(t) > gap_factor / eda.nominal_hz) + 1
    bounds = np.r_[0, cuts, t.size]
    return [eda.with_samples(t[a:b], eda.values[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def write_events(events: Sequence[ScrEvent], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("onset,peak_time,amplitude\n")
        for ev in events:
            fh.write(f"{ev.onset!r},{ev.peak_time!r},{ev.amplitude!r}\n")


def read_events(path) -> list[ScrEvent]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return [ScrEvent(float(a), float(b), float(c)) for a, b, c in reader]


def write_responses(windows: Sequence[TimeWindow], counts, path, ha_boundary: str = "ge6") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("window_index,nscr,binary,multiclass\n")
        for w, n in zip(windows, counts):
            b, m = label(int(n), ha_boundary)
            fh.write(f"{w.index},{int(n)},{b},{m}\n")
