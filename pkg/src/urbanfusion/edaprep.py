"""EDA quality screening, one-level Haar SWT smoothing and fragment truncation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import SignalStream
from .errors import EmptyResult, EmptyStream, LengthMismatch, MalformedRow, TooShort

SQRT2 = np.sqrt(2.0)


class Verdict(str, Enum):
    CLEAN = "Clean"
    TYPE1 = "Type1Error"
    TYPE2 = "Type2Error"


@dataclass(frozen=True)
class ProfileClass:
    verdict: Verdict
    two_level_fraction: float
    zero_fraction: float
    loss_fraction: float

    @property
    def evidence(self):
        return (self.two_level_fraction, self.zero_fraction, self.loss_fraction)


@dataclass(frozen=True)
class QcThresholds:
    two_level_fraction: float = 0.95
    zero_fraction: float = 0.50
    loss_fraction: float = 0.30
    level_tolerance: float = 0.01
    zero_level: float = 1e-6


def _two_level_fraction(values: np.ndarray, tol: float) -> float:
    # Zeros are sensor loss, counted separately; a flat signal is not two-level.
    nz = values[np.abs(values) > 0]
    if nz.size == 0:
        return 0.0
    bins, counts = np.unique(np.round(nz / tol).astype(np.int64), return_counts=True)
    if bins.size < 2:
        return 0.0
    top = bins[np.argsort(counts, kind="stable")[-2:]] * tol
    near = np.zeros(nz.size, dtype=bool)
    for level in top:
        near |= np.abs(nz - level) <= tol + 1e-12
    return float(near.sum()) / values.size


def classify_profile(eda: SignalStream, thresholds: QcThresholds = QcThresholds()) -> ProfileClass:
    """Screen an EDA recording for the two erroneous profile types.

    Type 1 is a step-like signal living on two levels, or one with heavy sample
    loss. Type 2 is a signal that is mostly zero.
    """
    if len(eda) == 0:
        raise EmptyStream(f"{eda.participant_id}: EDA stream is empty")
    v = eda.values
    two = _two_level_fraction(v, thresholds.level_tolerance)
    zero = float(np.mean(v <= thresholds.zero_level))
    expected = int(round(eda.duration * eda.nominal_hz)) + 1
    loss = max(0.0, 1.0 - len(eda) / expected)
    if two >= thresholds.two_level_fraction or loss >= thresholds.loss_fraction:
        verdict = Verdict.TYPE1
    elif zero >= thresholds.zero_fraction:
        verdict = Verdict.TYPE2
    else:
        verdict = Verdict.CLEAN
    return ProfileClass(verdict, two, zero, loss)


@dataclass(frozen=True, eq=False)
class WaveletCoeffs:
    approx: np.ndarray
    detail: np.ndarray
    level: int = 1


def swt_haar(signal) -> WaveletCoeffs:
    """Non-decimated one-level Haar transform with periodic extension."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise TooShort("SWT needs a 1-D signal of length >= 2")
    nxt = np.roll(x, -1)
    return WaveletCoeffs((x + nxt) / SQRT2, (x - nxt) / SQRT2)


def clamp_detail(coeffs: WaveletCoeffs, theta: float = 0.001, mode: str = "clamp") -> WaveletCoeffs:
    """Bound detail coefficients to ``[-theta, theta]``.

    ``mode="zero_above"`` zeroes coefficients whose magnitude exceeds theta
    instead of clipping them.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    d = coeffs.detail
    if mode == "clamp":
        d = np.clip(d, -theta, theta)
    elif mode == "zero_above":
        d = np.where(np.abs(d) > theta, 0.0, d)
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    return WaveletCoeffs(coeffs.approx, d, coeffs.level)


def inverse_swt(coeffs: WaveletCoeffs) -> np.ndarray:
    """Average the two shift reconstructions of each sample."""
    a, d = np.asarray(coeffs.approx, float), np.asarray(coeffs.detail, float)
    if a.shape != d.shape:
        raise LengthMismatch("approx and detail lengths differ")
    from_here = (a + d) / SQRT2
    from_prev = np.roll((a - d) / SQRT2, 1)
    return 0.5 * (from_here + from_prev)


def smooth(eda: SignalStream, theta: float = 0.001, mode: str = "clamp") -> SignalStream:
    coeffs = clamp_detail(swt_haar(eda.values), theta, mode)
    return eda.with_samples(eda.timestamps, inverse_swt(coeffs))


@dataclass(frozen=True)
class TruncationMarks:
    keep_intervals: tuple

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.keep_intervals)
        for a, b in ivs:
            if b < a:
                raise ValueError(f"keep interval ({a}, {b}) is reversed")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 <= b0:
                raise ValueError("keep intervals must be ordered and disjoint")
        object.__setattr__(self, "keep_intervals", ivs)


def truncate(signal: SignalStream, marks: TruncationMarks) -> SignalStream:
    """Keep only samples inside the (closed) keep intervals."""
    t = signal.timestamps
    keep = np.zeros(t.size, dtype=bool)
    for a, b in marks.keep_intervals:
        keep |= (t >= a) & (t <= b)
    if not keep.any():
        raise EmptyResult(f"{signal.participant_id}: truncation removed every sample")
    return signal.with_samples(t[keep], signal.values[keep])


def read_marks(path) -> TruncationMarks:
    """Parse a marks file made of ``keep,start_s,end_s`` lines."""
    path = Path(path)
    intervals = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() != "keep" or len(row) != 3:
                raise MalformedRow(path, lineno, "expected 'keep,start_s,end_s'")
            try:
                intervals.append((float(row[1]), float(row[2])))
            except ValueError:
                raise MalformedRow(path, lineno, "bad interval bound") from None
    return TruncationMarks(tuple(sorted(intervals)))


def write_marks(marks: TruncationMarks, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a, b in marks.keep_intervals:
            fh.write(f"keep,{a!r},{b!r}\n")


def write_qc_report(results: dict, path) -> None:
    """``results`` maps participant id to :class:`ProfileClass`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "verdict", "two_level_fraction", "zero_fraction", "loss_fraction"])
        for pid, pc in results.items():
            w.writerow([pid, pc.verdict.value, f"{pc.two_level_fraction:.6f}", f"{pc.zero_fraction:.6f}",
                        f"{pc.loss_fraction:.6f}"])
