"""Turning R-peak detection into per-sample regression and back.

Segments are min-max normalized to [-1, 1]; targets are 5-sample pulses
centred on each R-peak. Predictions are thresholded into runs, one peak per
run, and matched one-to-one against ground truth within a tolerance window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_RATE_HZ = 400
SEGMENT_LENGTH = 8000


@dataclass
class Signal1D:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_RATE_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidArgumentError(f"samples must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidArgumentError("samples contain NaN or Inf")
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise InvalidArgumentError(f"sample rate must be a positive integer, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Segment:
    data: np.ndarray
    offset: int
    valid_length: int

    @property
    def partial(self) -> bool:
        return self.valid_length < self.data.size


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class Metrics:
    sen: float
    ppr: float
    f1: float


def as_peaks(indices, length: int | None = None) -> np.ndarray:
    """Validate a peak set: integer sample positions, strictly increasing."""
    arr = np.asarray(indices)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"peak indices must be 1-D, got shape {arr.shape}")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise InvalidArgumentError("peak indices must be integers")
    arr = arr.astype(np.int64)
    if np.any(np.diff(arr) <= 0):
        raise InvalidArgumentError("peak indices must be strictly increasing")
    if arr[0] < 0 or (length is not None and arr[-1] >= length):
        raise InvalidArgumentError(f"peak indices must lie in [0, {length})")
    return arr


def ms_to_samples(ms: float, sample_rate_hz: float) -> int:
    return int(round(ms * sample_rate_hz / 1000.0))


def segment(signal: Signal1D, seg_len: int = SEGMENT_LENGTH, overlap: int = 0) -> list[Segment]:
    """Cut a signal into consecutive windows; the last one is zero-padded if short."""
    if seg_len < 1:
        raise InvalidArgumentError(f"segment length must be >= 1, got {seg_len}")
    if not 0 <= overlap < seg_len:
        raise InvalidArgumentError(f"overlap must be in [0, {seg_len}), got {overlap}")
    x = signal.samples
    if x.size == 0:
        raise InvalidArgumentError("cannot segment an empty signal")
    step = seg_len - overlap
    out = []
    start = 0
    while True:
        chunk = x[start : start + seg_len]
        data = np.zeros(seg_len)
        data[: chunk.size] = chunk
        out.append(Segment(data, start, chunk.size))
        if start + seg_len >= x.size:
            break
        start += step
    return out


def normalize(x) -> np.ndarray:
    """Map linearly onto [-1, 1]; a constant input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgumentError("cannot normalize an empty segment")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    out = 2.0 * (x - lo) / (hi - lo) - 1.0
    return np.clip(out, -1.0, 1.0)


def make_target(peaks, seg_len: int, pulse_width: int = 5) -> np.ndarray:
    """0/1 pulse train with a ``pulse_width`` window centred on each peak."""
    if pulse_width < 1 or pulse_width % 2 == 0:
        raise InvalidArgumentError(f"pulse width must be odd and >= 1, got {pulse_width}")
    peaks = as_peaks(peaks, seg_len)
    half = pulse_width // 2
    target = np.zeros(seg_len)
    for p in peaks:
        target[max(0, p - half) : p + half + 1] = 1.0
    return target


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) intervals where ``mask`` is true."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def merge_refractory(indices, values, refractory: int) -> tuple[np.ndarray, np.ndarray]:
    """Drop the weaker of any two accepted peaks closer than ``refractory`` samples."""
    kept_i: list[int] = []
    kept_v: list[float] = []
    for i, v in zip(indices, values):
        if kept_i and i - kept_i[-1] < refractory:
            if v > kept_v[-1]:
                kept_i[-1], kept_v[-1] = int(i), float(v)
            continue
        kept_i.append(int(i))
        kept_v.append(float(v))
    return np.array(kept_i, dtype=np.int64), np.array(kept_v)


def peak_candidates(prediction, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """One candidate per run of samples at or above ``threshold``.

    The candidate is the run's maximum; when several samples share it (a
    plateau) the middle one of them is taken.
    """
    p = np.asarray(prediction, dtype=np.float64)
    if p.ndim != 1:
        raise InvalidArgumentError(f"prediction must be 1-D, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("prediction contains NaN or Inf")
    idx, vals = [], []
    for start, stop in _runs(p >= threshold):
        run = p[start:stop]
        ties = np.flatnonzero(run == run.max())
        best = start + int(ties[(ties.size - 1) // 2])
        idx.append(best)
        vals.append(p[best])
    return np.array(idx, dtype=np.int64), np.array(vals)


def extract_peaks(prediction, threshold: float = 0.5, refractory_ms: float = 120,
                  sample_rate_hz: float = DEFAULT_RATE_HZ) -> np.ndarray:
    idx, vals = peak_candidates(prediction, threshold)
    return merge_refractory(idx, vals, ms_to_samples(refractory_ms, sample_rate_hz))[0]


def match_peaks(predicted, truth, tol_ms: float = 75, sample_rate_hz: float = DEFAULT_RATE_HZ) -> MatchCounts:
    """Greedy one-to-one matching in increasing truth order.

    Each truth peak takes the nearest still-unmatched prediction within the
    tolerance (the earlier one on a tie).
    """
    pred = as_peaks(predicted)
    true = as_peaks(truth)
    tol = ms_to_samples(tol_ms, sample_rate_hz)
    used = np.zeros(pred.size, dtype=bool)
    tp = 0
    for t in true.tolist():
        lo = np.searchsorted(pred, t - tol, side="left")
        hi = np.searchsorted(pred, t + tol, side="right")
        best, best_d = -1, None
        for j in range(lo, hi):
            if used[j]:
                continue
            d = abs(int(pred[j]) - t)
            if best_d is None or d < best_d:
                best, best_d = j, d
        if best >= 0:
            used[best] = True
            tp += 1
    return MatchCounts(tp=tp, fp=int(pred.size - tp), fn=int(true.size - tp))


def compute_metrics(counts: MatchCounts) -> Metrics:
    ppr = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    sen = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * ppr * sen / (ppr + sen) if ppr + sen else 0.0
    return Metrics(sen=sen, ppr=ppr, f1=f1)


def training_pairs(signal: Signal1D, peaks, seg_len: int = SEGMENT_LENGTH,
                   pulse_width: int = 5) -> list[tuple[np.ndarray, np.ndarray]]:
    """Normalized full-length segments and their pulse targets; partial tails are skipped."""
    peaks = as_peaks(peaks, len(signal))
    pairs = []
    for seg in segment(signal, seg_len):
        if seg.partial:
            continue
        local = peaks[(peaks >= seg.offset) & (peaks < seg.offset + seg_len)] - seg.offset
        pairs.append((normalize(seg.data), make_target(local, seg_len, pulse_width)))
    return pairs


def predict_signal(model, signal: Signal1D, seg_len: int = SEGMENT_LENGTH) -> list[tuple[Segment, np.ndarray]]:
    """Per-segment model output; partial tails are normalized over their valid part only."""
    from .network import predict

    out = []
    for seg in segment(signal, seg_len):
        x = np.zeros(seg_len)
        x[: seg.valid_length] = normalize(seg.data[: seg.valid_length])
        out.append((seg, predict(model, x)))
    return out


def stitch_peaks(predictions: list[tuple[Segment, np.ndarray]], threshold: float = 0.5,
                 refractory_ms: float = 120, sample_rate_hz: float = DEFAULT_RATE_HZ) -> np.ndarray:
    """Shift per-segment candidates to absolute positions and merge across junctions."""
    all_idx, all_val = [np.zeros(0, dtype=np.int64)], [np.zeros(0)]
    for seg, pred in predictions:
        idx, vals = peak_candidates(pred, threshold)
        keep = idx < seg.valid_length
        all_idx.append(idx[keep] + seg.offset)
        all_val.append(vals[keep])
    idx, vals = np.concatenate(all_idx), np.concatenate(all_val)
    return merge_refractory(idx, vals, ms_to_samples(refractory_ms, sample_rate_hz))[0]


def detect(model, signal: Signal1D, seg_len: int = SEGMENT_LENGTH, threshold: float = 0.5,
           refractory_ms: float = 120) -> np.ndarray:
    """Segment, normalize, predict and stitch peaks into one peak set."""
    return stitch_peaks(predict_signal(model, signal, seg_len), threshold, refractory_ms,
                        signal.sample_rate_hz)
