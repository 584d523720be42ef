import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from selfonn.errors import InvalidArgumentError
from selfonn.network import NetworkConfig, build_model
from selfonn.pipeline import (MatchCounts, Signal1D, compute_metrics, detect, extract_peaks, make_target,
                              match_peaks, merge_refractory, normalize, segment, training_pairs)


def test_signal_validation():
    with pytest.raises(InvalidArgumentError):
        Signal1D([1.0, np.inf])
    with pytest.raises(InvalidArgumentError):
        Signal1D([1.0], sample_rate_hz=0)


def test_segment_exact_division():
    segs = segment(Signal1D(np.arange(16000.0)))
    assert [s.offset for s in segs] == [0, 8000]
    assert not any(s.partial for s in segs)


def test_segment_remainder_is_padded_and_flagged():
    segs = segment(Signal1D(np.ones(8001)))
    assert [s.offset for s in segs] == [0, 8000]
    last = segs[-1]
    assert last.partial and last.valid_length == 1
    assert last.data[0] == 1 and not last.data[1:].any()


def test_segment_day_long_recording_count():
    n = 24 * 3600 * 400
    segs = segment(Signal1D(np.zeros(n)))
    assert len(segs) == n // 8000 == 4320


def test_segment_overlap_and_errors():
    segs = segment(Signal1D(np.arange(10.0)), seg_len=4, overlap=2)
    assert [s.offset for s in segs] == [0, 2, 4, 6]
    with pytest.raises(InvalidArgumentError):
        segment(Signal1D(np.zeros(0)))
    with pytest.raises(InvalidArgumentError):
        segment(Signal1D(np.zeros(5)), seg_len=0)


def test_normalize_examples(rng):
    np.testing.assert_array_equal(normalize([0, 5, 10]), [-1, 0, 1])
    np.testing.assert_array_equal(normalize([3, 3, 3]), [0, 0, 0])
    out = normalize(rng.normal(5, 3, 500))
    assert abs(out.min() + 1) <= 1e-12 and abs(out.max() - 1) <= 1e-12


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_normalize_idempotent(values):
    x = normalize(values)
    assume(np.ptp(x) > 0)
    np.testing.assert_allclose(normalize(x), x, atol=1e-12)


def test_make_target_examples():
    np.testing.assert_array_equal(np.flatnonzero(make_target([10], 20)), [8, 9, 10, 11, 12])
    np.testing.assert_array_equal(np.flatnonzero(make_target([0], 20)), [0, 1, 2])
    np.testing.assert_array_equal(np.flatnonzero(make_target([10, 12], 20)), range(8, 15))
    assert set(np.unique(make_target([10, 12], 20))) == {0.0, 1.0}
    with pytest.raises(InvalidArgumentError):
        make_target([3], 20, pulse_width=4)
    with pytest.raises(InvalidArgumentError):
        make_target([20], 20)


def test_extract_plateau_takes_centre():
    assert extract_peaks(0.9 * make_target([10], 40)).tolist() == [10]
    assert extract_peaks(np.full(40, 0.2)).size == 0


def test_extract_refractory_keeps_higher():
    p = np.zeros(200)
    p[50], p[80] = 0.6, 0.9
    assert extract_peaks(p).tolist() == [80]
    p[80] = 0.6
    assert extract_peaks(p).tolist() == [50]  # equal height: the earlier survives


def test_extract_argmax_within_run():
    p = np.zeros(50)
    p[10:15] = [0.6, 0.7, 0.95, 0.8, 0.55]
    assert extract_peaks(p).tolist() == [12]


def test_extract_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        extract_peaks([0.1, np.nan])


def test_match_examples():
    assert match_peaks([100], [102]) == MatchCounts(1, 0, 0)
    assert match_peaks([100, 105], [102]) == MatchCounts(1, 1, 0)
    assert match_peaks([], [5, 50]) == MatchCounts(0, 0, 2)
    assert match_peaks([100], [131]) == MatchCounts(0, 1, 1)
    with pytest.raises(InvalidArgumentError):
        match_peaks([5, 3], [1])


def optimal_tp(pred, truth, tol):
    if not len(pred) or not len(truth):
        return 0
    cost = np.abs(np.subtract.outer(truth, pred)).astype(float)
    big = 1e9
    cost[cost > tol] = big
    rows, cols = linear_sum_assignment(cost)
    return int(np.sum(cost[rows, cols] < big))


@given(st.integers(0, 2**31))
def test_greedy_matches_optimal_assignment_when_well_spaced(seed):
    r = np.random.default_rng(seed)
    truth = np.cumsum(r.integers(61, 400, 50))
    jitter = r.integers(-40, 41, 50)
    keep = r.random(50) < 0.9
    extra = r.integers(0, truth[-1], 5)
    pred = np.unique(np.concatenate([truth[keep] + jitter[keep], extra]))
    pred = pred[pred >= 0]
    counts = match_peaks(pred, truth)
    assert counts.tp == optimal_tp(pred, truth, 30)
    assert counts.tp + counts.fn == truth.size and counts.tp + counts.fp == pred.size


@given(st.lists(st.integers(0, 5000), max_size=40, unique=True),
       st.lists(st.integers(0, 5000), max_size=40, unique=True))
def test_match_count_identities(pred, truth):
    c = match_peaks(sorted(pred), sorted(truth))
    assert c.tp + c.fn == len(truth) and c.tp + c.fp == len(pred)
    assert min(c.tp, c.fp, c.fn) >= 0


def test_metrics_examples():
    m = compute_metrics(MatchCounts(tp=1_023_997, fp=12_899, fn=2_098))
    assert (m.sen, m.ppr, m.f1) == pytest.approx((0.9980, 0.9876, 0.9928), abs=1e-4)
    m = compute_metrics(MatchCounts(tp=1_024_088, fp=14_263, fn=2_007))
    assert (m.sen, m.ppr, m.f1) == pytest.approx((0.9980, 0.9862, 0.9921), abs=1e-4)
    assert compute_metrics(MatchCounts(0, 0, 5)) == compute_metrics(MatchCounts(0, 0, 0))
    assert compute_metrics(MatchCounts(0, 0, 5)).f1 == 0


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_f1_is_harmonic_mean(tp, fp, fn):
    m = compute_metrics(MatchCounts(tp, fp, fn))
    assert 0 <= m.f1 <= 1
    if m.sen + m.ppr > 0:
        assert m.f1 == pytest.approx(2 / (1 / m.sen + 1 / m.ppr) if m.sen and m.ppr else 0.0)


@given(st.lists(st.integers(49, 200), min_size=1, max_size=30), st.integers(0, 30))
def test_target_extract_round_trip(gaps, start):
    peaks = start + np.cumsum(gaps)
    seg_len = int(peaks[-1]) + 10
    found = extract_peaks(0.9 * make_target(peaks, seg_len))
    assert match_peaks(found, peaks) == MatchCounts(len(peaks), 0, 0)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=400))
def test_extract_output_sorted_and_spaced(values):
    found = extract_peaks(values)
    assert np.all(np.diff(found) >= 48)


def test_merge_refractory_chain():
    idx, vals = merge_refractory([0, 40, 80], [0.7, 0.9, 0.8], 48)
    assert idx.tolist() == [40]
    assert vals.tolist() == [0.9]


def test_training_pairs_skip_partial_tail():
    sig = Signal1D(np.sin(np.arange(8100) / 10))
    pairs = training_pairs(sig, [100, 8050], seg_len=8000)
    assert len(pairs) == 1
    x, t = pairs[0]
    assert x.min() == -1 and x.max() == 1 and t[100] == 1


def test_detect_short_signal_reports_only_valid_region():
    model = build_model(NetworkConfig(kernel_width=3), seed=0)
    sig = Signal1D(np.random.default_rng(0).normal(size=300))
    found = detect(model, sig, seg_len=400, threshold=0.0)
    assert found.size and found.max() < 300
    assert np.all(np.diff(found) >= 48)
