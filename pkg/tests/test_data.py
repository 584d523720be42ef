import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfonn.data import (CKPT_MAGIC, Checkpoint, SyntheticConfig, checkpoint_header_size, decode_checkpoint,
                          decode_signal, encode_checkpoint, encode_signal, generate, import_csv_record,
                          parse_peaks, read_peaks, read_signal, synthesize, write_peaks, write_signal)
from selfonn.errors import FormatError, InvalidArgumentError, ParseError
from selfonn.network import NetworkConfig, build_model, count_params, make_optimizer, model_forward
from selfonn.pipeline import Signal1D, extract_peaks

QUIET = dict(hr_jitter_frac=0.0, noise_std=0.0, baseline_wander_amp=0.0, glitch_rate_per_min=0.0)


def test_degenerate_generator_places_regular_beats():
    _, peaks, flags = generate(SyntheticConfig(duration_s=10, mean_hr_bpm=60, **QUIET))
    assert peaks.size == 10 and flags.size == 10
    assert np.all(np.diff(peaks) == 400)


def test_generator_bit_identical_per_seed():
    a = generate(SyntheticConfig(duration_s=20, seed=5))
    b = generate(SyntheticConfig(duration_s=20, seed=5))
    c = generate(SyntheticConfig(duration_s=20, seed=6))
    assert a[0].samples.tobytes() == b[0].samples.tobytes()
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
    assert a[0].samples.tobytes() != c[0].samples.tobytes()


def test_default_record_peak_count_and_apex():
    cfg = SyntheticConfig(duration_s=60, seed=42)
    rec = synthesize(cfg)
    lo, hi = cfg.mean_hr_bpm * (1 - cfg.hr_jitter_frac), cfg.mean_hr_bpm * (1 + cfg.hr_jitter_frac)
    assert lo <= rec.peaks.size <= hi
    w = int(cfg.qrs_width_ms * cfg.sample_rate_hz / 1000)
    for p in rec.peaks:
        a, b = max(0, p - w), min(rec.clean.size, p + w + 1)
        assert a + int(np.argmax(rec.clean[a:b])) == p


@given(st.integers(0, 10_000))
def test_clean_component_recovers_every_peak(seed):
    rec = synthesize(SyntheticConfig(duration_s=30, seed=seed))
    found = extract_peaks(rec.clean, threshold=0.5 * rec.amplitudes.min())
    np.testing.assert_array_equal(found, rec.peaks)


def test_arrhythmic_beats_are_smaller():
    rec = synthesize(SyntheticConfig(duration_s=120, seed=3, arrhythmia_frac=0.5))
    assert rec.flags.any() and (~rec.flags).any()
    assert rec.amplitudes[rec.flags].max() <= 0.5 * 1.4
    assert rec.amplitudes[~rec.flags].min() >= 0.6


@pytest.mark.parametrize("bad", [dict(duration_s=0), dict(hr_jitter_frac=1.5), dict(arrhythmia_frac=-0.1),
                                 dict(qrs_amp=(1.0, 0.5)), dict(noise_std=float("nan"))])
def test_generator_rejects_invalid_config(bad):
    with pytest.raises(InvalidArgumentError):
        SyntheticConfig(**bad)


def test_signal_layout_three_samples():
    buf = encode_signal(Signal1D([1.0, -2.0, 0.5], 250))
    assert len(buf) == 8 + 2 + 4 + 8 + 12 == 34
    assert buf[:8] == b"SONN1SIG"
    assert struct.unpack_from("<HIQ", buf, 8) == (1, 250, 3)


def test_signal_round_trip(tmp_path, rng):
    sig = Signal1D(rng.normal(size=1000) * 3, 400)
    write_signal(tmp_path / "a.sig", sig)
    back = read_signal(tmp_path / "a.sig")
    assert back.sample_rate_hz == 400
    np.testing.assert_array_equal(back.samples, sig.samples.astype(np.float32).astype(np.float64))


def test_signal_truncation_reports_lengths():
    buf = encode_signal(Signal1D(np.ones(10)))
    with pytest.raises(FormatError, match="expected 62 bytes.*has 60"):
        decode_signal(buf[:-2])
    with pytest.raises(FormatError):
        decode_signal(buf + b"\0")
    with pytest.raises(FormatError):
        decode_signal(buf[:5])


@pytest.mark.parametrize("pos", range(10))
def test_signal_rejects_corrupted_magic_or_version(pos):
    buf = bytearray(encode_signal(Signal1D(np.ones(4))))
    for delta in (1, 0x80, 0xFF):
        bad = bytearray(buf)
        bad[pos] = (bad[pos] + delta) % 256
        with pytest.raises(FormatError) as exc:
            decode_signal(bytes(bad))
        assert exc.value.offset is not None


def test_peaks_file_format(tmp_path):
    path = tmp_path / "p.csv"
    write_peaks(path, [100, 500], [False, True])
    assert path.read_text().splitlines() == ["index,arrhythmia", "100,0", "500,1"]
    peaks, flags = read_peaks(path)
    assert peaks.tolist() == [100, 500] and flags.tolist() == [False, True]


def test_non_utf8_peaks_file_names_line(tmp_path):
    (tmp_path / "p.csv").write_bytes(b"index,arrhythmia\n5,0\n\xff,0\n")
    with pytest.raises(ParseError) as err:
        read_peaks(tmp_path / "p.csv")
    assert err.value.line == 3


def test_empty_peaks_file(tmp_path):
    path = tmp_path / "p.csv"
    write_peaks(path, [])
    assert path.read_text() == "index,arrhythmia\n"
    peaks, flags = read_peaks(path)
    assert peaks.size == 0 and flags.size == 0


def test_peaks_round_trip_thousand(tmp_path, rng):
    peaks = np.sort(rng.choice(10**7, 1000, replace=False))
    flags = rng.random(1000) < 0.2
    write_peaks(tmp_path / "p.csv", peaks, flags)
    back, back_flags = read_peaks(tmp_path / "p.csv")
    assert np.array_equal(back, peaks) and np.array_equal(back_flags, flags)


@pytest.mark.parametrize("text, line", [("index,arrhythmia\n5,0\n3,0\n", 3),
                                        ("index,arrhythmia\n5,0\nx,1\n", 3),
                                        ("index,arrhythmia\n5,2\n", 2),
                                        ("idx,flag\n", 1),
                                        ("index,arrhythmia\n5\n", 2),
                                        ("index,arrhythmia\n5,0\n7\0,0\n", 3)])
def test_peaks_parse_errors_name_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_peaks(text)
    assert exc.value.line == line


def test_import_csv_record(tmp_path, rng):
    values = rng.normal(size=8000)
    (tmp_path / "s.csv").write_text("\n".join(str(float(v)) for v in values))
    write_peaks(tmp_path / "p.csv", [])
    rec = import_csv_record(tmp_path / "s.csv", tmp_path / "p.csv", 400)
    assert rec.peaks.size == 0 and len(rec.signal) == 8000
    write_signal(tmp_path / "s.sig", rec.signal)
    np.testing.assert_array_equal(read_signal(tmp_path / "s.sig").samples,
                                  values.astype(np.float32).astype(np.float64))
    write_peaks(tmp_path / "p.csv", [8000])
    with pytest.raises(InvalidArgumentError):
        import_csv_record(tmp_path / "s.csv", tmp_path / "p.csv", 400)


def test_checkpoint_round_trip_and_size():
    model = build_model(NetworkConfig(), seed=0)
    buf = encode_checkpoint(Checkpoint(model, 400, 8000))
    n_layers = len(model.layers)
    assert len(buf) == checkpoint_header_size() + n_layers * 16 + 4 * count_params(model)
    back = decode_checkpoint(buf)
    assert back.model.config == model.config
    assert (back.sample_rate_hz, back.segment_length, back.optimizer) == (400, 8000, None)
    x = np.random.default_rng(1).uniform(-1, 1, 64)
    diff = np.abs(model_forward(model, x)[0] - model_forward(back.model, x)[0]).max()
    assert diff <= 1e-6
    for a, b in zip(model.layers, back.model.layers):
        np.testing.assert_array_equal(b.weights, a.weights.astype(np.float32))


def test_checkpoint_weight_order():
    model = build_model(NetworkConfig(q_order=2, kernel_width=3), seed=0)
    buf = encode_checkpoint(Checkpoint(model))
    at = checkpoint_header_size(config=model.config) - 1 + 16  # first layer's data, past its shape header
    first = np.frombuffer(buf, "<f4", count=model.layers[0].weights.size, offset=at)
    np.testing.assert_array_equal(first, model.layers[0].weights.astype(np.float32).reshape(-1))


def test_checkpoint_keeps_optimizer_state():
    model = build_model(NetworkConfig(kernel_width=3), seed=0)
    opt = make_optimizer(model)
    opt.t = 7
    for m in opt.m:
        m[0][:] = 0.25
    back = decode_checkpoint(encode_checkpoint(Checkpoint(model, optimizer=opt))).optimizer
    assert back.kind == "adam" and back.t == 7 and back.lr == 0.001
    assert all(np.all(m[0] == 0.25) for m in back.m)


def _layer_header_offsets(model):
    at = checkpoint_header_size(config=model.config) - 1
    out = []
    for p in model.layers:
        out.append(at)
        at += 16 + 4 * (p.weights.size + p.biases.size)
    return out


def test_corrupt_shape_field_names_layer():
    model = build_model(NetworkConfig(), seed=0)
    buf = bytearray(encode_checkpoint(Checkpoint(model)))
    at = _layer_header_offsets(model)[3]
    buf[at + 8] ^= 0x01  # K of layer 3
    with pytest.raises(FormatError, match="layer 3"):
        decode_checkpoint(bytes(buf))


def test_checkpoint_rejects_every_header_corruption():
    model = build_model(NetworkConfig(kernel_width=3), seed=0)
    buf = encode_checkpoint(Checkpoint(model))
    # magic, version, config block, its checksum and the layer count
    positions = list(range(checkpoint_header_size(config=model.config) - 1))
    for at in _layer_header_offsets(model):
        positions += range(at, at + 16)
    for pos in positions:
        for delta in (1, 0x80):
            bad = bytearray(buf)
            bad[pos] = (bad[pos] + delta) % 256
            with pytest.raises(FormatError):
                decode_checkpoint(bytes(bad))


@pytest.mark.parametrize("tag", [b"sample_rate_hz", b"segment_length", b"pool_factor"])
def test_checkpoint_checksum_covers_free_valued_fields(tag):
    # these values are not implied by any layer shape, so only the checksum can catch them
    buf = bytearray(encode_checkpoint(Checkpoint(build_model(NetworkConfig(kernel_width=3), seed=0))))
    at = buf.index(tag) + len(tag) + 2
    buf[at] ^= 0x04
    with pytest.raises(FormatError, match="checksum"):
        decode_checkpoint(bytes(buf))


def test_checkpoint_rejects_bad_magic_version_and_truncation():
    buf = encode_checkpoint(Checkpoint(build_model(NetworkConfig(kernel_width=3), seed=0)))
    with pytest.raises(FormatError, match="magic"):
        decode_checkpoint(b"X" + buf[1:])
    with pytest.raises(FormatError, match="version"):
        decode_checkpoint(buf[: len(CKPT_MAGIC)] + b"\x02\x00" + buf[len(CKPT_MAGIC) + 2 :])
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(buf[:-3])
    with pytest.raises(FormatError, match="trailing"):
        decode_checkpoint(buf + b"\0")
