"""Synthetic ECG records and the on-disk formats for signals, peaks and checkpoints.

All binary formats are little-endian. Samples and parameters are stored as
32-bit floats; everything is float64 again once loaded.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError, ParseError
from .layer import GenerativeLayerParams
from .network import Model, NetworkConfig, OptimizerState
from .pipeline import SEGMENT_LENGTH, Signal1D, as_peaks


# -- synthetic generator ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    duration_s: float = 60.0
    sample_rate_hz: int = 400
    mean_hr_bpm: float = 70.0
    hr_jitter_frac: float = 0.15
    qrs_width_ms: float = 80.0
    qrs_amp: tuple[float, float] = (0.6, 1.4)
    baseline_wander_amp: float = 0.3
    baseline_wander_freq_hz: float = 0.33
    noise_std: float = 0.05
    glitch_rate_per_min: float = 2.0
    arrhythmia_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            vals = v if isinstance(v, tuple) else (v,)
            if not all(math.isfinite(x) for x in vals):
                raise InvalidArgumentError(f"{f.name} must be finite, got {v}")
        if self.duration_s <= 0:
            raise InvalidArgumentError(f"duration_s must be > 0, got {self.duration_s}")
        if self.sample_rate_hz <= 0 or int(self.sample_rate_hz) != self.sample_rate_hz:
            raise InvalidArgumentError(f"sample_rate_hz must be a positive integer, got {self.sample_rate_hz}")
        if self.mean_hr_bpm <= 0:
            raise InvalidArgumentError(f"mean_hr_bpm must be > 0, got {self.mean_hr_bpm}")
        if not 0 <= self.hr_jitter_frac < 1:
            raise InvalidArgumentError(f"hr_jitter_frac must be in [0, 1), got {self.hr_jitter_frac}")
        if self.qrs_width_ms <= 0:
            raise InvalidArgumentError(f"qrs_width_ms must be > 0, got {self.qrs_width_ms}")
        lo, hi = self.qrs_amp
        if not 0 < lo <= hi:
            raise InvalidArgumentError(f"qrs_amp must satisfy 0 < low <= high, got {self.qrs_amp}")
        if self.baseline_wander_amp < 0 or self.baseline_wander_freq_hz < 0:
            raise InvalidArgumentError("baseline wander amplitude and frequency must be >= 0")
        if self.noise_std < 0 or self.glitch_rate_per_min < 0:
            raise InvalidArgumentError("noise_std and glitch_rate_per_min must be >= 0")
        if not 0 <= self.arrhythmia_frac <= 1:
            raise InvalidArgumentError(f"arrhythmia_frac must be in [0, 1], got {self.arrhythmia_frac}")


@dataclass
class SyntheticRecord:
    signal: Signal1D
    peaks: np.ndarray
    flags: np.ndarray
    clean: np.ndarray       # QRS component alone
    amplitudes: np.ndarray  # per-beat apex height of the clean component


def synthesize(config: SyntheticConfig) -> SyntheticRecord:
    """Generate one record together with its noise-free QRS component."""
    rng = np.random.default_rng(config.seed)
    fs = config.sample_rate_hz
    n = int(round(config.duration_s * fs))
    if n < 1:
        raise InvalidArgumentError("duration is shorter than one sample")
    t = np.arange(n) / fs
    rr_mean = 60.0 / config.mean_hr_bpm

    def next_rr() -> float:
        return rr_mean * (1.0 + config.hr_jitter_frac * rng.uniform(-1.0, 1.0))

    times = []
    beat = next_rr() / 2
    while int(round(beat * fs)) < n:
        times.append(beat)
        beat += next_rr()
    peaks = np.array([int(round(b * fs)) for b in times], dtype=np.int64)
    peaks = np.unique(peaks)  # guard against collisions from rounding

    k = peaks.size
    amps = rng.uniform(*config.qrs_amp, size=k)
    flags = rng.random(k) < config.arrhythmia_frac
    widths = np.full(k, config.qrs_width_ms / 1000.0 * fs)
    amps[flags] *= 0.5
    widths[flags] *= 2.0

    clean = np.zeros(n)
    for p, a, w in zip(peaks, amps, widths):
        sigma = w / 6.0
        half = int(math.ceil(4 * sigma))
        lo, hi = max(0, p - half), min(n, p + half + 1)
        idx = np.arange(lo, hi)
        clean[lo:hi] += a * np.exp(-0.5 * ((idx - p) / sigma) ** 2)

    phase = rng.uniform(0.0, 2 * np.pi)
    wander = config.baseline_wander_amp * np.sin(2 * np.pi * config.baseline_wander_freq_hz * t + phase)
    offset = rng.normal(0.0, 0.5)
    noise = rng.normal(0.0, config.noise_std, size=n) if config.noise_std > 0 else np.zeros(n)

    glitches = np.zeros(n)
    n_glitch = rng.poisson(config.glitch_rate_per_min * config.duration_s / 60.0)
    for _ in range(n_glitch):
        start = int(rng.integers(0, n))
        length = int(rng.uniform(0.05, 1.0) * fs)
        level = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
        glitches[start : start + length] += level

    signal = Signal1D(clean + wander + offset + noise + glitches, fs)
    return SyntheticRecord(signal, peaks, flags, clean, amps)


def generate(config: SyntheticConfig) -> tuple[Signal1D, np.ndarray, np.ndarray]:
    rec = synthesize(config)
    return rec.signal, rec.peaks, rec.flags


@dataclass
class Record:
    signal: Signal1D
    peaks: np.ndarray
    flags: np.ndarray

    def __post_init__(self):
        self.peaks = as_peaks(self.peaks, len(self.signal))
        self.flags = np.asarray(self.flags, dtype=bool).reshape(-1)
        if self.flags.size != self.peaks.size:
            raise InvalidArgumentError(
                f"{self.flags.size} flags for {self.peaks.size} peaks; they must align one-to-one")


@dataclass
class Dataset:
    records: list[Record]

    def __len__(self) -> int:
        return len(self.records)


# -- signal files -------------------------------------------------------------

SIGNAL_MAGIC = b"SONN1SIG"
SIGNAL_VERSION = 1
_SIG_HEADER = struct.Struct("<8sHIQ")


def encode_signal(signal: Signal1D) -> bytes:
    body = signal.samples.astype("<f4").tobytes()
    return _SIG_HEADER.pack(SIGNAL_MAGIC, SIGNAL_VERSION, signal.sample_rate_hz, len(signal)) + body


def decode_signal(buf: bytes) -> Signal1D:
    if len(buf) < _SIG_HEADER.size:
        raise FormatError(f"signal header needs {_SIG_HEADER.size} bytes, file has {len(buf)}", len(buf))
    magic, version, rate, count = _SIG_HEADER.unpack_from(buf)
    if magic != SIGNAL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SIGNAL_MAGIC!r}", 0)
    if version != SIGNAL_VERSION:
        raise FormatError(f"unsupported signal format version {version}", 8)
    if rate == 0:
        raise FormatError("sample rate is zero", 10)
    expected = _SIG_HEADER.size + 4 * count
    if len(buf) != expected:
        raise FormatError(f"expected {expected} bytes for {count} samples, file has {len(buf)}",
                          min(len(buf), expected))
    samples = np.frombuffer(buf, dtype="<f4", offset=_SIG_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise FormatError("non-finite sample", _SIG_HEADER.size + 4 * bad)
    return Signal1D(samples, rate)


def write_signal(path, signal: Signal1D) -> None:
    Path(path).write_bytes(encode_signal(signal))


def read_signal(path) -> Signal1D:
    return decode_signal(Path(path).read_bytes())


# -- peak files ---------------------------------------------------------------

PEAKS_HEADER = ("index", "arrhythmia")


def write_peaks(path, peaks, flags=None) -> None:
    peaks = as_peaks(peaks)
    flags = np.zeros(peaks.size, dtype=bool) if flags is None else np.asarray(flags, dtype=bool)
    if flags.shape != peaks.shape:
        raise InvalidArgumentError("flags must align one-to-one with peaks")
    lines = [",".join(PEAKS_HEADER)]
    lines += [f"{p},{int(f)}" for p, f in zip(peaks.tolist(), flags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def _csv_rows(text: str):
    """Yield (line number, row) pairs, turning CSV syntax errors into ParseError."""
    reader = csv.reader(io.StringIO(text))
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise ParseError(str(exc), reader.line_num) from None
        yield reader.line_num, row


def parse_peaks(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = _csv_rows(text)
    _, header = next(rows, (1, None))
    if header is None or tuple(h.strip() for h in header) != PEAKS_HEADER:
        raise ParseError(f"expected header {','.join(PEAKS_HEADER)!r}, got {header!r}", 1)
    peaks, flags = [], []
    for lineno, row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
        try:
            idx, flag = int(row[0]), int(row[1])
        except ValueError:
            raise ParseError(f"non-numeric row {row!r}", lineno) from None
        if idx < 0:
            raise ParseError(f"negative index {idx}", lineno)
        if flag not in (0, 1):
            raise ParseError(f"arrhythmia flag must be 0 or 1, got {flag}", lineno)
        if peaks and idx <= peaks[-1]:
            raise ParseError(f"index {idx} does not increase (previous {peaks[-1]})", lineno)
        peaks.append(idx)
        flags.append(bool(flag))
    return np.array(peaks, dtype=np.int64), np.array(flags, dtype=bool)


def read_text(path) -> str:
    """UTF-8 file contents; undecodable bytes raise ParseError naming the line."""
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not UTF-8 text", raw.count(b"\n", 0, exc.start) + 1) from None


def read_peaks(path) -> tuple[np.ndarray, np.ndarray]:
    return parse_peaks(read_text(path))


def import_csv_record(signal_csv, peaks_csv, sample_rate_hz: int = 400) -> Record:
    """Build a record from a one-float-per-line signal file and a peaks file."""
    values = []
    for lineno, line in enumerate(read_text(signal_csv).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"not a number: {line!r}", lineno) from None
    signal = Signal1D(np.array(values), sample_rate_hz)
    peaks, flags = read_peaks(peaks_csv)
    return Record(signal, peaks, flags)


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"SONN1CKPT"
CKPT_VERSION = 1
_LAYER_HEADER = struct.Struct("<4I")
_OPT_KINDS = ("sgd", "adam")

# tag, NetworkConfig attribute (None for run metadata)
_CONFIG_FIELDS = (
    ("sample_rate_hz", None),
    ("segment_length", None),
    ("q_order", "q_order"),
    ("kernel_width", "kernel_width"),
    ("encoder_channels", "encoder_channels"),
    ("bottleneck_channels", "bottleneck_channels"),
    ("decoder_channels", "decoder_channels"),
    ("output_channels", "output_channels"),
    ("pool_factor", "pool_factor"),
    ("skip_connections", "skip_connections"),
)


@dataclass
class Checkpoint:
    model: Model
    sample_rate_hz: int = 400
    segment_length: int = SEGMENT_LENGTH
    optimizer: OptimizerState | None = None


def _encode_config(config: NetworkConfig, sample_rate_hz: int, segment_length: int) -> bytes:
    out = bytearray()
    for tag, attr in _CONFIG_FIELDS:
        if attr is None:
            vals = [sample_rate_hz if tag == "sample_rate_hz" else segment_length]
        else:
            v = getattr(config, attr)
            vals = [int(x) for x in v] if isinstance(v, tuple) else [int(v)]
        name = tag.encode("ascii")
        out += struct.pack("<B", len(name)) + name + struct.pack("<H", len(vals))
        out += struct.pack(f"<{len(vals)}i", *vals)
    return bytes(out)


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    cfg = _encode_config(model.config, ckpt.sample_rate_hz, ckpt.segment_length)
    out = bytearray(CKPT_MAGIC + struct.pack("<H", CKPT_VERSION))
    block = struct.pack("<I", len(cfg)) + cfg
    out += block + struct.pack("<I", zlib.crc32(block))
    out += struct.pack("<I", len(model.layers))
    for p in model.layers:
        out += _LAYER_HEADER.pack(p.in_channels, p.out_channels, p.kernel_width, p.q_order)
        out += _f32(p.weights) + _f32(p.biases)
    opt = ckpt.optimizer
    if opt is None:
        out += b"\x00"
    else:
        out += b"\x01" + struct.pack("<B4dQ", _OPT_KINDS.index(opt.kind), opt.lr, opt.beta1, opt.beta2,
                                      opt.eps, opt.t)
        if opt.kind == "adam":
            for (mw, mb), (vw, vb) in zip(opt.m, opt.v):
                out += _f32(mw) + _f32(mb) + _f32(vw) + _f32(vb)
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated while reading {what}: need {n} bytes, "
                              f"{len(self.buf) - self.pos} left", self.pos)
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size, what))

    def floats(self, shape, what: str) -> np.ndarray:
        count = int(np.prod(shape))
        at = self.pos
        with np.errstate(invalid="ignore"):
            arr = np.frombuffer(self.take(4 * count, what), dtype="<f4").astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"non-finite value in {what}", at)
        return arr


def _decode_config(raw: bytes, base: int) -> tuple[NetworkConfig, int, int]:
    r = _Reader(raw)
    values: dict[str, list[int]] = {}
    known = {tag for tag, _ in _CONFIG_FIELDS}
    while r.pos < len(raw):
        at = base + r.pos
        (n,) = r.unpack("B", "config tag length")
        try:
            tag = r.take(n, "config tag").decode("ascii")
        except UnicodeDecodeError:
            raise FormatError("config tag is not ASCII", at) from None
        if tag not in known:
            raise FormatError(f"unknown config field {tag!r}", at)
        if tag in values:
            raise FormatError(f"duplicate config field {tag!r}", at)
        (count,) = r.unpack("H", f"{tag} count")
        values[tag] = list(r.unpack(f"{count}i", tag))
    missing = [tag for tag, _ in _CONFIG_FIELDS if tag not in values]
    if missing:
        raise FormatError(f"config block lacks {', '.join(missing)}", base + len(raw))

    def scalar(tag):
        v = values[tag]
        if len(v) != 1:
            raise FormatError(f"config field {tag!r} must hold one value, has {len(v)}", base)
        return v[0]

    kw = {}
    for tag, attr in _CONFIG_FIELDS:
        if attr is None:
            continue
        if attr in ("encoder_channels", "decoder_channels"):
            kw[attr] = tuple(values[tag])
        elif attr == "skip_connections":
            flag = scalar(tag)
            if flag not in (0, 1):
                raise FormatError(f"skip_connections must be 0 or 1, got {flag}", base)
            kw[attr] = bool(flag)
        else:
            kw[attr] = scalar(tag)
    try:
        config = NetworkConfig(**kw)
    except InvalidArgumentError as exc:
        raise FormatError(f"invalid network config: {exc}", base) from None
    rate, seg_len = scalar("sample_rate_hz"), scalar("segment_length")
    if rate <= 0 or seg_len <= 0:
        raise FormatError("sample rate and segment length must be positive", base)
    if seg_len % config.length_multiple:
        raise FormatError(f"segment length {seg_len} is not a multiple of {config.length_multiple}", base)
    return config, rate, seg_len


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    magic = r.take(len(CKPT_MAGIC), "magic")
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}", 0)
    (version,) = r.unpack("H", "version")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", len(CKPT_MAGIC))
    len_at = r.pos
    (cfg_len,) = r.unpack("I", "config length")
    cfg_at = r.pos
    raw_cfg = r.take(cfg_len, "config block")
    (crc,) = r.unpack("I", "config checksum")
    if crc != zlib.crc32(buf[len_at:cfg_at + cfg_len]):
        raise FormatError("config block checksum mismatch", len_at)
    config, rate, seg_len = _decode_config(raw_cfg, cfg_at)
    shapes = [(cin, cout, config.kernel_width, config.q_order) for cin, cout in config.layer_shapes()]
    at = r.pos
    (n_layers,) = r.unpack("I", "layer count")
    if n_layers != len(shapes):
        raise FormatError(f"checkpoint has {n_layers} layers, config implies {len(shapes)}", at)
    layers = []
    for li, expected in enumerate(shapes):
        at = r.pos
        shape = r.unpack("4I", f"layer {li} shape")
        if tuple(shape) != tuple(expected):
            raise FormatError(f"layer {li} shape (in, out, K, Q) = {shape} does not match config {tuple(expected)}", at)
        cin, cout, k, q = shape
        w = r.floats((cout, cin, k, q), f"layer {li} weights")
        b = r.floats((cout,), f"layer {li} biases")
        layers.append(GenerativeLayerParams(w, b))
    at = r.pos
    (has_opt,) = r.unpack("B", "optimizer flag")
    opt = None
    if has_opt == 1:
        kind, lr, b1, b2, eps, t = r.unpack("B4dQ", "optimizer header")
        if kind >= len(_OPT_KINDS):
            raise FormatError(f"unknown optimizer kind {kind}", at + 1)
        try:
            opt = OptimizerState(kind=_OPT_KINDS[kind], lr=lr, beta1=b1, beta2=b2, eps=eps, t=t)
        except InvalidArgumentError as exc:
            raise FormatError(f"invalid optimizer block: {exc}", at + 1) from None
        if opt.kind == "adam":
            for li, p in enumerate(layers):
                mw = r.floats(p.weights.shape, f"layer {li} first moment")
                mb = r.floats(p.biases.shape, f"layer {li} first moment")
                vw = r.floats(p.weights.shape, f"layer {li} second moment")
                vb = r.floats(p.biases.shape, f"layer {li} second moment")
                opt.m.append((mw, mb))
                opt.v.append((vw, vb))
    elif has_opt != 0:
        raise FormatError(f"optimizer flag must be 0 or 1, got {has_opt}", at)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} unexpected trailing bytes", r.pos)
    return Checkpoint(Model(config, layers), rate, seg_len, opt)


def save_checkpoint(path, model: Model, optimizer: OptimizerState | None = None,
                    sample_rate_hz: int = 400, segment_length: int = SEGMENT_LENGTH) -> None:
    Path(path).write_bytes(encode_checkpoint(Checkpoint(model, sample_rate_hz, segment_length, optimizer)))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def checkpoint_header_size(sample_rate_hz: int = 400, segment_length: int = SEGMENT_LENGTH,
                           config: NetworkConfig | None = None) -> int:
    """Bytes outside the per-layer parameter blocks (no optimizer block)."""
    cfg = _encode_config(config or NetworkConfig(), sample_rate_hz, segment_length)
    return len(CKPT_MAGIC) + 2 + 4 + len(cfg) + 4 + 4 + 1
