"""Command-line entry point: ``selfonn <command> [flags]``.

Exit codes: 0 success, 1 failed check, 2 usage error, 3 I/O error,
4 malformed or mismatched input file.

Any flag can also come from ``--config FILE`` (``key = value`` lines, ``#``
comments, keys named like the long flags). Flags given on the command line
win over the file.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data
from . import layer as gl
from .conv import conv1d_forward, forward_qconv
from .errors import FormatError, InvalidArgumentError, ParseError
from .network import (NetworkConfig, bce_loss, build_model, gradcheck, layer_lengths, make_optimizer,
                      set_output_prior, train)
from .pipeline import (SEGMENT_LENGTH, MatchCounts, compute_metrics, detect, make_target, match_peaks,
                       predict_signal, stitch_peaks, training_pairs)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT = 0, 1, 2, 3, 4
DEFAULT_K = NetworkConfig().kernel_width


class UsageError(Exception):
    pass


# -- argument types -----------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return v


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _odd_int(text: str) -> int:
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"must be odd and >= 1, got {v}")
    return v


# -- config file ----------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(data.read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", lineno)
        entries[key.replace("_", "-")] = value
    return entries


def _config_tokens(sub: argparse.ArgumentParser, entries: dict[str, str]) -> list[str]:
    """Turn config entries into flag tokens for ``sub``."""
    actions = {s[2:]: a for a in sub._actions for s in a.option_strings if s.startswith("--")}
    tokens = []
    for key, value in entries.items():
        action = actions.get(key)
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects true/false, got {value!r}")
        else:
            tokens.append(f"--{key}={value}")
    return tokens


# -- shared helpers -----------------------------------------------------------


def _add_network_flags(p: argparse.ArgumentParser) -> None:
    d = NetworkConfig()
    p.add_argument("--q", type=_positive_int, default=d.q_order, help="Taylor order Q")
    p.add_argument("--k", type=_odd_int, default=d.kernel_width, help="kernel width (odd)")
    p.add_argument("--encoder", type=_int_list, default=d.encoder_channels, help="encoder widths, e.g. 8,16")
    p.add_argument("--bottleneck", type=_nonneg_int, default=d.bottleneck_channels)
    p.add_argument("--decoder", type=_int_list, default=d.decoder_channels)
    p.add_argument("--outputs", type=_positive_int, default=d.output_channels)
    p.add_argument("--pool", type=_positive_int, default=d.pool_factor)
    p.add_argument("--no-skip", action="store_true", help="disable skip concatenation")


def _network_config(args) -> NetworkConfig:
    try:
        return NetworkConfig(q_order=args.q, kernel_width=args.k, encoder_channels=args.encoder,
                             bottleneck_channels=args.bottleneck, decoder_channels=args.decoder,
                             output_channels=args.outputs, pool_factor=args.pool,
                             skip_connections=not args.no_skip)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None


def _tsv(rows, out=None) -> None:
    out = out or sys.stdout
    for row in rows:
        out.write("\t".join(str(v) for v in row) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def load_records(directory) -> list[tuple[str, data.Record]]:
    """All ``<name>.sig`` + ``<name>.peaks.csv`` pairs in a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    out = []
    for sig in sorted(directory.glob("*.sig")):
        name = sig.name[: -len(".sig")]
        peaks_path = directory / f"{name}.peaks.csv"
        signal = data.read_signal(sig)
        peaks, flags = data.read_peaks(peaks_path)
        try:
            out.append((name, data.Record(signal, peaks, flags)))
        except InvalidArgumentError as exc:
            raise FormatError(f"{name}: {exc}", 0) from None
    return out


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        base = data.SyntheticConfig(
            duration_s=args.duration_s, sample_rate_hz=args.sample_rate, mean_hr_bpm=args.mean_hr,
            hr_jitter_frac=args.hr_jitter, qrs_width_ms=args.qrs_width_ms,
            qrs_amp=(args.qrs_amp_min, args.qrs_amp_max), baseline_wander_amp=args.wander_amp,
            baseline_wander_freq_hz=args.wander_freq, noise_std=args.noise_std,
            glitch_rate_per_min=args.glitch_rate, arrhythmia_frac=args.arrhythmia_frac, seed=args.seed)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [("record", "duration_s", "peaks", "arrhythmic")]
    for i in range(args.count):
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        signal, peaks, flags = data.generate(replace(base, seed=seed))
        name = f"rec{i:03d}"
        data.write_signal(out / f"{name}.sig", signal)
        data.write_peaks(out / f"{name}.peaks.csv", peaks, flags)
        rows.append((name, _fmt(len(signal) / signal.sample_rate_hz), peaks.size, int(flags.sum())))
    _tsv(rows)
    return EXIT_OK


def _split_records(records, val_frac: float):
    n_val = int(round(val_frac * len(records)))
    if val_frac > 0 and len(records) > 1:
        n_val = max(1, n_val)
    n_val = min(n_val, len(records) - 1)
    return records[: len(records) - n_val], records[len(records) - n_val :]


def _validate(model, records, seg_len: int, tol_ms: float) -> tuple[float, float]:
    """(mean BCE over full segments, F1 of detected peaks) on held-out records."""
    losses = []
    counts = MatchCounts(0, 0, 0)
    for rec in records:
        preds = predict_signal(model, rec.signal, seg_len)
        for seg, pred in preds:
            if seg.partial:
                continue
            local = rec.peaks[(rec.peaks >= seg.offset) & (rec.peaks < seg.offset + seg_len)] - seg.offset
            losses.append(bce_loss(pred, make_target(local, seg_len))[0])
        found = stitch_peaks(preds, sample_rate_hz=rec.signal.sample_rate_hz)
        counts = counts + match_peaks(found, rec.peaks, tol_ms, rec.signal.sample_rate_hz)
    return float(np.mean(losses)) if losses else float("nan"), compute_metrics(counts).f1


def cmd_train(args) -> int:
    config = _network_config(args)
    if args.seg_len % config.length_multiple:
        raise UsageError(f"--seg-len must be a multiple of {config.length_multiple}")
    named = load_records(args.data)
    if not named:
        raise UsageError(f"no records (*.sig with matching .peaks.csv) in {args.data}")
    records = [r for _, r in named]
    rates = {r.signal.sample_rate_hz for r in records}
    if len(rates) != 1:
        raise FormatError(f"records mix sample rates {sorted(rates)}", 0)
    rate = rates.pop()
    train_recs, val_recs = _split_records(records, args.val_frac)
    pairs = [p for r in train_recs for p in training_pairs(r.signal, r.peaks, args.seg_len)]
    if not pairs:
        raise UsageError(f"training records are shorter than one {args.seg_len}-sample segment")
    positive = float(np.mean([t.mean() for _, t in pairs]))
    if not 0.0 < positive < 1.0:
        raise UsageError("training segments contain no peaks" if positive == 0 else "targets are all ones")
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.parent.is_dir():
        raise FileNotFoundError(f"checkpoint directory does not exist: {ckpt_path.parent}")

    trace = [("restart", "epoch", "train_loss", "val_loss", "val_f1")]
    best, best_score = None, None
    for restart in range(args.restarts):
        seed = args.seed + restart
        model = set_output_prior(build_model(config, seed), positive)
        opt = make_optimizer(model, args.optimizer, args.lr)
        rows = []

        def on_epoch(epoch, m, loss):
            if val_recs:
                vl, vf = _validate(m, val_recs, args.seg_len, args.tol_ms)
            else:
                vl, vf = float("nan"), float("nan")
            rows.append((restart, epoch + 1, _fmt(loss), _fmt(vl), _fmt(vf)))
            if args.verbose:
                print(f"restart {restart} epoch {epoch + 1}: train {loss:.5f} val {vl:.5f} F1 {vf:.4f}",
                      file=sys.stderr)

        if args.epochs:
            train(model, pairs, epochs=args.epochs, seed=seed, batch_size=args.batch_size,
                  optimizer=opt, on_epoch=on_epoch)
        trace.extend(rows)
        if val_recs:
            score = float(rows[-1][4]) if rows else _validate(model, val_recs, args.seg_len, args.tol_ms)[1]
        else:
            score = -float(rows[-1][2]) if rows else 0.0
        if best is None or score > best_score:
            best, best_score = model, score

    data.save_checkpoint(ckpt_path, best, sample_rate_hz=rate, segment_length=args.seg_len)
    if args.trace:
        with open(args.trace, "w") as fh:
            _tsv(trace, fh)
    else:
        _tsv(trace)
    return EXIT_OK


def cmd_detect(args) -> int:
    ckpt = data.load_checkpoint(args.checkpoint)
    signal = data.read_signal(args.signal)
    if signal.sample_rate_hz != ckpt.sample_rate_hz:
        raise FormatError(f"signal is sampled at {signal.sample_rate_hz} Hz but the model was trained "
                          f"at {ckpt.sample_rate_hz} Hz; resample it first", 10)
    peaks = detect(ckpt.model, signal, ckpt.segment_length, args.threshold, args.refractory_ms)
    data.write_peaks(args.out, peaks)
    print(f"{peaks.size} peaks written to {args.out}")
    return EXIT_OK


def _parse_counts(text: str) -> MatchCounts:
    try:
        tp, fp, fn = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--counts expects tp,fp,fn, got {text!r}") from None
    if min(tp, fp, fn) < 0:
        raise UsageError("counts must be non-negative")
    return MatchCounts(tp, fp, fn)


def cmd_eval(args) -> int:
    if args.counts:
        counts = _parse_counts(args.counts)
    else:
        if not (args.pred and args.truth):
            raise UsageError("either --pred and --truth or --counts is required")
        pred, _ = data.read_peaks(args.pred)
        truth, _ = data.read_peaks(args.truth)
        counts = match_peaks(pred, truth, args.tol_ms, args.sample_rate)
    m = compute_metrics(counts)
    if args.tsv:
        _tsv([("tp", "fp", "fn", "sen", "ppr", "f1"),
              (counts.tp, counts.fp, counts.fn, f"{m.sen:.6f}", f"{m.ppr:.6f}", f"{m.f1:.6f}")])
    else:
        print(f"TP {counts.tp}  FP {counts.fp}  FN {counts.fn}")
        print(f"Sen {100 * m.sen:.2f}%  Ppr {100 * m.ppr:.2f}%  F1 {100 * m.f1:.2f}%")
    return EXIT_OK


def _parse_layer(text: str) -> tuple[int, int, int, int]:
    try:
        cin, cout, k, q = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--layer expects in,out,K,Q, got {text!r}") from None
    if min(cin, cout, k, q) < 1 or k % 2 == 0:
        raise UsageError(f"invalid layer shape {text!r}")
    return cin, cout, k, q


def complexity_rows(config: NetworkConfig, seg_len: int) -> list[tuple]:
    """(layer, in, out, K, Q, length, params, macs) for every generative layer."""
    lengths = layer_lengths(config, seg_len)
    rows = []
    for n, ((cin, cout), m) in enumerate(zip(config.layer_shapes(), lengths)):
        shape = gl.GenerativeLayerParams(np.zeros((cout, cin, config.kernel_width, config.q_order)),
                                         np.zeros(cout))
        rows.append((n, cin, cout, config.kernel_width, config.q_order, m,
                     gl.count_params(shape), gl.count_macs(shape, m)))
    return rows


def cmd_count(args) -> int:
    if args.layer:
        cin, cout, k, q = _parse_layer(args.layer)
        shape = gl.GenerativeLayerParams(np.zeros((cout, cin, k, q)), np.zeros(cout))
        rows = [(0, cin, cout, k, q, args.seg_len, gl.count_params(shape), gl.count_macs(shape, args.seg_len))]
    else:
        config = _network_config(args)
        if args.seg_len % config.length_multiple:
            raise UsageError(f"--seg-len must be a multiple of {config.length_multiple}")
        rows = complexity_rows(config, args.seg_len)
    total_p = sum(r[6] for r in rows)
    total_m = sum(r[7] for r in rows)
    header = ("layer", "in", "out", "K", "Q", "length", "params", "macs", "params_k", "macs_m")
    body = [r + (f"{r[6] / 1e3:.3f}", f"{r[7] / 1e6:.3f}") for r in rows]
    body.append(("total", "", "", "", "", "", total_p, total_m, f"{total_p / 1e3:.3f}", f"{total_m / 1e6:.3f}"))
    if args.tsv:
        _tsv([header] + body)
    else:
        for r in body:
            label = "total" if r[0] == "total" else f"layer {r[0]}"
            print(f"{label}: PARs {r[6]} ({r[8]}k)  MACs {r[7]} ({r[9]}M)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = _network_config(args)
    if args.seg_len % config.length_multiple:
        raise UsageError(f"--seg-len must be a multiple of {config.length_multiple}")
    model = build_model(config, args.seed)
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-1.0, 1.0, args.seg_len)
    peaks = np.unique(rng.integers(0, args.seg_len, max(1, args.seg_len // 32)))
    target = np.tile(make_target(peaks, args.seg_len), (config.output_channels, 1))
    if config.output_channels == 1:
        target = target[0]
    report = gradcheck(model, x, target, h=args.h, tol=args.tol, fault_inject=args.fault_inject)
    label = "PASS" if report.passed else "FAIL"
    note = " (conv-equivalent)" if config.q_order == 1 else ""
    print(f"Q={config.q_order}{note} K={config.kernel_width} M={args.seg_len}: "
          f"{report.n_checked} parameters, max relative error {report.max_rel_error:.3e} "
          f"(tol {report.tol:.0e}) {label}")
    if not report.passed:
        layer, kind, index = report.worst
        print(f"worst entry: layer {layer} {kind} {tuple(int(i) for i in np.atleast_1d(index))}")
        return EXIT_CHECK
    return EXIT_OK


def _median_ms(fn, iters: int) -> float:
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def cmd_bench(args) -> int:
    params = gl.init_params(args.in_channels, args.out_channels, args.k, args.q, args.seed)
    x = np.random.default_rng(args.seed).uniform(-1.0, 1.0, (args.in_channels, args.seg_len))
    impls = {
        "naive": lambda: gl.forward_naive(params, x),
        "qconv": lambda: forward_qconv(params.weights, params.biases, x),
        "gemm": lambda: gl.forward_vectorized(params, x)[0],
    }
    outputs = {name: fn() for name, fn in impls.items()}
    if args.fault_inject == "naive":
        outputs["naive"] = outputs["naive"] + 1e-6
    ref = outputs["naive"]
    for name, out in outputs.items():
        err = float(np.max(np.abs(out - ref)))
        if err > args.agree_tol:
            print(f"agreement check failed: {name} differs from naive by {err:.3e} "
                  f"(tol {args.agree_tol:.0e}); no timings reported", file=sys.stderr)
            return EXIT_CHECK
    # plain convolution over the first-power kernels: the equivalent-CNN cost
    impls["conv1d"] = lambda: conv1d_forward(params.weights[..., 0], params.biases, x)
    rows = [("impl", "q", "k", "in", "out", "seg_len", "iters", "median_ms")]
    for name, fn in impls.items():
        iters = max(args.naive_iters, 1) if name == "naive" else args.iters
        rows.append((name, args.q, args.k, args.in_channels, args.out_channels, args.seg_len, iters,
                     f"{_median_ms(fn, iters):.3f}"))
    _tsv(rows)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfonn", description=__doc__.split("\n")[0])
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, fn, help_text):
        p = subs.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file supplying flag defaults")
        p.set_defaults(func=fn)
        return p

    s = data.SyntheticConfig()
    p = sub("generate", cmd_generate, "write synthetic records (signal + peaks) and print a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--duration-s", type=_positive_float, default=s.duration_s)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--sample-rate", type=_positive_int, default=s.sample_rate_hz)
    p.add_argument("--mean-hr", type=_positive_float, default=s.mean_hr_bpm)
    p.add_argument("--hr-jitter", type=_fraction, default=s.hr_jitter_frac)
    p.add_argument("--qrs-width-ms", type=_positive_float, default=s.qrs_width_ms)
    p.add_argument("--qrs-amp-min", type=_positive_float, default=s.qrs_amp[0])
    p.add_argument("--qrs-amp-max", type=_positive_float, default=s.qrs_amp[1])
    p.add_argument("--wander-amp", type=_nonneg_float, default=s.baseline_wander_amp)
    p.add_argument("--wander-freq", type=_nonneg_float, default=s.baseline_wander_freq_hz)
    p.add_argument("--noise-std", type=_nonneg_float, default=s.noise_std)
    p.add_argument("--glitch-rate", type=_nonneg_float, default=s.glitch_rate_per_min)
    p.add_argument("--arrhythmia-frac", type=_fraction, default=s.arrhythmia_frac)

    p = sub("train", cmd_train, "train a model on a record directory and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    _add_network_flags(p)
    p.add_argument("--epochs", type=_nonneg_int, default=50)
    p.add_argument("--lr", type=_positive_float, default=0.001)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--restarts", type=_positive_int, default=1)
    p.add_argument("--val-frac", type=_fraction, default=0.2)
    p.add_argument("--seg-len", type=_positive_int, default=SEGMENT_LENGTH)
    p.add_argument("--tol-ms", type=_positive_float, default=75.0)
    p.add_argument("--trace", help="write the loss trace here instead of standard output")
    p.add_argument("--verbose", action="store_true")

    p = sub("detect", cmd_detect, "detect R-peaks in a signal file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--refractory-ms", type=_nonneg_float, default=120.0)

    p = sub("eval", cmd_eval, "score predicted peaks against ground truth")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--counts", help="score given tp,fp,fn directly")
    p.add_argument("--tol-ms", type=_nonneg_float, default=75.0)
    p.add_argument("--sample-rate", type=_positive_int, default=400)
    p.add_argument("--tsv", action="store_true")

    p = sub("count", cmd_count, "report parameters and MACs per layer")
    _add_network_flags(p)
    p.add_argument("--seg-len", type=_positive_int, default=SEGMENT_LENGTH)
    p.add_argument("--layer", help="count a single layer given as in,out,K,Q")
    p.add_argument("--tsv", action="store_true")

    p = sub("gradcheck", cmd_gradcheck, "finite-difference check of the analytic gradients")
    _add_network_flags(p)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--seg-len", type=_positive_int, default=64)
    p.add_argument("--h", type=_positive_float, default=1e-5)
    p.add_argument("--tol", type=_positive_float, default=1e-4)
    p.add_argument("--fault-inject", choices=("weight-grad",))

    p = sub("bench", cmd_bench, "time the naive, Q-convolution and single-GEMM forward passes")
    p.add_argument("--q", type=_positive_int, default=3)
    p.add_argument("--k", type=_odd_int, default=DEFAULT_K)
    p.add_argument("--in-channels", type=_positive_int, default=4)
    p.add_argument("--out-channels", type=_positive_int, default=8)
    p.add_argument("--seg-len", type=_positive_int, default=1000)
    p.add_argument("--iters", type=_positive_int, default=20)
    p.add_argument("--naive-iters", type=_nonneg_int, default=0,
                   help="repetitions of the slow naive path (0: a single run)")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--agree-tol", type=_positive_float, default=1e-9)
    p.add_argument("--fault-inject", choices=("naive",), help="corrupt the naive output to exercise the gate")
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        entries = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        args = parser.parse_args([argv[argv.index(args.command)]] + _config_tokens(sub, entries)
                                 + argv[argv.index(args.command) + 1 :])
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"selfonn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"selfonn: error in config file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"selfonn: error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"selfonn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ParseError, InvalidArgumentError) as exc:
        print(f"selfonn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"selfonn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
