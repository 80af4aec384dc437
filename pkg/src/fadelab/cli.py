"""Command-line harness: ``fadelab <command> [--config F] [--seed S] [--out DIR] [--threads N]``.

Commands, in pipeline order::

    gen-channels   channels_{train,val,test}.fch
    gen-dataset    data_{train,val,test}.fds
    train          model.fnn, train_log.csv
    eval           eval.csv (every estimator x SNR), eval_block.csv (sliding vs block)
    sweep          sweep_<axis>.csv for --axis window_length | pilot_density
    trace          trace.csv (4000-symbol tracking run)

Exit codes: 0 success, 2 configuration error, 3 missing or malformed data,
4 numerical failure.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import baselines, channel, framing, nn, rng, sbgru
from .baselines import NumericalError
from .config import ConfigError, ExperimentConfig, load_config, serialize_config

log = logging.getLogger("fadelab")

SPLITS = ("train", "val", "test")
_TRACE_SPLIT = 3
_SPLIT_SPAN = 1_000_000

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(Exception):
    pass


def channel_seed(seed, split, index):
    """Seed of channel ``index`` in ``split``; splits occupy disjoint ranges."""
    if not 0 <= index < _SPLIT_SPAN:
        raise ConfigError(f"at most {_SPLIT_SPAN} items per split")
    return seed * 4 * _SPLIT_SPAN + split * _SPLIT_SPAN + index


# ------------------------------------------------------------------- steps

def gen_channels(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    counts = (cfg.train_channels, cfg.val_channels, cfg.test_channels)
    paths = []
    for s, (name, count) in enumerate(zip(SPLITS, counts)):
        seeds = [channel_seed(cfg.seed, s, i) for i in range(count)]
        gains = channel.generate_channels(cfg.sequence_length, cfg.doppler, seeds)
        path = out / f"channels_{name}.fch"
        channel.write_fch(path, gains, cfg.doppler.normalized_doppler)
        paths.append(path)
    return paths


def make_dataset(cfg, layout, split, pool_size, count):
    s = SPLITS.index(split)
    idx = rng.stream(cfg.seed, rng.CHOICE, s).integers(0, pool_size, size=count).astype(np.uint32)
    pilots = framing.pilot_bits(layout, cfg.seed)
    frames = [framing.random_frame(layout, pilots, channel_seed(cfg.seed, s, i)) for i in range(count)]
    return framing.Dataset(layout, idx, np.stack([f.symbols for f in frames]).astype(np.complex64),
                           np.stack([f.pilot_ref for f in frames]).astype(np.complex64))


def gen_dataset(cfg, channels_dir, out, layout=None):
    layout = layout or cfg.layout
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    counts = (cfg.train_sequences, cfg.val_sequences, cfg.test_sequences)
    paths = []
    for name, count in zip(SPLITS, counts):
        pool = read_channels(Path(channels_dir) / f"channels_{name}.fch")
        if pool.gains.shape[1] != layout.total_length:
            raise DataError(f"channels have length {pool.gains.shape[1]}, frames {layout.total_length}")
        path = out / f"data_{name}.fds"
        framing.write_fds(path, make_dataset(cfg, layout, name, len(pool.gains), count))
        paths.append(path)
    return paths


def read_channels(path):
    try:
        return channel.read_fch(path)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def load_split(data_dir, channels_dir, split, limit=0):
    try:
        ds = framing.read_fds(Path(data_dir) / f"data_{split}.fds")
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    pool = read_channels(Path(channels_dir) / f"channels_{split}.fch")
    try:
        data = sbgru.SequenceSet.from_dataset(ds, pool.gains)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if limit:
        data = sbgru.SequenceSet(data.channels, data.symbols[:limit], data.pilot_ref[:limit],
                                 data.channel_index[:limit])
    return data, pool.normalized_doppler


def train_model(cfg, data_dir, channels_dir, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tr, _ = load_split(data_dir, channels_dir, "train")
    va, _ = load_split(data_dir, channels_dir, "val")
    params, history = sbgru.train(tr, va, cfg.train_config, cfg.sliding)
    nn.write_fnn(out / "model.fnn", params)
    sbgru.write_train_log(out / "train_log.csv", history)
    return out / "model.fnn"


def read_model(path):
    try:
        return nn.read_fnn(path)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def evaluate_model(cfg, model_path, data_dir, channels_dir, threads=1, estimators=sbgru.ESTIMATORS,
                   sliding=None):
    model = read_model(model_path)
    te, phi = load_split(data_dir, channels_dir, "test", cfg.eval_sequences)
    return sbgru.evaluate(model, te, cfg.test_snr_db, sliding or cfg.sliding,
                          channel.DopplerSpec.from_normalized(phi), cfg.seed, estimators, threads)


def cmd_eval(cfg, out, threads=1):
    out = Path(out)
    reports = evaluate_model(cfg, out / "model.fnn", out, out, threads)
    baselines.write_reports(out / "eval.csv", reports)
    baselines.write_reports(out / "eval_block.csv",
                            [r for r in reports if r.estimator_name in ("SBGRU", "BGRU-block")])
    return reports


SWEEP_COLUMNS = ("axis", "value", "estimator", "snr_db", "mse", "sample_count")


def cmd_sweep(cfg, out, axis, threads=1):
    out = Path(out)
    rows = []
    if axis == "window_length":
        for w in cfg.window_lengths:
            reports = evaluate_model(cfg, out / "model.fnn", out, out, threads, ("SBGRU",),
                                     sbgru.SlidingConfig(w, cfg.sequence_length))
            rows += [(axis, w, r) for r in reports]
    elif axis == "pilot_density":
        for d in cfg.pilot_densities:
            layout = cfg.layout_for_density(d)
            sub = out / f"density_{layout.pilots_per_block}of{layout.block_length}"
            dcfg = cfg.replace(pilots_per_block=layout.pilots_per_block)
            gen_dataset(dcfg, out, sub, layout)
            train_model(dcfg, sub, out, sub)
            reports = evaluate_model(dcfg, sub / "model.fnn", sub, out, threads, ("SBGRU", "LS", "MMSE-sim"))
            baselines.write_reports(sub / "eval.csv", reports)
            rows += [(axis, d, r) for r in reports]
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    path = out / f"sweep_{axis}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for ax, value, r in rows:
            w.writerow([ax, baselines.format_float(value) if isinstance(value, float) else value,
                        r.estimator_name, baselines.format_float(r.snr_db),
                        baselines.format_float(r.mse), r.sample_count])
    return path, rows


def cmd_trace(cfg, out):
    out = Path(out)
    model = read_model(out / "model.fnn")
    n = cfg.trace_length
    ch = channel.generate_channel(n, cfg.doppler, channel_seed(cfg.seed, _TRACE_SPLIT, 0))
    try:
        frame = sbgru.trace_frame(n, cfg.block_length, cfg.pilots_per_block, cfg.seed,
                                  channel_seed(cfg.seed, _TRACE_SPLIT, 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mses = sbgru.trace_export(model, ch, frame, cfg.trace_snr_db, out / "trace.csv",
                              cfg.window_length, cfg.seed)
    return out / "trace.csv", mses


# --------------------------------------------------------------------- main

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS and evaluation threads")

    parser = argparse.ArgumentParser(prog="fadelab", parents=[common],
                                     description="Channel estimation over time-selective Rayleigh fading.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-channels", parents=[common], help="synthesize train/val/test channel pools")
    sub.add_parser("gen-dataset", parents=[common], help="build pilot-framed sequences")
    sub.add_parser("train", parents=[common], help="train the sliding BGRU estimator")
    sub.add_parser("eval", parents=[common], help="MSE vs SNR for every estimator")
    sw = sub.add_parser("sweep", parents=[common], help="window-length or pilot-density sweep")
    sw.add_argument("--axis", choices=("window_length", "pilot_density"), required=True)
    sub.add_parser("trace", parents=[common], help="channel-tracking trace")
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return parser


def _blas_limit(threads):
    return threadpool_limits(limits=threads, user_api="blas")


def run(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = cfg.replace(output_dir=args.out)
    threads = getattr(args, "threads", 1)
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    out = Path(cfg.output_dir)

    with _blas_limit(threads):
        if args.command == "show-config":
            sys.stdout.write(serialize_config(cfg))
        elif args.command == "gen-channels":
            for p in gen_channels(cfg, out):
                print(p)
        elif args.command == "gen-dataset":
            for p in gen_dataset(cfg, out, out):
                print(p)
        elif args.command == "train":
            print(train_model(cfg, out, out, out))
        elif args.command == "eval":
            for r in cmd_eval(cfg, out, threads):
                print(f"{r.estimator_name:12s} {r.snr_db:5.1f} dB  mse {r.mse:.6g}")
        elif args.command == "sweep":
            path, rows = cmd_sweep(cfg, out, args.axis, threads)
            for ax, value, r in rows:
                print(f"{ax}={value} {r.estimator_name:10s} {r.snr_db:5.1f} dB  mse {r.mse:.6g}")
            print(path)
        elif args.command == "trace":
            path, mses = cmd_trace(cfg, out)
            for k, v in mses.items():
                print(f"{k:10s} mse {v:.6g}")
            print(path)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
