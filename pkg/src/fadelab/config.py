"""Experiment configuration: ``key = value`` lines, ``#`` comments.

Unknown keys, duplicate keys and malformed values are rejected with
:class:`ConfigError`. Lists are comma-separated.
"""

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .channel import DopplerSpec
from .framing import build_layout
from .sbgru import SlidingConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # channel (Table 1)
    carrier_frequency: float = 5.2e9
    receiver_speed: float = 10.0
    sampling_rate: float = 0.25e6
    # frame layout
    block_length: int = 16
    pilots_per_block: int = 8
    block_count: int = 10
    # estimator
    window_length: int = 40
    hidden_size: int = 40
    num_layers: int = 2
    # training (Table 2)
    learning_rate: float = 0.001
    batch_size: int = 128
    train_snr_db: float = 20.0
    epochs: int = 10
    windows_per_sequence: int = 1
    seed: int = 1
    # desk-scale split sizes (1:10 of the full experiment)
    train_channels: int = 120
    val_channels: int = 30
    test_channels: int = 30
    train_sequences: int = 10000
    val_sequences: int = 1000
    test_sequences: int = 1000
    # evaluation and sweeps
    test_snr_db: tuple = (5.0, 10.0, 15.0, 20.0, 25.0)
    eval_sequences: int = 0  # 0 = every test sequence
    pilot_densities: tuple = (0.5, 0.25)
    window_lengths: tuple = (16, 24, 32, 40)
    trace_length: int = 4000
    trace_snr_db: float = 20.0
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("train_channels", "val_channels", "test_channels", "train_sequences",
                     "val_sequences", "test_sequences", "batch_size", "hidden_size", "num_layers",
                     "block_length", "block_count", "pilots_per_block", "window_length", "trace_length",
                     "windows_per_sequence"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0 or self.seed < 0 or self.eval_sequences < 0:
            raise ConfigError("epochs, seed and eval_sequences must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not self.test_snr_db:
            raise ConfigError("test_snr_db must list at least one SNR")
        try:
            self.doppler
            self.layout
            self.sliding
            for d in self.pilot_densities:
                self.layout_for_density(d)
            for w in self.window_lengths:
                SlidingConfig(w, self.sequence_length)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def doppler(self):
        return DopplerSpec(self.carrier_frequency, self.receiver_speed, self.sampling_rate)

    @property
    def layout(self):
        return build_layout(self.block_length, self.pilots_per_block, self.block_count)

    @property
    def sequence_length(self):
        return self.block_length * self.block_count

    @property
    def sliding(self):
        return SlidingConfig(self.window_length, self.sequence_length)

    @property
    def train_config(self):
        return TrainConfig(self.learning_rate, self.batch_size, self.train_snr_db, self.epochs,
                           self.seed, self.hidden_size, self.num_layers, self.windows_per_sequence)

    def layout_for_density(self, density):
        np_ = density * self.block_length
        if abs(np_ - round(np_)) > 1e-9:
            raise ValueError(f"pilot density {density} gives a fractional pilot count")
        return build_layout(self.block_length, int(round(np_)), self.block_count)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_TUPLE_TYPES = {"test_snr_db": float, "pilot_densities": float, "window_lengths": int}


def _convert(name, kind, text):
    try:
        if name in _TUPLE_TYPES:
            items = [s.strip() for s in text.split(",") if s.strip()]
            return tuple(_TUPLE_TYPES[name](s) for s in items)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def parse_config(text):
    types = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, types[key], value)
    return ExperimentConfig(**values)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _fmt(value):
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg):
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
