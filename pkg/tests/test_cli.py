import csv
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadelab import channel, cli, framing, nn
from fadelab.config import ConfigError, ExperimentConfig, parse_config, serialize_config

TINY = """
train_channels = 3
val_channels = 2
test_channels = 2
train_sequences = 24
val_sequences = 6
test_sequences = 5
block_length = 8
pilots_per_block = 4
block_count = 4
window_length = 8
hidden_size = 4
epochs = 2
batch_size = 8
trace_length = 64
window_lengths = 4, 8
pilot_densities = 0.5, 0.25
"""


def run_cli(tmp_path, *args, config=TINY):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(config)
    return cli.main([*args, "--config", str(cfg), "--out", str(tmp_path / "out")])


def read_csv(path):
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert all(len(r) == len(rows[0]) for r in rows)
    return rows


def test_config_defaults_match_tables():
    c = ExperimentConfig()
    assert c.doppler.normalized_doppler == pytest.approx(6.93333e-4, rel=1e-5)
    assert (c.block_length, c.pilots_per_block, c.learning_rate, c.batch_size, c.train_snr_db) == (16, 8, 1e-3, 128, 20.0)
    assert (c.train_channels, c.val_channels, c.test_channels) == (120, 30, 30)
    assert (c.train_sequences, c.val_sequences, c.test_sequences) == (10000, 1000, 1000)
    assert c.test_snr_db == (5.0, 10.0, 15.0, 20.0, 25.0)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.floats(1e-5, 1.0), st.lists(st.floats(-20, 60), min_size=1, max_size=5),
       st.sampled_from([(16, 8), (16, 4), (8, 8)]))
def test_config_round_trip(seed, lr, snrs, layout):
    c = ExperimentConfig(seed=seed, learning_rate=lr, test_snr_db=tuple(snrs),
                         block_length=layout[0], pilots_per_block=layout[1])
    assert parse_config(serialize_config(c)) == c
    assert serialize_config(parse_config(serialize_config(c))) == serialize_config(c)


@pytest.mark.parametrize("text", [
    "bogus = 1", "seed = 1\nseed = 2", "seed = one", "pilots_per_block = 3", "no equals sign",
    "train_channels = 0", "window_length = 500", "pilot_densities = 0.3", "test_snr_db =",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_comments():
    assert parse_config("# hi\nseed = 4  # trailing\n\n").seed == 4


def test_channel_seeds_disjoint():
    seeds = {cli.channel_seed(1, s, i) for s in range(4) for i in range(1000)}
    assert len(seeds) == 4000
    with pytest.raises(ConfigError):
        cli.channel_seed(1, 0, 10**6)


def test_exit_code_config(tmp_path):
    assert run_cli(tmp_path, "gen-channels", config="nope = 1") == 2
    assert cli.main(["gen-channels", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert run_cli(tmp_path, "gen-channels", "--threads", "0") == 2


def test_exit_code_data(tmp_path):
    assert run_cli(tmp_path, "gen-dataset") == 3
    assert run_cli(tmp_path, "train") == 3
    assert run_cli(tmp_path, "eval") == 3
    assert run_cli(tmp_path, "gen-channels") == 0
    (tmp_path / "out" / "channels_val.fch").write_bytes(b"FCH1 garbage")
    assert run_cli(tmp_path, "gen-dataset") == 3


def test_exit_code_numerical(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise cli.NumericalError("loss is nan")

    monkeypatch.setattr(cli.sbgru, "train", boom)
    assert run_cli(tmp_path, "gen-channels") == 0
    assert run_cli(tmp_path, "gen-dataset") == 0
    assert run_cli(tmp_path, "train") == 4


def test_bad_subcommand_usage():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def _pipeline(tmp_path, name):
    root = tmp_path / name
    root.mkdir()
    for cmd in (["gen-channels"], ["gen-dataset"], ["train"], ["eval"], ["sweep", "--axis", "window_length"],
                ["sweep", "--axis", "pilot_density"], ["trace"]):
        assert run_cli(root, *cmd) == 0, cmd
    return root / "out"


def test_full_pipeline_and_determinism(tmp_path):
    a = _pipeline(tmp_path, "a")
    b = _pipeline(tmp_path, "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) >= 14
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    cfg = parse_config(TINY)
    fch = channel.read_fch(a / "channels_train.fch")
    assert fch.gains.shape == (3, 32)
    assert fch.normalized_doppler == cfg.doppler.normalized_doppler
    ds = framing.read_fds(a / "data_test.fds")
    assert len(ds) == 5 and ds.channel_index.max() < 2
    assert nn.read_fnn(a / "model.fnn").hidden_size == 4

    ev = read_csv(a / "eval.csv")
    assert ev[0] == ["estimator", "snr_db", "mse", "sample_count"]
    assert len(ev) == 1 + 25
    assert {r[0] for r in ev[1:]} == {"SBGRU", "BGRU-block", "LS", "MMSE-theory", "MMSE-sim"}
    assert len(read_csv(a / "eval_block.csv")) == 1 + 10
    log = read_csv(a / "train_log.csv")
    assert log[0] == ["epoch", "train_loss", "val_loss"] and len(log) == 3

    sw = read_csv(a / "sweep_window_length.csv")
    assert len(sw) == 1 + 2 * 5
    sp = read_csv(a / "sweep_pilot_density.csv")
    assert {r[1] for r in sp[1:]} == {"0.5", "0.25"}
    assert (a / "density_2of8" / "model.fnn").exists() and (a / "density_4of8" / "model.fnn").exists()

    tr = read_csv(a / "trace.csv")
    assert len(tr) == 64 + 1
    h = channel.generate_channel(64, cfg.doppler, cli.channel_seed(cfg.seed, 3, 0)).gains
    assert np.array_equal([float(r[1]) + 1j * float(r[2]) for r in tr[1:]], h)


def test_sweep_single_value_matches_eval(tmp_path):
    cfg = TINY + "\nwindow_lengths = 8\n"
    cfg = cfg.replace("window_lengths = 4, 8\n", "")
    for cmd in (["gen-channels"], ["gen-dataset"], ["train"], ["eval"], ["sweep", "--axis", "window_length"]):
        assert run_cli(tmp_path, *cmd, config=cfg) == 0
    ev = {(r[0], r[1]): r[2] for r in read_csv(tmp_path / "out" / "eval.csv")[1:]}
    for r in read_csv(tmp_path / "out" / "sweep_window_length.csv")[1:]:
        assert ev[(r[2], r[3])] == r[4]


def test_epochs_zero_checkpoint(tmp_path):
    cfg = TINY.replace("epochs = 2", "epochs = 0")
    for cmd in ("gen-channels", "gen-dataset", "train"):
        assert run_cli(tmp_path, cmd, config=cfg) == 0
    p = nn.read_fnn(tmp_path / "out" / "model.fnn")
    ref = nn.init_params(1, hidden_size=4)
    assert all(np.array_equal(p[k], ref[k].astype(np.float32)) for k in ref.tensors)
    assert len(read_csv(tmp_path / "out" / "train_log.csv")) == 1


def test_threads_do_not_change_results(tmp_path):
    for cmd in ("gen-channels", "gen-dataset", "train"):
        assert run_cli(tmp_path, cmd) == 0
    assert run_cli(tmp_path, "eval", "--threads", "1") == 0
    one = (tmp_path / "out" / "eval.csv").read_bytes()
    assert run_cli(tmp_path, "eval", "--threads", "3") == 0
    assert (tmp_path / "out" / "eval.csv").read_bytes() == one


def test_seed_flag_changes_output(tmp_path):
    assert run_cli(tmp_path, "gen-channels") == 0
    a = (tmp_path / "out" / "channels_train.fch").read_bytes()
    assert run_cli(tmp_path, "gen-channels", "--seed", "2") == 0
    assert (tmp_path / "out" / "channels_train.fch").read_bytes() != a


def test_show_config_and_module_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fadelab", "show-config"], capture_output=True, text=True)
    assert out.returncode == 0
    assert parse_config(out.stdout) == ExperimentConfig()
