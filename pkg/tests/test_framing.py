import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadelab.framing import (Dataset, assemble_frame, build_layout, pilot_bits, qpsk_demodulate,
                             qpsk_modulate, random_bits, random_frame, read_fds, to_features, write_fds)

S = 1 / np.sqrt(2)


def supported_layouts():
    return st.tuples(st.sampled_from([1, 2, 4, 8, 16, 32]), st.integers(1, 6)).flatmap(
        lambda nk: st.tuples(st.just(nk[0]), st.sampled_from([d for d in range(1, nk[0] + 1) if nk[0] % d == 0]),
                             st.just(nk[1])))


def test_random_bits():
    assert random_bits(0, 1).size == 0
    assert np.array_equal(random_bits(100, 3), random_bits(100, 3))
    assert abs(random_bits(100_000, 9).mean() - 0.5) < 0.01


def test_qpsk_gray_map():
    got = qpsk_modulate([0, 0, 0, 1, 1, 1, 1, 0])
    assert np.allclose(got, [S + S * 1j, S - S * 1j, -S - S * 1j, -S + S * 1j], atol=1e-15)
    with pytest.raises(ValueError):
        qpsk_modulate([1, 0, 1])


@given(st.lists(st.integers(0, 1), max_size=200).filter(lambda b: len(b) % 2 == 0))
def test_qpsk_unit_power_and_demod_identity(bits):
    s = qpsk_modulate(bits)
    assert np.allclose(np.abs(s), 1.0)
    assert np.array_equal(qpsk_demodulate(s), np.asarray(bits, dtype=np.uint8))


def test_layout_examples():
    a = build_layout(16, 8, 10)
    assert a.pilot_positions == tuple(range(0, 16, 2)) and a.total_length == 160
    b = build_layout(16, 4, 10)
    assert b.pilot_positions == (0, 4, 8, 12) and b.pilot_density == 0.25
    c = build_layout(16, 16, 1)
    assert c.pilot_mask().all()
    with pytest.raises(ValueError):
        build_layout(16, 3, 10)
    with pytest.raises(ValueError):
        build_layout(16, 4, 0)


def test_frame_table1():
    lay = build_layout(16, 8, 10)
    f = random_frame(lay, pilot_bits(lay, 1), 2)
    assert np.count_nonzero(f.pilot_ref) == 80
    m = lay.pilot_mask()
    assert np.array_equal(f.symbols.reshape(10, 16)[0][m[:16]], f.symbols.reshape(10, 16)[5][m[:16]])


def test_all_pilot_frame():
    lay = build_layout(16, 16, 1)
    f = assemble_frame(lay, pilot_bits(lay, 4), [])
    assert np.array_equal(f.symbols, f.pilot_ref)


def test_assemble_wrong_counts():
    lay = build_layout(4, 2, 2)
    with pytest.raises(ValueError):
        assemble_frame(lay, [0, 1], [0] * 8)
    with pytest.raises(ValueError):
        assemble_frame(lay, [0, 1, 1, 0], [0] * 6)


@settings(max_examples=50)
@given(supported_layouts(), st.integers(0, 2**32 - 1))
def test_frame_invariants(nnpk, seed):
    N, Np, K = nnpk
    lay = build_layout(N, Np, K)
    assert len(lay.pilot_positions) == Np
    assert lay.pilot_density == Np / N
    f = random_frame(lay, pilot_bits(lay, seed), seed)
    m = lay.pilot_mask()
    assert np.count_nonzero(f.pilot_ref) == K * Np
    assert np.allclose(np.abs(f.symbols), 1.0)
    assert np.array_equal(f.pilot_ref[m], f.symbols[m])
    assert not f.pilot_ref[~m].any()
    blocks = f.symbols.reshape(K, N)[:, list(lay.pilot_positions)]
    assert (blocks == blocks[0]).all()
    assert np.array_equal(qpsk_demodulate(f.symbols[~m]), f.data_bits)


def test_features():
    X = to_features(np.array([1 + 2j]), np.array([3 + 0j]))
    assert X.shape == (4, 1) and X[:, 0].tolist() == [1, 3, 2, 0]
    assert not to_features(np.zeros(5, complex), np.zeros(5, complex)).any()
    with pytest.raises(ValueError):
        to_features(np.zeros(3), np.zeros(4))


@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False), min_size=1, max_size=30))
def test_features_round_trip(vals):
    y = np.array(vals, dtype=complex)
    X = to_features(y, np.zeros_like(y))
    assert np.array_equal(X[0] + 1j * X[2], y)


def test_features_batch():
    y = np.arange(6).reshape(2, 3) * (1 + 1j)
    X = to_features(y, y)
    assert X.shape == (2, 4, 3)
    assert np.array_equal(X[1], to_features(y[1], y[1]))


def test_fds_round_trip(tmp_path):
    lay = build_layout(8, 4, 3)
    pb = pilot_bits(lay, 0)
    frames = [random_frame(lay, pb, s) for s in range(5)]
    ds = Dataset(lay, np.array([0, 4, 2, 2, 1], dtype=np.uint32),
                 np.stack([f.symbols for f in frames]).astype(np.complex64),
                 np.stack([f.pilot_ref for f in frames]).astype(np.complex64))
    path = tmp_path / "d.fds"
    write_fds(path, ds)
    back = read_fds(path)
    assert back.layout == lay
    assert np.array_equal(back.channel_index, ds.channel_index)
    assert back.symbols.tobytes() == ds.symbols.tobytes()
    assert back.pilot_ref.tobytes() == ds.pilot_ref.tobytes()
    raw = path.read_bytes()
    assert raw[:4] == b"FDS1" and len(raw) == 24 + 5 * (4 + 16 * 24)
    path.write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        read_fds(path)
