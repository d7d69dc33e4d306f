import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridpend.neural import (
    GENOME_DIM,
    INPUT_RANGES,
    GenomeError,
    MlpWeights,
    bang_bang_fraction,
    clamp_genome,
    decode_genome,
    encode_weights,
    genome_dim,
    load_genome,
    mlp_forward,
    save_genome,
)

genomes = arrays(np.float64, GENOME_DIM, elements=st.floats(-30, 30))
states = arrays(np.float64, 4, elements=st.floats(-20, 20))


def reference_forward(genome, x_hat, r):
    """Plain numpy forward pass written from the layout description."""
    g = np.asarray(genome, dtype=float)
    W1, b1 = g[0:16].reshape(4, 4), g[16:20]
    W2, b2 = g[20:28].reshape(2, 4), g[28:30]
    W3, b3 = g[30:32].reshape(1, 2), g[32:33]
    err = np.asarray(x_hat, dtype=float) - np.array([r, 0, 0, 0])
    lo = np.array([a for a, _ in INPUT_RANGES])
    hi = np.array([b for _, b in INPUT_RANGES])
    x = np.clip(2 * (err - lo) / (hi - lo) - 1, -1, 1)
    sig = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
    h1 = sig(W1 @ x + b1)
    h2 = sig(W2 @ h1 + b2)
    return float(5 * sig(W3 @ h2 + b3)[0])


def test_genome_dim_examples():
    assert genome_dim((4, 4, 2, 1)) == 33
    assert genome_dim((1, 1)) == 2
    assert genome_dim((4, 1)) == 5
    assert GENOME_DIM == 33


def test_zero_genome_decodes_to_zeros():
    w = decode_genome(np.zeros(33))
    shapes = [(W.shape, b.shape) for W, b in w.layers]
    assert shapes == [((4, 4), (4,)), ((2, 4), (2,)), ((1, 2), (1,))]
    assert all(not W.any() and not b.any() for W, b in w.layers)


def test_ramp_layout():
    w = decode_genome(np.arange(33.0))
    (W1, b1), (W2, b2), (W3, b3) = w.layers
    assert W1[0, 0] == 0 and W1[0, 1] == 1 and W1[1, 0] == 4  # row-major, rows are output units
    assert b1[0] == 16
    assert W2[0, 0] == 20 and b2[0] == 28
    assert W3[0, 0] == 30 and W3[0, 1] == 31 and b3[0] == 32


@given(genomes)
def test_codec_round_trip(g):
    np.testing.assert_array_equal(encode_weights(decode_genome(g)), g)


def test_codec_rejects_wrong_length():
    with pytest.raises(GenomeError):
        decode_genome(np.zeros(30))
    with pytest.raises(GenomeError):
        encode_weights(MlpWeights(((np.zeros((4, 4)), np.zeros(4)),)))


def test_zero_network_outputs_mid():
    assert mlp_forward(np.zeros(33), [0.3, -1, 0.2, 4], 0.1) == 2.5


def test_saturated_hidden_unit_example():
    g = np.zeros(33)
    g[28] = 30.0  # second-hidden-layer unit 0 bias: output ~1
    g[30] = 10.0  # its weight into the output unit
    assert mlp_forward(g, np.zeros(4), 0.0) == pytest.approx(5 / (1 + math.exp(-10)), abs=1e-9)
    assert mlp_forward(g, np.zeros(4), 0.0) == pytest.approx(4.99977, abs=1e-5)


@given(genomes, states, st.floats(-0.3, 0.3))
def test_forward_matches_reference(g, x, r):
    assert mlp_forward(g, x, r) == pytest.approx(reference_forward(g, x, r), abs=1e-12)


@given(genomes, states, st.floats(-1, 1))
def test_output_strictly_inside_range(g, x, r):
    v = mlp_forward(g, x, r)
    assert 0 < v < 5


def test_output_strict_even_at_extreme_weights():
    g = np.full(33, 30.0)
    assert mlp_forward(g, [0.5, 5, 0.5, 5], 0.0) < 5
    assert mlp_forward(-g, [0.5, 5, 0.5, 5], 0.0) > 0


@given(genomes, states)
def test_input_clamping(g, x):
    lo = np.array([a for a, _ in INPUT_RANGES])
    hi = np.array([b for _, b in INPUT_RANGES])
    assert mlp_forward(g, x, 0.0) == mlp_forward(g, np.clip(x, lo, hi), 0.0)


@given(genomes, arrays(np.float64, 4, elements=st.floats(-0.4, 0.4)), st.floats(-0.2, 0.2))
def test_inputs_are_reference_relative(g, x, r):
    shifted = x + np.array([r, 0, 0, 0])
    assert mlp_forward(g, shifted, r) == pytest.approx(mlp_forward(g, x, 0.0), abs=1e-12)


def test_forward_accepts_decoded_weights():
    g = np.random.default_rng(3).uniform(-2, 2, 33)
    assert mlp_forward(decode_genome(g), [0.1, 0, 0, 0], 0) == mlp_forward(g, [0.1, 0, 0, 0], 0)


def test_clamp_genome():
    np.testing.assert_array_equal(clamp_genome([-40, 0, 31]), [-30, 0, 30])


def test_genome_file_round_trip(tmp_path):
    g = np.random.default_rng(0).uniform(-30, 30, 33)
    g[0] = 1 / 3
    path = tmp_path / "genome.txt"
    save_genome(path, g)
    assert len(path.read_text().splitlines()) == 33
    np.testing.assert_array_equal(load_genome(path), g)


def test_genome_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1\n2\n")
    with pytest.raises(GenomeError):
        load_genome(bad)
    bad.write_text("x\n" * 33)
    with pytest.raises(GenomeError):
        load_genome(bad)
    bad.write_text("nan\n" * 33)
    with pytest.raises(GenomeError):
        load_genome(bad)


def test_bang_bang_fraction():
    assert bang_bang_fraction([0.1, 4.9, 2.5, 3.0]) == 0.5
    assert bang_bang_fraction([0.5, 4.5]) == 0.0  # exactly 2.0 V away is not counted
    assert math.isnan(bang_bang_fraction([]))
