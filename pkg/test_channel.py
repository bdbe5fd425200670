#!/usr/bin/env python3
"""
Channel Test Script

Tests the uniform quantizer, empirical entropy, Lloyd-Max design and the
AWGN link.
"""

import io
import math

import numpy as np
import pytest
from scipy import stats

import channel
from channel import BinHistogram, Codebook, DegenerateSamples


@pytest.fixture(scope="module")
def gaussian_samples():
    return np.random.default_rng(2016).standard_normal(1_000_000)


@pytest.mark.parametrize("x,step,expected", [
    (0.3, 1.0, (0, 0.0)),
    (0.5, 1.0, (1, 1.0)),
    (-0.5, 1.0, (-1, -1.0)),
    (-2.7, 0.5, (-5, -2.5)),
    (0.0, 0.1, (0, 0.0)),
])
def test_uniform_quantize_examples(x, step, expected):
    assert channel.uniform_quantize(x, step) == expected


def test_uniform_quantize_error_bound():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 10.0, 100_000)
    for step in (1.0, 0.37, 0.01):
        index, recon = channel.uniform_quantize_array(x, step)
        assert np.all(np.abs(x - recon) <= step / 2 + 1e-12)
        assert np.array_equal(index, np.round(index))
        assert np.array_equal(recon, index * step)


def test_uniform_quantize_rejects_bad_step():
    with pytest.raises(ValueError):
        channel.uniform_quantize(1.0, 0.0)


@pytest.mark.parametrize("counts,expected", [
    ({0: 25, 1: 25, 2: 25, 3: 25}, 2.0),
    ({7: 100}, 0.0),
    ({-1: 50, 0: 25, 1: 25}, 1.5),
])
def test_empirical_entropy_examples(counts, expected):
    hist = BinHistogram(counts=counts, total=sum(counts.values()))
    assert channel.empirical_entropy(hist) == pytest.approx(expected, abs=1e-12)


def test_histogram_from_indices():
    hist = BinHistogram.from_indices([0, 0, 1, -2, 0])
    assert hist.counts == {-2: 1, 0: 3, 1: 1}
    assert hist.total == 5
    assert channel.entropy_of_indices([0, 0, 1, -2, 0]) == pytest.approx(channel.empirical_entropy(hist))


@pytest.mark.parametrize("step", [0.5, 0.25])
def test_entropy_gains_a_bit_per_halving(gaussian_samples, step):
    coarse = channel.entropy_of_indices(channel.uniform_quantize_array(gaussian_samples, step)[0])
    fine = channel.entropy_of_indices(channel.uniform_quantize_array(gaussian_samples, step / 2)[0])
    assert fine - coarse == pytest.approx(1.0, abs=0.05)


def test_lloyd_max_two_levels():
    half = np.random.default_rng(5).standard_normal(500_000)
    samples = np.concatenate([half, -half])
    codebook = channel.lloyd_max(samples, 2)
    expected = math.sqrt(2.0 / math.pi)
    assert codebook.levels[0] == pytest.approx(-expected, abs=0.01)
    assert codebook.levels[1] == pytest.approx(expected, abs=0.01)


def test_lloyd_max_four_levels_mse(gaussian_samples):
    design = channel.lloyd_max_design(gaussian_samples, 4)
    assert design.mse == pytest.approx(0.1175, abs=0.005)
    assert design.converged


def test_lloyd_max_two_point_masses():
    design = channel.lloyd_max_design([-1.0, -1.0, 1.0, 1.0], 2)
    assert design.codebook.levels == (-1.0, 1.0)
    assert design.codebook.thresholds == (0.0,)
    assert design.mse == 0.0


def test_lloyd_max_history_is_non_increasing():
    samples = np.random.default_rng(11).laplace(0.0, 1.0, 50_000)
    design = channel.lloyd_max_design(samples, 8, tol=1e-10)
    history = design.mse_history
    assert len(history) == design.iterations
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_lloyd_max_fixed_point_conditions():
    samples = np.random.default_rng(12).standard_normal(20_000)
    codebook = channel.lloyd_max(samples, 6, tol=1e-10)
    levels = np.array(codebook.levels)
    assert np.allclose(codebook.thresholds, 0.5 * (levels[1:] + levels[:-1]))
    index, _ = channel.codebook_quantize(codebook, samples)
    centroids = [samples[index == i].mean() for i in range(6)]
    assert np.allclose(centroids, levels, atol=1e-6)


def test_lloyd_max_recovers_empty_cells():
    """Heavy ties put several quantile starts on the same value"""
    samples = np.concatenate([np.zeros(1000), np.linspace(1.0, 2.0, 10)])
    design = channel.lloyd_max_design(samples, 4)
    assert design.empty_cells_recovered >= 1
    assert design.codebook.size == 4


@pytest.mark.parametrize("samples,levels", [
    ([3.0, 3.0, 3.0, 3.0], 2),
    ([0.0, 0.0, 1.0, 1.0], 3),
])
def test_lloyd_max_degenerate_samples(samples, levels):
    with pytest.raises(DegenerateSamples):
        channel.lloyd_max_design(samples, levels)


def test_lloyd_max_needs_enough_samples():
    with pytest.raises(ValueError):
        channel.lloyd_max_design([1.0, 2.0], 4)


@pytest.mark.parametrize("levels", [4, 8, 16])
def test_lloyd_max_beats_uniform_grid(levels):
    samples = np.random.default_rng(levels).standard_normal(100_000)
    lloyd = channel.lloyd_max_design(samples, levels, tol=1e-6)
    grid = channel.uniform_grid_codebook(samples, levels)
    assert lloyd.mse <= channel.codebook_mse(grid, samples)


def test_codebook_invariants():
    with pytest.raises(ValueError):
        Codebook(levels=(1.0, 0.0), thresholds=(0.5,))
    with pytest.raises(ValueError):
        Codebook(levels=(0.0, 1.0), thresholds=(2.0,))
    with pytest.raises(ValueError):
        Codebook(levels=(0.0, 1.0), thresholds=())


def test_codebook_quantize_ties_go_down():
    codebook = Codebook.from_levels([-1.0, 1.0])
    index, recon = channel.codebook_quantize(codebook, np.array([0.0, 1e-9, -5.0, 5.0]))
    assert index.tolist() == [0, 1, 0, 1]
    assert recon.tolist() == [-1.0, 1.0, -1.0, 1.0]


def test_codebook_csv():
    buffer = io.StringIO()
    channel.write_codebook_csv(Codebook.from_levels([-1.5, 0.0, 2.0]), buffer)
    lines = buffer.getvalue().splitlines()
    assert lines == ["level,upper_threshold", "-1.5,-0.75", "0,1", "2,"]


def test_codebook_csv_file(tmp_path):
    codebook = Codebook.from_levels([-0.5, 0.25, 3.0])
    path = tmp_path / "codebook.csv"
    channel.write_codebook_csv(codebook, path)
    assert channel.read_codebook_csv(path) == codebook


def test_read_samples(tmp_path):
    path = tmp_path / "samples.txt"
    path.write_text("1.5, -2\n3e-1\n\n4\n")
    assert channel.read_samples(path).tolist() == [1.5, -2.0, 0.3, 4.0]
    path.write_text("1.0 banana")
    with pytest.raises(ValueError):
        channel.read_samples(path)


def test_awgn_vanishing_noise():
    out = channel.awgn_transmit(1.0, 1.0, 1e15, np.random.default_rng(0))
    assert abs(out - 1.0) < 1e-6


def test_awgn_noise_variance():
    x = np.ones(1_000_000)
    out = channel.awgn_transmit(x, 2.0, 4.0, np.random.default_rng(1))
    assert np.var(out - x) == pytest.approx(0.5, rel=0.01)


def test_awgn_output_is_gaussian():
    out = channel.awgn_transmit(np.zeros(1_000_000), 1.0, 1.0, np.random.default_rng(2))
    assert stats.kurtosis(out, fisher=False) == pytest.approx(3.0, abs=0.05)
    assert np.var(out) == pytest.approx(1.0, rel=0.01)


def test_awgn_rejects_bad_inputs():
    with pytest.raises(ValueError):
        channel.awgn_transmit(0.0, 0.0, 1.0, np.random.default_rng(0))
