"""
Link models between observer and controller

Mid-tread uniform quantizer, sample-trained Lloyd-Max codebooks, empirical
entropy of quantizer output, and the AWGN link.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, TextIO, Tuple, Union

import numpy as np

from model import NetLQGError, format_number

logger = logging.getLogger(__name__)


class DegenerateSamples(NetLQGError):
    """Too few distinct sample values to place every codebook level"""


@dataclass(frozen=True)
class Codebook:
    """Ascending reconstruction levels with len(levels) - 1 decision thresholds"""
    levels: Tuple[float, ...]
    thresholds: Tuple[float, ...]

    def __post_init__(self):
        if len(self.thresholds) != len(self.levels) - 1:
            raise ValueError(f"need {len(self.levels) - 1} thresholds for {len(self.levels)} levels")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly ascending")
        for i, t in enumerate(self.thresholds):
            if not self.levels[i] < t < self.levels[i + 1]:
                raise ValueError(f"threshold {t} is not between levels {self.levels[i]} and {self.levels[i + 1]}")

    @classmethod
    def from_levels(cls, levels: Sequence[float]) -> "Codebook":
        """Nearest-neighbor codebook: thresholds at the midpoints"""
        lv = np.asarray(levels, dtype=float)
        return cls(levels=tuple(float(x) for x in lv),
                   thresholds=tuple(float(x) for x in 0.5 * (lv[1:] + lv[:-1])))

    @property
    def size(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class BinHistogram:
    """Counts per bin index; empty bins are absent"""
    counts: Dict[int, int]
    total: int

    @classmethod
    def from_indices(cls, indices) -> "BinHistogram":
        values, counts = np.unique(np.asarray(indices).ravel(), return_counts=True)
        return cls(counts={int(v): int(c) for v, c in zip(values, counts)}, total=int(counts.sum()))


@dataclass
class LloydMaxDesign:
    codebook: Codebook
    mse: float
    mse_history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    empty_cells_recovered: int = 0


# Uniform quantizer

def uniform_quantize_array(x, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized mid-tread quantizer; index = round half away from zero of x / step"""
    index = np.copysign(np.floor(np.abs(x) / step + 0.5), x)
    return index, index * step


def uniform_quantize(x: float, step: float) -> Tuple[int, float]:
    if not step > 0:
        raise ValueError(f"step must be > 0 (got {step})")
    index, recon = uniform_quantize_array(float(x), step)
    return int(index), float(recon)


# Entropy

def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(float)
    total = counts.sum()
    return float(np.sum(counts / total * np.log2(total / counts)))


def empirical_entropy(hist: BinHistogram) -> float:
    """Plug-in entropy in bits"""
    if hist.total < 1:
        raise ValueError("histogram is empty")
    return _entropy_from_counts(np.fromiter(hist.counts.values(), dtype=float, count=len(hist.counts)))


def entropy_of_indices(indices) -> float:
    """Same as empirical_entropy(BinHistogram.from_indices(indices)) without building the dict"""
    _, counts = np.unique(np.asarray(indices).ravel(), return_counts=True)
    return _entropy_from_counts(counts)


# Lloyd-Max

def _cell_ranges(x: np.ndarray, thresholds: np.ndarray) -> List[Tuple[int, int]]:
    """[start, stop) index ranges of sorted samples per nearest-neighbor cell; ties go to the lower cell"""
    edges = np.concatenate(([0], np.searchsorted(x, thresholds, side="right"), [x.size]))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def lloyd_max_design(samples, levels: int, tol: float = 1e-8, max_iter: int = 10_000) -> LloydMaxDesign:
    """
    Train a K-level codebook on samples by alternating nearest-neighbor
    thresholds and centroid levels. MSE is recorded after every partition
    step, so mse_history is non-increasing.
    """
    if levels < 2:
        raise ValueError(f"levels must be >= 2 (got {levels})")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < levels:
        raise ValueError(f"need at least {levels} samples (got {n})")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    distinct = int(np.count_nonzero(np.diff(x))) + 1
    if distinct < levels:
        raise DegenerateSamples(f"{distinct} distinct sample value(s) cannot fill {levels} levels")

    csum = np.concatenate(([0.0], np.cumsum(x)))
    csum2 = np.concatenate(([0.0], np.cumsum(x * x)))

    def mean_of(a: int, b: int) -> float:
        return (csum[b] - csum[a]) / (b - a)

    def cell_error(a: int, b: int, level: float) -> float:
        # sum over the cell of (x - level)^2, clipped against cancellation
        s1 = csum[b] - csum[a]
        s2 = csum2[b] - csum2[a]
        return max(0.0, s2 - 2.0 * level * s1 + (b - a) * level * level)

    # quantile start
    current = x[((np.arange(levels) + 0.5) * n / levels).astype(int)]
    history = []
    recovered = 0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        ranges = _cell_ranges(x, 0.5 * (current[1:] + current[:-1]))
        history.append(sum(cell_error(a, b, lv) for (a, b), lv in zip(ranges, current)) / n)

        cells = [(a, b) for a, b in ranges if b > a]
        empty = levels - len(cells)
        for _ in range(empty):
            # split the most populous cell that still has spread
            a, b = max((r for r in cells if x[r[0]] < x[r[1] - 1]), key=lambda r: r[1] - r[0])
            cut = a + int(np.searchsorted(x[a:b], mean_of(a, b), side="right"))
            cut = min(max(cut, a + 1), b - 1)
            cells.remove((a, b))
            cells.extend([(a, cut), (cut, b)])
        if empty:
            recovered += empty
            logger.warning(f"Lloyd-Max iteration {iterations}: re-seeded {empty} empty cell(s)")

        updated = np.sort(np.array([mean_of(a, b) for a, b in cells]))
        moved = float(np.max(np.abs(updated - current)))
        current = updated
        if moved < tol and not empty:
            converged = True
            break

    if not converged:
        logger.warning(f"Lloyd-Max stopped after {max_iter} iterations without reaching tol={tol}")
    codebook = Codebook.from_levels(current)
    design = LloydMaxDesign(codebook=codebook, mse=codebook_mse(codebook, x), mse_history=history,
                            iterations=iterations, converged=converged, empty_cells_recovered=recovered)
    logger.debug(f"Lloyd-Max K={levels}: mse={design.mse:.6g} after {iterations} iterations")
    return design


def lloyd_max(samples, levels: int, tol: float = 1e-8, max_iter: int = 10_000) -> Codebook:
    return lloyd_max_design(samples, levels, tol, max_iter).codebook


def codebook_quantize(codebook: Codebook, x) -> Tuple[np.ndarray, np.ndarray]:
    """(cell index, reconstruction); a value on a threshold goes to the lower cell"""
    index = np.searchsorted(np.asarray(codebook.thresholds), x, side="left")
    return index, np.asarray(codebook.levels)[index]


def codebook_mse(codebook: Codebook, samples) -> float:
    x = np.asarray(samples, dtype=float)
    _, recon = codebook_quantize(codebook, x)
    return float(np.mean((x - recon) ** 2))


def uniform_grid_codebook(samples, levels: int) -> Codebook:
    """K evenly spaced levels at the cell centres of the sample range"""
    x = np.asarray(samples, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DegenerateSamples("samples are all identical")
    width = (hi - lo) / levels
    return Codebook.from_levels(lo + (np.arange(levels) + 0.5) * width)


# AWGN link

def awgn_transmit(x, signal_power: float, snr: float, rng: np.random.Generator):
    """x + z with z ~ N(0, signal_power / snr)"""
    if not signal_power > 0 or not snr > 0:
        raise ValueError(f"signal_power and snr must be > 0 (got {signal_power}, {snr})")
    size = None if np.ndim(x) == 0 else np.shape(x)
    return x + rng.normal(0.0, math.sqrt(signal_power / snr), size)


# Files

def write_codebook_csv(codebook: Codebook, out: Union[str, Path, TextIO]) -> None:
    """level,upper_threshold rows; the top level has no threshold"""
    def _write(handle: TextIO) -> None:
        writer = csv.writer(handle)
        writer.writerow(["level", "upper_threshold"])
        uppers = list(codebook.thresholds) + [None]
        for level, upper in zip(codebook.levels, uppers):
            writer.writerow([format_number(level), format_number(upper)])

    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as handle:
            _write(handle)
    else:
        _write(out)


def read_codebook_csv(path: Union[str, Path]) -> Codebook:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    return Codebook(levels=tuple(float(r["level"]) for r in rows),
                    thresholds=tuple(float(r["upper_threshold"]) for r in rows[:-1]))


def read_samples(path: Union[str, Path]) -> np.ndarray:
    """Whitespace or comma separated reals"""
    text = Path(path).read_text(encoding="utf-8")
    tokens = text.replace(",", " ").split()
    try:
        return np.array([float(tok) for tok in tokens])
    except ValueError as e:
        raise ValueError(f"{path}: not a list of numbers ({e})")
