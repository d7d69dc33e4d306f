"""Fixed 4-4-2-1 logistic MLP controller and its flat genome codec.

Genome layout, layer by layer: the row-major weight matrix (fan_out x fan_in)
followed by the bias vector. For the 4-4-2-1 network that is
``W1[0:16] b1[16:20] W2[20:28] b2[28:30] W3[30:32] b3[32]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as kern

LAYER_SIZES = (4, 4, 2, 1)
WEIGHT_LIMIT = 30.0
INPUT_RANGES = ((-0.5, 0.5), (-5.0, 5.0), (-0.5, 0.5), (-5.0, 5.0))
OUTPUT_RANGE = (0.0, 5.0)


class GenomeError(ValueError):
    pass


def genome_dim(layer_sizes=LAYER_SIZES) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


GENOME_DIM = genome_dim()


@dataclass(frozen=True)
class MlpWeights:
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]


def _check(genome) -> np.ndarray:
    g = np.asarray(genome, dtype=float)
    if g.ndim != 1 or g.shape[0] != GENOME_DIM:
        raise GenomeError(f"genome must have length {GENOME_DIM}, got shape {g.shape}")
    return g


def decode_genome(genome) -> MlpWeights:
    g = _check(genome)
    layers = []
    pos = 0
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        W = g[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy()
        pos += fan_in * fan_out
        b = g[pos : pos + fan_out].copy()
        pos += fan_out
        layers.append((W, b))
    return MlpWeights(tuple(layers))


def encode_weights(weights: MlpWeights) -> np.ndarray:
    if len(weights.layers) != len(LAYER_SIZES) - 1:
        raise GenomeError(f"expected {len(LAYER_SIZES) - 1} layers, got {len(weights.layers)}")
    parts = []
    for (W, b), fan_in, fan_out in zip(weights.layers, LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        if W.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise GenomeError(f"layer {fan_in}->{fan_out} has shapes {W.shape}, {b.shape}")
        parts += [W.ravel(), b]
    return np.concatenate(parts)


def clamp_genome(genome) -> np.ndarray:
    return np.clip(np.asarray(genome, dtype=float), -WEIGHT_LIMIT, WEIGHT_LIMIT)


def mlp_forward(weights: MlpWeights | np.ndarray, x_hat, r: float) -> float:
    """Drive voltage in (0, 5) for a state estimate and cart reference.

    Inputs are taken relative to ``[r, 0, 0, 0]``, scaled from their physical
    ranges to [-1, 1] and clipped, so states beyond the ranges act like their
    projections.
    """
    flat = encode_weights(weights) if isinstance(weights, MlpWeights) else _check(weights)
    return float(kern.mlp_voltage(flat, np.asarray(x_hat, dtype=float), float(r)))


def bang_bang_fraction(voltages, mid: float = 2.5, threshold: float = 2.0) -> float:
    """Share of samples within 0.5 V of either supply rail."""
    v = np.asarray(voltages, dtype=float)
    if v.size == 0:
        return math.nan
    return float(np.mean(np.abs(v - mid) > threshold))


def save_genome(path: str | Path, genome) -> None:
    g = _check(genome)
    Path(path).write_text("".join(f"{v:.17g}\n" for v in g))


def load_genome(path: str | Path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        values = [float(ln) for ln in lines]
    except ValueError as exc:
        raise GenomeError(f"{path}: {exc}") from None
    g = _check(values)
    if not np.all(np.isfinite(g)):
        raise GenomeError(f"{path}: non-finite weight")
    return g
