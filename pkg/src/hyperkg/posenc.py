"""Positional encodings and the positional-interaction encoder.

``sinusoid`` is the default scheme. ``all-one``, ``random`` and ``magnitude``
exist for the encoder ablation and swap the encoding everywhere a position
vector is used (interaction encoder, entity initialisation, messages).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tensor import MLP, Module, Tensor, default_dtype

SCHEMES = ("sinusoidal", "all-one", "random", "magnitude")


@dataclass(frozen=True)
class PosEncConfig:
    d: int = 64
    base: float = 10000.0
    scheme: str = "sinusoidal"
    seed: int = 0  # only used by the random scheme

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise ValueError(f"dimension must be a positive even integer, got {self.d}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown positional scheme {self.scheme!r}; pick one of {SCHEMES}")
        if self.scheme == "sinusoidal" and self.d in (2, 4, 8):
            warnings.warn(
                f"d={self.d}: adjacent sinusoid frequencies have a rational ratio, "
                "so injectivity over all positions is not guaranteed",
                stacklevel=3,
            )

    @property
    def frequencies(self) -> np.ndarray:
        return self.base ** (-2.0 * np.arange(self.d // 2) / self.d)


def sinusoid(pos: int | float, cfg: PosEncConfig) -> np.ndarray:
    """``[sin(pos*w_0), cos(pos*w_0), sin(pos*w_1), ...]`` with ``w_i = base^(-2i/d)``."""
    ang = float(pos) * cfg.frequencies
    out = np.empty(cfg.d, dtype=np.float64)
    out[0::2] = np.sin(ang)
    out[1::2] = np.cos(ang)
    return out


def lipschitz_constant(cfg: PosEncConfig) -> float:
    """``C = sqrt(2 * sum w_i^2)`` with ``||p_a - p_b|| <= C |a - b|``.

    Each sin and cos coordinate is ``w_i``-Lipschitz, which gives this bound.
    """
    return float(np.sqrt(2.0 * np.sum(cfg.frequencies**2)))


def encode_position(pos: int, cfg: PosEncConfig) -> np.ndarray:
    if cfg.scheme == "sinusoidal":
        return sinusoid(pos, cfg)
    if cfg.scheme == "all-one":
        return np.ones(cfg.d)
    if cfg.scheme == "magnitude":
        return np.full(cfg.d, float(pos))
    rng = np.random.default_rng([cfg.seed, int(pos)])
    return rng.standard_normal(cfg.d)


def position_table(n: int, cfg: PosEncConfig, dtype=None) -> np.ndarray:
    """Rows ``p_1 .. p_n`` (row ``j-1`` holds position ``j``)."""
    table = np.stack([encode_position(j, cfg) for j in range(1, n + 1)]) if n else np.zeros((0, cfg.d))
    return table.astype(dtype or default_dtype())


def pair_input(a: int, b: int, cfg: PosEncConfig) -> np.ndarray:
    """The concatenation ``[p_a || p_b]`` fed to the interaction MLP."""
    return np.concatenate([encode_position(a, cfg), encode_position(b, cfg)])


class EncPI(Module):
    """Shared two-layer MLP over ``[p_a || p_b]``; one instance serves every pair."""

    def __init__(self, cfg: PosEncConfig, rng: np.random.Generator, hidden: int | None = None):
        self.cfg = cfg
        self.mlp = MLP(2 * cfg.d, hidden or cfg.d, cfg.d, rng)
        self._pairs_seen: set[tuple[int, int]] = set()

    @property
    def pairs_seen(self) -> set[tuple[int, int]]:
        return self._pairs_seen

    def reset_pairs_seen(self) -> None:
        self._pairs_seen = set()

    def __call__(self, pairs: Iterable[tuple[int, int]]) -> Tensor:
        pairs = [(int(a), int(b)) for a, b in pairs]
        for a, b in pairs:
            if a < 1 or b < 1:
                raise ValueError(f"positions are 1-based, got ({a}, {b})")
        self._pairs_seen.update(pairs)
        dtype = default_dtype()
        if not pairs:
            return Tensor(np.zeros((0, self.cfg.d), dtype=dtype))
        x = np.stack([pair_input(a, b, self.cfg) for a, b in pairs]).astype(dtype)
        return self.mlp(Tensor(x))


def enc_pi(a: int, b: int, encoder: EncPI) -> np.ndarray:
    """``x_{a,b}`` as a plain vector."""
    return encoder([(a, b)]).data[0]
