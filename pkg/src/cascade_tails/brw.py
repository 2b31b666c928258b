"""Binary Gaussian branching random walk and its additive/derivative martingales.

Trees are stored as heap-indexed flat arrays: the root sits at index 1, the
``2**k`` nodes of generation ``k`` occupy ``[2**k, 2**(k+1))`` and index 0 is
unused.  Batched routines carry replicas on the leading axis.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._rng import as_generator, replicate
from .errors import ConfigError, ResourceGuardError

BETA_C = math.sqrt(2.0 * math.log(2.0))
MAX_GENERATION = 24
# upper bound on the doubles held by one batched heap array
MAX_BATCH_DOUBLES = 2**27


@dataclass(frozen=True)
class BetaParams:
    beta: float

    def __post_init__(self):
        if not (self.beta >= 0.0):
            raise ConfigError(f"beta must be >= 0, got {self.beta}")

    @property
    def beta_c(self) -> float:
        return BETA_C

    @property
    def gamma(self) -> float:
        if self.beta == 0.0:
            return math.inf
        return (BETA_C / self.beta) ** 2

    @property
    def subcritical(self) -> bool:
        return self.beta < BETA_C

    @property
    def l4_phase(self) -> bool:
        return self.beta < BETA_C / 2


@dataclass(frozen=True)
class BrwRealization:
    """One generation-``n`` tree: heap-indexed increments and positions."""

    n: int
    increments: np.ndarray
    positions: np.ndarray

    @property
    def leaf_positions(self) -> np.ndarray:
        return self.positions[2**self.n : 2 ** (self.n + 1)]

    def level(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.n:
            raise ValueError(f"level {k} outside 0..{self.n}")
        return self.positions[2**k : 2 ** (k + 1)]

    @classmethod
    def from_increments(cls, n: int, increments) -> "BrwRealization":
        g = np.array(increments, dtype=float)
        if g.shape != (2 ** (n + 1),):
            raise ValueError(f"expected {2 ** (n + 1)} heap entries, got {g.shape}")
        g[:2] = 0.0
        return cls(n, g, positions_from_increments(g, n))

    @classmethod
    def from_leaves(cls, leaves) -> "BrwRealization":
        """Synthetic tree whose generation-n positions are ``leaves``.

        All increments above the last generation are zero, so the leaf vector
        is reproduced exactly.
        """
        leaves = np.asarray(leaves, dtype=float)
        n = int(round(math.log2(leaves.size)))
        if 2**n != leaves.size:
            raise ValueError("leaf count must be a power of two")
        g = np.zeros(2 ** (n + 1))
        if n == 0:
            if leaves[0] != 0.0:
                raise ValueError("the generation-0 particle sits at 0")
        else:
            g[2**n :] = leaves
        return cls.from_increments(n, g)


class MartingalePair(NamedTuple):
    w: float
    z: float
    n: int
    beta: float


class EssentialInfimum(NamedTuple):
    magnitude: float
    location: float


def check_generation(n: int, max_generation: int = MAX_GENERATION) -> int:
    n = int(n)
    if n < 0:
        raise ConfigError(f"generation must be >= 0, got {n}")
    if n > max_generation:
        raise ResourceGuardError(
            "generation-limit", f"generation {n} exceeds the cap {max_generation} (2**{n} leaves)"
        )
    return n


def positions_from_increments(increments: np.ndarray, n: int) -> np.ndarray:
    """Prefix sums down the tree; works on ``(..., 2**(n+1))`` heap arrays."""
    pos = np.zeros_like(increments)
    for k in range(1, n + 1):
        parents = pos[..., 2 ** (k - 1) : 2**k]
        pos[..., 2**k : 2 ** (k + 1)] = np.repeat(parents, 2, axis=-1) + increments[..., 2**k : 2 ** (k + 1)]
    return pos


def sample_brw(n: int, rng=None, *, max_generation: int = MAX_GENERATION) -> BrwRealization:
    n = check_generation(n, max_generation)
    g = as_generator(rng).standard_normal(2 ** (n + 1))
    g[:2] = 0.0
    return BrwRealization(n, g, positions_from_increments(g, n))


def sample_positions(n: int, size: int, rng=None, *, max_generation: int = MAX_GENERATION) -> np.ndarray:
    """Heap positions for ``size`` independent trees, shape ``(size, 2**(n+1))``."""
    n = check_generation(n, max_generation)
    if size * 2 ** (n + 1) > MAX_BATCH_DOUBLES:
        raise ResourceGuardError("batch-memory", f"{size} trees of generation {n} exceed the batch cap")
    g = as_generator(rng).standard_normal((size, 2 ** (n + 1)))
    g[:, :2] = 0.0
    return positions_from_increments(g, n)


def leaves(positions: np.ndarray, k: int) -> np.ndarray:
    return positions[..., 2**k : 2 ** (k + 1)]


def _scaled_weights(x, beta, t):
    a = beta * x - 0.5 * beta * beta * t
    shift = np.max(a, axis=-1, keepdims=True)
    return np.exp(a - shift), shift[..., 0]


def log_additive_values(x, beta: float, t: float) -> np.ndarray:
    """log W evaluated on particle positions ``x`` (last axis) at time ``t``."""
    e, shift = _scaled_weights(np.asarray(x, dtype=float), beta, t)
    return shift + np.log(np.mean(e, axis=-1))


def additive_values(x, beta: float, t: float) -> np.ndarray:
    return np.exp(log_additive_values(x, beta, t))


def derivative_values(x, beta: float, t: float) -> np.ndarray:
    """Derivative martingale on positions ``x`` at time ``t``.

    Positive and negative summands are accumulated separately on a common
    max-shifted scale; the normalisation is the particle count (the mean).
    """
    x = np.asarray(x, dtype=float)
    e, shift = _scaled_weights(x, beta, t)
    d = x - beta * t
    pos = np.mean(e * np.maximum(d, 0.0), axis=-1)
    neg = np.mean(e * np.maximum(-d, 0.0), axis=-1)
    return np.exp(shift) * (pos - neg)


def additive_martingale(r: BrwRealization, beta: float) -> float:
    w = float(additive_values(r.leaf_positions, beta, r.n))
    if w == 0.0:
        warnings.warn("additive martingale underflowed to 0; use log_additive_values", RuntimeWarning)
    return w


def derivative_martingale(r: BrwRealization, beta: float) -> float:
    return float(derivative_values(r.leaf_positions, beta, r.n))


def martingale_pair(r: BrwRealization, beta: float) -> MartingalePair:
    return MartingalePair(additive_martingale(r, beta), derivative_martingale(r, beta), r.n, beta)


def martingale_path(positions: np.ndarray, beta: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(W_k, Z_k) for k = 0..n from batched heap positions; arrays ``(size, n+1)``."""
    size = positions.shape[0]
    w = np.empty((size, n + 1))
    z = np.empty((size, n + 1))
    for k in range(n + 1):
        x = leaves(positions, k)
        w[:, k] = additive_values(x, beta, k)
        z[:, k] = derivative_values(x, beta, k)
    return w, z


def essential_infimum(n: int, beta: float) -> EssentialInfimum:
    """Magnitude m_n of the most negative value of Z_n and the minimising location."""
    if not beta > 0:
        raise ConfigError(f"essential infimum needs beta > 0, got {beta}")
    return EssentialInfimum(math.exp(0.5 * beta * beta * n) / (beta * math.e), beta * n - 1.0 / beta)


def subtree_martingales(positions: np.ndarray, n: int, m: int, beta: float):
    """Generation-n positions with the depth-m martingales of their subtrees.

    Returns ``(x_n, z_sub, w_sub)``, each of shape ``(..., 2**n)``; subtree
    values use positions relative to the subtree root.
    """
    x_n = leaves(positions, n)
    deep = leaves(positions, n + m)
    rel = deep.reshape(*deep.shape[:-1], 2**n, 2**m) - x_n[..., None]
    return x_n, derivative_values(rel, beta, m), additive_values(rel, beta, m)


def branching_terms(x_n, z_sub, w_sub, beta: float, n: int) -> np.ndarray:
    """Per-particle summands of Z_{n+m} = sum_u 2^-n e^{beta X_u - beta^2 n/2} (Z^u + (X_u - beta n) W^u)."""
    x_n = np.asarray(x_n, dtype=float)
    scale = np.exp(beta * x_n - 0.5 * beta * beta * n) / 2.0**n
    return scale * (z_sub + (x_n - beta * n) * w_sub)


def recompose_branching(n: int, m: int, beta: float, rng=None) -> tuple[float, float]:
    """Sample a generation-(n+m) tree; return Z_{n+m} directly and via the branching decomposition."""
    if n < 0 or m < 0:
        raise ConfigError("n and m must be >= 0")
    r = sample_brw(n + m, rng)
    direct = derivative_martingale(r, beta)
    x_n, z_sub, w_sub = subtree_martingales(r.positions, n, m, beta)
    recomposed = float(np.sum(branching_terms(x_n, z_sub, w_sub, beta, n)))
    return direct, recomposed


def sample_zw(beta: float, n: int, replicas: int, seed: int = 0, *, threads=None, key=(0,)) -> tuple[np.ndarray, np.ndarray]:
    """Independent replicas of (Z_n, W_n)."""

    def block(g, size):
        x = leaves(sample_positions(n, size, g), n)
        return np.stack([derivative_values(x, beta, n), additive_values(x, beta, n)], axis=1)

    out = np.concatenate(replicate(block, replicas, seed, key=(201, n, *key), threads=threads))
    return out[:, 0], out[:, 1]
