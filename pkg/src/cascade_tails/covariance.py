"""Closed-form algebra of the leaf covariance matrix of the binary BRW.

``Sigma_n[u, v]`` is the depth of the last common ancestor of leaves ``u`` and
``v`` (``n`` on the diagonal).  Spectrum, determinant and the inverse
quadratic form all follow from the block recursion
``Sigma_{n+1} = diag(J_n + Sigma_n, J_n + Sigma_n)``; dense linear algebra is
kept for small ``n`` only, where it serves as a cross-check.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ResourceGuardError

MAX_DENSE_N = 10
LOG2 = math.log(2.0)


class SpectrumSummary(NamedTuple):
    eigenvalues: Counter
    log_det: float
    theta: float


def _check_dense(n: int) -> int:
    n = int(n)
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    if n > MAX_DENSE_N:
        raise ResourceGuardError("dense-dimension", f"dense 2**{n} matrix exceeds the cap n <= {MAX_DENSE_N}")
    return n


def build_sigma(n: int) -> np.ndarray:
    """Integer covariance matrix of the generation-n leaves, built by the block recursion."""
    n = _check_dense(n)
    sigma = np.zeros((1, 1), dtype=np.int64)
    for k in range(n):
        block = sigma + 1
        size = 2**k
        nxt = np.zeros((2 * size, 2 * size), dtype=np.int64)
        nxt[:size, :size] = block
        nxt[size:, size:] = block
        sigma = nxt
    return sigma


def overlap_matrix(n: int) -> np.ndarray:
    """Same matrix from the common-ancestor rule ``u ^ v`` (independent construction)."""
    n = _check_dense(n)
    idx = np.arange(2**n)
    xor = idx[:, None] ^ idx[None, :]
    # bit_length of xor = number of generations below the last common ancestor
    depth_below = np.zeros_like(xor)
    nz = xor > 0
    depth_below[nz] = np.floor(np.log2(xor[nz])).astype(np.int64) + 1
    return (n - depth_below).astype(np.int64)


def eigenvalues_closed_form(n: int) -> Counter:
    """Eigenvalue multiset ``{value: multiplicity}``; values are exact integers."""
    if n < 1:
        raise ConfigError("eigenvalues are defined here for n >= 1")
    if n > 62:
        raise ResourceGuardError("int64-overflow", f"2**{n} - 1 does not fit in 64 bits")
    spec = Counter({2**n - 1: 1})
    for k in range(n):
        spec[2 ** (n - k) - 1] += 2**k
    return spec


def eigenvalues_sorted(n: int) -> np.ndarray:
    spec = eigenvalues_closed_form(n)
    return np.sort(np.repeat(np.array(list(spec.keys()), dtype=float), list(spec.values())))


def _log_2pow_minus_one(j: int) -> float:
    # log(2**j - 1) without forming 2**j
    return j * LOG2 + math.log1p(-(2.0**-j))


def log_det(n: int) -> float:
    if n < 1:
        raise ConfigError("log_det needs n >= 1")
    terms = [_log_2pow_minus_one(n)]
    terms += [2.0**k * _log_2pow_minus_one(n - k) for k in range(n)]
    return math.fsum(terms)


def theta_constant(tolerance: float = 1e-12) -> float:
    """2 log 2 + sum_k 2^-k log(1 - 2^-k), truncated once the tail bound is below ``tolerance``."""
    if not tolerance > 0:
        raise ConfigError("tolerance must be positive")
    terms = [2.0 * LOG2]
    k = 0
    # |2^-k log(1 - 2^-k)| <= 2^(1-2k), so the tail after K terms is <= (2/3) 4^-K
    while (2.0 / 3.0) * 4.0**-k > tolerance or k == 0:
        k += 1
        terms.append(2.0**-k * math.log1p(-(2.0**-k)))
    return math.fsum(terms)


def log_det_gap(n: int, tolerance: float = 1e-300) -> float:
    """log det Sigma_n - (theta 2^n - 2 log 2), evaluated without cancellation.

    Collecting powers of two in the closed form leaves
    log(1 - 2^-n) - 2^n sum_{j>n} 2^-j log(1 - 2^-j), which is about -(2/3) 2^-n.
    """
    if n < 1:
        raise ConfigError("log_det_gap needs n >= 1")
    tail = []
    j = n + 1
    while True:
        term = 2.0 ** (n - j) * math.log1p(-(2.0**-j))
        tail.append(term)
        if abs(term) < tolerance or term == 0.0:
            break
        j += 1
    return math.log1p(-(2.0**-n)) - math.fsum(tail)


def spectrum_summary(n: int, tolerance: float = 1e-12) -> SpectrumSummary:
    return SpectrumSummary(eigenvalues_closed_form(n), log_det(n), theta_constant(tolerance))


def ones_quad_form(n: int) -> float:
    """1^T Sigma_n^{-1} 1, using Sigma_n 1 = (2^n - 1) 1."""
    return 2.0**n / (2.0**n - 1.0)


def quad_form_inv(n: int, x) -> np.ndarray:
    """x^T Sigma_n^{-1} x for ``x`` of shape ``(..., 2**n)``, in O(n 2^n).

    Uses Sherman-Morrison on each block ``J_k + Sigma_k`` together with the
    eigenvector identity ``Sigma_k 1 = (2^k - 1) 1``.
    """
    if n < 1:
        raise ConfigError("Sigma_0 is singular; quad_form_inv needs n >= 1")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2**n:
        raise ConfigError(f"vector length {x.shape[-1]} does not match 2**{n}")
    # blocks of generation-1 nodes: Sigma_1 = I
    blocks = x.reshape(*x.shape[:-1], -1, 2)
    q = np.sum(blocks**2, axis=-1)
    s = np.sum(blocks, axis=-1)
    for k in range(1, n):
        # each current block is Sigma_k; its parent block has size 2^(k+1)
        correction = s**2 / ((2.0**k - 1.0) * (2.0 ** (k + 1) - 1.0))
        q_adj = q - correction
        q = q_adj.reshape(*q_adj.shape[:-1], -1, 2).sum(axis=-1)
        s = s.reshape(*s.shape[:-1], -1, 2).sum(axis=-1)
    return q[..., 0]


def quad_form_inv_dense(n: int, x) -> np.ndarray:
    """Dense Cholesky solve; oracle for small ``n``."""
    from scipy.linalg import cho_factor, cho_solve

    sigma = build_sigma(n).astype(float)
    x = np.asarray(x, dtype=float)
    c = cho_factor(sigma)
    return np.einsum("...i,...i->...", x, cho_solve(c, x.T).T)


def logdet_table(n_values, tolerance: float = 1e-16) -> list[dict]:
    theta = theta_constant(tolerance)
    rows = []
    for n in n_values:
        ld = log_det(n)
        approx = theta * 2.0**n - 2.0 * LOG2
        rows.append({"n": n, "logdet": ld, "theta_times_2n_minus_2log2": approx, "gap": log_det_gap(n)})
    return rows
