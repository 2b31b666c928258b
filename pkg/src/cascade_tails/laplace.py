"""Monte Carlo Laplace transforms of the finite-n martingales and the inequality checks built on them.

All transforms are accumulated as log-mean-exp; the exponent ``-lambda *
target`` easily spans hundreds of orders of magnitude.  A one-sided check
reports ``pass`` when the point estimates satisfy the inequality,
``inconclusive`` when they violate it by less than three combined standard
errors, and ``fail`` otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .brw import BETA_C, branching_terms, sample_zw, subtree_martingales
from .errors import ConfigError

Z95 = 1.959963984540054
MIN_REPLICAS = 1000


@dataclass(frozen=True)
class LaplaceEstimate:
    lam: float
    log_value: float
    se_log: float
    n: int
    replicas: int

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def ci(self) -> tuple[float, float]:
        return (self.log_value - Z95 * self.se_log, self.log_value + Z95 * self.se_log)


class BucketSplit(NamedTuple):
    low: float
    mid: float
    high: float
    total: float


def log_mean_exp(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    shift = np.max(x)
    if not np.isfinite(shift):
        return float(shift)
    return float(shift + math.log(np.mean(np.exp(x - shift))))


def jackknife_log_mean_exp(x: np.ndarray) -> tuple[float, float]:
    """log-mean-exp of ``x`` and its leave-one-out jackknife standard error."""
    x = np.asarray(x, dtype=float)
    r = x.size
    value = log_mean_exp(x)
    if r < 2:
        return value, math.inf
    shift = np.max(x)
    e = np.exp(x - shift)
    total = np.sum(e)
    rest = np.maximum(total - e, np.finfo(float).tiny * total)
    loo = shift + np.log(rest / (r - 1))
    se = math.sqrt((r - 1) / r * np.sum((loo - loo.mean()) ** 2))
    return value, se


def verdict(lhs_log: float, rhs_log: float, sigma: float) -> str:
    gap = lhs_log - rhs_log
    if gap <= 0.0:
        return "pass"
    if gap <= 3.0 * sigma:
        return "inconclusive"
    return "fail"


def laplace_from_values(values: np.ndarray, lam: float, n: int) -> LaplaceEstimate:
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    if lam == 0:
        return LaplaceEstimate(0.0, 0.0, 0.0, n, len(values))
    value, se = jackknife_log_mean_exp(-lam * np.asarray(values))
    return LaplaceEstimate(lam, value, se, n, len(values))


def laplace_mc(
    target: str,
    lam: float,
    beta: float,
    n: int,
    replicas: int = 100_000,
    seed: int = 0,
    *,
    a: float = 0.0,
    threads=None,
) -> LaplaceEstimate:
    """E[exp(-lam * target)] for target in {"Z", "W", "Z+aW"}."""
    if replicas < MIN_REPLICAS:
        raise ConfigError(f"need at least {MIN_REPLICAS} replicas")
    z, w = sample_zw(beta, n, replicas, seed, threads=threads)
    if target == "Z":
        values = z
    elif target == "W":
        values = w
    elif target == "Z+aW":
        values = z + a * w
    else:
        raise ConfigError(f"unknown target {target!r}")
    return laplace_from_values(values, lam, n)


class InequalityReport(NamedTuple):
    check: str
    n: int
    beta: float
    a: float
    lam: float
    lhs_log: float
    rhs_log: float
    ci: float
    verdict: str


def lemma_zw_from_samples(z, w, n, a, lam, beta) -> InequalityReport:
    """Finite-n tilt inequality on given samples.

    E[exp(-lam (Z_n + a W_n))] <= exp(a^2 / (2 (1 - 2^-n))) E[exp(-2 lam e^{-beta a} Z_n)]^(1/2)
    """
    lhs = laplace_from_values(z + a * w, lam, n)
    inner = laplace_from_values(z, 2.0 * lam * math.exp(-beta * a), n)
    const = a * a / (2.0 * (1.0 - 2.0**-n)) if n >= 1 else (0.0 if a == 0 else math.inf)
    rhs_log = const + 0.5 * inner.log_value
    sigma = math.hypot(lhs.se_log, 0.5 * inner.se_log)
    return InequalityReport("lemma_zw", n, beta, a, lam, lhs.log_value, rhs_log, sigma, verdict(lhs.log_value, rhs_log, sigma))


def check_lemma_zw(n: int, a: float, lam: float, beta: float, replicas: int = 100_000, seed: int = 0, *, threads=None) -> InequalityReport:
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    z, w = sample_zw(beta, n, replicas, seed, threads=threads)
    return lemma_zw_from_samples(z, w, n, a, lam, beta)


@dataclass(frozen=True)
class ConstantFit:
    """Smallest constant making a fitted bound hold on a grid."""

    constant: float
    per_point: tuple
    n: int
    beta: float
    note: str = ""


def subgaussian_fit(beta: float, n: int, lambda_grid, replicas: int = 100_000, seed: int = 0, *, threads=None) -> ConstantFit:
    """min C with log E[exp(-lam Z_n)] <= C lam^2 on the grid.

    ``per_point`` holds (lam, log_estimate, ratio log_estimate/lam^2); the
    note compares the smallest-lambda ratio with Var(Z_n)/2.
    """
    note = ""
    if not 0 < beta < BETA_C / 2:
        note = "beta outside (0, beta_c/2): no sub-Gaussian guarantee"
    z, _ = sample_zw(beta, n, replicas, seed, threads=threads)
    rows = []
    for lam in lambda_grid:
        est = laplace_from_values(z, lam, n)
        ratio = est.log_value / lam**2 if lam > 0 else 0.0
        rows.append((float(lam), est.log_value, ratio))
    c = max([r[2] for r in rows if r[0] > 0], default=0.0)
    positive = [r for r in rows if r[0] > 0]
    if positive:
        small = min(positive, key=lambda r: r[0])
        note = (note + "; " if note else "") + f"small-lambda ratio {small[2]:.4g} vs Var/2 {np.var(z) / 2:.4g}"
    return ConstantFit(max(c, 0.0), tuple(rows), n, beta, note)


def fit_highlap_constant(beta, n, a_grid, lambda_grid, replicas=100_000, seed=0, *, threads=None) -> ConstantFit:
    """a > 0: min C with log E[exp(-lam (Z+aW))] <= C (lam e^{-beta a} a + (lam e^{-beta a})^2)."""
    z, w = sample_zw(beta, n, replicas, seed, threads=threads)
    rows = []
    for a in a_grid:
        if a <= 0:
            raise ConfigError("this bound needs a > 0")
        for lam in lambda_grid:
            if lam <= 0:
                continue
            est = laplace_from_values(z + a * w, lam, n)
            mu = lam * math.exp(-beta * a)
            rows.append((a, lam, est.log_value, est.log_value / (mu * a + mu * mu)))
    return ConstantFit(max(0.0, max(r[3] for r in rows)), tuple(rows), n, beta)


def fit_lowlap_constant(beta, n, a_grid, lambda_grid, replicas=100_000, seed=0, *, threads=None) -> ConstantFit:
    """a <= 0: min C with log E[exp(-lam (Z+aW))] <= -lam a + C ((lam e^{-beta a})^2 + 1)."""
    z, w = sample_zw(beta, n, replicas, seed, threads=threads)
    rows = []
    for a in a_grid:
        if a > 0:
            raise ConfigError("this bound needs a <= 0")
        for lam in lambda_grid:
            est = laplace_from_values(z + a * w, lam, n)
            mu = lam * math.exp(-beta * a)
            rows.append((a, lam, est.log_value, (est.log_value + lam * a) / (mu * mu + 1.0)))
    return ConstantFit(max(0.0, max(r[3] for r in rows)), tuple(rows), n, beta)


def bucket_split_terms(x_n, terms, beta: float, n: int) -> BucketSplit:
    """Partition branching summands by the generation-n position relative to beta n."""
    x_n = np.asarray(x_n, dtype=float)
    terms = np.asarray(terms, dtype=float)
    edge = beta * n
    low = x_n < edge
    high = x_n > edge + 1.0
    mid = ~(low | high)
    return BucketSplit(
        float(np.sum(terms[low])), float(np.sum(terms[mid])), float(np.sum(terms[high])), float(np.sum(terms))
    )


def bucket_decomposition(n: int, m: int, beta: float, rng=None, *, positions=None) -> BucketSplit:
    """Three-bucket split of the branching decomposition of Z_{n+m}.

    ``positions`` (heap array of a generation-(n+m) tree) overrides sampling.
    """
    if n < 0 or m < 0:
        raise ConfigError("n and m must be >= 0")
    if positions is None:
        from .brw import sample_brw

        positions = sample_brw(n + m, rng).positions
    x_n, z_sub, w_sub = subtree_martingales(positions, n, m, beta)
    return bucket_split_terms(x_n, branching_terms(x_n, z_sub, w_sub, beta, n), beta, n)


class WLaplaceReport(NamedTuple):
    c: float
    rows: tuple  # (lam, log_value, se_log, c_lam, verdict)
    n: int
    beta: float
    note: str


def w_laplace_check(beta: float, n: int, lambda_grid, replicas: int = 100_000, seed: int = 0, *, threads=None) -> WLaplaceReport:
    """Fit c in E[exp(-lam W_n)] <= exp(-c log^{3/2} lam) over lam >= 1."""
    if any(lam < 1 for lam in lambda_grid):
        raise ConfigError("all lambda must be >= 1")
    _, w = sample_zw(beta, n, replicas, seed, threads=threads)
    rows = []
    for lam in lambda_grid:
        est = laplace_from_values(w, lam, n)
        if lam == 1:
            c_lam = math.inf
            ok = "pass" if est.log_value <= 0.0 else "fail"
        else:
            c_lam = -est.log_value / math.log(lam) ** 1.5
            ok = "pass" if c_lam > 0 else "fail"
        rows.append((float(lam), est.log_value, est.se_log, c_lam, ok))
    finite = [r[3] for r in rows if math.isfinite(r[3])]
    c = min(finite) if finite else math.inf
    return WLaplaceReport(c, tuple(rows), n, beta, f"finite-n proxy with n={n}; the limit statement is not validated")
