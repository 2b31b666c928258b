"""Lower-tail estimates for Z_n, the tail-exponent fit, and the box remainder check.

Two tail estimators are provided.  ``naive`` counts replicas of Z_n below
``-x`` (Wilson interval); it is only usable where the tail is not too thin.
``box`` uses the importance-sampled box probability: every tree with all
leaves in the box has Z_n <= -(1 - eps) m_n, so the box probability is a lower
bound for P(Z_n <= -x) at x = (1 - eps) m_n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import covariance
from ._rng import replicate
from .brw import (
    BETA_C,
    additive_values,
    branching_terms,
    derivative_values,
    essential_infimum,
    leaves,
    sample_positions,
    sample_zw,
)
from .errors import ConfigError
from .tilt_box import Z95, box_probability, make_box, solve_alphas, tree_proposal, uniform_box_points


@dataclass(frozen=True)
class TailEstimate:
    method: str
    beta: float
    n: int
    x: np.ndarray
    log_prob: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    replicas: int

    def rows(self) -> list[dict]:
        return [
            {"method": self.method, "beta": self.beta, "n": self.n, "x": float(x), "log_prob": float(lp), "ci_lo": float(lo), "ci_hi": float(hi)}
            for x, lp, lo, hi in zip(self.x, self.log_prob, self.ci_lo, self.ci_hi)
        ]


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def wilson_interval(hits, total, z: float = Z95):
    hits = np.asarray(hits, dtype=float)
    p = hits / total
    denom = 1.0 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * np.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    lo = np.where(hits == 0, 0.0, np.maximum(centre - half, 0.0))
    hi = np.where(hits == total, 1.0, np.minimum(centre + half, 1.0))
    return lo, hi


def empirical_tail(
    n: int,
    beta: float,
    replicas: int,
    x_grid,
    method: str = "naive",
    seed: int = 0,
    *,
    samples: int = 20_000,
    threads=None,
) -> TailEstimate:
    """log P(Z_n <= -x) on ``x_grid``.

    For ``method="box"`` each x must lie in (0, m_n); it is mapped to
    eps = 1 - x / m_n and the box probability at that eps is reported.
    """
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if method == "naive":
        z, _ = sample_zw(beta, n, replicas, seed, threads=threads, key=(1,))
        z = np.sort(z)
        hits = np.searchsorted(z, -x, side="right")
        if beta > 0:
            # beyond the essential infimum the probability is exactly zero
            hits = np.where(x > essential_infimum(n, beta).magnitude, 0, hits)
        lo, hi = wilson_interval(hits, replicas)
        return TailEstimate("naive", beta, n, x, _log(hits / replicas), _log(lo), _log(hi), replicas)
    if method == "box":
        m_n = essential_infimum(n, beta).magnitude
        lp, lo, hi = [], [], []
        for xi in x:
            eps = 1.0 - xi / m_n
            if not 0.0 < eps < 1.0:
                raise ConfigError(f"box tail point x={xi} must lie in (0, m_n={m_n:.6g})")
            est = box_probability(n, eps, beta, samples, seed, threads=threads)
            lp.append(est.log_prob)
            lo.append(est.ci_lo)
            hi.append(est.ci_hi)
        return TailEstimate("box", beta, n, x, np.array(lp), np.array(lo), np.array(hi), samples)
    raise ConfigError(f"unknown tail method {method!r}")


def box_tail_points(n_values, epsilon: float, beta: float, samples: int = 20_000, seed: int = 0, *, threads=None) -> TailEstimate:
    """Box lower-bound tail points at x = (1 - eps) m_n for several n, stacked into one estimate."""
    xs, lp, lo, hi = [], [], [], []
    for n in n_values:
        est = box_probability(n, epsilon, beta, samples, seed, threads=threads)
        xs.append((1.0 - epsilon) * essential_infimum(n, beta).magnitude)
        lp.append(est.log_prob)
        lo.append(est.ci_lo)
        hi.append(est.ci_hi)
    return TailEstimate("box", beta, -1, np.array(xs), np.array(lp), np.array(lo), np.array(hi), samples)


def kappa_epsilon(epsilon: float, beta: float) -> float:
    """Constant in the per-leaf lower bound L_n / 2^n >= -kappa_eps - o(1)."""
    am, ap = solve_alphas(epsilon)
    theta = covariance.theta_constant()
    return 0.5 * (math.log(2 * math.pi) + theta) - math.log((ap - am) / beta) + 0.5 * ((ap - 1.0) / beta) ** 2


def lower_bound_report(n_values, epsilon: float, beta: float, samples: int = 20_000, seed: int = 0, *, threads=None) -> list[dict]:
    """Per-leaf box log-probability against -kappa_eps with slack 5 n^2 / 2^n."""
    kappa = kappa_epsilon(epsilon, beta)
    rows = []
    for n in n_values:
        est = box_probability(n, epsilon, beta, samples, seed, threads=threads)
        per_leaf = est.log_prob / 2.0**n
        slack = 5.0 * n * n / 2.0**n
        rows.append(
            {
                "n": n,
                "epsilon": epsilon,
                "log_prob": est.log_prob,
                "ci_lo": est.ci_lo,
                "ci_hi": est.ci_hi,
                "analytic_lower_bound": est.analytic_lower_bound,
                "per_leaf": per_leaf,
                "neg_kappa": -kappa,
                "slack": slack,
                "ok": bool(per_leaf >= -kappa - slack),
            }
        )
    return rows


@dataclass(frozen=True)
class GammaFit:
    gamma_hat: float
    stderr: float
    intercept: float
    n_points: int
    target_gamma: float = math.nan

    def as_dict(self) -> dict:
        return {"gamma_hat": self.gamma_hat, "stderr": self.stderr, "target_gamma": self.target_gamma, "n_points": self.n_points}


def fit_gamma(x, log_prob, target_gamma: float = math.nan) -> GammaFit:
    """Least-squares slope of log(-log p) against log x.

    If p ~ exp(-c x^gamma) the slope is gamma; rescaling x only moves the
    intercept.
    """
    x = np.asarray(x, dtype=float)
    lp = np.asarray(log_prob, dtype=float)
    if x.shape != lp.shape:
        raise ConfigError("x and log_prob must have the same length")
    if x.size < 3:
        raise ConfigError("need at least 3 tail points to fit gamma")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ConfigError("tail points must be positive and finite")
    if np.any(~(lp < 0)) or not np.all(np.isfinite(lp)):
        raise ConfigError("log probabilities must be finite and strictly negative")
    u = np.log(x)
    if np.ptp(u) == 0:
        raise ConfigError("all tail points coincide; slope undefined")
    res = stats.linregress(u, np.log(-lp))
    stderr = float(res.stderr) if x.size > 2 else math.inf
    return GammaFit(float(res.slope), stderr, float(res.intercept), int(x.size), float(target_gamma))


def infimum_power_residual(n: int, beta: float) -> float:
    """Relative residual of m_n^gamma = (beta e)^-gamma 2^n (checked in logs)."""
    gamma = (BETA_C / beta) ** 2
    lhs = gamma * math.log(essential_infimum(n, beta).magnitude)
    rhs = -gamma * math.log(beta * math.e) + n * math.log(2.0)
    return abs(lhs - rhs) / max(1.0, abs(rhs))


# ---------------------------------------------------------------------------
# conditional remainder on the box


@dataclass(frozen=True)
class RemainderCheckConfig:
    epsilon: float = 0.25
    delta: float = 0.25
    m: int = 6
    n_values: tuple = (3, 4, 5, 6, 7)
    p: float | None = None

    def validate(self, beta: float) -> None:
        if not 0 < self.epsilon < 1 or not self.delta > 0:
            raise ConfigError("need 0 < epsilon < 1 and delta > 0")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.p is not None:
            gamma = (BETA_C / beta) ** 2
            if not 1 < self.p < min(gamma, 2.0):
                raise ConfigError(f"p must lie in (1, min(gamma, 2)) = (1, {min(gamma, 2.0):.4g})")


@dataclass(frozen=True)
class RemainderPoint:
    n: int
    prob: float
    se: float
    samples: int


def _remainder_block(box, m, delta, beta, proposal, rng, size):
    n = box.n
    if proposal == "tree":
        pos, log_w = tree_proposal(n, box.epsilon, beta).sample(size, rng)
        x_n = leaves(pos, n)
    else:
        x_n = uniform_box_points(box, size, rng)
        log_w = -0.5 * covariance.quad_form_inv(n, x_n)
    z_n = derivative_values(x_n, beta, n)
    sub = sample_positions(m, size * 2**n, rng).reshape(size, 2**n, -1)
    rel = leaves(sub, m)
    z_sub = derivative_values(rel, beta, m)
    w_sub = additive_values(rel, beta, m)
    z_nm = np.sum(branching_terms(x_n, z_sub, w_sub, beta, n), axis=-1)
    hit = np.abs(z_nm - z_n) >= delta * np.abs(z_n)
    return np.stack([log_w, hit.astype(float)], axis=1)


def conditional_remainder(n: int, beta: float, cfg: RemainderCheckConfig, samples: int = 4000, seed: int = 0, *, proposal: str = "tree", threads=None) -> RemainderPoint:
    """P(|Z_{n+m} - Z_n| >= delta |Z_n| given all generation-n leaves in the box), self-normalised IS."""
    box = make_box(n, cfg.epsilon, beta)
    if proposal == "tree":
        tree_proposal(n, cfg.epsilon, beta)
    out = np.concatenate(
        replicate(lambda g, s: _remainder_block(box, cfg.m, cfg.delta, beta, proposal, g, s), samples, seed, key=(401, n, cfg.m), block_size=512, threads=threads)
    )
    log_w, hit = out[:, 0], out[:, 1]
    w = np.exp(log_w - np.max(log_w))
    w /= np.sum(w)
    prob = float(np.sum(w * hit))
    se = float(math.sqrt(np.sum(w * w * (hit - prob) ** 2)))
    return RemainderPoint(n, prob, se, samples)


@dataclass(frozen=True)
class RemainderReport:
    points: tuple
    non_increasing: bool
    config: RemainderCheckConfig
    beta: float


def box_conditional_remainder(beta: float, cfg: RemainderCheckConfig | None = None, samples: int = 4000, seed: int = 0, *, proposal: str = "tree", threads=None) -> RemainderReport:
    """Remainder probabilities across ``cfg.n_values`` and whether they are non-increasing.

    Consecutive values are compared with a 3-sigma allowance, so sampling
    noise on a flat stretch does not count as an increase.
    """
    cfg = cfg or RemainderCheckConfig()
    cfg.validate(beta)
    pts = tuple(conditional_remainder(n, beta, cfg, samples, seed, proposal=proposal, threads=threads) for n in cfg.n_values)
    ok = all(b.prob <= a.prob + 3.0 * math.hypot(a.se, b.se) for a, b in zip(pts, pts[1:]))
    return RemainderReport(pts, ok, cfg, beta)
