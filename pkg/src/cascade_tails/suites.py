"""Property suites run by ``cascade-tails verify``.

Every check produces one row with the columns
``check, n, beta, a, lambda, lhs_log, rhs_log, ci, verdict``.  For tolerance
checks ``lhs_log`` is the log of the observed error and ``rhs_log`` the log of
the allowed error; for Monte Carlo moment checks the allowance is three
standard errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import brw, continuous, covariance, laplace, tilt_box
from ._rng import replicate, stream

SUITES = ("covariance", "identities", "martingale", "tilt", "laplace", "continuous")


@dataclass(frozen=True)
class SuiteConfig:
    beta: float
    n_values: tuple = (1, 2, 3, 4, 5, 6)
    replicas: int = 100_000
    seed: int = 0
    a_grid: tuple = (-2.0, -1.0, 0.0, 1.0)
    lambda_grid: tuple = (0.1, 1.0, 5.0)
    A: float = 1.5
    eta: float = 0.5
    beta_line: float = 0.3
    dt: float = 1e-2
    horizon: float = 20.0
    threads: int | None = None


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _row(check, n, beta, lhs, rhs, ci=0.0, a="", lam="", verdict=None):
    lhs_log, rhs_log = _log(lhs), _log(rhs)
    if verdict is None:
        verdict = "pass" if lhs <= rhs else "fail"
    return laplace.InequalityReport(check, n, beta, a, lam, lhs_log, rhs_log, ci, verdict)


def _mc_row(check, n, beta, values, target, **kw):
    values = np.asarray(values, dtype=float)
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return _row(check, n, beta, abs(float(values.mean()) - target), 3.0 * se, se, **kw)


def covariance_suite(cfg: SuiteConfig) -> list:
    rows = []
    for n in range(1, 7):
        sigma = covariance.build_sigma(n).astype(float)
        dense = np.linalg.eigvalsh(sigma)
        err = float(np.max(np.abs(dense - covariance.eigenvalues_sorted(n))))
        rows.append(_row("eigenvalues", n, "", err, 1e-8))
        det = np.linalg.det(sigma)
        rel = abs(math.exp(covariance.log_det(n)) - det) / det
        rows.append(_row("determinant", n, "", rel, 1e-8))
        mismatch = int(np.sum(covariance.build_sigma(n) != covariance.overlap_matrix(n)))
        rows.append(_row("overlap_rule", n, "", mismatch, 0, verdict="pass" if mismatch == 0 else "fail"))
    theta = covariance.theta_constant(1e-6)
    ok = 0.9453 <= theta <= 0.9463
    rows.append(_row("theta_window", "", "", abs(theta - 0.9458), 5e-4, verdict="pass" if ok else "fail"))
    return rows


def identities_suite(cfg: SuiteConfig, seeds: int = 100) -> list:
    beta = cfg.beta
    rec, shift, bucket = 0.0, 0.0, 0.0
    for s in range(seeds):
        g = stream(cfg.seed, 11, s)
        for n in range(1, 5):
            for m in range(1, 5):
                d, r = brw.recompose_branching(n, m, beta, g)
                rec = max(rec, abs(d - r) / max(abs(d), 1e-300))
        tree = brw.sample_brw(6, g)
        for a in cfg.a_grid:
            _, res = tilt_box.shifted_derivative(tree, a, beta)
            shift = max(shift, res)
        tree = brw.sample_brw(8, g)
        split = laplace.bucket_decomposition(4, 4, beta, positions=tree.positions)
        scale = max(abs(split.low) + abs(split.mid) + abs(split.high), 1e-300)
        bucket = max(bucket, abs(split.low + split.mid + split.high - split.total) / scale)
    return [
        _row("recomposition", "1..4", beta, rec, 1e-9),
        _row("shift_identity", 6, beta, shift, 1e-12),
        _row("bucket_partition", 8, beta, bucket, 1e-12),
    ]


def martingale_suite(cfg: SuiteConfig) -> list:
    n_max = max(cfg.n_values)

    def block(g, size):
        pos = brw.sample_positions(n_max, size, g)
        w, z = brw.martingale_path(pos, cfg.beta, n_max)
        return np.concatenate([w, z], axis=1)

    data = np.concatenate(replicate(block, cfg.replicas, cfg.seed, key=(12, n_max), threads=cfg.threads))
    rows = []
    for n in cfg.n_values:
        rows.append(_mc_row("mean_W", n, cfg.beta, data[:, n], 1.0))
        rows.append(_mc_row("mean_Z", n, cfg.beta, data[:, n_max + 1 + n], 0.0))
    return rows


def tilt_suite(cfg: SuiteConfig, n: int = 6, a: float = -1.0) -> list:
    def block(g, size):
        x_q = tilt_box.tilted_leaves(n, a, size, g)
        x_p = brw.leaves(brw.sample_positions(n, size, g), n)
        w_direct = brw.additive_values(x_p, cfg.beta, n)
        w_tilted = brw.additive_values(x_q, cfg.beta, n) * np.exp(-tilt_box.log_tilt_density(x_q, a))
        return np.stack([x_q.mean(axis=1), np.exp(tilt_box.log_tilt_density(x_p, a)), w_direct, w_tilted], axis=1)

    d = np.concatenate(replicate(block, cfg.replicas, cfg.seed, key=(13, n), threads=cfg.threads))
    diff = d[:, 2].mean() - d[:, 3].mean()
    se = math.hypot(d[:, 2].std(ddof=1), d[:, 3].std(ddof=1)) / math.sqrt(d.shape[0])
    return [
        _mc_row("tilted_leaf_mean", n, cfg.beta, d[:, 0], a, a=a),
        _mc_row("tilt_density_mean", n, cfg.beta, d[:, 1], 1.0, a=a),
        _row("two_estimator_W", n, cfg.beta, abs(diff), 3.0 * se, se, a=a),
    ]


def laplace_suite(cfg: SuiteConfig, n: int = 4) -> list:
    z, w = brw.sample_zw(cfg.beta, n, cfg.replicas, cfg.seed, threads=cfg.threads, key=(14,))
    return [laplace.lemma_zw_from_samples(z, w, n, a, lam, cfg.beta) for a in cfg.a_grid for lam in cfg.lambda_grid]


def continuous_suite(cfg: SuiteConfig) -> list:
    rows = []
    worst = 0.0
    for alpha in (0.25, 0.5, 1.0, 2.0):
        for b in (0.4, 1.0, 2.5):
            if 0.1 <= alpha * b <= 5.0:
                total = continuous.hitting_finite_mass(alpha, b) + continuous.hitting_atom_mass(alpha, b)
                worst = max(worst, abs(total - 1.0))
    rows.append(_row("density_mass", "", "", worst, 1e-6))
    reps = min(cfg.replicas, 20_000)
    p, se = continuous.hitting_probability(1.0, 1.0, 50.0, cfg.dt, reps, cfg.seed, threads=cfg.threads)
    target = math.exp(-2.0)
    rows.append(_row("hitting_probability", "", 1.0, abs(p - target), max(0.02 * target, 3 * se), se))
    line = continuous.LineCrossConfig(cfg.A, cfg.eta, cfg.beta_line).validate()
    rep = continuous.check_domination(line, -1.0, min(cfg.replicas, 20_000), cfg.seed, horizon=cfg.horizon, dt=cfg.dt, threads=cfg.threads)
    rows.append(_row("t1_pathwise", "", cfg.beta_line, 1.0 - rep.pathwise_fraction, 0.0, a=-1.0,
                     verdict="pass" if rep.pathwise_fraction == 1.0 else "fail"))
    gap = float(np.max(rep.survival_shifted - rep.survival_base - 3 * rep.sigma))
    rows.append(_row("q_survival_order", "", cfg.beta_line, max(gap, 0.0), 0.0, a=-1.0, verdict="pass" if rep.ordered else "fail"))

    def block(g, size):
        path = continuous.sample_branching_wiener(3.0, cfg.dt, g, size)
        return continuous.scan(path, line).ztilde

    zt = np.concatenate(replicate(block, min(cfg.replicas, 10_000), cfg.seed, key=(15,), threads=cfg.threads))
    rows.append(_mc_row("mean_Ztilde", "", cfg.beta_line, zt, 0.0))
    return rows


RUNNERS = {
    "covariance": covariance_suite,
    "identities": identities_suite,
    "martingale": martingale_suite,
    "tilt": tilt_suite,
    "laplace": laplace_suite,
    "continuous": continuous_suite,
}


def run_suite(name: str, cfg: SuiteConfig) -> list:
    names = SUITES if name == "all" else (name,)
    rows = []
    for s in names:
        rows.extend(RUNNERS[s](cfg))
    return rows
