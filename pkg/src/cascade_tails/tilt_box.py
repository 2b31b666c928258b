"""Box scenario and exponential tilt for the generation-n leaf vector.

The box is the hyper-rectangle ``[beta n - alpha_+/beta, beta n - alpha_-/beta]^(2^n)``
where ``alpha_-`` < 1 < ``alpha_+`` solve ``alpha exp(-alpha) = (1 - eps)/e``.
Every leaf vector inside it pushes ``Z_n`` below ``-(1 - eps) m_n``.

Box probabilities are estimated by importance sampling.  Two proposals are
available: the uniform product measure on the box, weighted with the exact
Gaussian leaf density, and a tree-structured proposal that draws the whole
tree from a grid approximation of the law conditioned on the box and is
weighted edge by edge.  The second one stays efficient in hundreds of
dimensions; the first one degenerates there but needs no tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import covariance
from ._rng import as_generator, replicate
from .brw import BrwRealization, check_generation, derivative_values, essential_infimum, sample_brw
from .errors import ConfigError, ResourceGuardError

LOG_2PI = math.log(2.0 * math.pi)
MIN_BOX_WIDTH = 1e-8
# below this the two roots sit within ~sqrt(2 eps) of 1, closer than double precision resolves
MIN_EPSILON = 1e-12
MAX_BOX_N = 10
Z95 = 1.959963984540054


def _alpha_residual(alpha: float, target: float) -> float:
    return alpha * math.exp(-alpha) - target


def _bisect(lo: float, hi: float, target: float, increasing: bool) -> float:
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f = _alpha_residual(mid, target)
        if (f < 0) == increasing:
            lo = mid
        else:
            hi = mid
    # pick the endpoint with the smaller residual
    return min((lo, hi), key=lambda a: abs(_alpha_residual(a, target)))


def solve_alphas(epsilon: float, tol: float = 1e-12) -> tuple[float, float]:
    """The two roots ``alpha_- < 1 < alpha_+`` of ``alpha e^-alpha = (1 - eps)/e``."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    if epsilon < MIN_EPSILON:
        raise ConfigError(f"degenerate box: epsilon {epsilon:g} < {MIN_EPSILON:g} cannot be resolved")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    target = (1.0 - epsilon) / math.e
    a_minus = _bisect(0.0, 1.0, target, increasing=True)
    cap = 2.0
    while _alpha_residual(cap, target) > 0:
        cap *= 2.0
    a_plus = _bisect(1.0, cap, target, increasing=False)
    for a in (a_minus, a_plus):
        if abs(_alpha_residual(a, target)) > tol:
            raise ConfigError(f"root residual {abs(_alpha_residual(a, target)):.3g} above tol {tol:g}")
    return a_minus, a_plus


@dataclass(frozen=True)
class BoxSpec:
    epsilon: float
    alpha_minus: float
    alpha_plus: float
    n: int
    beta: float

    @property
    def lo(self) -> float:
        return self.beta * self.n - self.alpha_plus / self.beta

    @property
    def hi(self) -> float:
        return self.beta * self.n - self.alpha_minus / self.beta

    @property
    def width(self) -> float:
        return (self.alpha_plus - self.alpha_minus) / self.beta

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def threshold(self) -> float:
        """-(1 - eps) m_n: every box point has Z_n at or below it."""
        return -(1.0 - self.epsilon) * essential_infimum(self.n, self.beta).magnitude

    def contains(self, leaves) -> np.ndarray:
        leaves = np.asarray(leaves)
        return np.all((leaves >= self.lo) & (leaves <= self.hi), axis=-1)


def make_box(n: int, epsilon: float, beta: float, tol: float = 1e-12) -> BoxSpec:
    n = check_generation(n)
    if not beta > 0:
        raise ConfigError("the box needs beta > 0")
    a_minus, a_plus = solve_alphas(epsilon, tol)
    box = BoxSpec(epsilon, a_minus, a_plus, n, beta)
    if box.width < MIN_BOX_WIDTH:
        raise ConfigError(f"degenerate box: width {box.width:.3g} < {MIN_BOX_WIDTH:g}")
    return box


def analytic_log_lower_bound(box: BoxSpec) -> float:
    """log of vol(box) * Gaussian density normaliser * exp(-sup_box q / 2).

    The supremum of the inverse quadratic form is replaced by the upper bound
    obtained from writing ``x = (beta n - 1/beta) 1 + h``.
    """
    n = box.n
    if n == 0:
        return 0.0 if box.lo <= 0.0 <= box.hi else -math.inf
    dim = 2.0**n
    centre = box.beta * n - 1.0 / box.beta
    radius = max(box.alpha_plus - 1.0, 1.0 - box.alpha_minus) / box.beta
    sup_q = (centre**2 * dim + 2.0 * abs(centre) * dim * radius) / (dim - 1.0) + dim * radius**2
    return dim * math.log(box.width) - 0.5 * dim * LOG_2PI - 0.5 * covariance.log_det(n) - 0.5 * sup_q


def exact_box_probability_n1(box: BoxSpec) -> float:
    """Generation 1: two independent standard Gaussians."""
    from scipy.stats import norm

    if box.n != 1:
        raise ValueError("only valid for n = 1")
    return (norm.cdf(box.hi) - norm.cdf(box.lo)) ** 2


def uniform_box_points(box: BoxSpec, size: int, rng=None) -> np.ndarray:
    return as_generator(rng).uniform(box.lo, box.hi, size=(size, box.dim))


# ---------------------------------------------------------------------------
# tree-structured proposal


def _log_phi(x):
    return -0.5 * x * x - 0.5 * LOG_2PI


@dataclass
class TreeProposal:
    """Grid approximation of the BRW conditioned on all leaves lying in ``box``.

    Nodes of generation ``j < n`` live on a uniform grid covering the box and
    the origin with a margin; leaves live on a grid of the box itself.  A
    child's cell is drawn from a table indexed by the parent's cell, then its
    position is uniform inside the cell.  Weights use the exact Gaussian edge
    densities, so the estimator is unbiased whatever the grid (up to the
    negligible mass outside the internal grid).
    """

    box: BoxSpec
    grid_points: int = 800
    margin: float = 8.0
    edges: list = field(init=False, repr=False)
    tables: list = field(init=False, repr=False)

    def __post_init__(self):
        box, g = self.box, self.grid_points
        n = box.n
        if n < 1:
            raise ConfigError("tree proposal needs n >= 1")
        inner = np.linspace(min(0.0, box.lo) - self.margin, max(0.0, box.hi) + self.margin, g + 1)
        leaf = np.linspace(box.lo, box.hi, g + 1)
        # edges[j] is the cell partition for generation j (index 0 unused)
        self.edges = [None] + [inner] * (n - 1) + [leaf]
        mids = [None] + [0.5 * (e[1:] + e[:-1]) for e in self.edges[1:]]
        log_width = [None] + [np.log(np.diff(e)) for e in self.edges[1:]]
        # log h_j(mid): log P(all descendant leaves in box | node at mid)
        log_h = [None] * (n + 1)
        log_h[n] = np.zeros(g)
        tables = [None] * (n + 1)
        for j in range(n - 1, -1, -1):
            parent_mids = np.array([0.0]) if j == 0 else mids[j]
            log_k = _log_phi(mids[j + 1][None, :] - parent_mids[:, None]) + log_width[j + 1][None, :]
            joint = log_k + log_h[j + 1][None, :]
            norm = logsumexp(joint, axis=1)
            log_h[j] = 2.0 * norm
            log_p = joint - norm[:, None]
            cdf = np.cumsum(np.exp(log_p), axis=1)
            cdf[:, -1] = 1.0
            tables[j + 1] = (log_p, cdf)
        self.tables = tables
        self.log_h_root = float(log_h[0][0])

    @property
    def approx_log_prob(self) -> float:
        """Grid (midpoint-rule) approximation of the log box probability."""
        return self.log_h_root

    def sample(self, size: int, rng=None) -> tuple[np.ndarray, np.ndarray]:
        """Return heap positions ``(size, 2**(n+1))`` and log importance weights."""
        rng = as_generator(rng)
        n = self.box.n
        pos = np.zeros((size, 2 ** (n + 1)))
        log_w = np.zeros(size)
        parent_cells = np.zeros((size, 1), dtype=np.int64)
        for j in range(1, n + 1):
            log_p, cdf = self.tables[j]
            edges = self.edges[j]
            rows = np.repeat(parent_cells, 2, axis=1)
            u = rng.random(rows.shape)
            ncell = cdf.shape[1]
            flat = (cdf + 2.0 * np.arange(cdf.shape[0])[:, None]).ravel()
            cells = np.searchsorted(flat, u + 2.0 * rows, side="right") - rows * ncell
            cells = np.clip(cells, 0, ncell - 1)
            left = edges[cells]
            width = edges[cells + 1] - left
            child = left + width * rng.random(rows.shape)
            parent_pos = np.repeat(pos[:, 2 ** (j - 1) : 2**j], 2, axis=1)
            log_q = log_p[rows, cells] - np.log(width)
            log_w += np.sum(_log_phi(child - parent_pos) - log_q, axis=1)
            pos[:, 2**j : 2 ** (j + 1)] = child
            parent_cells = cells
        return pos, log_w


@lru_cache(maxsize=32)
def tree_proposal(n: int, epsilon: float, beta: float, grid_points: int = 800) -> TreeProposal:
    return TreeProposal(make_box(n, epsilon, beta), grid_points)


class BoxProbability(NamedTuple):
    log_prob: float
    ci_lo: float
    ci_hi: float
    se_log: float
    analytic_lower_bound: float
    ess: float
    samples: int
    proposal: str


def log_mean_weights(log_w: np.ndarray) -> tuple[float, float, float]:
    """log of the mean weight, its delta-method standard error, and the effective sample size."""
    log_w = np.asarray(log_w, dtype=float)
    shift = np.max(log_w)
    w = np.exp(log_w - shift)
    mean = np.mean(w)
    r = w.size
    se_rel = np.std(w, ddof=1) / (mean * math.sqrt(r)) if r > 1 else math.inf
    ess = np.sum(w) ** 2 / np.sum(w * w)
    return shift + math.log(mean), float(se_rel), float(ess)


def box_log_weights(box: BoxSpec, size: int, rng, proposal: str = "tree", grid_points: int = 800):
    """Log importance weights of ``size`` proposal draws (weights average to P(box))."""
    if proposal == "uniform":
        x = uniform_box_points(box, size, rng)
        log_density = -0.5 * box.dim * LOG_2PI - 0.5 * covariance.log_det(box.n) - 0.5 * covariance.quad_form_inv(box.n, x)
        return box.dim * math.log(box.width) + log_density
    if proposal == "tree":
        _, log_w = tree_proposal(box.n, box.epsilon, box.beta, grid_points).sample(size, rng)
        return log_w
    raise ConfigError(f"unknown proposal {proposal!r}")


def box_probability(
    n: int,
    epsilon: float,
    beta: float,
    samples: int = 20_000,
    seed: int = 0,
    *,
    proposal: str = "tree",
    threads: int | None = None,
    grid_points: int = 800,
) -> BoxProbability:
    """Importance-sampling estimate of log P(leaf vector in the box), with a 95% CI."""
    if n > MAX_BOX_N:
        raise ResourceGuardError("box-dimension", f"box probability limited to n <= {MAX_BOX_N}")
    if n < 1:
        raise ConfigError("box probability needs n >= 1")
    box = make_box(n, epsilon, beta)
    if proposal == "tree":
        tree_proposal(n, epsilon, beta, grid_points)  # build tables once, outside the workers
    log_w = np.concatenate(
        replicate(lambda g, s: box_log_weights(box, s, g, proposal, grid_points), samples, seed, key=(101, n), threads=threads)
    )
    log_p, se, ess = log_mean_weights(log_w)
    return BoxProbability(
        log_p, log_p - Z95 * se, log_p + Z95 * se, se, analytic_log_lower_bound(box), ess, samples, proposal
    )


# ---------------------------------------------------------------------------
# exponential tilt


def _tilt_n(n: int) -> float:
    if n < 1:
        raise ConfigError("the tilt needs n >= 1 (the leaf mean is degenerate at n = 0)")
    return 1.0 - 2.0**-n


def log_tilt_density(leaves, a: float) -> np.ndarray:
    """log Y_n^[a] on leaf vectors (last axis of length 2**n)."""
    leaves = np.asarray(leaves, dtype=float)
    n = int(round(math.log2(leaves.shape[-1])))
    c = _tilt_n(n)
    return a / (c * 2.0**n) * np.sum(leaves, axis=-1) - a * a / (2.0 * c)


def tilt_density(r: BrwRealization, a: float) -> float:
    return float(np.exp(log_tilt_density(r.leaf_positions, a)))


def tilted_sample(n: int, a: float, rng=None) -> BrwRealization:
    """Sample under the tilted measure: a base tree with every leaf shifted by ``a``.

    The tilt adds a multiple of the leaf sum to the log-density; since the
    all-ones vector is an eigenvector of the leaf covariance (eigenvalue
    ``2^n - 1``), the mean moves by exactly ``a`` in every coordinate and the
    covariance is unchanged.
    """
    _tilt_n(n)
    r = sample_brw(n, rng)
    g = r.increments.copy()
    g[2**n :] += a
    return BrwRealization.from_increments(n, g)


def tilted_leaves(n: int, a: float, size: int, rng=None) -> np.ndarray:
    from .brw import leaves, sample_positions

    _tilt_n(n)
    return leaves(sample_positions(n, size, rng), n) + a


def shifted_derivative(r: BrwRealization, a: float, beta: float) -> tuple[float, float]:
    """Z_n^[a] (all leaves shifted by a) and the residual of Z_n + a W_n = e^{-beta a} Z_n^[a]."""
    from .brw import additive_values

    x = r.leaf_positions
    z = derivative_values(x, beta, r.n)
    w = additive_values(x, beta, r.n)
    z_a = derivative_values(x + a, beta, r.n)
    residual = abs(z + a * w - math.exp(-beta * a) * z_a) / max(1.0, abs(z_a))
    return float(z_a), float(residual)
