"""Binary branching Wiener process: paths, line crossings, truncated martingale and excursion functional.

A particle of generation ``l`` diffuses on the time interval ``(l-1, l]`` and
splits at integer times, so ``2**ceil(t)`` particles are alive at time ``t``
and integer-time positions form the discrete branching random walk.

Paths are stored per generation as arrays ``(batch, 2**l, k+1)`` of absolute
positions on a uniform grid.  Each step carries one uniform variate used for
Brownian-bridge crossing imputation, so crossing detection is a deterministic
function of the path object and consistent between lineages that share an
ancestor.

Crossing rule, for a gap ``g`` to a line that is positive at both ends of a
step: a grid crossing (end gap <= 0) is placed by linear interpolation;
otherwise a crossing is imputed with probability ``exp(-2 g0 g1 / dt)`` and
placed at the end of the step.  Both placements are monotone in a downward
shift of the path, which keeps coupled comparisons exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from ._rng import as_generator, replicate
from .brw import BrwRealization, derivative_values
from .errors import ConfigError, ResourceGuardError

LOG2 = math.log(2.0)
MAX_LEVELS = 14
# lineages further than this many units of (gap * slope) below the line are dropped:
# their remaining hitting probability is at most exp(-2 * CULL) ~ 7e-13
CULL = 14.0


@dataclass(frozen=True)
class LineCrossConfig:
    A: float
    eta: float
    beta: float

    @property
    def slope(self) -> float:
        return self.beta + self.eta

    def upper(self, t):
        return (self.beta + self.eta) * t + self.A

    def lower(self, t):
        return self.beta * t

    @property
    def flags(self) -> dict:
        return {
            "two_eta_gt_beta": 2 * self.eta > self.beta,
            "bracket_finite": self.beta**2 + 2 * self.beta * self.eta < LOG2,
            "intercept_ok": self.A > 1.0 / (self.beta + self.eta),
        }

    @property
    def valid(self) -> bool:
        return self.A > 0 and self.eta > 0 and all(self.flags.values())

    def validate(self) -> "LineCrossConfig":
        if not (self.A > 0 and self.eta > 0):
            raise ConfigError("A and eta must be positive")
        bad = [k for k, ok in self.flags.items() if not ok]
        if bad:
            raise ConfigError(f"invalid line configuration: {', '.join(bad)}")
        return self

    @property
    def growth(self) -> float:
        """Exponential rate of the excursion summands."""
        return 0.5 * self.beta**2 + self.beta * self.eta

    def q_summand(self, t):
        return (self.A + self.eta * t) * np.exp(self.growth * t + self.beta * self.A)


@dataclass
class BranchingWienerPath:
    T: float
    steps_per_unit: int
    segments: list  # segments[l-1]: (batch, 2**l, k_l + 1) positions
    uniforms: list  # segments[l-1]: (batch, 2**l, k_l)
    batched: bool = True
    n_batch: int = 1

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_unit

    @property
    def levels(self) -> int:
        return len(self.segments)

    @property
    def batch(self) -> int:
        return self.segments[0].shape[0] if self.segments else self.n_batch

    def _out(self, value):
        value = np.asarray(value)
        return value if self.batched else float(value[0])

    def positions_at(self, t: float) -> np.ndarray:
        """Particle positions at time ``t``: shape ``(batch, 2**ceil(t))``."""
        if not -1e-12 <= t <= self.T + 1e-12:
            raise ConfigError(f"t={t} outside [0, {self.T}]")
        level = math.ceil(round(t * self.steps_per_unit) / self.steps_per_unit)
        if level == 0:
            return np.zeros((self.batch, 1))
        idx = int(round((t - (level - 1)) * self.steps_per_unit))
        return self.segments[level - 1][:, :, idx]

    def to_brw(self, n: int, index: int = 0) -> BrwRealization:
        """The discrete tree induced by integer times 0..n of one batch member."""
        g = np.zeros(2 ** (n + 1))
        for level in range(1, n + 1):
            seg = self.segments[level - 1][index]
            g[2**level : 2 ** (level + 1)] = seg[:, -1] - seg[:, 0]
        return BrwRealization.from_increments(n, g)

    def lineages(self) -> tuple[np.ndarray, np.ndarray]:
        """Every root-to-horizon lineage on the global grid: ``(times, (batch, 2**L, N+1))``."""
        if self.levels == 0:
            return np.zeros(1), np.zeros((self.batch, 1, 1))
        big = self.levels
        parts = []
        times = [np.zeros(1)]
        for level, seg in enumerate(self.segments, start=1):
            expanded = np.repeat(seg, 2 ** (big - level), axis=1)
            parts.append(expanded if level == 1 else expanded[:, :, 1:])
            k = seg.shape[-1] - 1
            times.append((level - 1) + np.arange(1, k + 1) * self.dt)
        return np.concatenate(times), np.concatenate(parts, axis=-1)

    @classmethod
    def from_segments(cls, segments, steps_per_unit: int, uniforms=None) -> "BranchingWienerPath":
        """Synthetic path from per-generation position arrays ``(2**l, k+1)``.

        Without ``uniforms`` no bridge crossing is ever imputed.
        """
        segs = [np.asarray(s, dtype=float)[None] for s in segments]
        if uniforms is None:
            unis = [np.ones(s.shape[:-1] + (s.shape[-1] - 1,)) for s in segs]
        else:
            unis = [np.asarray(u, dtype=float)[None] for u in uniforms]
        k_last = segs[-1].shape[-1] - 1 if segs else 0
        T = max(len(segs) - 1, 0) + k_last / steps_per_unit
        return cls(T, steps_per_unit, segs, unis, batched=False)


def _steps_per_unit(dt: float) -> int:
    k = int(round(1.0 / dt))
    if k < 1 or abs(k * dt - 1.0) > 1e-9:
        raise ConfigError(f"dt must divide 1 (got {dt})")
    return k


def sample_branching_wiener(T: float, dt: float, rng=None, size: int | None = None) -> BranchingWienerPath:
    if T < 0 or dt <= 0:
        raise ConfigError("need T >= 0 and dt > 0")
    levels = math.ceil(T - 1e-12)
    if levels > MAX_LEVELS:
        raise ResourceGuardError("particle-count", f"ceil(T)={levels} exceeds {MAX_LEVELS}")
    k = _steps_per_unit(dt)
    rng = as_generator(rng)
    batch = 1 if size is None else int(size)
    segments, uniforms = [], []
    starts = np.zeros((batch, 1))
    sd = math.sqrt(1.0 / k)
    for level in range(1, levels + 1):
        steps = k if level < levels else int(round((T - (level - 1)) * k))
        starts = np.repeat(starts, 2, axis=1)
        inc = rng.standard_normal((batch, 2**level, steps)) * sd
        seg = np.empty((batch, 2**level, steps + 1))
        seg[..., 0] = starts
        np.cumsum(inc, axis=-1, out=seg[..., 1:])
        seg[..., 1:] += starts[..., None]
        segments.append(seg)
        uniforms.append(rng.random((batch, 2**level, steps)))
        starts = seg[..., -1]
    return BranchingWienerPath(float(T), k, segments, uniforms, batched=size is not None, n_batch=batch)


def continuous_derivative_martingale(path: BranchingWienerPath, beta: float, t: float):
    """Z_t = 2^-ceil(t) sum_u (X_t(u) - beta t) exp(beta X_t(u) - beta^2 t / 2)."""
    return path._out(derivative_values(path.positions_at(t), beta, t))


# ---------------------------------------------------------------------------
# crossing scan


def _integrand(beta, s, x):
    y = x - beta * s
    return (1.0 + beta * y) * np.exp(beta * x - 0.5 * beta * beta * s)


class Events(NamedTuple):
    """Crossing events: arrays of equal length."""

    batch: np.ndarray
    level: np.ndarray
    node: np.ndarray
    kind: np.ndarray  # 0 = upper-line crossing T_k, 1 = return R_k
    time: np.ndarray


@dataclass
class ScanResult:
    events: Events
    ztilde: np.ndarray
    zfull: np.ndarray
    bracket: np.ndarray
    q: np.ndarray
    crossings_per_lineage: np.ndarray


def _step(mode, x0, x1, t0, t1, u, config, shift):
    """Advance one grid step; returns (new_mode, up_time, down_time) with NaN where no event."""
    dt = t1 - t0
    y0 = x0 + shift
    y1 = x1 + shift
    up_time = np.full(mode.shape, np.nan)
    down_time = np.full(mode.shape, np.nan)
    new_mode = mode.copy()

    seeking = mode == 0
    g0 = config.upper(t0) - y0
    g1 = config.upper(t1) - y1
    grid = seeking & (g1 <= 0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        frac = np.where(g0 > 0, g0 / (g0 - g1), 0.0)
        p = np.exp(-2.0 * np.maximum(g0, 0) * np.maximum(g1, 0) / dt)
    bridge = seeking & ~grid & (u < p)
    up_time[grid] = t0 + dt * np.clip(frac[grid], 0.0, 1.0)
    up_time[bridge] = t1
    new_mode[grid | bridge] = 1

    above = mode == 1
    h0 = y0 - config.lower(t0)
    h1 = y1 - config.lower(t1)
    at_start = above & (h0 <= 0)
    grid_r = above & ~at_start & (h1 <= 0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        frac_r = np.where(h0 > 0, h0 / (h0 - h1), 0.0)
        p_r = np.exp(-2.0 * np.maximum(h0, 0) * np.maximum(h1, 0) / dt)
    bridge_r = above & ~at_start & ~grid_r & (u < p_r)
    down_time[at_start] = t0
    down_time[grid_r] = t0 + dt * np.clip(frac_r[grid_r], 0.0, 1.0)
    down_time[bridge_r] = t1
    new_mode[at_start | grid_r | bridge_r] = 0
    return new_mode, up_time, down_time


def scan(path: BranchingWienerPath, config: LineCrossConfig, t_end: float | None = None, shift: float = 0.0) -> ScanResult:
    """Walk every node segment up to ``t_end`` recording crossings and accumulating Z~, <Z~> and Q."""
    beta = config.beta
    t_end = path.T if t_end is None else t_end
    if t_end > path.T + 1e-12:
        raise ConfigError("t_end beyond the path horizon")
    b = path.batch
    dt = path.dt
    ztilde = np.zeros(b)
    zfull = np.zeros(b)
    bracket = np.zeros(b)
    q = np.zeros(b)
    ev = {k: [] for k in Events._fields}
    mode = np.zeros((b, 1), dtype=np.int8)
    counts = np.zeros((b, 1))
    n_steps_total = int(round(t_end * path.steps_per_unit))
    done = 0
    for level, (seg, uni) in enumerate(zip(path.segments, path.uniforms), start=1):
        if done >= n_steps_total:
            break
        mode = np.repeat(mode, 2, axis=1)
        counts = np.repeat(counts, 2, axis=1)
        weight = 2.0**-level
        steps = min(seg.shape[-1] - 1, n_steps_total - done)
        for i in range(steps):
            t0 = (level - 1) + i * dt
            t1 = t0 + dt
            x0 = seg[..., i]
            x1 = seg[..., i + 1]
            f = _integrand(beta, t0, x0 + shift)
            allowed = mode == 0
            dx = x1 - x0
            zfull += weight * np.sum(f * dx, axis=1)
            ztilde += weight * np.sum(np.where(allowed, f * dx, 0.0), axis=1)
            bracket += weight * weight * np.sum(np.where(allowed, f * f, 0.0), axis=1) * dt
            mode, up, down = _step(mode, x0, x1, t0, t1, uni[..., i], config, shift)
            for kind, times in ((0, up), (1, down)):
                hit = ~np.isnan(times)
                if hit.any():
                    bi, ni = np.nonzero(hit)
                    ev["batch"].append(bi)
                    ev["level"].append(np.full(bi.size, level))
                    ev["node"].append(ni)
                    ev["kind"].append(np.full(bi.size, kind))
                    ev["time"].append(times[hit])
                    if kind == 0:
                        np.add.at(q, bi, weight * config.q_summand(times[hit]))
                        counts[hit] += 1
        done += steps
    events = Events(
        *[
            np.concatenate(v).astype(float if name == "time" else np.int64) if v else np.zeros(0, float if name == "time" else np.int64)
            for name, v in ev.items()
        ]
    )
    # counts are inherited by children, so the last generation holds per-lineage totals
    return ScanResult(events, ztilde, zfull, bracket, q, counts)


def detect_crossings(path: BranchingWienerPath, config: LineCrossConfig, *, shift: float = 0.0, index: int = 0, require_valid: bool = True) -> list[list[tuple[str, float]]]:
    """Alternating crossing records ``[("T", t1), ("R", r1), ...]`` for every lineage of one batch member."""
    if require_valid:
        config.validate()
    res = scan(path, config, shift=shift)
    ev = res.events
    levels = path.levels
    out = []
    for leaf in range(2**levels):
        sel = ev.batch == index
        anc = leaf >> (levels - ev.level)
        sel &= ev.node == anc
        order = np.lexsort((ev.kind[sel], ev.time[sel]))
        kinds = ev.kind[sel][order]
        times = ev.time[sel][order]
        out.append([("T" if k == 0 else "R", float(t)) for k, t in zip(kinds, times)])
    return out


def truncated_martingale(path: BranchingWienerPath, config: LineCrossConfig, beta: float | None = None, t: float | None = None):
    """Discretised Z~_t: left-point stochastic integral restricted to the allowed regions."""
    if beta is not None and beta != config.beta:
        raise ConfigError("beta must match the line configuration")
    return path._out(scan(path, config, t).ztilde)


def stochastic_integral(path: BranchingWienerPath, beta: float, t: float | None = None):
    """Same discretised integral without the indicator (A = inf)."""
    cfg = LineCrossConfig(math.inf, 1.0, beta)
    return path._out(scan(path, cfg, t).zfull)


def compute_q(path: BranchingWienerPath, config: LineCrossConfig, *, shift: float = 0.0):
    """Q truncated at the horizon: average over lineages of the excursion-start summands."""
    return path._out(scan(path, config, shift=shift).q)


def discretised_bracket(path: BranchingWienerPath, config: LineCrossConfig, t: float | None = None):
    return path._out(scan(path, config, t).bracket)


# ---------------------------------------------------------------------------
# closed forms


def hitting_time_density(alpha, b, t):
    """Density of the first time a standard BM hits the line ``alpha + b s`` (finite part)."""
    alpha = np.asarray(alpha, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(alpha <= 0) or np.any(b <= 0) or np.any(t <= 0):
        raise ConfigError("alpha, b and t must be positive")
    out = alpha / (math.sqrt(2 * math.pi) * t**1.5) * np.exp(-alpha * b - 0.5 * b * b * t - alpha * alpha / (2 * t))
    return out if out.ndim else float(out)


def hitting_atom_mass(alpha: float, b: float) -> float:
    """P(the line is never hit) = 1 - exp(-2 alpha b)."""
    if alpha <= 0 or b <= 0:
        raise ConfigError("alpha and b must be positive")
    return -math.expm1(-2.0 * alpha * b)


def hitting_finite_mass(alpha: float, b: float) -> float:
    """Quadrature of the finite part of the hitting law."""
    f = lambda t: hitting_time_density(alpha, b, t)
    peak = alpha / b if b > 0 else 1.0
    a1, _ = integrate.quad(f, 0.0, peak, epsabs=1e-13, epsrel=1e-12, limit=200)
    a2, _ = integrate.quad(f, peak, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return a1 + a2


def bracket_series(alpha_exp: float) -> float:
    """sum_{n>=0} e^{alpha n} / 2^{n+1} = 1/(2 - e^alpha); ``inf`` when it diverges (alpha >= log 2)."""
    if alpha_exp >= LOG2:
        return math.inf
    return 1.0 / (2.0 - math.exp(alpha_exp))


def bracket_bound(config: LineCrossConfig, t: float = math.inf) -> float:
    """Upper bound for <Z~>_t: integral of (1+beta(eta s+A))^2 e^{(beta^2+2 beta eta)s+2 beta A} P(u^v >= s)."""
    beta, eta, A = config.beta, config.eta, config.A
    rate = beta * beta + 2 * beta * eta
    if math.isinf(t) and math.isinf(bracket_series(rate)):
        return math.inf
    g = lambda s: (1.0 + beta * (eta * s + A)) ** 2 * math.exp(rate * s + 2 * beta * A)
    total = 0.0
    level = 1
    while True:
        left = level - 1.0
        if left >= t:
            break
        right = min(float(level), t)
        piece, _ = integrate.quad(g, left, right, epsabs=0.0, epsrel=1e-12)
        piece *= 2.0**-level
        total += piece
        if math.isinf(t) and piece < 1e-16 * total:
            break
        level += 1
    return total


# ---------------------------------------------------------------------------
# single lineages


def first_passage_times(A: float, slope: float, horizon: float, dt: float, size: int, rng=None, *, chunk: int = 1000) -> np.ndarray:
    """First hitting times of ``A + slope t`` by standard BMs; ``inf`` if not hit before the horizon.

    Lineages whose gap exceeds ``CULL / slope`` are retired as never hitting.
    """
    if A <= 0 or slope <= 0:
        raise ConfigError("A and slope must be positive")
    rng = as_generator(rng)
    k = _steps_per_unit(dt)
    dt = 1.0 / k
    n_total = int(round(horizon * k))
    sd = math.sqrt(dt)
    out = np.full(size, np.inf)
    active = np.arange(size)
    x = np.zeros(size)
    step = 0
    cull_gap = CULL / slope
    while step < n_total and active.size:
        m = min(chunk, n_total - step)
        inc = rng.standard_normal((active.size, m)) * sd
        u = rng.random((active.size, m))
        path = np.concatenate([x[:, None], x[:, None] + np.cumsum(inc, axis=1)], axis=1)
        t = (step + np.arange(m + 1)) * dt
        gap = A + slope * t[None, :] - path
        g0, g1 = gap[:, :-1], gap[:, 1:]
        p = np.exp(-2.0 * np.maximum(g0, 0) * np.maximum(g1, 0) / dt)
        hit = (g1 <= 0) | (u < p)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = np.nonzero(any_hit)[0]
        fi = first[rows]
        gg0, gg1 = g0[rows, fi], g1[rows, fi]
        grid = gg1 <= 0
        times = np.where(grid, t[fi] + dt * gg0 / np.where(grid, gg0 - gg1, 1.0), t[fi + 1])
        out[active[rows]] = times
        keep = ~any_hit & (gap[:, -1] < cull_gap)
        active = active[keep]
        x = path[keep, -1]
        step += m
    return out


class CoupledLineage(NamedTuple):
    t1: np.ndarray  # (shifts, size) first upper crossing, inf if none
    q: np.ndarray  # (shifts, size) single-lineage Q truncated at the horizon
    crossings: np.ndarray  # (shifts, size)
    tail_estimate: np.ndarray  # (shifts,) mean next-crossing contribution beyond the horizon


def coupled_lineages(config: LineCrossConfig, shifts, horizon: float, dt: float, size: int, rng=None, *, chunk: int = 500) -> CoupledLineage:
    """Single lineages started at each shift, driven by the same Brownian noise and bridge uniforms."""
    rng = as_generator(rng)
    shifts = np.asarray(shifts, dtype=float)[:, None]
    k = _steps_per_unit(dt)
    dt = 1.0 / k
    n_total = int(round(horizon * k))
    sd = math.sqrt(dt)
    s = shifts.shape[0]
    mode = np.zeros((s, size), dtype=np.int8)
    t1 = np.full((s, size), np.inf)
    q = np.zeros((s, size))
    crossings = np.zeros((s, size))
    x = np.zeros(size)
    step = 0
    while step < n_total:
        m = min(chunk, n_total - step)
        inc = rng.standard_normal((size, m)) * sd
        u = rng.random((size, m))
        xs = np.concatenate([x[:, None], x[:, None] + np.cumsum(inc, axis=1)], axis=1)
        for i in range(m):
            t0 = (step + i) * dt
            mode, up, _ = _step(mode, xs[None, :, i], xs[None, :, i + 1], t0, t0 + dt, u[None, :, i], config, shifts)
            hit = ~np.isnan(up)
            if hit.any():
                first = hit & np.isinf(t1)
                t1[first] = up[first]
                q[hit] += config.q_summand(up[hit])
                crossings[hit] += 1
        x = xs[:, -1]
        step += m
    # expected contribution of the next crossing after the horizon, per lineage
    tail = np.zeros(s)
    for j in range(s):
        y = x + shifts[j, 0]
        gap = np.where(mode[j] == 0, config.upper(horizon) - y, config.upper(horizon) - config.lower(horizon))
        tail[j] = np.mean(_next_crossing_mean(config, horizon, np.maximum(gap, 1e-12)))
    return CoupledLineage(t1, q, crossings, tail)


def _log_density_times_summand(config: LineCrossConfig, t0: float, gap: float, s: float) -> float:
    # hitting density times the Q summand, combined in logs (each factor alone over/underflows)
    if s <= 0:
        return 0.0
    b = config.slope
    t = t0 + s
    log_f = math.log(gap / math.sqrt(2 * math.pi)) - 1.5 * math.log(s) - (gap + b * s) ** 2 / (2 * s)
    log_f += math.log(config.A + config.eta * t) + config.growth * t + config.beta * config.A
    return math.exp(log_f)


def _next_crossing_mean(config: LineCrossConfig, t0: float, gaps: np.ndarray) -> np.ndarray:
    """E[summand(t0 + tau) ; tau < inf] for the hitting time tau of a line at distance ``gap``."""
    qs = np.quantile(gaps, np.linspace(0, 1, 9))
    vals = []
    for g in qs:
        f = lambda s, g=g: _log_density_times_summand(config, t0, g, s)
        v, _ = integrate.quad(f, 0.0, np.inf, limit=200)
        vals.append(v)
    return np.interp(gaps, qs, vals)


class DominationReport(NamedTuple):
    a: float
    pathwise_fraction: float
    x_grid: np.ndarray
    survival_shifted: np.ndarray
    survival_base: np.ndarray
    sigma: np.ndarray
    ordered: bool
    mean_q_shifted: float
    mean_q_base: float
    tail_estimate: tuple


def check_domination(
    config: LineCrossConfig,
    a: float,
    replicas: int = 100_000,
    seed: int = 0,
    *,
    horizon: float = 20.0,
    dt: float = 1e-2,
    grid_points: int = 20,
    threads=None,
) -> DominationReport:
    """Coupled lineages started at ``a`` and at 0: pathwise T_1 order and survival-function order of Q_u."""
    if a > 0:
        raise ConfigError("the domination check needs a <= 0")
    config.validate()
    parts = replicate(
        lambda g, size: coupled_lineages(config, [a, 0.0], horizon, dt, size, g),
        replicas,
        seed,
        key=(301,),
        threads=threads,
    )
    t1 = np.concatenate([p.t1 for p in parts], axis=1)
    q = np.concatenate([p.q for p in parts], axis=1)
    tail = tuple(np.mean([p.tail_estimate for p in parts], axis=0))
    ordered_paths = np.mean(t1[0] >= t1[1])
    positive = q[1][q[1] > 0]
    if positive.size:
        x_grid = np.quantile(positive, np.linspace(0.0, 0.95, grid_points))
    else:
        x_grid = np.zeros(grid_points)
    surv_a = np.array([(q[0] > x).mean() for x in x_grid])
    surv_0 = np.array([(q[1] > x).mean() for x in x_grid])
    sigma = np.sqrt((surv_a * (1 - surv_a) + surv_0 * (1 - surv_0)) / q.shape[1])
    ordered = bool(np.all(surv_a <= surv_0 + 3 * sigma))
    return DominationReport(a, float(ordered_paths), x_grid, surv_a, surv_0, sigma, ordered, float(q[0].mean()), float(q[1].mean()), tail)


def summary_rows(config: LineCrossConfig, times, T: float, dt: float, replicas: int, seed: int, threads=None) -> list[dict]:
    """Per-time means of Z, Z~, Q, the bracket bound and crossings per lineage over sampled trees."""
    times = list(times)

    def block(g, size):
        path = sample_branching_wiener(T, dt, g, size)
        rows = []
        for t in times:
            res = scan(path, config, t)
            z = derivative_values(path.positions_at(t), config.beta, t)
            rows.append([z, res.ztilde, res.q, res.crossings_per_lineage.mean(axis=1)])
        return np.array(rows)  # (times, 4, size)

    data = np.concatenate(replicate(block, replicas, seed, key=(302,), threads=threads), axis=2)
    out = []
    for j, t in enumerate(times):
        out.append(
            {
                "t": t,
                "mean_Z": float(data[j, 0].mean()),
                "mean_Ztilde": float(data[j, 1].mean()),
                "mean_Q": float(data[j, 2].mean()),
                "bracket_bound": bracket_bound(config, t),
                "crossings_per_lineage": float(data[j, 3].mean()),
            }
        )
    return out


def hitting_probability(A: float, slope: float, horizon: float, dt: float, replicas: int, seed: int = 0, *, threads=None) -> tuple[float, float]:
    """Monte Carlo P(T < horizon) for the line ``A + slope t`` and its standard error."""
    hits = np.concatenate(
        replicate(lambda g, s: np.isfinite(first_passage_times(A, slope, horizon, dt, s, g)), replicas, seed, key=(303,), threads=threads)
    )
    p = float(hits.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / hits.size)
