"""Command-line front end: ``cascade-tails <command> [options]``.

Outputs are CSV (``#`` metadata lines, then a header row) or JSON.  Both carry
the tool version, the resolved configuration and the seed.  The worker count
is deliberately left out of the echo so that runs with different ``--threads``
produce identical files; wall-clock time goes to stderr and is embedded only
with ``--timestamp``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, continuous, covariance, stats_fit, suites
from .brw import BETA_C, BetaParams, essential_infimum, sample_zw
from .errors import ConfigError, ResourceGuardError
from .plot import emit_plot

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3
COMMANDS = ("simulate", "tail", "fit-gamma", "verify", "covariance", "continuous", "report")
# the line-crossing construction has no valid (A, eta) once beta**2 >= log 2 / 2,
# so the continuous commands fall back to a smaller beta
DEFAULT_BETA = {"continuous": 0.3}


def parse_range(text: str) -> list[int]:
    """``"4..9"`` -> [4, ..., 9] (inclusive); ``"6"`` -> [6]; ``"1,3,5"`` -> [1, 3, 5]."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
        else:
            return [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad integer range {text!r}; use a..b or a,b,c") from exc
    if hi < lo:
        raise ConfigError(f"empty range {text!r}")
    return list(range(lo, hi + 1))


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="cascade-tails", description="Rare-event Monte Carlo for the lower tail of BRW derivative martingales.", formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_default="6", replicas=100_000):
        sp.add_argument("--beta", type=float, default=None, help=f"inverse temperature (default beta_c/2 = {BETA_C / 2:.6f}; continuous: 0.3)")
        sp.add_argument("--n", default=n_default, help="generation, or inclusive range a..b")
        sp.add_argument("--replicas", type=int, default=replicas, help="Monte Carlo replicas (or importance samples)")
        sp.add_argument("--seed", type=int, default=0, help="64-bit seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (fallback: $CASCADE_TAILS_THREADS, then 1)")
        sp.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
        sp.add_argument("--plot", action="store_true", help="also write an SVG tail plot next to the output")
        sp.add_argument("--timestamp", action="store_true", help="embed wall-clock time in the output (breaks byte-identity)")

    sp = sub.add_parser("simulate", help="moments of W_n and Z_n", formatter_class=fmt)
    common(sp, "1..6")

    sp = sub.add_parser("tail", help="lower-tail probabilities of Z_n", formatter_class=fmt)
    common(sp, "4..8", 20_000)
    sp.add_argument("--method", choices=("box", "naive"), default="box", help="tail estimator")
    sp.add_argument("--epsilon", type=float, default=0.5, help="box width parameter")
    sp.add_argument("--x-grid", default="0.25,0.5,1,1.5,2", help="naive method: thresholds x in P(Z_n <= -x)")

    sp = sub.add_parser("fit-gamma", help="fit the tail exponent from box tail points", formatter_class=fmt)
    common(sp, "4..9", 20_000)
    sp.add_argument("--epsilon", type=float, default=0.5, help="box width parameter")
    sp.add_argument("--input", default=None, help="fit tail points from a CSV written by `tail` instead of sampling")

    sp = sub.add_parser("verify", help="run property suites; exit 1 on failure", formatter_class=fmt)
    common(sp, "1..6")
    sp.add_argument("--suite", choices=("all",) + suites.SUITES, default="all", help="suite to run")
    sp.add_argument("--a", default="-2,-1,0,1", help="tilt parameters a")
    sp.add_argument("--lambda-grid", default="0.1,1,5", help="Laplace parameters lambda")
    sp.add_argument("--eta", type=float, default=0.5, help="line slope excess (continuous suite)")
    sp.add_argument("--A", type=float, default=1.5, help="line intercept (continuous suite)")
    sp.add_argument("--dt", type=float, default=1e-2, help="time step (continuous suite)")
    sp.add_argument("--horizon", type=float, default=20.0, help="time horizon (continuous suite)")

    sp = sub.add_parser("covariance", help="closed-form spectrum, log-det and theta comparison", formatter_class=fmt)
    common(sp, "1..6")

    sp = sub.add_parser("continuous", help="branching Brownian motion with two lines", formatter_class=fmt)
    common(sp, "", 2000)
    sp.add_argument("--eta", type=float, default=0.5, help="upper line slope is beta + eta")
    sp.add_argument("--A", type=float, default=1.5, help="upper line intercept")
    sp.add_argument("--dt", type=float, default=1e-2, help="time step")
    sp.add_argument("--horizon", type=float, default=3.0, help="time horizon")

    sp = sub.add_parser("report", help="one-table summary: theta, kappa, gamma fit, remainder", formatter_class=fmt)
    common(sp, "4..9", 20_000)
    sp.add_argument("--epsilon", type=float, default=0.5, help="box width parameter for the gamma fit")
    sp.add_argument("--delta", type=float, default=0.25, help="remainder threshold")
    sp.add_argument("--m", type=int, default=6, help="remainder depth")
    return p


def _config_echo(args) -> dict:
    skip = {"threads", "output", "plot", "timestamp", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return _jsonable(v.item())
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def render(rows: list[dict], args, extra: dict | None = None) -> str:
    echo = _config_echo(args)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if args.timestamp else None
    if args.format == "json":
        doc = {"tool": "cascade-tails", "version": __version__, "seed": args.seed, "config": echo}
        if stamp:
            doc["wall_clock"] = stamp
        doc["rows"] = _jsonable(rows)
        if extra:
            doc.update(_jsonable(extra))
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# cascade-tails {__version__}\n")
    buf.write(f"# seed: {args.seed}\n")
    buf.write(f"# config: {json.dumps(echo, sort_keys=True)}\n")
    if stamp:
        buf.write(f"# wall_clock: {stamp}\n")
    if extra:
        buf.write(f"# {json.dumps(_jsonable(extra), sort_keys=True)}\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float) or hasattr(v, "item"):
        return repr(float(v))
    return v


def _write(text: str, args) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _plot_path(args) -> Path:
    base = Path(args.output) if args.output else Path(f"cascade-tails-{args.command}")
    return base.with_suffix(".svg")


def _beta(args) -> float:
    beta = args.beta if args.beta is not None else DEFAULT_BETA.get(args.command, BETA_C / 2)
    BetaParams(beta)
    return beta


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    beta = _beta(args)
    rows = []
    for n in parse_range(args.n):
        z, w = sample_zw(beta, n, args.replicas, args.seed, threads=args.threads, key=(2,))
        r = len(z)
        rows.append(
            {
                "n": n,
                "beta": beta,
                "replicas": r,
                "mean_W": float(w.mean()),
                "se_W": float(w.std(ddof=1) / math.sqrt(r)),
                "mean_Z": float(z.mean()),
                "se_Z": float(z.std(ddof=1) / math.sqrt(r)),
                "var_Z": float(z.var(ddof=1)),
            }
        )
    _write(render(rows, args), args)
    return EXIT_OK


def cmd_tail(args) -> int:
    beta = _beta(args)
    rows = []
    if args.method == "box":
        for r in stats_fit.lower_bound_report(parse_range(args.n), args.epsilon, beta, args.replicas, args.seed, threads=args.threads):
            rows.append({k: r[k] for k in ("n", "epsilon", "log_prob", "ci_lo", "ci_hi", "analytic_lower_bound")})
        series = ([(1 - args.epsilon) * essential_infimum(r["n"], beta).magnitude for r in rows], [r["log_prob"] for r in rows])
    else:
        xs = parse_floats(args.x_grid)
        for n in parse_range(args.n):
            rows.extend(stats_fit.empirical_tail(n, beta, args.replicas, xs, "naive", args.seed, threads=args.threads).rows())
        usable = [r for r in rows if -math.inf < r["log_prob"] < 0]
        series = ([r["x"] for r in usable], [r["log_prob"] for r in usable])
    _write(render(rows, args), args)
    if args.plot:
        emit_plot(series, _plot_path(args), gamma_ref=BetaParams(beta).gamma, title=f"tail of Z_n, beta={beta:.4f}")
    return EXIT_OK


def _read_points(path: str):
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))
    if not rows or not {"x", "log_prob"} <= set(rows[0]):
        raise ConfigError(f"{path}: expected columns x and log_prob")
    return [float(r["x"]) for r in rows], [float(r["log_prob"]) for r in rows]


def cmd_fit_gamma(args) -> int:
    beta = _beta(args)
    target = BetaParams(beta).gamma
    if args.input:
        x, lp = _read_points(args.input)
        points = []
    else:
        est = stats_fit.box_tail_points(parse_range(args.n), args.epsilon, beta, args.replicas, args.seed, threads=args.threads)
        x, lp = list(est.x), list(est.log_prob)
        points = [dict(r, n=n) for r, n in zip(est.rows(), parse_range(args.n))]
    fit = stats_fit.fit_gamma(x, lp, target)
    _write(render([fit.as_dict()], args, {"points": points} if points else None), args)
    if args.plot:
        emit_plot((x, lp), _plot_path(args), gamma_ref=target, title=f"box tail points, beta={beta:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = suites.SuiteConfig(
        beta=_beta(args),
        n_values=tuple(parse_range(args.n)),
        replicas=args.replicas,
        seed=args.seed,
        a_grid=tuple(parse_floats(args.a)),
        lambda_grid=tuple(parse_floats(args.lambda_grid)),
        A=args.A,
        eta=args.eta,
        dt=args.dt,
        horizon=args.horizon,
        threads=args.threads,
    )
    reports = suites.run_suite(args.suite, cfg)
    rows = [
        {"check": r.check, "n": r.n, "beta": r.beta, "a": r.a, "lambda": r.lam, "lhs_log": r.lhs_log, "rhs_log": r.rhs_log, "ci": r.ci, "verdict": r.verdict}
        for r in reports
    ]
    _write(render(rows, args), args)
    failed = [r for r in rows if r["verdict"] == "fail"]
    for r in failed:
        print(f"FAIL {r['check']} n={r['n']} a={r['a']} lambda={r['lambda']}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_covariance(args) -> int:
    import numpy as np

    rows = covariance.logdet_table(parse_range(args.n))
    for r in rows:
        n = r["n"]
        spec = covariance.eigenvalues_closed_form(n)
        r["eigenvalues"] = " ".join(f"{v}x{m}" for v, m in sorted(spec.items()))
        if n <= 8:
            dense = np.linalg.eigvalsh(covariance.build_sigma(n).astype(float))
            r["eig_max_err"] = float(np.max(np.abs(dense - covariance.eigenvalues_sorted(n))))
            r["dense_logdet"] = float(np.linalg.slogdet(covariance.build_sigma(n).astype(float))[1])
        else:
            r["eig_max_err"] = ""
            r["dense_logdet"] = ""
    _write(render(rows, args, {"theta": covariance.theta_constant()}), args)
    return EXIT_OK


def cmd_continuous(args) -> int:
    beta = _beta(args)
    cfg = continuous.LineCrossConfig(args.A, args.eta, beta).validate()
    steps = max(1, int(round(args.horizon)))
    times = [args.horizon * k / steps for k in range(1, steps + 1)]
    rows = continuous.summary_rows(cfg, times, args.horizon, args.dt, args.replicas, args.seed, threads=args.threads)
    _write(render(rows, args), args)
    return EXIT_OK


def cmd_report(args) -> int:
    beta = _beta(args)
    n_values = parse_range(args.n)
    rows = [
        {"quantity": "theta", "value": covariance.theta_constant(), "reference": ""},
        {"quantity": "gamma_target", "value": BetaParams(beta).gamma, "reference": ""},
        {"quantity": "kappa_epsilon", "value": stats_fit.kappa_epsilon(args.epsilon, beta), "reference": ""},
    ]
    est = stats_fit.box_tail_points(n_values, args.epsilon, beta, args.replicas, args.seed, threads=args.threads)
    fit = stats_fit.fit_gamma(est.x, est.log_prob, BetaParams(beta).gamma)
    rows.append({"quantity": "gamma_hat", "value": fit.gamma_hat, "reference": fit.target_gamma})
    rows.append({"quantity": "gamma_stderr", "value": fit.stderr, "reference": ""})
    rem = stats_fit.box_conditional_remainder(
        beta, stats_fit.RemainderCheckConfig(args.epsilon, args.delta, args.m, (3, 4, 5, 6, 7)), min(args.replicas, 4000), args.seed, threads=args.threads
    )
    for pt in rem.points:
        rows.append({"quantity": f"remainder_n{pt.n}", "value": pt.prob, "reference": pt.se})
    rows.append({"quantity": "remainder_non_increasing", "value": rem.non_increasing, "reference": ""})
    _write(render(rows, args), args)
    if args.plot:
        emit_plot((est.x, est.log_prob), _plot_path(args), gamma_ref=BetaParams(beta).gamma, title=f"box tail points, beta={beta:.4f}")
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "tail": cmd_tail,
    "fit-gamma": cmd_fit_gamma,
    "verify": cmd_verify,
    "covariance": cmd_covariance,
    "continuous": cmd_continuous,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        if args.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.beta = _beta(args)
        code = HANDLERS[args.command](args)
    except ResourceGuardError as exc:
        print(f"cascade-tails: resource guard '{exc.guard}': {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, ValueError) as exc:
        print(f"cascade-tails: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cascade-tails: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"cascade-tails {args.command}: {time.perf_counter() - start:.2f}s wall clock", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())
