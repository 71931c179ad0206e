"""``ddro`` command line: solve one instance, run a radius sweep, or generate data.

Machine-readable results go to stdout as JSON lines; human-readable tables
go to stderr.  Exit codes: 0 success, 2 usage or configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .core import (DDROError, AmbiguitySpec, RiskConfig, SampleSet, SupportSpec,
                   read_scenarios_csv, seeded_rng, validate_sample, write_scenarios_csv)
from .dro import (check_portfolio_ambiguity, solve_saa, solve_variance_wdroa_linear,
                  solve_wdroa, solve_wdros)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
FAILURE_BUDGET = 0.05

SUMMARY_COLUMNS = (
    "eps", "approach", "mean_j_hat", "mean_oos_portfolio", "q20_oos_portfolio",
    "q80_oos_portfolio", "mean_oos_comprehensive", "q20_oos_comprehensive",
    "q80_oos_comprehensive", "reliability_portfolio", "reliability_comprehensive",
    "mean_tau_diff", "mean_portfolio_linf_diff",
)
RECORD_COLUMNS = ("eps", "run", "approach", "status", "j_hat", "j_oos_portfolio",
                  "j_oos_comprehensive", "tau_hat", "tau_star", "lambda_star")
FIGURES = ("fig_oos_portfolio.svg", "fig_oos_comprehensive.svg", "fig_tau_diff.svg",
           "fig_portfolio_diff.svg")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _norm_index(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid norm index {text!r}") from None
    if q not in (1.0, 2.0):
        raise argparse.ArgumentTypeError("norm index must be 1, 2 or inf")
    return q


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return v


def _add_risk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=_nonneg_float, default=10.0, help="CVaR weight (default 10)")
    p.add_argument("--alpha", type=float, default=0.2, help="CVaR tail level in (0, 1] (default 0.2)")


def _add_ball_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=_positive_int, default=2, help="Wasserstein order (default 2)")
    p.add_argument("--q", type=_norm_index, default=2.0, help="ground norm: 1, 2 or inf (default 2)")
    p.add_argument("--support", choices=("real", "limited"), default="real",
                   help="real: R^m; limited: returns >= -1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ddro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one portfolio instance")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="scenario CSV (header xi_1,...,xi_m)")
    src.add_argument("--synthetic", action="store_true", help="draw scenarios from the factor model")
    s.add_argument("--m", type=_positive_int, default=10)
    s.add_argument("--n", type=_positive_int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--approach", choices=("saa", "wdros", "wdroa", "var-wdroa"), required=True)
    s.add_argument("--eps", type=_nonneg_float, default=0.0)
    s.add_argument("--method", choices=("lambda-search", "joint"), default="lambda-search",
                   help="standard DRO with p=2: multiplier search or one joint SOCP")
    _add_ball_flags(s)
    _add_risk_flags(s)

    w = sub.add_parser("sweep", help="radius sweep over fresh training samples")
    w.add_argument("--runs", type=_positive_int, default=50)
    w.add_argument("--n", type=_positive_int, default=30)
    w.add_argument("--m", type=_positive_int, default=10)
    w.add_argument("--n-eval", type=_positive_int, default=200_000)
    w.add_argument("--eps-min", type=float, default=1e-4)
    w.add_argument("--eps-max", type=float, default=1.0)
    w.add_argument("--eps-points", type=_positive_int, default=20)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes (default: $DDRO_THREADS or 1)")
    w.add_argument("--out", type=Path, required=True)
    _add_ball_flags(w)
    _add_risk_flags(w)

    g = sub.add_parser("gen-data", help="write synthetic scenarios to CSV")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--support", choices=("real", "limited"), default="real")
    g.add_argument("--out", type=Path, required=True)
    return parser


def _support(name: str) -> SupportSpec:
    return SupportSpec.limited_loss() if name == "limited" else SupportSpec.full_space()


def _model(m: int, support: str) -> bench.ReturnModel:
    return bench.ReturnModel(m, floor=-1.0 if support == "limited" else None)


def _risk(args) -> RiskConfig:
    try:
        return RiskConfig(args.rho, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _json_float(v) -> Optional[float]:
    return None if v is None or not math.isfinite(v) else float(v)


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def cmd_solve(args) -> int:
    support = _support(args.support)
    risk = _risk(args)
    if args.data is not None:
        try:
            sample = read_scenarios_csv(args.data)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.data}: {exc}") from None
    else:
        sample = bench.generate_returns(_model(args.m, args.support), args.n, seeded_rng(args.seed))
    validate_sample(sample, support)
    amb = AmbiguitySpec(args.p, args.q, args.eps, support, args.approach == "wdroa")
    if args.approach == "saa":
        res = solve_saa(sample, risk)
    elif args.approach == "wdroa":
        res = solve_wdroa(sample, risk, amb)
    elif args.approach == "wdros":
        res = solve_wdros(sample, risk, amb, method=args.method)
    else:
        res = solve_variance_wdroa_linear(sample, amb)

    out = {"approach": args.approach, "status": res.status.value, "eps": args.eps,
           "objective": _json_float(res.optimal_value), "lambda_star": _json_float(res.lambda_star),
           "x": None, "tau": None, "iterations": res.solver_iterations}
    if res.ok:
        out["x"] = [float(v) for v in res.decision.x]
        out["tau"] = res.decision.tau
    _emit(out)
    print(f"{args.approach}: status={res.status.value} objective={res.optimal_value:.10g}", file=sys.stderr)
    if res.ok:
        for j, v in enumerate(res.decision.x, start=1):
            print(f"  x_{j:<3d} {v: .8f}", file=sys.stderr)
        print(f"  tau   {res.decision.tau: .8f}", file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_SOLVER


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DDRO_THREADS")
    if env is None:
        return 1
    try:
        val = int(env)
    except ValueError:
        raise ConfigError(f"DDRO_THREADS must be a positive integer, got {env!r}") from None
    if val < 1:
        raise ConfigError(f"DDRO_THREADS must be a positive integer, got {env!r}")
    return val


def _eps_grid(args) -> np.ndarray:
    if args.eps_points == 1:
        return np.array([args.eps_min])
    if not 0 < args.eps_min < args.eps_max:
        raise ConfigError("need 0 < --eps-min < --eps-max for a log-spaced grid")
    return np.logspace(math.log10(args.eps_min), math.log10(args.eps_max), args.eps_points)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_records(path: Path, records: Sequence[bench.Record], m: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*RECORD_COLUMNS, *(f"x_{j + 1}" for j in range(m))])
        for r in records:
            w.writerow([_fmt(r.eps), r.run, r.approach, r.status.value, _fmt(r.j_hat),
                        _fmt(r.j_oos_portfolio), _fmt(r.j_oos_comprehensive), _fmt(r.tau_hat),
                        _fmt(r.tau_star), _fmt(r.lambda_star), *(_fmt(v) for v in r.portfolio)])


def write_summary(path: Path, rows: Sequence[bench.SummaryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([row.approach if c == "approach" else _fmt(getattr(row, c))
                        for c in SUMMARY_COLUMNS])


def write_figures(out: Path, report: bench.ExperimentReport) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "ddro"
    labels = {"S": "standard ball", "A": "decision-dependent ball"}
    colors = {"S": "tab:blue", "A": "tab:orange"}

    def series(approach, attrs):
        rows = [r for r in report.summaries if r.approach == approach]
        return np.array([r.eps for r in rows]), [np.array([getattr(r, a) for r in rows]) for a in attrs]

    def finish(fig, ax, name, ylabel):
        ax.set_xscale("log")
        ax.set_xlabel("Wasserstein radius")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / name, format="svg", metadata={"Date": None})
        plt.close(fig)

    for kind, name in (("portfolio", FIGURES[0]), ("comprehensive", FIGURES[1])):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        twin = ax.twinx()
        for a in ("S", "A"):
            eps, (mean, lo, hi, rel) = series(a, [f"mean_oos_{kind}", f"q20_oos_{kind}",
                                                  f"q80_oos_{kind}", f"reliability_{kind}"])
            if eps.size == 0:
                continue
            ax.plot(eps, mean, color=colors[a], linestyle="--", label=f"{labels[a]}: out-of-sample")
            ax.fill_between(eps, lo, hi, color=colors[a], alpha=0.2)
            twin.plot(eps, rel, color=colors[a], label=f"{labels[a]}: reliability")
        twin.set_ylim(-0.02, 1.02)
        twin.set_ylabel("reliability")
        ax.legend(loc="upper left", fontsize=8)
        finish(fig, ax, name, f"{kind} out-of-sample objective")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for a in ("S", "A"):
        eps, (mean, lo, hi) = series(a, ["mean_tau_diff", "q20_tau_diff", "q80_tau_diff"])
        if eps.size:
            ax.plot(eps, mean, color=colors[a], label=labels[a])
            ax.fill_between(eps, lo, hi, color=colors[a], alpha=0.2)
    ax.legend(loc="upper left", fontsize=8)
    finish(fig, ax, FIGURES[2], "|tau_hat - VaR of x_hat|")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    try:
        stats = bench.portfolio_difference_stats(bench._complete(report.records))
    except bench.UnpairedRecords:
        stats = {}
    if stats:
        eps = np.array(sorted(stats))
        mean, lo, hi = (np.array([stats[e][k] for e in eps]) for k in range(3))
        ax.plot(eps, mean, color="tab:green", label="mean")
        ax.fill_between(eps, lo, hi, color="tab:green", alpha=0.2, label="20%-80% quantiles")
        ax.legend(loc="upper right", fontsize=8)
    finish(fig, ax, FIGURES[3], "||x_S - x_A||_inf")


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None


def _print_summary_table(rows: Sequence[bench.SummaryRow]) -> None:
    head = f"{'eps':>10} {'appr':>4} {'j_hat':>10} {'oos_port':>10} {'oos_comp':>10} {'rel_p':>6} {'rel_c':>6} {'tau_diff':>9}"
    print(head, file=sys.stderr)
    for r in rows:
        print(f"{r.eps:10.3e} {r.approach:>4} {r.mean_j_hat:10.4f} {r.mean_oos_portfolio:10.4f} "
              f"{r.mean_oos_comprehensive:10.4f} {r.reliability_portfolio:6.2f} "
              f"{r.reliability_comprehensive:6.2f} {r.mean_tau_diff:9.4f}", file=sys.stderr)


def cmd_sweep(args) -> int:
    support = _support(args.support)
    risk = _risk(args)
    grid = _eps_grid(args)
    workers = _threads(args)
    # reject unsupported balls before the long run starts
    check_portfolio_ambiguity(AmbiguitySpec(args.p, args.q, 0.0, support))
    _check_writable(args.out)

    model = _model(args.m, args.support)
    eval_sample = bench.evaluation_sample(model, args.n_eval, args.seed)
    trainer = bench.SyntheticTrainer(model, args.n, args.seed)

    def progress(done, total):
        print(f"\rrun {done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = bench.epsilon_sweep(trainer, grid, args.runs, eval_sample, risk, args.p, args.q,
                                     support, workers=workers, progress=progress)
    write_records(args.out / "records.csv", report.records, args.m)
    write_summary(args.out / "summary.csv", report.summaries)
    write_figures(args.out, report)
    _print_summary_table(report.summaries)
    over_budget = report.failure_rate > FAILURE_BUDGET
    _emit({"out": str(args.out), "solves": report.n_solves, "failures": report.n_failures,
           "failure_rate": report.failure_rate, "status": "failed" if over_budget else "ok"})
    if report.n_failures:
        print(f"{report.n_failures} of {report.n_solves} solves failed", file=sys.stderr)
    return EXIT_SOLVER if over_budget else EXIT_OK


def cmd_gen_data(args) -> int:
    if args.m < 1 or args.n < 1:
        raise ConfigError("--m and --n must be positive")
    sample = bench.generate_returns(_model(args.m, args.support), args.n, seeded_rng(args.seed))
    try:
        write_scenarios_csv(sample, args.out)
    except OSError as exc:
        raise ConfigError(f"cannot write {args.out}: {exc}") from None
    _emit({"out": str(args.out), "n": args.n, "m": args.m, "seed": args.seed})
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"solve": cmd_solve, "sweep": cmd_sweep, "gen-data": cmd_gen_data}[args.command]
    try:
        return handler(args)
    except (ConfigError, DDROError, ValueError) as exc:
        print(f"ddro: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
