"""Benchmark command line: run an operation over seeded trials and report JSON.

    kdelinalg <command> [--input PATH | --gen SPEC] --eps E --backend B
              --seed S --trials T [--oracle] [--strict] [--out PATH]

Exit status: 0 on success, 1 when ``--strict`` and some trial failed its
contract, 2 on argument or input errors, 3 when an exact oracle is asked for
more points than its cap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels, kernelsum, linalg, spectral
from . import kde as kde_mod
from .data import ParseError, generate, ingest, parse_gen_spec, write_csv
from .kernels import CapacityError, KernelFamily, KernelSpec

COMMANDS = ("mvp", "matmul", "quadform", "topeig", "sum", "estimator", "gen", "adversary")
ADVERSARY_MODES = ("stagnation", "iteration-lb", "signed")
SLACK = 1e-12
QUADFORM_C = 10  # contract constant c in [v'Kv, (1 + c eps) v'Kv]


@dataclass
class ExperimentConfig:
    command: str
    kernel: str = KernelFamily.GAUSSIAN.value
    bandwidth: float = 1.0
    rq_beta: float = 1.0
    eps: float = 0.2
    backend: str = "sampling"
    seed: int = 0
    trials: int = 1
    input_path: str | None = None
    gen: str | None = None
    oracle: bool = False
    strict: bool = False
    output_path: str | None = None
    points_out: str | None = None
    vector: str = "random"
    cols: int = 5
    mu: float = 0.01
    queries: int = 0
    median: bool = False
    mode: str = "iteration-lb"
    n: int = 10_000
    delta: float | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.backend not in ("exact", "sampling"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.input_path and self.gen:
            raise ValueError("give at most one of --input and --gen")
        if self.command != "adversary" and not (self.input_path or self.gen):
            raise ValueError("a point set is required: pass --input PATH or --gen SPEC")
        if self.command == "gen" and not self.gen:
            raise ValueError("gen needs --gen SPEC")

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec(KernelFamily(self.kernel), self.bandwidth, self.rq_beta)


@dataclass
class TrialResult:
    trial: int
    seed: int
    estimate: float | None = None
    oracle: float | None = None
    relative_error: float | None = None
    wall_time_ms: float = 0.0
    kde_work: int = 0
    passed: bool = False
    details: dict = field(default_factory=dict)


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _load_points(cfg: ExperimentConfig):
    if cfg.input_path:
        return ingest(cfg.input_path)
    kind, params = parse_gen_spec(cfg.gen)
    return generate(kind, params, cfg.seed, cfg.spec)


def _input_vector(cfg: ExperimentConfig, n: int, seed: int) -> np.ndarray:
    if cfg.vector == "uniform":
        return np.full(n, 1 / math.sqrt(n))
    if cfg.vector == "random":
        v = np.abs(np.random.default_rng([seed, 0x56]).normal(size=n))
        return v / np.linalg.norm(v)
    from pathlib import Path

    values = []
    for lineno, line in enumerate(Path(cfg.vector).read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                values.append(float(line))
            except ValueError:
                raise ParseError(f"not a number: {line.strip()!r}", lineno) from None
    v = np.array(values)
    if v.size != n:
        raise ValueError(f"vector file has {v.size} entries, expected {n}")
    return v


def _rel(est: float, ref: float) -> float:
    return abs(est - ref) / abs(ref) if ref else abs(est - ref)


# Commands: each returns a TrialResult without timing filled in --------------


def _run_mvp(cfg, X, seed, res):
    y = _input_vector(cfg, X.n, seed)
    out = linalg.nonneg_mvp(cfg.spec, X, y, cfg.eps, cfg.backend, seed)
    res.estimate = float(np.linalg.norm(out.z))
    res.kde_work = out.total_work
    res.details = {"buckets": len(out.buckets), "b": out.b, "all_dropped": out.all_dropped}
    res.passed = bool(np.all(out.z >= 0))
    if cfg.oracle:
        Ky = kernels.exact_matvec(cfg.spec, X, y)
        err = out.z - Ky
        res.oracle = float(np.linalg.norm(Ky))
        res.relative_error = float(np.linalg.norm(err) / res.oracle)
        res.details["min_error"] = float(err.min())
        res.passed = res.relative_error <= cfg.eps and err.min() >= -SLACK


def _run_matmul(cfg, X, seed, res):
    A = np.abs(np.random.default_rng([seed, 0x41]).normal(size=(X.n, cfg.cols)))
    B, work = linalg.kernel_matmul(cfg.spec, X, A, cfg.eps, cfg.backend, seed)
    res.estimate = float(np.linalg.norm(B))
    res.kde_work = work
    res.details = {"cols": cfg.cols}
    res.passed = bool(np.all(B >= 0))
    if cfg.oracle:
        KA = kernels.kernel_matrix(cfg.spec, X) @ A
        res.oracle = float(np.linalg.norm(KA))
        res.relative_error = float(np.linalg.norm(B - KA) / res.oracle)
        res.passed = res.relative_error <= cfg.eps and (B - KA).min() >= -SLACK


def _run_quadform(cfg, X, seed, res):
    v = _input_vector(cfg, X.n, seed)
    value, work = linalg.quadform(cfg.spec, X, v, cfg.eps, cfg.backend, seed)
    res.estimate, res.kde_work = value, work
    res.passed = math.isfinite(value) and value >= 0
    if cfg.oracle:
        exact = float(v @ kernels.exact_matvec(cfg.spec, X, v))
        res.oracle = exact
        res.relative_error = _rel(value, exact)
        res.passed = exact * (1 - SLACK) <= value <= (1 + QUADFORM_C * cfg.eps) * exact


def _run_topeig(cfg, X, seed, res):
    pair = spectral.top_eigenpair(cfg.spec, X, cfg.eps, backend=cfg.backend, seed=seed)
    res.estimate = pair.lam
    res.kde_work = pair.total_work
    res.details = {"iterations": pair.iterations, "best_step": pair.best_step}
    res.passed = abs(np.linalg.norm(pair.u) - 1) <= 1e-12 and bool(np.all(pair.u >= 0))
    if cfg.oracle:
        lam1, _ = kernels.exact_top_eig(cfg.spec, X)
        rayleigh = float(pair.u @ kernels.exact_matvec(cfg.spec, X, pair.u)) / lam1
        res.oracle = lam1
        res.relative_error = _rel(pair.lam, lam1)
        res.details["rayleigh_ratio"] = rayleigh
        e = cfg.eps
        res.passed = (rayleigh >= 1 - 5 * e / 8
                      and (1 - e / 2) * lam1 <= pair.lam <= (1 + e / 8) * lam1)


def _run_sum(cfg, X, seed, res):
    if cfg.median:
        value, runs = kernelsum.kernel_sum_median(cfg.spec, X, cfg.eps, seed, cfg.backend)
        res.kde_work = sum(r.total_work for r in runs)
        res.details = {"runs": len(runs)}
    else:
        est = kernelsum.kernel_sum(cfg.spec, X, cfg.eps, seed, cfg.backend)
        value = est.value
        res.kde_work = est.total_work
        res.details = {"m": est.m, "heavy_count": est.heavy_count, "mprime": est.mprime,
                       "q1": est.q1, "q2": est.q2}
    res.estimate = value
    res.passed = value >= X.n * (1 - cfg.eps)
    if cfg.oracle:
        exact = kernels.exact_sum(cfg.spec, X)
        res.oracle = exact
        res.relative_error = _rel(value, exact)
        res.passed = res.relative_error <= cfg.eps


def _run_estimator(cfg, X, seed, res):
    params = kde_mod.KdeParams(cfg.eps, cfg.mu)
    est = kde_mod.build(cfg.backend, cfg.spec, X, params, seed)
    Q = X.coords if cfg.queries <= 0 else X.coords[: cfg.queries]
    values, per_query = est.query_many(Q, key=0)
    res.estimate = float(values.mean())
    res.kde_work = per_query * len(Q)
    res.passed = bool(np.all(values >= 0))
    res.details = {"queries": len(Q), "samples_per_query": per_query}
    if cfg.oracle:
        kernels._check_cap(X.n, None)
        truth = kde_mod.ExactKde(cfg.spec, X, params).query_many(Q)[0]
        bad = (values < truth - SLACK) | (values > (1 + cfg.eps) * truth + cfg.mu + SLACK)
        res.oracle = float(truth.mean())
        res.relative_error = _rel(res.estimate, res.oracle)
        res.details["violation_rate"] = float(bad.mean())
        res.passed = bad.mean() <= 0.01


def _run_gen(cfg, X, seed, res):
    res.estimate = float(X.n)
    res.details = {"n": X.n, "d": X.d, "points_out": cfg.points_out}
    if cfg.points_out:
        write_csv(X, cfg.points_out)
    res.passed = True


def _run_adversary(cfg, seed, res):
    eps = cfg.eps
    if cfg.mode == "stagnation":
        delta = 1.01 * eps / (1 - eps) if cfg.delta is None else cfg.delta
        legal = spectral.adversary_stagnation_check(cfg.n, eps, delta)
        ratio = spectral.stagnation_ratio(cfg.n, eps)
        res.estimate, res.oracle = float(legal), float(ratio <= delta)
        res.details = {"legal": legal, "ratio": ratio, "delta": delta}
    elif cfg.mode == "iteration-lb":
        delta = eps if cfg.delta is None else cfg.delta
        steps = spectral.adversary_iteration_lb_check(cfg.n, eps, delta)
        closed = spectral.iteration_lb_closed_form(cfg.n, eps, delta)
        res.estimate, res.oracle = float(steps), float(closed)
        res.details = {"stagnation_steps": steps, "closed_form": closed, "delta": delta}
    else:
        delta = 0.1 if cfg.delta is None else cfg.delta
        try:
            res.estimate = spectral.adversary_signed_noise_demo(cfg.n, delta)
            res.oracle = 0.0
            res.details = {"legal": True, "delta": delta}
        except spectral.IllegalMoveError as exc:
            res.details = {"legal": False, "delta": delta, "reason": str(exc)}
    res.relative_error = None if res.estimate is None else abs(res.estimate - res.oracle)
    res.passed = res.relative_error == 0.0


_DISPATCH = {"mvp": _run_mvp, "matmul": _run_matmul, "quadform": _run_quadform, "topeig": _run_topeig,
             "sum": _run_sum, "estimator": _run_estimator, "gen": _run_gen}


def run(cfg: ExperimentConfig) -> dict:
    """Execute every trial and assemble the report dictionary."""
    X = None if cfg.command == "adversary" else _load_points(cfg)
    if cfg.oracle and X is not None and cfg.command != "gen":
        kernels._check_cap(X.n, None)
    trials = []
    for t in range(cfg.trials):
        seed = trial_seed(cfg.seed, t)
        res = TrialResult(trial=t, seed=seed)
        start = time.perf_counter()
        if cfg.command == "adversary":
            _run_adversary(cfg, seed, res)
        else:
            _DISPATCH[cfg.command](cfg, X, seed, res)
        res.wall_time_ms = (time.perf_counter() - start) * 1e3
        res.passed = bool(res.passed)
        trials.append(asdict(res))
    passes = sum(tr["passed"] for tr in trials)

    def med(key):
        vals = [tr[key] for tr in trials if tr[key] is not None]
        return float(np.median(vals)) if vals else None

    config = asdict(cfg)
    return {
        "command": cfg.command,
        "config": config,
        "n": None if X is None else X.n,
        "d": None if X is None else X.d,
        "trials": trials,
        "aggregate": {
            "trials": cfg.trials,
            "passes": passes,
            "success_rate": passes / cfg.trials,
            "median_estimate": med("estimate"),
            "median_relative_error": med("relative_error"),
            "median_wall_time_ms": med("wall_time_ms"),
            "median_kde_work": med("kde_work"),
        },
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdelinalg", description="KDE-driven kernel matrix algorithms with exact oracles.")
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", dest="input_path", metavar="PATH", help="points, one per line (CSV or whitespace)")
    src.add_argument("--gen", metavar="SPEC", help="generator spec, e.g. gaussian_blobs:n=500,d=5")
    p.add_argument("--eps", type=float, default=None, help="precision (default 0.2; 0.1 for adversary)")
    p.add_argument("--backend", choices=("exact", "sampling"), default="sampling")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--oracle", action="store_true", help="compare against the exact brute-force answer")
    p.add_argument("--strict", action="store_true", help="exit 1 if any trial fails its contract")
    p.add_argument("--out", dest="output_path", metavar="PATH", help="write the JSON report here (default stdout)")
    k = p.add_argument_group("kernel")
    k.add_argument("--kernel", choices=[f.value for f in KernelFamily], default=KernelFamily.GAUSSIAN.value)
    k.add_argument("--bandwidth", type=float, default=1.0, help="bandwidth scale s")
    k.add_argument("--rq-beta", type=float, default=1.0)
    c = p.add_argument_group("command options")
    c.add_argument("--vector", default="random", help="mvp/quadform input: random, uniform or a file path")
    c.add_argument("--cols", type=int, default=5, help="matmul: columns of the random non-negative matrix")
    c.add_argument("--mu", type=float, default=0.01, help="estimator: additive error")
    c.add_argument("--queries", type=int, default=0, help="estimator: number of query points (0 = all)")
    c.add_argument("--median", action="store_true", help="sum: median of O(log n) independent runs")
    c.add_argument("--points-out", metavar="PATH", help="gen: write the generated points as CSV")
    c.add_argument("--mode", choices=ADVERSARY_MODES, default="iteration-lb")
    c.add_argument("--n", type=int, default=10_000, help="adversary: matrix size")
    c.add_argument("--delta", type=float, default=None, help="adversary: noise budget")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.eps is None:
        args.eps = 0.1 if args.command == "adversary" else 0.2
    try:
        cfg = ExperimentConfig(**vars(args))
        report = run(cfg)
    except CapacityError as exc:
        print(f"kdelinalg: {exc}", file=sys.stderr)
        return 3
    except (ParseError, ValueError, OSError) as exc:
        print(f"kdelinalg: {exc}", file=sys.stderr)
        return 2
    text = dumps(report)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.strict and report["aggregate"]["passes"] < cfg.trials:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
