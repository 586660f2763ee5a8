"""Command-line harness: generate, solve, parameter sweeps, noise curves.

Sweep cells run ``trials`` seeded instances each; the per-trial seed is

    base_seed XOR blake2b-64("sweep:<algo>:<p_idx>:<q_idx>:<trial>")

(and analogously for noise curves with the sigma index), so any cell can
be reproduced in isolation.  Cells may execute in a process pool; output
rows are sorted by (algo, p, q) regardless of execution order, and CSV
floats are printed with 17 significant digits, so identical invocations
produce identical bytes apart from the timing columns.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import sys
from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig
from .generate import BipartiteSpec, GenConfig, generate, generate_bipartite
from .io import read_instance, write_instance, write_result
from .metrics import TrialSummary, summarize, write_trials_csv
from .model import GenParams
from .oracle import oracle_lud, oracle_shapefit
from .solvers import (
    DEFAULT_LUD_RELAXATION,
    KickConfig,
    solve_lud,
    solve_shapefit,
    solve_shapekick,
)

MASK64 = (1 << 64) - 1

ALGORITHMS = ("shapefit", "shapekick", "lud")

SWEEP_HEADER = "algo,n,p,q,sigma,mean_rfe,median_rfe,exact_frac,mean_seconds,error"
NOISE_HEADER = "algo,sigma,mean_rfe"


def hash64(label: str) -> int:
    """Stable 64-bit hash used to derive per-trial seeds."""
    digest = hashlib.blake2b(label.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def trial_seed(base_seed: int, tag: str, algo: str, i: int, j: int, trial: int) -> int:
    return (base_seed ^ hash64(f"{tag}:{algo}:{i}:{j}:{trial}")) & MASK64


def _g17(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SweepSpec:
    """A (p, q) grid of recovery experiments."""

    n: int
    p_grid: tuple[float, ...]
    q_grid: tuple[float, ...]
    sigma: float
    trials: int = 10
    base_seed: int = 0
    algos: tuple[str, ...] = ("shapefit",)
    max_iters: int = 20000

    def __post_init__(self):
        if not self.p_grid or not self.q_grid:
            raise ValueError("p and q grids must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for a in self.algos:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")


def _solve(algo: str, inst, max_iters: int):
    if algo == "shapefit":
        return solve_shapefit(inst, AdmmConfig(max_iters=max_iters))
    if algo == "shapekick":
        return solve_shapekick(inst, KickConfig())
    if algo == "lud":
        return solve_lud(inst, AdmmConfig(
            max_iters=max_iters, over_relaxation=DEFAULT_LUD_RELAXATION,
        ))
    raise ValueError(f"unknown algorithm {algo!r}")


def run_cell_trial(task):
    """One (cell, trial) solve; returns (key, TrialSummary | error string).

    Module-level so process pools can pickle it.
    """
    algo, n, p, q, sigma, seed, max_iters, key = task
    try:
        inst = generate(GenConfig(n=n, p=p, q=q, sigma=sigma, seed=seed))
        report = _solve(algo, inst, max_iters)
        return key, TrialSummary(
            algo=algo, n=n, rfe=report.rfe,
            iterations=report.iterations, wall_seconds=report.wall_seconds,
            gen_params=GenParams(p=p, q=q, sigma=sigma, seed=seed),
        )
    except Exception as exc:  # recorded per-row; the sweep continues
        return key, f"{type(exc).__name__}: {exc}"


def _run_tasks(tasks, workers: int):
    if workers <= 1:
        return [run_cell_trial(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell_trial, tasks, chunksize=1))


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[str]:
    """Execute the sweep; returns CSV lines (header included)."""
    tasks = []
    for algo in spec.algos:
        for pi, p in enumerate(spec.p_grid):
            for qi, q in enumerate(spec.q_grid):
                for t in range(spec.trials):
                    seed = trial_seed(spec.base_seed, "sweep", algo, pi, qi, t)
                    tasks.append((algo, spec.n, p, q, spec.sigma, seed,
                                  spec.max_iters, (algo, p, q)))
    results = _run_tasks(tasks, workers)

    cells: dict[tuple, list] = {}
    for key, res in results:
        cells.setdefault(key, []).append(res)

    lines = [SWEEP_HEADER]
    for algo, p, q in sorted(cells):
        trials = [r for r in cells[(algo, p, q)] if isinstance(r, TrialSummary)]
        errors = [r for r in cells[(algo, p, q)] if isinstance(r, str)]
        if trials:
            stats = summarize(trials)
            mean_rfe, median_rfe = stats.mean_rfe, stats.median_rfe
            exact_frac, mean_sec = stats.exact_fraction, stats.mean_seconds
        else:
            mean_rfe = median_rfe = exact_frac = mean_sec = float("nan")
        err = "" if not errors else errors[0].replace(",", ";")
        lines.append(",".join([
            algo, str(spec.n), _g17(p), _g17(q), _g17(spec.sigma),
            _g17(mean_rfe), _g17(median_rfe), _g17(exact_frac),
            _g17(mean_sec), err,
        ]))
    return lines


def run_noise_curve(n: int, p: float, q: float, sigmas, trials: int,
                    base_seed: int, algos, max_iters: int = 20000,
                    workers: int = 1) -> list[str]:
    """Mean RFE per (algo, sigma); returns CSV lines (header included)."""
    tasks = []
    for algo in algos:
        for si, sigma in enumerate(sigmas):
            for t in range(trials):
                seed = trial_seed(base_seed, "noise", algo, si, 0, t)
                tasks.append((algo, n, p, q, float(sigma), seed,
                              max_iters, (algo, si, float(sigma))))
    results = _run_tasks(tasks, workers)

    cells: dict[tuple, list] = {}
    for key, res in results:
        cells.setdefault(key, []).append(res)

    lines = [NOISE_HEADER]
    for algo, si, sigma in sorted(cells):
        trials_ok = [r for r in cells[(algo, si, sigma)]
                     if isinstance(r, TrialSummary)]
        mean_rfe = (summarize(trials_ok).mean_rfe if trials_ok else float("nan"))
        lines.append(",".join([algo, _g17(sigma), _g17(mean_rfe)]))
    return lines


def _parse_floats(text: str) -> tuple[float, ...]:
    """Comma list of floats, or ``log:<lo>:<hi>:<count>`` for log spacing."""
    if text.startswith("log:"):
        _, lo, hi, count = text.split(":")
        vals = np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(count))
        return tuple(float(v) for v in vals)
    return tuple(float(t) for t in text.split(","))


def _read_config_tokens(path: str) -> list[str]:
    """key=value lines -> CLI tokens (later explicit flags still win)."""
    tokens = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            if not _:
                raise ValueError(f"config line without '=': {raw.strip()!r}")
            tokens += [f"--{key.strip()}", val.strip()]
    return tokens


def _admm_config(args, default_relax: float = 1.0) -> AdmmConfig:
    relax = args.over_relax if args.over_relax is not None else default_relax
    return AdmmConfig(
        rho0=args.rho0,
        max_iters=args.max_iters,
        eps_primal=args.eps_primal,
        eps_dual=args.eps_dual,
        over_relaxation=relax,
    )


def cmd_gen(args) -> int:
    if args.bipartite is not None:
        nc, ns, pc = args.bipartite
        spec = BipartiteSpec(int(nc), int(ns), float(pc))
        n = args.n if args.n is not None else spec.n_cameras + spec.n_structure
        cfg = GenConfig(n=n, p=args.p, q=args.q, sigma=args.sigma,
                        d=args.dim, seed=args.seed, bipartite=spec)
        inst = generate_bipartite(cfg)
    else:
        if args.n is None:
            raise ValueError("-n is required without --bipartite")
        cfg = GenConfig(n=args.n, p=args.p, q=args.q, sigma=args.sigma,
                        d=args.dim, seed=args.seed)
        inst = generate(cfg)
    write_instance(inst, args.out)
    bad = 0 if inst.corrupted_edges is None else len(inst.corrupted_edges)
    print(f"n={inst.graph.n} m={inst.graph.m} bad={bad}")
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    if args.algo == "shapekick":
        kcfg = KickConfig(
            rho0=args.rho0,
            kick_factor=args.kick_factor,
            max_kicks=args.max_kicks,
            phase_iters=args.phase_iters,
        )
        report = solve_shapekick(inst, kcfg)
    elif args.algo == "shapefit":
        report = solve_shapefit(inst, _admm_config(args))
    else:
        report = solve_lud(inst, _admm_config(args, DEFAULT_LUD_RELAXATION))
    if args.out:
        write_result(report, args.out)
    rfe_txt = "NA" if report.rfe is None else _g17(report.rfe)
    print(f"algo={args.algo} iters={report.iterations}"
          f" obj={_g17(report.objective)} rfe={rfe_txt}"
          f" seconds={report.wall_seconds:.3f}")
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        n=args.n,
        p_grid=_parse_floats(args.p_grid),
        q_grid=_parse_floats(args.q_grid),
        sigma=args.sigma,
        trials=args.trials,
        base_seed=args.seed,
        algos=tuple(args.algos.split(",")),
        max_iters=args.max_iters,
    )
    lines = run_sweep(spec, workers=args.workers)
    _write_lines(args.out, lines)
    print(f"wrote {len(lines) - 1} rows to {args.out}")
    return 0


def cmd_noise_curve(args) -> int:
    lines = run_noise_curve(
        n=args.n, p=args.p, q=args.q,
        sigmas=_parse_floats(args.sigmas),
        trials=args.trials, base_seed=args.seed,
        algos=tuple(args.algos.split(",")),
        max_iters=args.max_iters, workers=args.workers,
    )
    _write_lines(args.out, lines)
    print(f"wrote {len(lines) - 1} rows to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    inst = read_instance(args.instance)
    fn = oracle_shapefit if args.algo == "shapefit" else oracle_lud
    cloud, objective = fn(inst)
    line = f"algo={args.algo} obj={_g17(objective)}"
    if inst.truth is not None:
        from .metrics import rfe
        line += f" rfe={_g17(rfe(inst.truth, cloud))}"
    print(line)
    return 0


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _add_solver_flags(sub) -> None:
    sub.add_argument("--rho0", type=float, default=None)
    sub.add_argument("--max-iters", type=int, default=20000, dest="max_iters")
    sub.add_argument("--eps-primal", type=float, default=None, dest="eps_primal")
    sub.add_argument("--eps-dual", type=float, default=None, dest="eps_dual")
    sub.add_argument("--over-relax", type=float, default=None, dest="over_relax")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapefit",
        description="Location recovery from pairwise directions.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("gen", help="generate a synthetic instance file")
    g.add_argument("--config", default=None)
    g.add_argument("-n", "--n", type=int, default=None)
    g.add_argument("-p", "--p", type=float, default=0.5)
    g.add_argument("-q", "--q", type=float, default=0.0)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dim", type=int, default=3)
    g.add_argument("--bipartite", nargs=3, metavar=("NCAM", "NSTRUCT", "PROB"),
                   default=None)
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = subs.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--config", default=None)
    s.add_argument("--algo", choices=ALGORITHMS, default="shapefit")
    s.add_argument("-o", "--out", default=None)
    _add_solver_flags(s)
    s.add_argument("--kick-factor", type=float, default=10.0, dest="kick_factor")
    s.add_argument("--max-kicks", type=int, default=6, dest="max_kicks")
    s.add_argument("--phase-iters", type=int, default=500, dest="phase_iters")
    s.set_defaults(func=cmd_solve)

    w = subs.add_parser("sweep", help="grid of (p, q) recovery experiments")
    w.add_argument("--config", default=None)
    w.add_argument("--n", type=int, default=200)
    w.add_argument("--p-grid", default="0.25,0.5,0.75,1.0", dest="p_grid")
    w.add_argument("--q-grid", default="0,0.1,0.2,0.3,0.4,0.5", dest="q_grid")
    w.add_argument("--sigma", type=float, default=0.0)
    w.add_argument("--trials", type=int, default=10)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--algos", default="shapefit")
    w.add_argument("--max-iters", type=int, default=20000, dest="max_iters")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("-o", "--out", required=True)
    w.set_defaults(func=cmd_sweep)

    c = subs.add_parser("noise-curve", help="mean RFE as a function of sigma")
    c.add_argument("--config", default=None)
    c.add_argument("--n", type=int, default=200)
    c.add_argument("--p", type=float, default=0.5)
    c.add_argument("--q", type=float, default=0.3)
    c.add_argument("--sigmas", default="log:1e-10:1:6")
    c.add_argument("--trials", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--algos", default="shapefit,lud")
    c.add_argument("--max-iters", type=int, default=20000, dest="max_iters")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("-o", "--out", required=True)
    c.set_defaults(func=cmd_noise_curve)

    o = subs.add_parser("oracle", help="reference minimizer (small instances)")
    o.add_argument("instance")
    o.add_argument("--config", default=None)
    o.add_argument("--algo", choices=("shapefit", "lud"), default="shapefit")
    o.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()

    # a --config file supplies defaults; explicit flags override because
    # they come later in the token stream
    if argv and "--config" in argv:
        idx = argv.index("--config")
        try:
            tokens = _read_config_tokens(argv[idx + 1])
        except (OSError, ValueError, IndexError) as exc:
            print(f"error: bad config file: {exc}", file=sys.stderr)
            return 1
        head, tail = argv[:1], argv[1:]
        argv = head + tokens + tail

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
