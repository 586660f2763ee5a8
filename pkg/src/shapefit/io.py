"""Plain-text instance and result files.

Instance format (line oriented, LF newlines, floats printed with 17
significant digits so values round-trip bit-exactly)::

    shapefit-instance v1 d=<d> n=<n> m=<m>
    e <i> <j> <v_1> ... <v_d>          (m lines, canonical i < j)
    t <i> <x_1> ... <x_d>              (optional, n lines of ground truth)
    bad <idx> <idx> ...                (optional, corrupted edge indices)
    gen p=<p> q=<q> sigma=<s> seed=<u64>   (optional)

Result format::

    shapefit-result v1
    t <i> <x_1> ... <x_d>              (n lines)
    meta iterations=<k> primal=<r> dual=<s> objective=<o> \
         wall_seconds=<w> rfe=<r|NA> converged=<0|1>
"""

from __future__ import annotations

import numpy as np

from .model import (
    DirectionGraph,
    GenParams,
    PointCloud,
    ProblemInstance,
    SolveReport,
)

INSTANCE_HEADER = "shapefit-instance v1"
RESULT_HEADER = "shapefit-result v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_instance(inst: ProblemInstance) -> str:
    g = inst.graph
    lines = [f"{INSTANCE_HEADER} d={g.dimension} n={g.n} m={g.m}"]
    for (i, j), v in zip(g.edges, g.directions):
        lines.append(f"e {i} {j} " + " ".join(_fmt(c) for c in v))
    if inst.truth is not None:
        for i, x in enumerate(inst.truth.points):
            lines.append(f"t {i} " + " ".join(_fmt(c) for c in x))
    if inst.corrupted_edges is not None:
        lines.append(("bad " + " ".join(str(k) for k in inst.corrupted_edges)).rstrip())
    if inst.gen_params is not None:
        gp = inst.gen_params
        lines.append(
            f"gen p={_fmt(gp.p)} q={_fmt(gp.q)} sigma={_fmt(gp.sigma)} seed={gp.seed}"
        )
    return "\n".join(lines) + "\n"


def write_instance(inst: ProblemInstance, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_instance(inst))


def _parse_kv(token: str, lineno: int) -> tuple[str, str]:
    if "=" not in token:
        raise ValueError(f"line {lineno}: expected key=value, got {token!r}")
    key, _, val = token.partition("=")
    return key, val


def read_instance(path) -> ProblemInstance:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(INSTANCE_HEADER):
        raise ValueError(f"{path}: not a {INSTANCE_HEADER} file")
    header = dict(_parse_kv(t, 1) for t in lines[0].split()[2:])
    d, n, m = int(header["d"]), int(header["n"]), int(header["m"])

    edges = np.zeros((m, 2), dtype=np.int64)
    dirs = np.zeros((m, d))
    truth = np.full((n, d), np.nan)
    have_truth = False
    bad = None
    gen = None
    k = 0
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        tag = tokens[0]
        if tag == "e":
            if len(tokens) != 3 + d:
                raise ValueError(f"line {lineno}: edge line needs {3 + d} tokens")
            if k >= m:
                raise ValueError(f"line {lineno}: more than m={m} edges")
            edges[k] = (int(tokens[1]), int(tokens[2]))
            dirs[k] = [float(t) for t in tokens[3:]]
            k += 1
        elif tag == "t":
            i = int(tokens[1])
            if len(tokens) != 2 + d or not 0 <= i < n:
                raise ValueError(f"line {lineno}: bad ground-truth line")
            truth[i] = [float(t) for t in tokens[2:]]
            have_truth = True
        elif tag == "bad":
            bad = np.array([int(t) for t in tokens[1:]], dtype=np.int64)
        elif tag == "gen":
            kv = dict(_parse_kv(t, lineno) for t in tokens[1:])
            gen = GenParams(
                p=float(kv["p"]), q=float(kv["q"]),
                sigma=float(kv["sigma"]), seed=int(kv["seed"]),
            )
        else:
            raise ValueError(f"line {lineno}: unknown record {tag!r}")
    if k != m:
        raise ValueError(f"{path}: header says m={m} but found {k} edge lines")
    if have_truth and np.isnan(truth).any():
        raise ValueError(f"{path}: ground truth present but incomplete")

    graph = DirectionGraph(n=n, edges=edges, directions=dirs)
    return ProblemInstance(
        graph=graph,
        truth=PointCloud(truth) if have_truth else None,
        corrupted_edges=bad,
        gen_params=gen,
    )


def format_result(report: SolveReport) -> str:
    lines = [RESULT_HEADER]
    for i, x in enumerate(report.locations.points):
        lines.append(f"t {i} " + " ".join(_fmt(c) for c in x))
    rfe = "NA" if report.rfe is None else _fmt(report.rfe)
    lines.append(
        f"meta iterations={report.iterations}"
        f" primal={_fmt(report.final_primal_residual)}"
        f" dual={_fmt(report.final_dual_residual)}"
        f" objective={_fmt(report.objective)}"
        f" wall_seconds={_fmt(report.wall_seconds)}"
        f" rfe={rfe}"
        f" converged={int(report.converged)}"
    )
    return "\n".join(lines) + "\n"


def write_result(report: SolveReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_result(report))


def read_result(path) -> SolveReport:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != RESULT_HEADER:
        raise ValueError(f"{path}: not a {RESULT_HEADER} file")
    pts = []
    meta = None
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "t":
            pts.append([float(t) for t in tokens[2:]])
        elif tokens[0] == "meta":
            meta = dict(_parse_kv(t, lineno) for t in tokens[1:])
        else:
            raise ValueError(f"line {lineno}: unknown record {tokens[0]!r}")
    if meta is None:
        raise ValueError(f"{path}: missing meta line")
    return SolveReport(
        locations=PointCloud(np.array(pts)),
        iterations=int(meta["iterations"]),
        final_primal_residual=float(meta["primal"]),
        final_dual_residual=float(meta["dual"]),
        objective=float(meta["objective"]),
        wall_seconds=float(meta["wall_seconds"]),
        converged=bool(int(meta.get("converged", "1"))),
        rfe=None if meta.get("rfe", "NA") == "NA" else float(meta["rfe"]),
    )
