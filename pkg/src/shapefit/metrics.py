"""Gauge-invariant evaluation: RFE, exact-recovery classification, aggregates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import GenParams, PointCloud

# RFE below this counts as exact recovery.
EXACT_RFE_THRESHOLD = 1e-9


def _points(x) -> np.ndarray:
    return x.points if isinstance(x, PointCloud) else np.asarray(x, float)


def rfe(truth, recovered) -> float:
    """Relative Frobenius error between two location sets.

    Both clouds are centered at their centroid and normalized to unit
    Frobenius norm, removing the global translation and scale; the result
    is the Frobenius distance between the normalized matrices, in [0, 2].
    Symmetric, and invariant under ``apply_gauge`` of either argument.
    """
    A = _points(truth)
    B = _points(recovered)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    if na == 0 or nb == 0:
        raise ValueError("cloud has zero Frobenius norm after centering")
    return min(2.0, float(np.linalg.norm(A / na - B / nb)))


@dataclass(frozen=True)
class TrialSummary:
    """One solved trial; ``exact`` derives from the RFE threshold."""

    algo: str
    n: int
    rfe: float
    iterations: int
    wall_seconds: float
    gen_params: GenParams | None = None

    def __post_init__(self):
        if self.rfe < 0:
            raise ValueError("rfe must be nonnegative")

    @property
    def exact(self) -> bool:
        return self.rfe < EXACT_RFE_THRESHOLD


@dataclass(frozen=True)
class SummaryStats:
    mean_rfe: float
    median_rfe: float
    exact_fraction: float
    mean_seconds: float
    trials: int


def summarize(trials: list[TrialSummary]) -> SummaryStats:
    """Aggregate a nonempty list of trials."""
    if not trials:
        raise ValueError("no trials to summarize")
    rfes = np.array([t.rfe for t in trials])
    return SummaryStats(
        mean_rfe=float(rfes.mean()),
        median_rfe=float(np.median(rfes)),
        exact_fraction=float(np.mean([t.exact for t in trials])),
        mean_seconds=float(np.mean([t.wall_seconds for t in trials])),
        trials=len(trials),
    )


TRIAL_CSV_HEADER = ["algo", "n", "p", "q", "sigma", "seed", "rfe", "exact",
                    "iters", "seconds"]


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_trials_csv(trials: list[TrialSummary], fh) -> None:
    """Write the per-trial log (floats at 17 significant digits)."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRIAL_CSV_HEADER)
    for t in trials:
        gp = t.gen_params
        writer.writerow([
            t.algo,
            t.n,
            _g17(gp.p) if gp else "",
            _g17(gp.q) if gp else "",
            _g17(gp.sigma) if gp else "",
            gp.seed if gp else "",
            _g17(t.rfe),
            int(t.exact),
            t.iterations,
            _g17(t.wall_seconds),
        ])
