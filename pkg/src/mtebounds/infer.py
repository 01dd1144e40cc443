"""Percentile bootstrap bands for curves evaluated on a grid."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from .bounds import theta1_band
from .core import GridSpec, ObservationTable, as_grid
from .errors import FailureRateError, MteBoundsError, ParameterError
from .export import frame_to_csv
from .liv import fit_outcome_rf, fit_ps, liv_curve
from .simulate import worker_count

MAX_FAILURE_SHARE = 0.05


@dataclass(frozen=True)
class LivEstimator:
    """Picklable estimator: fit propensity and reduced form, return a curve.

    ``band`` selects the lower or upper end of the sign-split band at
    sensitivity ``c`` instead of the curve itself.
    """

    target: str = "t"
    degree_ps: int = 2
    degree_mte: int = 1
    band: str | None = None
    c: float = 1.0

    def __call__(self, table: ObservationTable, grid: GridSpec):
        ps = fit_ps(table, self.target, self.degree_ps)
        rf = fit_outcome_rf(table, (self.degree_ps, self.degree_mte))
        curve = liv_curve(rf, ps, grid)
        if self.band is None:
            return curve
        band = theta1_band(curve, self.c)
        return curve.with_values(band.lower if self.band == "lower" else band.upper)


@dataclass(frozen=True, eq=False)
class BootBand:
    """Pointwise percentile band; ``replicates`` keeps the draws for other levels."""

    z: np.ndarray
    x: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    B: int
    failed: int
    unit: str
    replicates: np.ndarray = field(repr=False)
    pointwise: bool = True

    def at_level(self, level: float) -> "BootBand":
        lo, hi = _percentiles(self.replicates, level)
        return BootBand(self.z, self.x, self.estimate, lo, hi, level, self.B, self.failed, self.unit, self.replicates)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.z, "x": self.x, "lower": self.lower, "estimate": self.estimate, "upper": self.upper})

    def to_csv(self, path=None) -> str:
        return frame_to_csv(self.to_frame(), path)


def _percentiles(reps, level):
    if not 0 < level < 1:
        raise ParameterError(f"level must be in (0, 1), got {level!r}")
    alpha = (1 - level) / 2
    return np.quantile(reps, alpha, axis=0), np.quantile(reps, 1 - alpha, axis=0)


def _values(out) -> np.ndarray:
    vals = getattr(out, "values", out)
    return np.asarray(vals, dtype=float).ravel()


def resample_index(table: ObservationTable, rng: np.random.Generator, unit: str, cluster: str = "x") -> np.ndarray:
    """Row indices of one bootstrap draw (rows, or whole clusters)."""
    if unit == "row":
        return rng.integers(0, table.n, size=table.n)
    labels, codes = np.unique(table.column(cluster), return_inverse=True)
    members = np.split(np.argsort(codes, kind="stable"), np.cumsum(np.bincount(codes))[:-1])
    pick = rng.integers(0, labels.size, size=labels.size)
    return np.concatenate([members[k] for k in pick])


def _draw(args):
    table, estimator, grid, seed, start, stop, unit, cluster, size = args
    out = []
    for b in range(start, stop):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(b,)))
        idx = resample_index(table, rng, unit, cluster)
        try:
            vals = _values(estimator(table.take(idx), grid))
        except (MteBoundsError, np.linalg.LinAlgError):
            out.append(None)
            continue
        out.append(vals if vals.size == size and np.all(np.isfinite(vals)) else None)
    return out


def bootstrap_bands(
    table: ObservationTable,
    estimator: Callable,
    grid,
    B: int = 1000,
    level: float = 0.90,
    unit: str = "row",
    seed: int = 0,
    *,
    cluster: str = "x",
    workers: int | None = None,
) -> BootBand:
    """Pointwise percentile bootstrap band.

    Parameters
    ----------
    estimator : callable
        ``estimator(table, grid)`` returning a LivCurve or an array of values
        on the grid. Must be picklable when ``workers > 1``.
    unit : {"row", "cluster"}
        Pairs bootstrap over rows, or resampling of whole clusters defined by
        the ``cluster`` column.
    seed : int
        Replicate ``b`` uses a generator seeded by (seed, b), so results do
        not depend on the number of workers.

    Raises
    ------
    FailureRateError
        More than 5% of the refits failed.
    """
    if B < 1:
        raise ParameterError("B must be at least 1")
    if unit not in ("row", "cluster"):
        raise ParameterError(f"unit must be 'row' or 'cluster', got {unit!r}")
    _percentiles(np.zeros((1, 1)), level)
    grid = as_grid(grid)
    point = estimator(table, grid)
    estimate = _values(point)
    z = np.asarray(getattr(point, "z", grid.z))
    x = np.asarray(getattr(point, "x", np.full(estimate.size, "")))
    nw = worker_count(workers)
    if nw == 1:
        draws = _draw((table, estimator, grid, seed, 0, B, unit, cluster, estimate.size))
    else:
        cuts = np.linspace(0, B, min(B, 4 * nw) + 1).astype(int)
        jobs = [(table, estimator, grid, seed, int(a), int(b), unit, cluster, estimate.size)
                for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=nw) as pool:
            draws = [d for block in pool.map(_draw, jobs) for d in block]
    ok = [d for d in draws if d is not None]
    failed = B - len(ok)
    if failed > MAX_FAILURE_SHARE * B:
        raise FailureRateError(f"{failed} of {B} bootstrap refits failed")
    reps = np.stack(ok)
    lo, hi = _percentiles(reps, level)
    return BootBand(z, x, estimate, lo, hi, level, B, failed, unit, reps)
