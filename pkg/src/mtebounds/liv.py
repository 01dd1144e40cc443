"""Propensity scores, the outcome reduced form and local-IV curves.

The propensity model is separable (group intercepts, common polynomial
slopes), so its derivative in ``z`` does not depend on the group. The
outcome reduced form carries group-specific coefficients up to the
propensity degree and common coefficients above it, which is what a
polynomial-in-the-propensity MTE model implies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P

from .core import GridSpec, ObservationTable, as_grid
from .errors import ParameterError, RankConditionError
from .export import dumps_json, frame_to_csv
from .regress import FePolyFit, fit_fe_poly, group_codes, lookup_codes

POOLED = "pooled"
KINDS = {"t": "mismeasured", "d": "benchmark"}


@dataclass(frozen=True, eq=False)
class PsFit:
    """Propensity score P(z, x) = gamma_x + gamma_1 z + ... + gamma_L z^L.

    Attributes
    ----------
    target : {"t", "d"}
    groups : ndarray
        Sorted group labels.
    intercepts : ndarray, shape (G,)
    slopes : ndarray, shape (L,)
    z_range : tuple of float
        Instrument range of the fitting sample.
    fitted, row_groups : ndarray, optional
        Fitted propensity and group label of every sample row, used for
        empirical distribution functions.
    """

    target: str
    groups: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray
    z_range: tuple
    fitted: np.ndarray | None = None
    row_groups: np.ndarray | None = None
    fit: FePolyFit | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", np.asarray(self.groups))
        object.__setattr__(self, "intercepts", np.asarray(self.intercepts, dtype=float))
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        if self.intercepts.shape != self.groups.shape:
            raise ParameterError("one intercept per group is required")
        if self.slopes.ndim != 1 or self.slopes.size < 1:
            raise ParameterError("propensity degree must be at least 1")

    @property
    def degree(self) -> int:
        return int(self.slopes.size)

    def level(self, z, x) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = lookup_codes(self.groups, np.broadcast_to(np.asarray(x), z.shape).ravel()).reshape(z.shape)
        return self.intercepts[g] + P.polyval(z, np.concatenate([[0.0], self.slopes]))

    def derivative(self, z) -> np.ndarray:
        return P.polyval(np.asarray(z, dtype=float), P.polyder(np.concatenate([[0.0], self.slopes])))

    def sample(self, x=None) -> np.ndarray:
        """Fitted propensities of the sample rows (optionally one group)."""
        if self.fitted is None:
            raise ParameterError("propensity fit carries no sample values")
        if x is None:
            return self.fitted
        return self.fitted[self.row_groups == x]


@dataclass(frozen=True, eq=False)
class RfFit:
    """Outcome reduced form E[y | z, x] as a polynomial per group.

    Attributes
    ----------
    coef : ndarray, shape (G, L*(K+1) + 1)
        Raw coefficients by group, lowest degree first.
    degrees : tuple of int
        (propensity degree L*, MTE degree K).
    group_weights : ndarray
        Sample share of every group, used for pooled curves.
    """

    groups: np.ndarray
    coef: np.ndarray
    degrees: tuple
    z_range: tuple
    group_weights: np.ndarray | None = None
    full_interaction: bool = False
    fit: FePolyFit | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", np.asarray(self.groups))
        object.__setattr__(self, "coef", np.atleast_2d(np.asarray(self.coef, dtype=float)))
        if self.coef.shape[0] != self.groups.size:
            raise ParameterError("one coefficient row per group is required")
        if self.group_weights is None:
            object.__setattr__(self, "group_weights", np.full(self.groups.size, 1.0 / self.groups.size))

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    def level(self, z, x) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = lookup_codes(self.groups, np.broadcast_to(np.asarray(x), z.shape).ravel()).reshape(z.shape)
        powers = z[..., None] ** np.arange(self.degree + 1)
        return np.sum(self.coef[g] * powers, axis=-1)

    def derivative(self, z, x) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if isinstance(x, str) and x == POOLED:
            return self.pooled_derivative(z)
        g = lookup_codes(self.groups, np.broadcast_to(np.asarray(x), z.shape).ravel()).reshape(z.shape)
        k = np.arange(1, self.degree + 1)
        powers = z[..., None] ** (k - 1)
        return np.sum(self.coef[g][..., 1:] * k * powers, axis=-1)

    def pooled_derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        der = np.stack([self.derivative(z, g) for g in self.groups])
        return np.tensordot(self.group_weights, der, axes=1)


def fit_ps(table: ObservationTable, target: str = "t", degree: int = 2, values=None) -> PsFit:
    """Propensity score of ``target`` on group intercepts and common powers of ``z``.

    ``values`` replaces the binary column by given probabilities (noise-free
    checks); ``target`` then only labels the result.
    """
    if target not in KINDS:
        raise ParameterError(f"propensity target must be 't' or 'd', got {target!r}")
    if degree < 1:
        raise ParameterError(f"propensity degree must be at least 1, got {degree}")
    fit = fit_fe_poly(table, target if values is None else values, degree, 0)
    return PsFit(
        target=target,
        groups=fit.groups,
        intercepts=fit.intercepts,
        slopes=fit.common,
        z_range=(float(table.z.min()), float(table.z.max())),
        fitted=fit.fitted,
        row_groups=table.x,
        fit=fit,
    )


def fit_outcome_rf(table: ObservationTable, degrees: tuple = (2, 1), full_interaction: bool = False) -> RfFit:
    """Outcome reduced form of total degree L*(K+1).

    Parameters
    ----------
    degrees : (int, int)
        Propensity degree ``L*`` and MTE polynomial degree ``K``. Powers up
        to ``L*`` get group-specific coefficients, higher ones are common
        unless ``full_interaction`` is set.
    """
    l_star, k = degrees
    if l_star < 1 or k < 0:
        raise ParameterError(f"need L* >= 1 and K >= 0, got {degrees}")
    j_max = l_star * (k + 1)
    fit = fit_fe_poly(table, "y", j_max, j_max if full_interaction else l_star)
    labels, codes = group_codes(table.x)
    weights = np.bincount(codes, minlength=labels.size) / table.n
    return RfFit(
        groups=fit.groups,
        coef=fit.coefficient_matrix(),
        degrees=(l_star, k),
        z_range=(float(table.z.min()), float(table.z.max())),
        group_weights=weights,
        full_interaction=full_interaction,
        fit=fit,
    )


@dataclass(frozen=True, eq=False)
class LivCurve:
    """Ratio of reduced-form to propensity derivatives on a grid.

    ``kind`` is ``"mismeasured"`` when the propensity is that of the observed
    treatment and ``"benchmark"`` when it is that of the true treatment.
    Rows are ordered group by group, then by ``z``.
    """

    z: np.ndarray
    x: np.ndarray
    values: np.ndarray
    kind: str
    rf: RfFit = field(repr=False)
    ps: PsFit = field(repr=False)
    grid: GridSpec = field(repr=False)
    min_denominator: float = 1e-6

    @property
    def groups(self) -> list:
        seen = []
        for g in self.x.tolist():
            if g not in seen:
                seen.append(g)
        return seen

    def value_at(self, z, x) -> np.ndarray:
        """Evaluate the same ratio off the grid."""
        z = np.asarray(z, dtype=float)
        return self.rf.derivative(z, x) / self.ps.derivative(z)

    def subset(self, x) -> "LivCurve":
        keep = self.x == x
        if not keep.any():
            raise ParameterError(f"group {x!r} is not on the curve")
        return LivCurve(self.z[keep], self.x[keep], self.values[keep], self.kind, self.rf, self.ps, self.grid, self.min_denominator)

    def with_values(self, values) -> "LivCurve":
        return LivCurve(self.z, self.x, np.asarray(values, dtype=float), self.kind, self.rf, self.ps, self.grid, self.min_denominator)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.z, "x": self.x, "value": self.values})

    def to_csv(self, path=None) -> str:
        return frame_to_csv(self.to_frame(), path)

    def to_json(self, path=None) -> str:
        return dumps_json({"kind": self.kind, "z": self.z, "x": self.x, "value": self.values}, path)


def _grid_rows(grid: GridSpec, groups):
    pts = grid.z
    if not grid.per_group:
        return pts, np.full(pts.size, POOLED, dtype=object)
    sel = list(grid.groups) if grid.groups is not None else list(groups)
    z = np.tile(pts, len(sel))
    x = np.repeat(np.asarray(sel), pts.size)
    return z, x


def liv_curve(rf: RfFit, ps: PsFit, grid, min_denominator: float = 1e-6) -> LivCurve:
    """Local-IV curve: d E[y|z,x]/dz divided by dP(z)/dz on the grid.

    Raises
    ------
    RankConditionError
        The propensity slope is below ``min_denominator`` in absolute value at
        some grid point (the message gives the first such ``z``).
    """
    grid = as_grid(grid)
    lo = max(rf.z_range[0], ps.z_range[0])
    hi = min(rf.z_range[1], ps.z_range[1])
    grid.check_within(lo, hi)
    den = ps.derivative(grid.z)
    small = np.flatnonzero(~(np.abs(den) >= min_denominator))
    if small.size:
        zb = grid.z[small[0]]
        raise RankConditionError(f"propensity slope {den[small[0]]} at z={zb} is below {min_denominator}")
    z, x = _grid_rows(grid, rf.groups)
    if grid.per_group:
        num = rf.derivative(z, x)
    else:
        num = rf.pooled_derivative(z)
    values = num / np.tile(den, z.size // grid.z.size)
    return LivCurve(z, x, values, KINDS[ps.target], rf, ps, grid, min_denominator)
