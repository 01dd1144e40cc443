"""Identified sets for the MTE and for weighted treatment-effect parameters.

With a misclassified treatment the local-IV curve ``f`` equals the MTE times
the ratio of true to observed propensity slopes. Bounding that ratio in
``[1/c, c]`` gives pointwise bands; assuming the true propensity is a constant
multiple ``a`` of the observed one gives the narrower family ``f / a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .errors import (
    AlignmentError,
    DegenerateSupportError,
    InvertibilityError,
    NonFiniteError,
    ParameterError,
    PreconditionError,
    RejectionError,
    SupportViolation,
    WeightError,
)
from .export import dumps_json, frame_to_csv
from .liv import POOLED, LivCurve, PsFit, RfFit

TE_KINDS = ("ATE", "ATT", "ATU", "PRTE")
CONCLUSIONS = ("lower>0", "upper<0")


def _check_c(c) -> float:
    c = float(c)
    if not math.isfinite(c) or c < 1:
        raise ParameterError(f"sensitivity constant must be a finite number >= 1, got {c!r}")
    return c


def mte_sign(value) -> int:
    """Sign of one LIV value, which is the identified sign of the MTE."""
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteError(f"sign of non-finite value {value} is undefined")
    return (value > 0) - (value < 0)


def curve_sign(curve: LivCurve) -> np.ndarray:
    vals = np.asarray(curve.values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("curve has non-finite values")
    return np.sign(vals).astype(int)


@dataclass(frozen=True, eq=False)
class BoundsBand:
    """Pointwise interval [lower, upper] on a (z, x) grid."""

    z: np.ndarray
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c: float
    provenance: str
    f: np.ndarray | None = None

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, values, closed: bool = True) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if closed:
            return (self.lower <= values) & (values <= self.upper)
        return (self.lower < values) & (values < self.upper)

    def to_frame(self) -> pd.DataFrame:
        cols = {"z": self.z, "x": self.x}
        if self.f is not None:
            cols["f_hat"] = self.f
        cols.update(lower=self.lower, upper=self.upper, width=self.width, c=np.full(self.z.size, self.c))
        return pd.DataFrame(cols)

    def to_csv(self, path=None) -> str:
        return frame_to_csv(self.to_frame(), path)

    def to_json(self, path=None) -> str:
        return dumps_json({"provenance": self.provenance, "c": self.c, **self.to_frame().to_dict(orient="list")}, path)


def theta1_band(curve: LivCurve, c: float) -> BoundsBand:
    """Sign-split band: [f/c, c f] where f >= 0 and [c f, f/c] where f < 0."""
    c = _check_c(c)
    f = np.asarray(curve.values, dtype=float)
    pos = f >= 0
    lower = np.where(pos, f / c, c * f)
    upper = np.where(pos, c * f, f / c)
    return BoundsBand(curve.z, curve.x, lower, upper, c, "theta1", f)


@dataclass(frozen=True)
class PlausibleC:
    """Largest c whose band stays inside the a-priori effect range.

    ``valid`` is False (and ``c`` is NaN) when the curve itself already
    leaves the range: no c >= 1 is compatible then.
    """

    c: float
    valid: bool
    binding: str
    f_max: float
    f_min: float

    def __float__(self):
        return float(self.c)

    def __str__(self):
        return f"{float(self.c)}" if self.valid else "no valid c"


def max_plausible_c(curve, effect_floor: float = -1.0, effect_ceiling: float = 1.0) -> PlausibleC:
    """Largest c such that f/c and c f stay in [floor, ceiling] at the curve extremes.

    Parameters
    ----------
    curve : LivCurve or array_like
    effect_floor, effect_ceiling : float
        A-priori range of the treatment effect; must bracket zero.
    """
    if not effect_floor <= 0 <= effect_ceiling:
        raise ParameterError("effect range must contain 0")
    vals = np.asarray(getattr(curve, "values", curve), dtype=float).ravel()
    if vals.size == 0:
        raise ParameterError("curve has no points")
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("curve has non-finite values")
    fmax, fmin = float(vals.max()), float(vals.min())
    if fmax > effect_ceiling or fmin < effect_floor:
        return PlausibleC(math.nan, False, "no valid c", fmax, fmin)
    limits = []
    for e in (fmax, fmin):
        if e > 0:
            limits.append((effect_ceiling / e, "ceiling"))
        elif e < 0:
            limits.append((effect_floor / e, "floor"))
    if not limits:
        return PlausibleC(math.inf, True, "none", fmax, fmin)
    c, which = min(limits)
    return PlausibleC(float(c), True, which, fmax, fmin)


@dataclass(frozen=True, eq=False)
class Rejection:
    """Points where intersected bands are empty."""

    z: np.ndarray
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def message(self) -> str:
        pts = ", ".join(f"(z={a}, x={b})" for a, b in zip(self.z[:5].tolist(), self.x[:5].tolist()))
        more = ", ..." if self.z.size > 5 else ""
        return f"empty intersection at {self.z.size} point(s): {pts}{more}"

    def raise_(self):
        raise RejectionError(self.message, report=self)


def intersect_bands(bands: Sequence[BoundsBand]):
    """Pointwise intersection of bands from several instruments or treatments.

    Returns a BoundsBand, or a :class:`Rejection` listing the points where the
    intersection is empty (the maintained assumptions cannot all hold there).
    """
    bands = list(bands)
    if not bands:
        raise ParameterError("need at least one band")
    first = bands[0]
    for b in bands[1:]:
        if b.z.shape != first.z.shape or not np.array_equal(b.z, first.z) or not np.array_equal(b.x, first.x):
            raise AlignmentError("bands are not on the same (z, x) grid")
    if len(bands) == 1:
        return first
    lower = np.max([b.lower for b in bands], axis=0)
    upper = np.min([b.upper for b in bands], axis=0)
    empty = lower > upper
    if empty.any():
        return Rejection(first.z[empty], first.x[empty], lower[empty], upper[empty])
    return BoundsBand(first.z, first.x, lower, upper, max(b.c for b in bands), "intersection")


# scaled family -------------------------------------------------------------

def _pt_levels(ps: PsFit, curve: LivCurve) -> np.ndarray:
    if np.any(curve.x == POOLED):
        raise ParameterError("scaled-family analysis needs a per-group curve")
    return ps.level(curve.z, curve.x)


def _check_monotone_on_grid(ps: PsFit, z) -> int:
    der = ps.derivative(np.unique(z))
    if np.all(der > 0):
        return 1
    if np.all(der < 0):
        return -1
    bad = np.unique(z)[np.flatnonzero(~(np.sign(der) == np.sign(der[0])) | (der == 0))]
    where = bad[0] if bad.size else np.unique(z)[0]
    raise InvertibilityError(f"fitted propensity is not strictly monotone on the grid (slope changes sign near z={where})")


def _scale_grid(c: float, size: int) -> np.ndarray:
    if size < 1:
        raise ParameterError("scale grid needs at least one point")
    if c == 1:
        return np.array([1.0])
    if size == 1:
        return np.array([1.0])
    return np.linspace(1.0 / c, c, size)


@dataclass(frozen=True, eq=False)
class ScaledMember:
    """One member f/a of the scaled family, kept with its scale."""

    a: float
    curve: LivCurve


@dataclass(frozen=True, eq=False)
class ScaledFamily:
    """Curves f/a for a on a grid over [1/c, c].

    Attributes
    ----------
    valid : ndarray of bool
        Whether the implied true propensity a * P_T stays in [0, 1] on the grid.
    p_bar : float
        Largest fitted observed propensity on the grid.
    """

    curve: LivCurve
    c: float
    a: np.ndarray
    members: np.ndarray
    valid: np.ndarray
    p_bar: float
    direction: int

    def member(self, i: int) -> ScaledMember:
        return ScaledMember(float(self.a[i]), self.curve.with_values(self.members[i]))

    def envelope(self) -> BoundsBand:
        return BoundsBand(self.curve.z, self.curve.x, self.members.min(axis=0), self.members.max(axis=0),
                          self.c, "theta2-envelope", np.asarray(self.curve.values))

    def is_member(self, values, tol: float = 1e-10) -> bool:
        """True when ``values`` equals f/a for one a in [1/c, c]."""
        f = np.asarray(self.curve.values, dtype=float)
        g = np.asarray(values, dtype=float)
        scale = max(np.max(np.abs(f)), 1e-300)
        zero = np.abs(f) <= tol * scale
        if np.any(np.abs(g[zero]) > tol * scale):
            return False
        if zero.all():
            return True
        if np.any(np.abs(g[~zero]) <= tol * scale):
            return False
        ratios = f[~zero] / g[~zero]
        a = float(np.median(ratios))
        if not (1.0 / self.c - tol <= a <= self.c + tol):
            return False
        return bool(np.all(np.abs(f[~zero] / a - g[~zero]) <= tol * scale))


def _check_range(c: float, p_bar: float):
    if p_bar <= 0:
        raise ParameterError(f"largest fitted propensity {p_bar} is not positive")
    if c > (1.0 / p_bar) * (1 + 1e-12):
        raise ParameterError(f"c={c} exceeds 1/p_bar={1.0 / p_bar}; a*P_T would leave [0, 1]")


def theta2_family(curve: LivCurve, ps_t: PsFit, c: float, a_grid_size: int = 201) -> ScaledFamily:
    """Scaled family under a constant-ratio true propensity.

    Raises
    ------
    InvertibilityError
        Fitted P_T is not strictly monotone on the grid.
    ParameterError
        c < 1 or c > 1 / max(P_T) on the grid.
    """
    c = _check_c(c)
    levels = _pt_levels(ps_t, curve)
    direction = _check_monotone_on_grid(ps_t, curve.z)
    p_bar = float(levels.max())
    _check_range(c, p_bar)
    a = _scale_grid(c, a_grid_size)
    f = np.asarray(curve.values, dtype=float)
    members = f[None, :] / a[:, None]
    implied = a[:, None] * levels[None, :]
    valid = np.all((implied >= 0) & (implied <= 1 + 1e-12), axis=1)
    return ScaledFamily(curve, c, a, members, valid, p_bar, direction)


# sharpness -------------------------------------------------------------------

def invert_monotone(fn, targets, lo: float, hi: float, iters: int = 80) -> np.ndarray:
    """Vectorized bisection for ``fn(z) = target`` on [lo, hi], fn monotone.

    Targets outside [fn(lo), fn(hi)] are clamped to the nearer end.
    """
    targets = np.asarray(targets, dtype=float)
    increasing = fn(np.array(hi)) >= fn(np.array(lo))
    a = np.full(targets.shape, float(lo))
    b = np.full(targets.shape, float(hi))
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = fn(m)
        go_right = (fm < targets) if increasing else (fm > targets)
        a = np.where(go_right, m, a)
        b = np.where(go_right, b, m)
    return 0.5 * (a + b)


def _monotone_on(fn_der, lo, hi, n=2001) -> int:
    der = fn_der(np.linspace(lo, hi, n))
    if np.all(der > 0):
        return 1
    if np.all(der < 0):
        return -1
    raise InvertibilityError(f"propensity is not strictly monotone on [{lo}, {hi}]")


@dataclass(frozen=True)
class SharpnessReport:
    """Outcome of rebuilding a data-consistent model from a candidate MTE."""

    a: float
    mte_discrepancy: float
    data_discrepancy: float
    tol: float
    p1_range: tuple
    p0_range: tuple

    @property
    def passed(self) -> bool:
        return self.mte_discrepancy <= self.tol and self.data_discrepancy <= self.tol


def verify_sharp_candidate(member: ScaledMember, ps_t: PsFit, rf: RfFit, tol: float = 1e-8) -> SharpnessReport:
    """Check that a scaled-family member is generated by some admissible model.

    The candidate true propensity is ``a * P_T``. Potential-outcome success
    probabilities are set to ``P[Y1=1|U=u] = max(m(u), 0)`` and
    ``P[Y0=1|U=u] = max(-m(u), 0)`` where ``m(u)`` is the member evaluated at
    the instrument value whose candidate propensity equals ``u`` (found by
    numerical inversion). Two discrepancies are reported: the MTE implied by
    those probabilities against the member, and the slope of E[Y|Z] the
    candidate model generates, ``a * P_T'(z) * MTE(z)``, against the fitted
    reduced form. The second is the substantive check: only members of the
    form f/a reproduce the data.

    Raises
    ------
    SupportViolation
        Member values outside [-1, 1] cannot be differences of probabilities.
    InvertibilityError
        The candidate propensity is not strictly monotone or leaves [0, 1].
    """
    a = float(member.a)
    curve = member.curve
    theta = np.asarray(curve.values, dtype=float)
    if np.any(np.abs(theta) > 1 + 1e-12):
        raise SupportViolation(f"candidate MTE reaches {np.max(np.abs(theta))} in absolute value; must lie in [-1, 1]")
    if np.any(curve.x == POOLED):
        raise ParameterError("sharpness check needs a per-group curve")
    lo = max(ps_t.z_range[0], rf.z_range[0], float(curve.z.min()))
    hi = min(ps_t.z_range[1], rf.z_range[1], float(curve.z.max()))
    lo, hi = min(lo, float(curve.z.min())), max(hi, float(curve.z.max()))
    _monotone_on(ps_t.derivative, lo, hi)
    mte_err, data_err = 0.0, 0.0
    p1_all, p0_all = [], []
    for g in curve.groups:
        rows = curve.x == g
        zg = curve.z[rows]

        def p_tilde(zz, g=g):
            return a * ps_t.level(zz, g)

        ends = p_tilde(np.array([lo, hi]))
        if ends.min() < -1e-12 or ends.max() > 1 + 1e-12:
            raise InvertibilityError(f"candidate propensity leaves [0, 1] for group {g!r} at a={a!r}")
        u = p_tilde(zg)
        z_back = invert_monotone(p_tilde, u, lo, hi)
        # candidate MTE at the margin u, read off the member along its own grid
        m = np.interp(z_back, zg, theta[rows])
        p1 = np.where(m >= 0, m, 0.0)
        p0 = np.where(m < 0, -m, 0.0)
        mte = p1 - p0
        slope = a * ps_t.derivative(zg) * mte
        mte_err = max(mte_err, float(np.max(np.abs(mte - theta[rows]))))
        data_err = max(data_err, float(np.max(np.abs(slope - rf.derivative(zg, g)))))
        p1_all.append(p1)
        p0_all.append(p0)
    p1_all, p0_all = np.concatenate(p1_all), np.concatenate(p0_all)
    return SharpnessReport(a, mte_err, data_err, tol,
                           (float(p1_all.min()), float(p1_all.max())),
                           (float(p0_all.min()), float(p0_all.max())))


# treatment-effect parameters ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TeBounds:
    """Bounds on a weighted average of the MTE over the scaled family.

    Attributes
    ----------
    values : ndarray
        Parameter value implied by every scale in ``a``.
    u_range : ndarray, shape (len(a), 2)
        Integration range used for every scale.
    """

    kind: str
    lower: float
    upper: float
    c: float
    a: np.ndarray
    values: np.ndarray
    u_nodes: int
    u_range: np.ndarray
    domain: str
    group: object
    p_star: tuple | None = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"a": self.a, "value": self.values, "u_low": self.u_range[:, 0], "u_high": self.u_range[:, 1]})

    def summary(self) -> dict:
        return {"kind": self.kind, "lower": self.lower, "upper": self.upper, "c": self.c, "group": self.group,
                "domain": self.domain, "a_nodes": int(self.a.size), "u_nodes": self.u_nodes,
                "u_range": [float(self.u_range[:, 0].min()), float(self.u_range[:, 1].max())]}

    def to_json(self, path=None) -> str:
        return dumps_json({**self.summary(), "a": self.a, "values": self.values}, path)


def _pick_group(curve: LivCurve, x):
    groups = curve.groups
    if x is None:
        if len(groups) != 1:
            raise ParameterError(f"curve has {len(groups)} groups; choose one with x=")
        x = groups[0]
    if x == POOLED:
        raise ParameterError("treatment-effect bounds need a per-group curve")
    return x


def _ecdf(sample):
    s = np.sort(np.asarray(sample, dtype=float))
    if s.size == 0:
        raise DegenerateSupportError("no sample propensities for the chosen group")

    def F(v):
        return np.searchsorted(s, v, side="right") / s.size
    return F, float(s.mean())


def _tabulated_cdf(p_star):
    u, F = (np.asarray(v, dtype=float) for v in p_star)
    if u.ndim != 1 or u.shape != F.shape or np.any(np.diff(u) <= 0):
        raise ParameterError("policy CDF must be two equal-length arrays with increasing support points")
    if np.any(np.diff(F) < 0) or F.min() < 0 or F.max() > 1:
        raise ParameterError("policy CDF values must be nondecreasing in [0, 1]")

    def cdf(v):
        return np.interp(v, u, F, left=0.0, right=1.0)
    grid = np.linspace(0.0, 1.0, 20001)
    mean = float(trapezoid(1.0 - cdf(grid), grid))
    return cdf, mean


def _support(ps_t: PsFit, curve: LivCurve, g):
    lo = max(ps_t.z_range[0], curve.rf.z_range[0])
    hi = min(ps_t.z_range[1], curve.rf.z_range[1])
    direction = _monotone_on(ps_t.derivative, lo, hi)
    ends = ps_t.level(np.array([lo, hi]), g)
    return lo, hi, float(ends.min()), float(ends.max()), direction


def _extended_bracket(ps_t, g, lo, hi, targets, direction):
    span = hi - lo
    a, b = lo, hi
    tmin, tmax = float(np.min(targets)), float(np.max(targets))
    for _ in range(60):
        pa, pb = ps_t.level(np.array([a, b]), g)
        low_ok = (pa if direction > 0 else pb) <= tmin
        high_ok = (pb if direction > 0 else pa) >= tmax
        if low_ok and high_ok:
            break
        if not (low_ok if direction > 0 else high_ok):
            a -= span
        if not (high_ok if direction > 0 else low_ok):
            b += span
        span *= 2
    else:
        raise InvertibilityError("extrapolated propensity never reaches the required values")
    _monotone_on(ps_t.derivative, a, b)
    return a, b


def te_bounds(
    curve: LivCurve,
    ps_t: PsFit,
    c: float,
    kind: str = "ATE",
    a_grid: int = 201,
    u_grid: int = 1001,
    p_star=None,
    *,
    x=None,
    domain: str = "restricted",
    pt_sample=None,
) -> TeBounds:
    """Bounds on ATE, ATT, ATU or PRTE under a constant propensity ratio.

    For each scale ``a`` on an equally spaced grid over [1/c, c] the
    parameter is the trapezoid integral over ``u`` of ``f(P_T^{-1}(u/a)) / a``
    times the parameter's weight, with F_{P_T} the empirical CDF of fitted
    propensities. Bounds are the min and max over the grid.

    Parameters
    ----------
    curve : LivCurve
        Mismeasured LIV curve (only its fits are used; evaluation is off-grid).
    ps_t : PsFit
        Observed-treatment propensity; must be strictly monotone in ``z``.
    kind : {"ATE", "ATT", "ATU", "PRTE"}
    p_star : (array, array), optional
        Support points and CDF of the policy propensity, required for PRTE.
    x : group label, optional
        Group to analyse when the curve has several.
    domain : {"restricted", "extrapolate"}
        ``restricted`` integrates over u with u/a inside the fitted P_T range
        and renormalizes the weights there; ``extrapolate`` integrates the
        polynomial fits over all of [0, 1].
    pt_sample : array_like, optional
        Propensity values for the empirical CDF; defaults to the fitted
        values of the chosen group.

    Raises
    ------
    DegenerateSupportError
        The identified u-range is empty.
    WeightError
        A weight normalizer such as a * mean(P_T) is zero.
    """
    kind = kind.upper()
    if kind not in TE_KINDS:
        raise ParameterError(f"unknown parameter {kind!r}; choose from {TE_KINDS}")
    if domain not in ("restricted", "extrapolate"):
        raise ParameterError(f"unknown integration domain {domain!r}")
    if u_grid < 2:
        raise ParameterError("u grid needs at least two nodes")
    if kind == "PRTE" and p_star is None:
        raise ParameterError("PRTE needs the policy propensity CDF (p_star)")
    c = _check_c(c)
    g = _pick_group(curve, x)
    lo, hi, pmin, pmax, direction = _support(ps_t, curve, g)
    _check_range(c, pmax)
    F, mean_pt = _ecdf(ps_t.sample(g) if pt_sample is None else pt_sample)
    a = _scale_grid(c, a_grid)[:, None]

    if domain == "restricted":
        ulo = np.maximum(0.0, a * pmin)
        uhi = np.minimum(1.0, a * pmax)
        if np.any(uhi <= ulo):
            raise DegenerateSupportError("identified integration range is empty")
    else:
        ulo = np.zeros_like(a)
        uhi = np.ones_like(a)
    u = ulo + (uhi - ulo) * np.linspace(0.0, 1.0, u_grid)[None, :]
    v = u / a

    def pt(zz):
        return ps_t.level(zz, g)

    if domain == "restricted":
        zlo, zhi = lo, hi
    else:
        zlo, zhi = _extended_bracket(ps_t, g, lo, hi, v, direction)
    z = invert_monotone(pt, v, zlo, zhi)
    base = curve.value_at(z, g) / a
    Fv = F(v)

    if kind == "ATE":
        w = np.ones_like(u)
    elif kind == "ATT":
        den = a * mean_pt
        if np.any(den == 0):
            raise WeightError("a * mean(P_T) is zero")
        w = (1.0 - Fv) / den
    elif kind == "ATU":
        den = 1.0 - a * mean_pt
        if np.any(den == 0):
            raise WeightError("1 - a * mean(P_T) is zero")
        w = Fv / den
    else:
        cdf_star, mean_star = _tabulated_cdf(p_star)
        den = a * mean_pt - mean_star
        if np.any(den == 0):
            raise WeightError("a * mean(P_T) equals the policy mean propensity")
        w = (cdf_star(u) - Fv) / den

    num = trapezoid(base * w, u, axis=1)
    if domain == "restricted":
        norm = trapezoid(w, u, axis=1)
        if np.any(norm == 0):
            raise WeightError("weights integrate to zero over the identified range")
        values = num / norm
    else:
        values = num
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("treatment-effect integral is not finite")
    return TeBounds(kind, float(values.min()), float(values.max()), c, a.ravel(), values, u_grid,
                    np.column_stack([ulo.ravel(), uhi.ravel()]), domain, g, p_star)


@dataclass(frozen=True)
class Breakdown:
    """Result of a breakdown scan over c.

    ``c`` is the first grid value at which the conclusion fails, or None when
    it holds at every admissible grid value.
    """

    c: float | None
    kind: str
    conclusion: str
    scanned: tuple
    bounds: tuple
    c_max_admissible: float

    @property
    def holds_throughout(self) -> bool:
        return self.c is None

    @property
    def value(self):
        return "holds throughout" if self.c is None else self.c


def _holds(tb: TeBounds, conclusion: str) -> bool:
    return tb.lower > 0 if conclusion == "lower>0" else tb.upper < 0


def breakdown_c(
    curve: LivCurve,
    ps_t: PsFit,
    kind: str = "ATE",
    conclusion: str = "lower>0",
    c_grid: Sequence[float] = tuple(np.round(np.arange(1.0, 2.0001, 0.05), 10)),
    **te_kw,
) -> Breakdown:
    """Smallest c on an ascending grid at which a sign conclusion fails.

    Grid values above ``1 / max P_T`` are outside the admissible range of the
    scaled family and are not scanned.

    Raises
    ------
    PreconditionError
        The conclusion already fails at c = 1.
    """
    if conclusion not in CONCLUSIONS:
        raise ParameterError(f"conclusion must be one of {CONCLUSIONS}")
    grid = np.asarray(c_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ParameterError("c grid must be ascending and start at or above 1")
    base = te_bounds(curve, ps_t, 1.0, kind, **te_kw)
    if not _holds(base, conclusion):
        raise PreconditionError(f"{kind} conclusion {conclusion} does not hold at c = 1 (value {base.lower})")
    g = _pick_group(curve, te_kw.get("x"))
    _, _, _, pmax, _ = _support(ps_t, curve, g)
    c_max = 1.0 / pmax
    scanned, found = [], []
    for cv in grid:
        if cv > c_max * (1 + 1e-12):
            break
        tb = te_bounds(curve, ps_t, float(cv), kind, **te_kw)
        scanned.append(float(cv))
        found.append((tb.lower, tb.upper))
        if not _holds(tb, conclusion):
            return Breakdown(float(cv), kind, conclusion, tuple(scanned), tuple(found), c_max)
    return Breakdown(None, kind, conclusion, tuple(scanned), tuple(found), c_max)
