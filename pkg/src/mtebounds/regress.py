"""Least squares with group fixed effects on polynomial designs in the instrument.

The design for a response ``y`` is

    y = a_x + sum_{j <= J_int} b_{j,x} z^j + sum_{J_int < j <= J_max} c_j z^j + e

with one intercept per group, group-specific slopes up to degree ``J_int``
and common slopes above. Powers are formed on the standardized instrument
``(z - mean) / sd`` and the estimates are mapped back to raw powers of ``z``
before they are reported, together with HC3 covariances.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import linalg

from .core import ObservationTable
from .errors import ParameterError, SingularDesignError, WeakInstrumentError

RANK_TOL = 1e-10
MAX_DUMMY_GROUPS = 1000


def group_codes(x) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique labels and the integer code of each row."""
    labels, codes = np.unique(np.asarray(x), return_inverse=True)
    return labels, codes.ravel()


def lookup_codes(labels: np.ndarray, x) -> np.ndarray:
    """Codes of ``x`` in ``labels``; unknown labels raise ParameterError."""
    x = np.atleast_1d(np.asarray(x))
    pos = np.searchsorted(labels, x)
    pos = np.clip(pos, 0, labels.size - 1)
    bad = labels[pos] != x
    if np.any(bad):
        raise ParameterError(f"group {x[np.flatnonzero(bad)[0]]} was not present in the fit")
    return pos


def _param_names(labels, j_int, j_max):
    names = [f"x={g}" for g in labels]
    for j in range(1, j_int + 1):
        names += [f"z^{j}:x={g}" for g in labels]
    names += [f"z^{j}" for j in range(j_int + 1, j_max + 1)]
    return names


def _param_index(j, g, n_groups, j_int):
    if j == 0:
        return g
    if j <= j_int:
        return n_groups * j + g
    return n_groups * (j_int + 1) + (j - j_int - 1)


def _slope_columns(w, codes, n_groups, j_int, j_max):
    n = w.shape[0]
    cols = np.zeros((n, n_groups * j_int + (j_max - j_int)))
    rows = np.arange(n)
    for j in range(1, j_int + 1):
        cols[rows, n_groups * (j - 1) + codes] = w ** j
    for j in range(j_int + 1, j_max + 1):
        cols[:, n_groups * j_int + (j - j_int - 1)] = w ** j
    return cols


def _raw_basis_map(n_groups, j_int, j_max, center, scale):
    """Matrix taking standardized-basis parameters to raw-power parameters."""
    p = n_groups * (j_int + 1) + (j_max - j_int)
    A = np.zeros((p, p))
    for k in range(j_max + 1):
        gs = range(n_groups) if k <= j_int else range(1)
        for g in gs:
            row = _param_index(k, g, n_groups, j_int)
            for j in range(k, j_max + 1):
                gj = g if j <= j_int else 0
                A[row, _param_index(j, gj, n_groups, j_int)] += comb(j, k) * (-center) ** (j - k) / scale ** j
    return A


def _qr_checked(X, names):
    """Column-scaled thin QR; a near-zero pivot names the first dependent column."""
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        name = names[zero[0]]
        raise SingularDesignError(f"design column {name!r} is identically zero", column=name)
    Q, R = np.linalg.qr(X / norms)
    diag = np.abs(np.diag(R))
    weak = np.flatnonzero(diag < RANK_TOL)
    if weak.size:
        name = names[weak[0]]
        raise SingularDesignError(f"design column {name!r} is collinear with earlier columns", column=name)
    return Q, R, norms


def _hc3_weights(resid, lev):
    one_minus = 1.0 - lev
    with np.errstate(divide="ignore", invalid="ignore"):
        w = resid ** 2 / one_minus ** 2
    # full-leverage rows carry no information on their own variance
    w[one_minus < 1e-10] = np.nan
    return w


@dataclass(frozen=True, eq=False)
class FePolyFit:
    """Result of :func:`fit_fe_poly`, reported in raw powers of ``z``.

    Attributes
    ----------
    groups : ndarray
        Sorted group labels.
    intercepts : ndarray, shape (G,)
    interacted : ndarray, shape (G, J_int)
        Group-specific coefficients on z, ..., z^J_int.
    common : ndarray, shape (J_max - J_int,)
        Common coefficients on z^(J_int+1), ..., z^J_max.
    cov : ndarray
        HC3 covariance of ``params`` (ordering as ``names``).
    f_stat : float
        Robust Wald chi-square for all slope coefficients divided by their count.
    """

    response: str
    groups: np.ndarray
    degree_max: int
    degree_interacted: int
    intercepts: np.ndarray
    interacted: np.ndarray
    common: np.ndarray
    cov: np.ndarray
    names: tuple
    residuals: np.ndarray
    fitted: np.ndarray
    leverage: np.ndarray
    f_stat: float
    f_df: int
    center: float
    scale: float
    method: str

    @property
    def n(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.intercepts, self.interacted.T.ravel(), self.common])

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def coefficient_matrix(self) -> np.ndarray:
        """Raw polynomial coefficients by group, shape (G, J_max + 1), lowest degree first."""
        G = self.groups.size
        out = np.empty((G, self.degree_max + 1))
        out[:, 0] = self.intercepts
        out[:, 1:self.degree_interacted + 1] = self.interacted
        out[:, self.degree_interacted + 1:] = self.common
        return out

    def predict(self, z, x) -> np.ndarray:
        z, x = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(x))
        coef = self.coefficient_matrix()[lookup_codes(self.groups, x.ravel())]
        powers = np.vander(z.ravel(), self.degree_max + 1, increasing=True)
        return np.einsum("ij,ij->i", coef, powers).reshape(z.shape)


def fit_fe_poly(
    table: ObservationTable,
    response: str,
    degree_max: int,
    degree_interacted: int = 0,
    *,
    max_dummy_groups: int = MAX_DUMMY_GROUPS,
) -> FePolyFit:
    """OLS of a column on group intercepts and a polynomial in ``z``.

    Parameters
    ----------
    table : ObservationTable
    response : str or array_like
        Column name (``y``, ``t``, ``d``) or a vector of response values,
        e.g. exact conditional probabilities.
    degree_max : int
        Highest power of ``z``.
    degree_interacted : int
        Powers up to this degree get group-specific coefficients.
    max_dummy_groups : int
        Above this many groups the fit uses the within transformation instead
        of explicit dummy columns; estimates are the same.

    Raises
    ------
    SingularDesignError
        The design is rank deficient; ``err.column`` names the first column
        that is a linear combination of the ones before it.
    """
    if degree_max < 0 or degree_interacted < 0 or degree_interacted > degree_max:
        raise ParameterError(f"need 0 <= degree_interacted <= degree_max, got {degree_interacted}, {degree_max}")
    if isinstance(response, str):
        y = table.column(response).astype(float)
    else:
        y = np.asarray(response, dtype=float)
        if y.shape != (table.n,):
            raise ParameterError(f"response vector has shape {y.shape}, expected ({table.n},)")
        response = "values"
    z = table.z
    labels, codes = group_codes(table.x)
    G = labels.size
    names = _param_names(labels, degree_interacted, degree_max)
    p = len(names)
    n = y.shape[0]
    if n < p:
        raise SingularDesignError(f"{n} rows cannot identify {p} parameters", column=names[n])
    if degree_interacted >= 1:
        counts = np.bincount(codes, minlength=G)
        single = np.flatnonzero(counts < 2)
        if single.size:
            name = f"z^1:x={labels[single[0]]}"
            raise SingularDesignError(f"group {labels[single[0]]!r} has one observation; {name!r} is not identified", column=name)

    center = float(z.mean())
    scale = float(z.std())
    if not scale > 0:
        scale = 1.0
    w = (z - center) / scale
    S = _slope_columns(w, codes, G, degree_interacted, degree_max)

    if G <= max_dummy_groups:
        X = np.concatenate([np.eye(G)[codes], S], axis=1)
        Q, R, norms = _qr_checked(X, names)
        qty = Q.T @ y
        coef = linalg.solve_triangular(R, qty) / norms
        resid = y - Q @ qty
        lev = np.einsum("ij,ij->i", Q, Q)
        omega = _hc3_weights(resid, lev)
        Rinv = linalg.solve_triangular(R, np.eye(p))
        meat = (Q * omega[:, None]).T @ Q
        cov = (Rinv @ meat @ Rinv.T) / np.outer(norms, norms)
        method = "dummies"
    else:
        counts = np.bincount(codes, minlength=G).astype(float)
        ybar = np.bincount(codes, weights=y, minlength=G) / counts
        Sbar = np.stack([np.bincount(codes, weights=S[:, k], minlength=G) for k in range(S.shape[1])], axis=1) / counts[:, None] if S.shape[1] else np.zeros((G, 0))
        St = S - Sbar[codes]
        yt = y - ybar[codes]
        k = S.shape[1]
        if k:
            Q, R, norms = _qr_checked(St, names[G:])
            qty = Q.T @ yt
            beta = linalg.solve_triangular(R, qty) / norms
            resid = yt - Q @ qty
            lev_within = np.einsum("ij,ij->i", Q, Q)
            B = (linalg.solve_triangular(R, Q.T)) / norms[:, None]
        else:
            beta = np.zeros(0)
            resid = yt
            lev_within = np.zeros(n)
            B = np.zeros((0, n))
        alpha = ybar - Sbar @ beta
        coef = np.concatenate([alpha, beta])
        lev = 1.0 / counts[codes] + lev_within
        omega = _hc3_weights(resid, lev)
        V_bb = (B * omega) @ B.T
        C = np.stack([np.bincount(codes, weights=omega * B[j], minlength=G) for j in range(k)], axis=1) / counts[:, None] if k else np.zeros((G, 0))
        V_aa = np.diag(np.bincount(codes, weights=omega, minlength=G) / counts ** 2) - Sbar @ C.T - C @ Sbar.T + Sbar @ V_bb @ Sbar.T
        V_ab = C - Sbar @ V_bb
        cov = np.block([[V_aa, V_ab], [V_ab.T, V_bb]])
        method = "within"

    A = _raw_basis_map(G, degree_interacted, degree_max, center, scale)
    raw = A @ coef
    cov_raw = A @ cov @ A.T
    fitted = y - resid

    q = p - G
    f_stat = np.nan
    if q > 0:
        b = raw[G:]
        V = cov_raw[G:, G:]
        if np.all(np.isfinite(V)):
            try:
                f_stat = float(b @ np.linalg.solve(V, b)) / q
            except np.linalg.LinAlgError:
                f_stat = np.nan

    interacted = raw[G:G * (degree_interacted + 1)].reshape(degree_interacted, G).T
    return FePolyFit(
        response=response,
        groups=labels,
        degree_max=degree_max,
        degree_interacted=degree_interacted,
        intercepts=raw[:G],
        interacted=interacted,
        common=raw[G * (degree_interacted + 1):],
        cov=cov_raw,
        names=tuple(names),
        residuals=resid,
        fitted=fitted,
        leverage=lev,
        f_stat=f_stat,
        f_df=q,
        center=center,
        scale=scale,
        method=method,
    )


@dataclass(frozen=True)
class IvFit:
    """Just-identified 2SLS with group fixed effects."""

    treatment: str
    coef: float
    se: float
    first_stage_cov: float
    n: int
    n_groups: int
    clustered: bool

    def __float__(self):
        return float(self.coef)


def _demean(v, codes, counts):
    return v - (np.bincount(codes, weights=v, minlength=counts.size) / counts)[codes]


def naive_iv(table: ObservationTable, treatment: str = "t", cluster: bool = False) -> IvFit:
    """Two-stage least squares of ``y`` on a treatment instrumented by ``z``.

    Group fixed effects are absorbed by demeaning within group, which makes
    the estimate the ratio Cov(z~, y~) / Cov(z~, treatment~).

    Parameters
    ----------
    treatment : {"t", "d"}
    cluster : bool
        One-way cluster-robust standard error by group; otherwise HC1.

    Raises
    ------
    WeakInstrumentError
        The within-group first-stage covariance is zero.
    """
    labels, codes = group_codes(table.x)
    counts = np.bincount(codes).astype(float)
    tr = table.column(treatment).astype(float)
    yt = _demean(table.y, codes, counts)
    tt = _demean(tr, codes, counts)
    zt = _demean(table.z, codes, counts)
    szt = float(zt @ tt)
    scale = np.sqrt(float(zt @ zt) * float(tt @ tt))
    if scale == 0 or abs(szt) <= 1e-12 * scale:
        raise WeakInstrumentError(f"first-stage covariance between z and {treatment} is zero within groups")
    beta = float(zt @ yt) / szt
    u = yt - beta * tt
    n, G = table.n, labels.size
    if cluster:
        scores = np.bincount(codes, weights=zt * u, minlength=G)
        adj = G / (G - 1) * (n - 1) / (n - G - 1) if G > 1 and n > G + 1 else np.nan
        var = adj * float(scores @ scores) / szt ** 2
    else:
        adj = n / (n - G - 1) if n > G + 1 else np.nan
        var = adj * float((zt * u) @ (zt * u)) / szt ** 2
    return IvFit(treatment, beta, float(np.sqrt(var)), szt / n, n, G, cluster)
