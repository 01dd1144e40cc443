"""Synthetic designs with known truths, the bias/coverage study and counterexamples.

The main design has three groups, a uniform instrument and a threshold
selection rule ``D = 1{U <= g_x + g_1 Z}``. The observed treatment equals
``D`` with probability ``r`` and ``1 - D`` otherwise, independently of
everything else, so the observed propensity is ``1 - r + (2r - 1) P_D`` and
the LIV curve is the MTE divided by ``2r - 1``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid
from scipy.stats import norm

from .core import GridSpec, ObservationTable, as_grid
from .errors import FailureRateError, MteBoundsError, ParameterError, RankConditionError
from .export import dumps_json, frame_to_csv
from .liv import PsFit, RfFit, fit_outcome_rf, fit_ps, liv_curve

WORKERS_ENV = "MTEBOUNDS_WORKERS"
MC_GRID = tuple(float(k) * 0.05 for k in range(1, 20))


def worker_count(workers: int | None = None) -> int:
    """Explicit argument, else the environment variable, else 1."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


@dataclass(frozen=True)
class McConfig:
    """Parameters of the three-group threshold-selection design."""

    gamma_x: tuple = (0.1, 0.2, 0.3)
    gamma_1: float = 0.6
    alpha_x: tuple = (0.0, 0.0, 0.0)
    beta_x: tuple = (0.0, 0.5, 1.0)
    beta_1: float = -1.0
    probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    sigma2: float = 0.5
    r: float = 0.95
    n: int = 3000
    reps: int = 10000
    cs: tuple = (10 / 9, 12 / 9, 14 / 9, 16 / 9)
    seed: int = 12345

    def __post_init__(self):
        G = len(self.gamma_x)
        if len(self.alpha_x) != G or len(self.beta_x) != G or len(self.probs) != G:
            raise ParameterError("group parameter tuples must have equal length")
        if not 0 <= self.r <= 1:
            raise ParameterError(f"truthful-report rate r must be in [0, 1], got {self.r!r}")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-12:
            raise ParameterError("group probabilities must be nonnegative and sum to 1")
        for g in self.gamma_x:
            ends = (g, g + self.gamma_1)
            if min(ends) < 0 or max(ends) > 1:
                raise ParameterError(f"true propensity {g} + {self.gamma_1} z leaves [0, 1] on z in [0, 1]")
        if self.sigma2 < 0 or self.n < 1 or self.reps < 1:
            raise ParameterError("need sigma2 >= 0, n >= 1 and reps >= 1")
        if any(c < 1 for c in self.cs):
            raise ParameterError("sensitivity constants must be >= 1")

    @property
    def groups(self) -> tuple:
        return tuple(range(len(self.gamma_x)))


def gen_threshold_design(config: McConfig, seed) -> ObservationTable:
    """Draw one sample of ``config.n`` rows; ``seed`` may be an int or SeedSequence."""
    rng = np.random.default_rng(seed)
    n = config.n
    gx, ax, bx = (np.asarray(v, dtype=float) for v in (config.gamma_x, config.alpha_x, config.beta_x))
    x = rng.choice(len(gx), size=n, p=np.asarray(config.probs, dtype=float))
    z = rng.uniform(size=n)
    u = rng.uniform(size=n)
    v = rng.uniform(size=n)
    sd = math.sqrt(config.sigma2)
    e0 = rng.normal(0.0, sd, size=n)
    e1 = rng.normal(0.0, sd, size=n)
    d = (u <= gx[x] + config.gamma_1 * z).astype(np.int8)
    y0 = ax[x] + e0
    y1 = bx[x] + config.beta_1 * u + e1
    y = y0 + d * (y1 - y0)
    t = np.where(v <= config.r, d, 1 - d).astype(np.int8)
    return ObservationTable(y=y, t=t, z=z, x=x, d=d)


class DesignTruth(NamedTuple):
    p_d: float
    p_t: float
    theta: float
    f: float
    bias: float


def design_truth(config: McConfig, z, x) -> DesignTruth:
    """Closed-form propensities, MTE, LIV value and misclassification bias.

    Vectorizes over ``z`` and ``x``.
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x)
    if np.any((z < 0) | (z > 1)):
        raise ParameterError("z must lie in [0, 1]")
    G = len(config.gamma_x)
    if np.any((x < 0) | (x >= G)) or not np.all(x == np.round(x)):
        raise ParameterError(f"x must be a group index in 0..{G - 1}")
    x = x.astype(int)
    r = config.r
    if 2 * r - 1 == 0:
        raise RankConditionError("r = 1/2 makes the observed treatment independent of the instrument")
    gx, ax, bx = (np.asarray(v, dtype=float)[x] for v in (config.gamma_x, config.alpha_x, config.beta_x))
    p_d = gx + config.gamma_1 * z
    p_t = 1 - r + (2 * r - 1) * gx + (2 * r - 1) * config.gamma_1 * z
    theta = bx - ax + config.beta_1 * gx + config.beta_1 * config.gamma_1 * z
    f = theta / (2 * r - 1)
    bias = theta * (2 - 2 * r) / (2 * r - 1)
    return DesignTruth(p_d, p_t, theta, f, bias)


class PopulationFits(NamedTuple):
    ps_t: PsFit
    ps_d: PsFit
    rf: RfFit


def population_fits(config: McConfig) -> PopulationFits:
    """Fits whose coefficients are the design's exact conditional means.

    E[y | z, x] = alpha_x + (beta_x - alpha_x) P + beta_1 P^2 / 2 with
    P = g_x + g_1 z, obtained by integrating the MTE up to P.
    """
    r = config.r
    groups = np.asarray(config.groups)
    gx = np.asarray(config.gamma_x, dtype=float)
    ps_d = PsFit("d", groups, gx, [config.gamma_1], (0.0, 1.0))
    ps_t = PsFit("t", groups, 1 - r + (2 * r - 1) * gx, [(2 * r - 1) * config.gamma_1], (0.0, 1.0))
    rows = []
    for g in config.groups:
        p = np.array([config.gamma_x[g], config.gamma_1])
        a, b = config.alpha_x[g], config.beta_x[g]
        outer = np.array([a, b - a, config.beta_1 / 2])
        coef = _compose(outer, p)
        rows.append(np.pad(coef, (0, 3 - coef.size)))
    rf = RfFit(groups, np.array(rows), (1, 1), (0.0, 1.0), np.asarray(config.probs, dtype=float))
    return PopulationFits(ps_t, ps_d, rf)


def _compose(outer, inner):
    """Coefficients of outer(inner(z)), both lowest degree first."""
    out = np.zeros(1)
    power = np.ones(1)
    for k, coef in enumerate(outer):
        if k:
            power = P.polymul(power, inner)
        out = P.polyadd(out, coef * power)
    return out


# Monte Carlo study -------------------------------------------------------------

def replication_seed(master: int, index: int) -> np.random.SeedSequence:
    """Seed of one replication, a deterministic function of (master, index)."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))


def _one_replication(config: McConfig, grid: GridSpec, index: int):
    table = gen_threshold_design(config, replication_seed(config.seed, index))
    try:
        ps_t = fit_ps(table, "t", 1)
        ps_d = fit_ps(table, "d", 1)
        rf = fit_outcome_rf(table, (1, 1))
        f_hat = liv_curve(rf, ps_t, grid).values
        theta_hat = liv_curve(rf, ps_d, grid).values
    except MteBoundsError:
        return None
    return theta_hat, f_hat


def _replication_block(args):
    config, grid, start, stop = args
    return [_one_replication(config, grid, i) for i in range(start, stop)]


@dataclass(frozen=True, eq=False)
class McReport:
    """Bias and coverage of the benchmark and mismeasured estimators.

    Arrays are indexed by grid row (group-major, then z); coverage has one
    row per sensitivity constant.
    """

    z: np.ndarray
    x: np.ndarray
    cs: tuple
    theta: np.ndarray
    bias_benchmark: np.ndarray
    bias_mismeasured: np.ndarray
    bias_analytic: np.ndarray
    coverage: np.ndarray
    reps: int
    failed: int
    config: McConfig = field(repr=False)

    @property
    def used(self) -> int:
        return self.reps - self.failed

    def at(self, z: float, x) -> int:
        hit = np.flatnonzero((self.z == z) & (self.x == x))
        if hit.size == 0:
            raise ParameterError(f"(z={z!r}, x={x!r}) is not on the report grid")
        return int(hit[0])

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for k, c in enumerate(self.cs):
            frames.append(pd.DataFrame({
                "z": self.z, "x": self.x, "c": np.full(self.z.size, float(c)),
                "bias_benchmark": self.bias_benchmark, "bias_mismeasured": self.bias_mismeasured,
                "coverage": self.coverage[k], "theta": self.theta, "bias_analytic": self.bias_analytic,
            }))
        return pd.concat(frames, ignore_index=True)

    def to_csv(self, path=None) -> str:
        return frame_to_csv(self.to_frame(), path)

    def to_json(self, path=None) -> str:
        cfg = asdict(self.config)
        return dumps_json({"config": cfg, "reps": self.reps, "failed": self.failed,
                           "grid": sorted(set(self.z.tolist())), "rows": self.to_frame().to_dict(orient="list")}, path)


def run_mc(config: McConfig, grid=None, workers: int | None = None) -> McReport:
    """Monte Carlo bias and coverage study.

    Every replication draws a sample with seed ``replication_seed(config.seed, m)``,
    fits linear propensities and the degree-2 reduced form, and evaluates both
    curves on the grid. Results are reduced in replication order, so the
    report does not depend on ``workers``.

    Raises
    ------
    FailureRateError
        1% or more of the replications failed to fit.
    """
    grid = as_grid(grid if grid is not None else GridSpec(points=MC_GRID))
    M = config.reps
    nw = worker_count(workers)
    if nw == 1:
        results = _replication_block((config, grid, 0, M))
    else:
        bounds = np.linspace(0, M, min(M, 4 * nw) + 1).astype(int)
        jobs = [(config, grid, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = [r for block in pool.map(_replication_block, jobs) for r in block]
    ok = [r for r in results if r is not None]
    failed = M - len(ok)
    if failed >= 0.01 * M and failed > 0:
        raise FailureRateError(f"{failed} of {M} replications failed to fit")
    theta_hat = np.stack([r[0] for r in ok])
    f_hat = np.stack([r[1] for r in ok])
    z = np.tile(grid.z, len(config.groups))
    x = np.repeat(np.asarray(config.groups), grid.z.size)
    truth = design_truth(config, z, x)
    coverage = []
    for c in config.cs:
        pos = f_hat >= 0
        lower = np.where(pos, f_hat / c, c * f_hat)
        upper = np.where(pos, c * f_hat, f_hat / c)
        coverage.append(np.mean((lower <= truth.theta) & (truth.theta <= upper), axis=0))
    return McReport(
        z=z, x=x, cs=tuple(float(c) for c in config.cs), theta=truth.theta,
        bias_benchmark=theta_hat.mean(axis=0) - truth.theta,
        bias_mismeasured=f_hat.mean(axis=0) - truth.theta,
        bias_analytic=truth.bias,
        coverage=np.array(coverage), reps=M, failed=failed, config=config,
    )


# counterexamples ----------------------------------------------------------------

def _monotonicity_exact(treatment: str = "t") -> Fraction:
    ey0, ey1 = Fraction(1, 5), Fraction(4, 5)

    def mean_ty(p):
        # instrument value with observed propensity p, then E[T Y | Z = z]
        z = (1 - p) / 2 if treatment == "t" else p
        p_obs, p_true = p, z
        both = min(p_obs, p_true)
        return ey1 * both + ey0 * (p_obs - both)

    if treatment not in ("t", "d"):
        raise ParameterError("treatment must be 't' or 'd'")
    return mean_ty(Fraction(1, 2)) - mean_ty(Fraction(1, 3))


def counterexample_monotonicity(treatment: str = "t") -> float:
    """E[T Y | P_T = 1/2] - E[T Y | P_T = 1/3] in the decreasing-propensity design.

    Y0 ~ Bernoulli(1/5), Y1 ~ Bernoulli(4/5), D = 1{U <= Z} and the observed
    treatment T = 1{U <= 1 - 2Z}. With ``treatment="d"`` the observed
    treatment is replaced by D. Evaluated exactly with rationals.
    """
    return float(_monotonicity_exact(treatment))


def monotonicity_mc(n: int = 1_000_000, seed: int = 0, treatment: str = "t") -> tuple[float, float]:
    """Simulation check of :func:`counterexample_monotonicity`: (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    means, variances = [], []
    for p in (0.5, 1 / 3):
        z = (1 - p) / 2 if treatment == "t" else p
        u = rng.uniform(size=n)
        y0 = rng.uniform(size=n) < 0.2
        y1 = rng.uniform(size=n) < 0.8
        d = u <= z
        t = u <= p
        ty = t * np.where(d, y1, y0)
        means.append(ty.mean())
        variances.append(ty.var(ddof=1) / n)
    return float(means[0] - means[1]), float(math.sqrt(sum(variances)))


class IndexSufficiency(NamedTuple):
    """E[Y | Z = 1] and E[Y | P(Z) = P(1)]; they differ when index sufficiency fails."""

    by_instrument: float
    by_score: float

    @property
    def violated(self) -> bool:
        return self.by_instrument != self.by_score


def counterexample_index_sufficiency(treatment: str = "t") -> IndexSufficiency:
    """Conditioning on the observed propensity is not conditioning on the instrument.

    Y0 ~ N(0, 1), Y1 ~ N(1, 1), D = 1{U <= Z}, Z ~ U(0, 1), so
    E[Y | Z = z] = z. The observed propensity 4z^2 - 4z + 1 takes the value 1
    at z = 0 and z = 1; the conditional mean given the score averages the two
    instrument values with weights f_Z(z) / |P'(z)|.
    """
    ey0, ey1 = 0.0, 1.0
    if treatment == "t":
        score = np.array([1.0, -4.0, 4.0])
    elif treatment == "d":
        score = np.array([0.0, 1.0])
    else:
        raise ParameterError("treatment must be 't' or 'd'")

    def mean_given_z(z):
        return ey0 + z * (ey1 - ey0)

    level = float(P.polyval(1.0, score))
    roots = P.polyroots(P.polysub(score, [level]))
    roots = np.unique(roots[np.isreal(roots)].real)
    roots = roots[(roots >= 0) & (roots <= 1)]
    slopes = np.abs(P.polyval(roots, P.polyder(score)))
    weights = 1.0 / slopes
    by_score = float(np.sum(weights * mean_given_z(roots)) / np.sum(weights))
    return IndexSufficiency(float(mean_given_z(1.0)), by_score)


def gen_differential_me(n: int, seed) -> ObservationTable:
    """Design where misreporting depends on potential outcomes.

    Y0, Y1 ~ N(0, 1) independent, U = Phi((Y1 - Y0) / sqrt 2), Z ~ U(0, 1),
    D = 1{U <= Z} and T = 1{U <= 1/4 + Z/2}. The propensity slopes differ by a
    factor of 2 everywhere.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    rng = np.random.default_rng(seed)
    y0 = rng.normal(size=n)
    y1 = rng.normal(size=n)
    z = rng.uniform(size=n)
    u = norm.cdf((y1 - y0) / math.sqrt(2.0))
    d = (u <= z).astype(np.int8)
    t = (u <= 0.25 + z / 2).astype(np.int8)
    y = y0 + d * (y1 - y0)
    return ObservationTable(y=y, t=t, z=z, x=np.zeros(n, dtype=int), d=d)


@dataclass(frozen=True, eq=False)
class IvWeightDiagnostic:
    """Integral of the implicit IV weights over [0, 1] and the covariance ratio."""

    integral: float
    cov_ratio: float
    u: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    clipped_share: float = 0.0


def iv_weight_integral(table: ObservationTable, u_grid: int = 10001, degree: int = 1) -> IvWeightDiagnostic:
    """Integrate w(u) = E[(Z - EZ) 1{P_D(Z) >= u}] / Cov(Z, T) over u in [0, 1].

    P_D is the fitted true-treatment propensity (group intercepts, common
    polynomial of ``degree``). The integral equals Cov(Z, D) / Cov(Z, T), not
    one, when the treatment used in the first stage is misclassified.
    """
    if table.d is None:
        raise ParameterError("the weight diagnostic needs the true treatment column")
    zc = table.z - table.z.mean()
    cov_zt = float(np.mean(zc * table.t))
    cov_zd = float(np.mean(zc * table.d))
    if cov_zt == 0:
        raise RankConditionError("Cov(z, t) is zero")
    p = fit_ps(table, "d", degree).fitted
    order = np.argsort(p, kind="stable")
    ps, zs = p[order], zc[order]
    tail = np.concatenate([np.cumsum(zs[::-1])[::-1], [0.0]])
    u = np.linspace(0.0, 1.0, u_grid)
    idx = np.searchsorted(ps, u, side="left")
    weights = tail[idx] / table.n / cov_zt
    integral = float(trapezoid(weights, u))
    clipped = float(np.mean((p < 0) | (p > 1)))
    return IvWeightDiagnostic(integral, cov_zd / cov_zt, u, weights, clipped)
