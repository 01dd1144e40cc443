"""Observation tables, evaluation grids and instrument construction."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataError, ParameterError, SupportError

MANDATORY = ("y", "t", "z", "x")
OPTIONAL = ("d", "judge")


@dataclass(frozen=True)
class StepReport:
    """Row accounting for one processing step."""

    step: str
    rows_in: int
    rows_out: int
    detail: str = ""

    @property
    def dropped(self) -> int:
        return self.rows_in - self.rows_out


def _frozen(a) -> np.ndarray:
    a = np.asarray(a)
    a = a.copy()
    a.flags.writeable = False
    return a


def _binary(col, name) -> np.ndarray:
    a = np.asarray(col)
    if a.dtype == np.int8:
        return a
    vals = a.astype(float)
    bad = np.flatnonzero((vals != 0) & (vals != 1))
    if bad.size:
        raise DataError(f"column {name!r} is not 0/1 at row {int(bad[0])}")
    return vals.astype(np.int8)


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Immutable column store for one sample.

    Parameters
    ----------
    y : array_like
        Outcome.
    t : array_like
        Observed (possibly misclassified) binary treatment.
    z : array_like
        Continuous instrument.
    x : array_like
        Group label for fixed effects.
    d : array_like, optional
        True binary treatment, when available.
    judge : array_like, optional
        Decision-maker id used to build a leniency instrument.
    history : tuple of StepReport
        Row accounting of the steps that produced the table.
    """

    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    x: np.ndarray
    d: np.ndarray | None = None
    judge: np.ndarray | None = None
    history: tuple = field(default=())

    def __post_init__(self):
        obj = object.__setattr__
        obj(self, "y", _frozen(np.asarray(self.y, dtype=float)))
        obj(self, "t", _frozen(_binary(self.t, "t")))
        obj(self, "z", _frozen(np.asarray(self.z, dtype=float)))
        obj(self, "x", _frozen(self.x))
        if self.d is not None:
            obj(self, "d", _frozen(_binary(self.d, "d")))
        if self.judge is not None:
            obj(self, "judge", _frozen(self.judge))
        n = self.y.shape[0]
        if n < 1:
            raise DataError("table has no rows")
        for name in ("t", "z", "x", "d", "judge"):
            col = getattr(self, name)
            if col is not None and (col.ndim != 1 or col.shape[0] != n):
                raise DataError(f"column {name!r} has length {col.shape[0]}, expected {n}")
        if not np.all(np.isfinite(self.z)):
            raise DataError(f"non-finite instrument value at row {int(np.flatnonzero(~np.isfinite(self.z))[0])}")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def groups(self) -> np.ndarray:
        return np.unique(self.x)

    def column(self, name: str) -> np.ndarray:
        col = getattr(self, name, None)
        if col is None or name == "history":
            raise ConfigurationError(f"column {name!r} is not available")
        return col

    def take(self, idx, step: str | None = None) -> "ObservationTable":
        """Row subset (or resample) preserving the column contract."""
        idx = np.asarray(idx)
        hist = self.history
        if step is not None:
            hist = hist + (StepReport(step, self.n, int(idx.size if idx.dtype != bool else idx.sum())),)
        return ObservationTable(
            y=self.y[idx], t=self.t[idx], z=self.z[idx], x=self.x[idx],
            d=None if self.d is None else self.d[idx],
            judge=None if self.judge is None else self.judge[idx],
            history=hist,
        )

    def with_columns(self, **cols) -> "ObservationTable":
        return replace(self, **cols)

    def to_frame(self) -> pd.DataFrame:
        data = {"y": self.y, "t": self.t}
        if self.d is not None:
            data["d"] = self.d
        data["z"] = self.z
        data["x"] = self.x
        if self.judge is not None:
            data["judge"] = self.judge
        return pd.DataFrame(data)

    def fingerprint(self) -> dict:
        """Row count plus a SHA-256 over the raw column bytes."""
        h = hashlib.sha256()
        for name in ("y", "t", "d", "z", "x", "judge"):
            col = getattr(self, name)
            if col is None:
                continue
            h.update(name.encode())
            if col.dtype.kind in "OUS":
                h.update("\x1f".join(map(str, col.tolist())).encode())
            else:
                h.update(np.ascontiguousarray(col).tobytes())
        return {"rows": self.n, "sha256": h.hexdigest()}


def _float_column(series: pd.Series, what: str) -> np.ndarray:
    try:
        return np.asarray(series.to_numpy(), dtype=float)
    except (TypeError, ValueError):
        pass
    out = np.empty(len(series))
    for i, v in enumerate(series.tolist()):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise DataError(f"non-numeric {what} value {v!r} at row {series.index[i]}") from None
    return out


def load_table(path, columns: Mapping[str, str] | None = None) -> ObservationTable:
    """Read a CSV file into a validated table.

    Parameters
    ----------
    path : path-like
        CSV with a header row.
    columns : mapping, optional
        Role -> header name for any of y, t, d, z, x, judge. Roles not in the
        mapping default to the header of the same name; ``d`` and ``judge`` are
        only read when mapped or present.

    Returns
    -------
    ObservationTable
        Rows with missing mandatory values are dropped; the count is recorded
        in ``history``.

    Raises
    ------
    ConfigurationError
        A mapped or mandatory column is absent.
    DataError
        A treatment code is not 0/1 (the message names the data row, 0-based).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"input file {path} does not exist")
    columns = dict(columns or {})
    unknown = set(columns) - set(MANDATORY + OPTIONAL)
    if unknown:
        raise ConfigurationError(f"unknown column roles {sorted(unknown)}")
    header = set(pd.read_csv(path, nrows=0).columns)
    # y and z parsed by float() below: integer inference would turn "-0" into +0
    as_text = {columns.get(r, r): str for r in ("y", "z") if columns.get(r, r) in header}
    frame = pd.read_csv(path, dtype=as_text)
    roles = {}
    for role in MANDATORY:
        name = columns.get(role, role)
        if name not in header:
            raise ConfigurationError(f"column {name!r} for role {role!r} not found in {path.name}")
        roles[role] = name
    for role in OPTIONAL:
        if role in columns:
            if columns[role] not in header:
                raise ConfigurationError(f"column {columns[role]!r} for role {role!r} not found in {path.name}")
            roles[role] = columns[role]
        elif role in header:
            roles[role] = role
    sub = frame[[roles[r] for r in roles]].copy()
    sub.columns = list(roles)
    n_in = len(sub)
    keep = sub.notna().all(axis=1).to_numpy()
    sub = sub.loc[keep]
    if sub.empty:
        raise DataError("no complete rows after dropping missing values")
    for role in ("t", "d"):
        if role in sub:
            vals = pd.to_numeric(sub[role], errors="coerce").to_numpy()
            bad = ~np.isin(vals, (0, 1))
            if bad.any():
                row = int(sub.index[np.flatnonzero(bad)[0]])
                raise DataError(f"column {roles[role]} has non-binary value {sub[role].iloc[np.flatnonzero(bad)[0]]} at row {row}")
    y = _float_column(sub["y"], "outcome")
    z = _float_column(sub["z"], "instrument")
    if not np.all(np.isfinite(z)):
        row = int(sub.index[np.flatnonzero(~np.isfinite(z))[0]])
        raise DataError(f"non-finite instrument value at row {row}")
    report = StepReport("load", n_in, len(sub), f"{n_in - len(sub)} rows with missing values dropped")
    return ObservationTable(
        y=y,
        t=sub["t"].to_numpy(dtype=float).astype(np.int8),
        z=z,
        x=sub["x"].to_numpy(),
        d=sub["d"].to_numpy(dtype=float).astype(np.int8) if "d" in sub else None,
        judge=sub["judge"].to_numpy() if "judge" in sub else None,
        history=(report,),
    )


def save_table(table: ObservationTable, path) -> None:
    """Write a table as CSV; floats use 17 significant digits so reads round-trip."""
    table.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def leave_one_out_rate(table: ObservationTable, min_cases: int = 20, column: str = "t") -> ObservationTable:
    """Replace ``z`` by each row's leave-one-out decision rate of its judge.

    Judges with ``min_cases`` rows or fewer are dropped, so a judge with a
    single case never produces 0/0.
    """
    if table.judge is None:
        raise ConfigurationError("leave-one-out rate needs a judge column")
    if min_cases < 2:
        raise ParameterError(f"min_cases must be at least 2, got {min_cases}")
    decisions = table.column(column).astype(float)
    labels, codes, counts = np.unique(table.judge, return_inverse=True, return_counts=True)
    sums = np.bincount(codes, weights=decisions)
    keep_judge = counts > min_cases
    keep = keep_judge[codes]
    if not keep.any():
        raise SupportError(f"no judge has more than {min_cases} cases")
    n_j = counts[codes[keep]]
    rate = (sums[codes[keep]] - decisions[keep]) / (n_j - 1)
    out = table.take(np.flatnonzero(keep))
    report = StepReport(
        "leave_one_out", table.n, int(keep.sum()),
        f"{int((~keep_judge).sum())} of {labels.size} judges with <= {min_cases} cases dropped",
    )
    return replace(out, z=rate, history=table.history + (report,))


def support_interval(table: ObservationTable, arm: str = "t") -> tuple[float, float]:
    """Closed interval of instrument values shared by both arms."""
    col = table.column(arm)
    z0, z1 = table.z[col == 0], table.z[col == 1]
    if z0.size == 0 or z1.size == 0:
        raise SupportError(f"arm {arm}={0 if z0.size == 0 else 1} is empty")
    return max(z0.min(), z1.min()), min(z0.max(), z1.max())


def common_support_trim(table: ObservationTable, arm: str = "t") -> ObservationTable:
    """Keep rows whose instrument lies in the support common to both arms.

    One pass with closed boundaries. Dropping rows can move an arm's sample
    extreme, so a second pass is a no-op only when the arms share their
    extreme values after the first one.
    """
    lo, hi = support_interval(table, arm)
    keep = (table.z >= lo) & (table.z <= hi)
    if not keep.any():
        raise SupportError(f"instrument supports of the two {arm} arms do not overlap")
    out = table.take(np.flatnonzero(keep))
    report = StepReport("common_support", table.n, int(keep.sum()), f"kept z in [{lo}, {hi}]")
    return replace(out, history=table.history + (report,))


@dataclass(frozen=True)
class GridSpec:
    """Instrument values at which curves are evaluated.

    Parameters
    ----------
    points : sequence of float
        Strictly increasing instrument values.
    per_group : bool
        Evaluate separately for every group (True) or average over groups.
    groups : sequence, optional
        Restrict per-group evaluation to these labels.
    """

    points: tuple
    per_group: bool = True
    groups: tuple | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ParameterError("grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ParameterError("grid points must be strictly increasing")
        object.__setattr__(self, "points", tuple(float(p) for p in pts))
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.points)

    @classmethod
    def from_quantiles(cls, z, n: int = 19, **kw) -> "GridSpec":
        """Equally spaced interior quantiles; ``n=19`` gives the 5th..95th percentiles.

        Tied quantiles collapse to one point.
        """
        if n < 1:
            raise ParameterError("need at least one quantile")
        probs = np.arange(1, n + 1) / (n + 1)
        q = np.unique(np.quantile(np.asarray(z, dtype=float), probs))
        return cls(points=tuple(q), **kw)

    def check_within(self, lo: float, hi: float) -> None:
        z = self.z
        if z[0] < lo or z[-1] > hi:
            raise ParameterError(f"grid [{z[0]}, {z[-1]}] leaves the observed instrument range [{lo}, {hi}]")


def as_grid(grid: GridSpec | Sequence[float]) -> GridSpec:
    return grid if isinstance(grid, GridSpec) else GridSpec(points=tuple(grid))
