"""Binary-instrument analogue: Wald ratio, its sign and the LATE band."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ObservationTable
from .errors import ParameterError, RankConditionError, SupportError
from .export import dumps_json


@dataclass(frozen=True)
class LateDeltas:
    """Arm-mean differences between z = 1 and z = 0."""

    dy: float
    dt: float
    dd: float | None = None
    n0: int = 0
    n1: int = 0

    @property
    def wald(self) -> float:
        if self.dt == 0:
            raise RankConditionError("observed treatment rate is identical in both instrument arms")
        return self.dy / self.dt

    @property
    def wald_d(self) -> float | None:
        if self.dd is None:
            return None
        if self.dd == 0:
            raise RankConditionError("true treatment rate is identical in both instrument arms")
        return self.dy / self.dd


@dataclass(frozen=True)
class LateBand:
    """Interval for the complier effect with the identified sign."""

    lower: float
    upper: float
    sign: int
    wald: float
    c: float

    def contains(self, value) -> bool:
        return self.lower <= value <= self.upper


def late_deltas(table: ObservationTable) -> LateDeltas:
    """Differences in mean outcome and treatment rates across a binary instrument.

    Raises
    ------
    SupportError
        ``z`` is not 0/1 or one arm is empty.
    RankConditionError
        The observed treatment rate does not move with ``z``.
    """
    z = table.z
    if not np.all((z == 0) | (z == 1)):
        raise SupportError("binary-instrument analysis needs z coded 0/1")
    one = z == 1
    n1 = int(one.sum())
    n0 = table.n - n1
    if n0 == 0 or n1 == 0:
        raise SupportError(f"instrument arm z={0 if n0 == 0 else 1} is empty")
    dy = float(table.y[one].mean() - table.y[~one].mean())
    dt = float(table.t[one].mean() - table.t[~one].mean())
    dd = None if table.d is None else float(table.d[one].mean() - table.d[~one].mean())
    if dt == 0:
        raise RankConditionError("observed treatment rate is identical in both instrument arms")
    return LateDeltas(dy, dt, dd, n0, n1)


def late_band(deltas: LateDeltas, c: float) -> LateBand:
    """[W/c, c W] for a positive Wald ratio W, mirrored if negative, {0} if zero.

    The band is valid for any c >= 1; it is sharp only for c up to one over
    the larger arm-level treatment rate (see :func:`late_report`).
    """
    c = float(c)
    if not math.isfinite(c) or c < 1:
        raise ParameterError(f"sensitivity constant must be a finite number >= 1, got {c!r}")
    w = deltas.wald
    if w > 0:
        lo, hi = w / c, c * w
    elif w < 0:
        lo, hi = c * w, w / c
    else:
        lo = hi = 0.0
    return LateBand(lo, hi, (w > 0) - (w < 0), w, c)


def late_report(deltas: LateDeltas, c: float, p_bar: float | None = None) -> dict:
    """JSON-ready summary {deltas, wald, sign, band, c}."""
    band = late_band(deltas, c)
    report = {
        "deltas": {k: v for k, v in asdict(deltas).items() if v is not None},
        "wald": band.wald,
        "sign": band.sign,
        "band": [band.lower, band.upper],
        "c": band.c,
    }
    if p_bar is not None and p_bar > 0:
        report["sharp_c_max"] = 1.0 / p_bar
        report["sharp"] = bool(c <= 1.0 / p_bar)
    return report


def late_report_from_table(table: ObservationTable, c: float) -> dict:
    deltas = late_deltas(table)
    one = table.z == 1
    p_bar = max(float(table.t[one].mean()), float(table.t[~one].mean()))
    return late_report(deltas, c, p_bar)


def dumps_late(report: dict, path=None) -> str:
    return dumps_json(report, path)
