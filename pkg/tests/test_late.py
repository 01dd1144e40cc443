import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtebounds.core import ObservationTable
from mtebounds.errors import ParameterError, RankConditionError, SupportError
from mtebounds.late import LateDeltas, dumps_late, late_band, late_deltas, late_report, late_report_from_table


def arms(y0, y1, t0, t1, n=20, d=None):
    """Table whose arm means are exactly the given values (n rows per arm)."""
    def col(p):
        k = int(round(p * n))
        return np.r_[np.ones(k), np.zeros(n - k)]
    y = np.r_[col(y0), col(y1)]
    t = np.r_[col(t0), col(t1)].astype(int)
    z = np.r_[np.zeros(n), np.ones(n)]
    dd = None if d is None else np.r_[col(d[0]), col(d[1])].astype(int)
    return ObservationTable(y=y, t=t, z=z, x=np.zeros(2 * n, int), d=dd)


def test_deltas_arithmetic():
    dl = late_deltas(arms(0.30, 0.35, 0.40, 0.50))
    assert dl.dy == pytest.approx(0.05, abs=1e-15)
    assert dl.dt == pytest.approx(0.10, abs=1e-15)
    assert dl.wald == pytest.approx(0.5, abs=1e-14)
    assert (dl.n0, dl.n1) == (20, 20)


def test_deltas_zero_outcome_change():
    dl = late_deltas(arms(0.3, 0.3, 0.4, 0.5))
    assert dl.dy == 0 and dl.wald == 0


def test_deltas_errors():
    with pytest.raises(RankConditionError):
        late_deltas(arms(0.3, 0.35, 0.4, 0.4))
    tab = ObservationTable(y=[1.0, 0.0], t=[1, 0], z=[1.0, 1.0], x=[0, 0])
    with pytest.raises(SupportError):
        late_deltas(tab)
    tab = ObservationTable(y=[1.0, 0.0], t=[1, 0], z=[1.0, 0.5], x=[0, 0])
    with pytest.raises(SupportError):
        late_deltas(tab)


@pytest.mark.parametrize("dy,c,lo,hi", [(0.05, 1.25, 0.4, 0.625), (0.05, 1.0, 0.5, 0.5), (-0.05, 1.25, -0.625, -0.4), (0.0, 2.0, 0.0, 0.0)])
def test_band_examples(dy, c, lo, hi):
    band = late_band(LateDeltas(dy, 0.10), c)
    assert band.lower == lo and band.upper == hi
    assert band.sign == (dy > 0) - (dy < 0)


def test_band_rejects_small_c():
    with pytest.raises(ParameterError):
        late_band(LateDeltas(0.05, 0.1), 0.9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1, allow_subnormal=False), st.one_of(st.floats(0.01, 1), st.floats(-1, -0.01)), st.floats(1, 10), st.floats(0, 5))
def test_band_invariants(dy, dt, c, extra):
    dl = LateDeltas(dy, dt)
    band = late_band(dl, c)
    assert band.contains(dl.wald)
    wider = late_band(dl, c + extra)
    assert wider.lower <= band.lower and band.upper <= wider.upper
    assert np.sign(band.lower) == np.sign(band.upper) == np.sign(dl.wald)


def test_identical_treatments_give_identical_wald():
    tab = arms(0.2, 0.45, 0.3, 0.6, d=(0.3, 0.6))
    dl = late_deltas(tab)
    assert dl.wald == dl.wald_d


def test_report():
    rep = late_report(LateDeltas(0.05, 0.10, n0=10, n1=12), 1.25)
    assert rep["band"] == [0.4, 0.625]
    assert rep["sign"] == 1 and rep["c"] == 1.25
    assert set(rep) == {"deltas", "wald", "sign", "band", "c"}
    full = late_report_from_table(arms(0.30, 0.35, 0.40, 0.50), 1.25)
    assert full["sharp_c_max"] == pytest.approx(2.0)
    assert full["sharp"] is True
    parsed = json.loads(dumps_late(full))
    assert parsed["deltas"]["n1"] == 20
