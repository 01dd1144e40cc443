import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtebounds.core import ObservationTable
from mtebounds.errors import SingularDesignError, WeakInstrumentError, ParameterError
from mtebounds.regress import fit_fe_poly, naive_iv
from mtebounds.simulate import McConfig, gen_threshold_design


def raw_design(table, j_max, j_int):
    """Dummies, group-interacted raw powers, common raw powers (same order as the fit)."""
    labels, codes = np.unique(table.x, return_inverse=True)
    D = np.eye(labels.size)[codes]
    cols = [D]
    for j in range(1, j_int + 1):
        cols.append(D * table.z[:, None] ** j)
    for j in range(j_int + 1, j_max + 1):
        cols.append(table.z[:, None] ** j)
    return np.concatenate(cols, axis=1)


def normal_equations(X, y):
    return np.linalg.solve(X.T @ X, X.T @ y)


def hc3_dense(X, y):
    XtX_inv = np.linalg.inv(X.T @ X)
    b = XtX_inv @ X.T @ y
    e = y - X @ b
    h = np.diag(X @ XtX_inv @ X.T)
    meat = X.T @ np.diag(e ** 2 / (1 - h) ** 2) @ X
    return b, XtX_inv @ meat @ XtX_inv


def table_from(y, z, x):
    n = len(y)
    return ObservationTable(y=y, t=np.zeros(n, int), z=z, x=x)


def test_exact_linear():
    z = np.linspace(0, 1, 11)
    fit = fit_fe_poly(table_from(0.2 + 0.5 * z, z, np.zeros(11, int)), "y", 1)
    assert fit.intercepts[0] == pytest.approx(0.2, abs=1e-14)
    assert fit.common[0] == pytest.approx(0.5, abs=1e-14)
    assert np.max(np.abs(fit.residuals)) < 1e-14


def test_exact_quadratic_interpolation():
    fit = fit_fe_poly(table_from([0.0, 1.0, 4.0], [0.0, 1.0, 2.0], [0, 0, 0]), "y", 2)
    np.testing.assert_allclose(fit.params, [0.0, 0.0, 1.0], atol=1e-13)
    # three points, three parameters: every row has full leverage, so HC3 is undefined
    assert np.all(np.isnan(fit.se))


@pytest.mark.parametrize("j_max,j_int", [(2, 0), (2, 1), (2, 2), (3, 1), (1, 1)])
def test_matches_normal_equations(rng, j_max, j_int):
    n = 50
    z = rng.uniform(size=n)
    x = rng.integers(0, 3, size=n)
    y = rng.normal(size=n) + z - 0.3 * x
    tab = table_from(y, z, x)
    fit = fit_fe_poly(tab, "y", j_max, j_int)
    expected = normal_equations(raw_design(tab, j_max, j_int), y)
    np.testing.assert_allclose(fit.params, expected, atol=1e-8)


@pytest.mark.parametrize("j_max,j_int", [(2, 0), (2, 2), (4, 2)])
def test_hc3_matches_dense_oracle(rng, j_max, j_int):
    n = 200
    z = rng.uniform(size=n)
    x = rng.integers(0, 4, size=n)
    y = np.sin(3 * z) + 0.2 * x + rng.normal(size=n) * (0.2 + z)
    tab = table_from(y, z, x)
    fit = fit_fe_poly(tab, "y", j_max, j_int)
    b, V = hc3_dense(raw_design(tab, j_max, j_int), y)
    np.testing.assert_allclose(fit.params, b, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(fit.cov, V, rtol=1e-6, atol=1e-10)
    q = fit.f_df
    wald = b[-q:] @ np.linalg.solve(V[-q:, -q:], b[-q:]) / q
    assert fit.f_stat == pytest.approx(wald, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 3))
def test_residuals_orthogonal_to_design(seed, j_max, j_int_raw):
    j_int = min(j_int_raw, j_max)
    rng = np.random.default_rng(seed)
    n = 60
    z = rng.uniform(-2, 5, size=n)
    x = rng.integers(0, 3, size=n)
    y = 100 * rng.normal(size=n) + z ** 2
    tab = table_from(y, z, x)
    fit = fit_fe_poly(tab, "y", j_max, j_int)
    X = raw_design(tab, j_max, j_int)
    # columns normalized so the bound is in units of the response scale
    Xn = X / np.linalg.norm(X, axis=0)
    assert np.max(np.abs(Xn.T @ fit.residuals)) <= 1e-8 * n * np.std(y)


def test_relabeling_groups_permutes_intercepts(rng):
    n = 120
    z = rng.uniform(size=n)
    x = rng.integers(0, 3, size=n)
    y = z + x + rng.normal(size=n)
    fit = fit_fe_poly(table_from(y, z, x), "y", 2, 1)
    relabel = np.array([20, 10, 30])
    fit2 = fit_fe_poly(table_from(y, z, relabel[x]), "y", 2, 1)
    # sorted new labels 10, 20, 30 correspond to old groups 1, 0, 2
    order = [1, 0, 2]
    np.testing.assert_allclose(fit2.intercepts, fit.intercepts[order], atol=1e-12)
    np.testing.assert_allclose(fit2.interacted, fit.interacted[order], atol=1e-12)
    np.testing.assert_allclose(fit2.common, fit.common, atol=1e-12)
    np.testing.assert_allclose(fit2.residuals, fit.residuals, atol=1e-12)


def test_full_interaction_equals_separate_regressions(rng):
    n = 90
    z = rng.uniform(size=n)
    x = rng.integers(0, 3, size=n)
    y = np.cos(2 * z + x) + 0.1 * rng.normal(size=n)
    fit = fit_fe_poly(table_from(y, z, x), "y", 2, 2)
    coefs = fit.coefficient_matrix()
    for g in range(3):
        sel = x == g
        expected = np.polynomial.polynomial.polyfit(z[sel], y[sel], 2)
        np.testing.assert_allclose(coefs[g], expected, atol=1e-9)


@pytest.mark.parametrize("j_max,j_int", [(2, 0), (2, 1), (3, 2)])
def test_within_path_matches_dummies(rng, j_max, j_int):
    n = 300
    z = rng.uniform(size=n)
    x = rng.integers(0, 40, size=n)
    y = z - z ** 2 + 0.05 * x + rng.normal(size=n)
    tab = table_from(y, z, x)
    dummies = fit_fe_poly(tab, "y", j_max, j_int)
    within = fit_fe_poly(tab, "y", j_max, j_int, max_dummy_groups=0)
    assert (dummies.method, within.method) == ("dummies", "within")
    np.testing.assert_allclose(within.params, dummies.params, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(within.residuals, dummies.residuals, atol=1e-10)
    np.testing.assert_allclose(within.leverage, dummies.leverage, atol=1e-10)
    np.testing.assert_allclose(within.cov, dummies.cov, rtol=1e-6, atol=1e-12)


def test_many_groups_use_within_path(rng):
    G = 1100
    x = np.repeat(np.arange(G), 3)
    z = rng.uniform(size=x.size)
    y = z + rng.normal(size=x.size)
    fit = fit_fe_poly(table_from(y, z, x), "y", 1)
    assert fit.method == "within"
    assert fit.intercepts.shape == (G,)


def test_constant_instrument_is_rank_deficient():
    with pytest.raises(SingularDesignError) as err:
        fit_fe_poly(table_from([1.0, 2.0, 3.0, 4.0], [0.5] * 4, [0, 0, 1, 1]), "y", 1)
    assert err.value.column == "z^1"


def test_single_observation_group_with_interactions():
    with pytest.raises(SingularDesignError) as err:
        fit_fe_poly(table_from([1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.3, 0.4], [0, 0, 0, 1]), "y", 1, 1)
    assert err.value.column == "z^1:x=1"


def test_repeated_z_within_group_names_column():
    # group 1 has two rows at the same z, so its interacted slope is not identified
    with pytest.raises(SingularDesignError) as err:
        fit_fe_poly(table_from([1.0, 2.0, 3.0, 4.0, 5.0], [0.1, 0.2, 0.3, 0.4, 0.4], [0, 0, 0, 1, 1]), "y", 1, 1)
    assert err.value.column == "z^1:x=1"


def test_too_few_rows_and_bad_degrees():
    with pytest.raises(SingularDesignError):
        fit_fe_poly(table_from([1.0, 2.0], [0.1, 0.2], [0, 0]), "y", 2)
    with pytest.raises(ParameterError):
        fit_fe_poly(table_from([1.0, 2.0], [0.1, 0.2], [0, 0]), "y", 1, 2)


def test_response_vector(rng):
    z = np.linspace(0, 1, 20)
    tab = table_from(rng.normal(size=20), z, np.zeros(20, int))
    fit = fit_fe_poly(tab, 0.05 + 0.54 * z, 1)
    np.testing.assert_allclose(fit.params, [0.05, 0.54], atol=1e-14)
    with pytest.raises(ParameterError):
        fit_fe_poly(tab, np.zeros(3), 1)


def test_predict(rng):
    z = rng.uniform(size=40)
    x = rng.integers(0, 2, size=40)
    fit = fit_fe_poly(table_from(rng.normal(size=40), z, x), "y", 2, 1)
    np.testing.assert_allclose(fit.predict(z, x), fit.fitted, atol=1e-12)


# naive 2SLS -----------------------------------------------------------------

def test_iv_deterministic_treatment():
    z = np.linspace(0, 1, 101)
    t = (z > np.median(z)).astype(int)
    tab = ObservationTable(y=t.astype(float), t=t, z=z, x=np.zeros(101, int))
    assert naive_iv(tab).coef == pytest.approx(1.0, abs=1e-12)


def test_iv_null_effect(rng):
    n = 50_000
    z = rng.uniform(size=n)
    t = (rng.uniform(size=n) < 0.2 + 0.6 * z).astype(int)
    tab = ObservationTable(y=rng.normal(size=n), t=t, z=z, x=rng.integers(0, 5, size=n))
    fit = naive_iv(tab)
    assert abs(fit.coef) < 3 * fit.se
    clustered = naive_iv(tab, cluster=True)
    assert clustered.coef == fit.coef and np.isfinite(clustered.se)


def test_iv_degenerate_instrument():
    tab = ObservationTable(y=[1.0, 2.0, 3.0, 4.0], t=[0, 1, 0, 1], z=[0.1, 0.1, 0.1, 0.1], x=[0, 0, 0, 0])
    with pytest.raises(WeakInstrumentError):
        naive_iv(tab)


def test_iv_ratio_under_misclassification():
    cfg = McConfig(n=200_000, r=0.9)
    tab = gen_threshold_design(cfg, 3)
    bt, bd = naive_iv(tab, "t"), naive_iv(tab, "d")
    # same reduced form, first stages differ by the factor 2r - 1
    ratio = bt.first_stage_cov / bd.first_stage_cov
    assert ratio == pytest.approx(2 * cfg.r - 1, abs=0.02)
    assert bd.coef / bt.coef == pytest.approx(ratio, rel=1e-12)
