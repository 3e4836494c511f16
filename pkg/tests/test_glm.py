import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.errors import DesignError, SingularDesignError
from src.services.glm_service import (DesignMatrix, Formula, IrlsOptions, build_design, deviance, fit_formula,
                                      fit_info, interpret_effects, irls_fit, log_likelihood, pearson_chi2,
                                      summarize, weighted_qr)
from src.services.ingest_service import ModelFrame

TIGHT = IrlsOptions(max_iter=100, tol=1e-12)


def newton_oracle(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """对 Poisson 对数似然做完整 Newton-Raphson，带步长减半"""
    def llf(beta):
        eta = X @ beta
        return float(np.sum(y * eta - np.exp(eta)))

    beta = np.zeros(X.shape[1])
    beta[0] = math.log(max(y.mean(), 1e-3))
    for _ in range(200):
        mu = np.exp(X @ beta)
        grad = X.T @ (y - mu)
        hess = X.T @ (X * mu[:, None])
        step = np.linalg.solve(hess, grad)
        scale, current = 1.0, llf(beta)
        while llf(beta + scale * step) < current - 1e-12 and scale > 1e-8:
            scale /= 2.0
        beta = beta + scale * step
        if np.max(np.abs(scale * step)) < 1e-14:
            break
    return beta


def _design(values: np.ndarray) -> DesignMatrix:
    names = ('Intercept',) + tuple(f"x{j}" for j in range(1, values.shape[1]))
    return DesignMatrix(values=values, column_names=names)


# ──────────────────────────────────────────────────────────────
# 拟合统计量
# ──────────────────────────────────────────────────────────────

def test_log_likelihood_values():
    assert log_likelihood([0], [1]) == pytest.approx(-1.0)
    # 6·ln2 − 6 − (ln1! + ln2! + ln3!)
    assert log_likelihood([1, 2, 3], [2, 2, 2]) == pytest.approx(6 * math.log(2) - 6 - math.log(12), abs=1e-12)


def test_deviance_values():
    assert deviance([1, 2, 3], [1, 2, 3]) == pytest.approx(0.0, abs=1e-12)
    assert deviance([1, 2, 3], [2, 2, 2]) == pytest.approx(1.046496, abs=1e-6)
    assert deviance([0, 0], [0.5, 1.5]) == pytest.approx(4.0)


def test_pearson_chi2_values():
    assert pearson_chi2([4], [1]) == 9.0
    assert pearson_chi2([1, 2, 3], [2, 2, 2]) == pytest.approx(1.0)


# ──────────────────────────────────────────────────────────────
# 设计矩阵
# ──────────────────────────────────────────────────────────────

def test_treatment_coding_uses_smallest_level_as_reference(model_frame):
    design, y = build_design(model_frame, Formula('FTHG', ('x2', 'HomeTeam', 'x1')))
    assert design.column_names == ('Intercept', 'HomeTeam[T.Chelsea]', 'HomeTeam[T.Leeds]', 'x2', 'x1')
    assert design.reference_levels == {'HomeTeam': 'Arsenal'}
    assert np.all(design.values[:, 0] == 1.0)
    assert design.values.shape == (60, 5)
    assert len(y) == 60


def test_intercept_only_design(model_frame):
    design, _ = build_design(model_frame, Formula('FTHG', ()))
    assert design.column_names == ('Intercept',)


def test_design_errors(model_frame):
    with pytest.raises(DesignError, match='nope'):
        build_design(model_frame, Formula('FTHG', ('nope',)))

    one_level = ModelFrame.from_frame(
        model_frame.data.assign(HomeTeam='Arsenal'), categorical=('HomeTeam',))
    with pytest.raises(DesignError, match='HomeTeam'):
        build_design(one_level, Formula('FTHG', ('HomeTeam',)))

    zeros = ModelFrame.from_frame(model_frame.data.assign(x1=0.0), categorical=('HomeTeam',))
    with pytest.raises(DesignError, match='x1'):
        build_design(zeros, Formula('FTHG', ('x1',)))


def test_formula_parse_and_label():
    formula = Formula.parse('FTHG ~ HTAG + logHST + HomeTeam')
    assert formula.terms == ('HTAG', 'logHST', 'HomeTeam')
    assert formula.label == 'HTAG + logHST + HomeTeam'
    assert str(formula) == 'FTHG ~ HTAG + logHST + HomeTeam'
    assert Formula.parse('1').terms == ()
    with pytest.raises(DesignError):
        Formula('FTHG', ('HTAG', 'HTAG'))


# ──────────────────────────────────────────────────────────────
# IRLS
# ──────────────────────────────────────────────────────────────

def test_intercept_only_fit_is_log_mean():
    fit = irls_fit(_design(np.ones((3, 1))), [1, 2, 3], TIGHT)
    assert fit.coefficients[0] == pytest.approx(math.log(2.0), abs=1e-10)
    assert fit.fitted_means == pytest.approx([2.0, 2.0, 2.0], abs=1e-10)
    assert fit.converged


@pytest.mark.parametrize('seed', range(5))
def test_intercept_only_on_random_counts(seed):
    y = np.random.default_rng(seed).poisson(2.5, size=40)
    fit = irls_fit(_design(np.ones((40, 1))), y, TIGHT)
    assert fit.coefficients[0] == pytest.approx(math.log(y.mean()), abs=1e-10)


def test_saturated_fit():
    X = np.array([[1.0, 0.0], [1.0, 1.0]])
    fit = irls_fit(_design(X), [1, 3], TIGHT)
    assert fit.coefficients == pytest.approx([0.0, math.log(3.0)], abs=1e-8)
    assert fit.deviance == pytest.approx(0.0, abs=1e-10)
    assert fit.df_resid == 0


@pytest.mark.parametrize('seed', range(20))
def test_irls_matches_newton_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    n, p = 50, 2 + seed % 3
    X = np.column_stack([np.ones(n), rng.normal(0.0, 0.5, size=(n, p - 1))])
    beta_true = np.concatenate([[0.3], rng.uniform(-0.5, 0.5, size=p - 1)])
    y = rng.poisson(np.exp(X @ beta_true)).astype(float)

    fit = irls_fit(_design(X), y, TIGHT)
    assert fit.converged
    assert fit.coefficients == pytest.approx(newton_oracle(X, y), abs=1e-8)

    score = X.T @ (y - fit.fitted_means)
    assert np.all(np.abs(score) < 1e-6 * n)


def test_irls_known_coefficients_with_default_options():
    rng = np.random.default_rng(42)
    n = 50
    X = np.column_stack([np.ones(n), rng.normal(0, 0.5, n), rng.normal(0, 0.5, n)])
    y = rng.poisson(np.exp(X @ np.array([0.3, -0.2, 0.5]))).astype(float)
    fit = irls_fit(_design(X), y)
    assert fit.converged
    assert fit.iterations <= 25
    assert fit.coefficients == pytest.approx(newton_oracle(X, y), abs=1e-6)


def test_fit_invariants(model_frame):
    fit = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2', 'HomeTeam')))
    n, p = fit.n_obs, fit.n_params
    assert fit.aic == pytest.approx(2 * p - 2 * fit.llf, abs=1e-12)
    assert fit.df_resid + fit.df_model + 1 == n
    assert np.all(fit.fitted_means > 0)
    assert np.allclose(fit.covariance, fit.covariance.T, atol=1e-10)
    assert np.all(np.diag(fit.covariance) >= 0)
    assert fit.null_deviance >= fit.deviance
    assert list(fit.observation_ids) == list(model_frame.observation_ids)
    history = fit.deviance_history
    assert all(b <= a + 1e-9 for a, b in zip(history[1:], history[2:]))


def test_nested_models_never_increase_deviance(model_frame):
    small = fit_formula(model_frame, Formula('FTHG', ('x1',)))
    large = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2')))
    largest = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2', 'HomeTeam')))
    assert large.deviance <= small.deviance + 1e-8
    assert largest.deviance <= large.deviance + 1e-8


def test_collinear_design_is_singular():
    rng = np.random.default_rng(5)
    x = rng.normal(size=30)
    X = np.column_stack([np.ones(30), x, 2.0 * x])
    y = rng.poisson(1.0, size=30)
    with pytest.raises(SingularDesignError) as info:
        irls_fit(_design(X), y)
    assert set(info.value.collinear) & {'x1', 'x2'}


def test_weighted_qr_reproduces_weighted_design():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    w = np.array([1.0, 4.0, 2.0, 0.5])
    sw, q, r, piv = weighted_qr(X, w, ('Intercept', 'x1'))
    assert sw == pytest.approx(np.sqrt(w))
    assert q @ r == pytest.approx((X * sw[:, None])[:, piv])

    with pytest.raises(SingularDesignError):
        weighted_qr(np.column_stack([X, 2.0 * X[:, 1]]), w, ('Intercept', 'x1', 'x2'))


def test_negative_response_rejected():
    with pytest.raises(DesignError):
        irls_fit(_design(np.ones((3, 1))), [1, -1, 2])


# ──────────────────────────────────────────────────────────────
# 摘要
# ──────────────────────────────────────────────────────────────

def test_summarize_columns_and_z(model_frame):
    fit = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2')))
    table = summarize(fit, 0.95)
    assert list(table.columns) == ['coef', 'std_err', 'z', 'p_value', 'ci_low', 'ci_high']
    assert list(table.index) == ['Intercept', 'x1', 'x2']
    row = table.loc['x2']
    assert row['z'] == pytest.approx(row['coef'] / row['std_err'])
    half_width = 1.959964 * row['std_err']
    assert row['ci_high'] - row['coef'] == pytest.approx(half_width, rel=1e-6)
    assert table['p_value'].between(0, 1).all()


def _fake_fit(coef: float, se: float):
    X = np.ones((4, 1))
    fit = irls_fit(_design(X), [1, 2, 1, 2])
    return replace(fit, coefficients=np.array([coef]), covariance=np.array([[se ** 2]]))


def test_summarize_arithmetic_examples():
    row = summarize(_fake_fit(0.14, 0.031)).iloc[0]
    assert row['z'] == pytest.approx(4.5161, abs=0.01)
    assert row['p_value'] < 1e-4

    row = summarize(_fake_fit(0.6947, 0.022)).iloc[0]
    assert row['z'] == pytest.approx(31.577, abs=0.01)

    row = summarize(_fake_fit(0.0, 0.5)).iloc[0]
    assert row['z'] == 0.0 and row['p_value'] == pytest.approx(1.0)
    assert row['ci_low'] == pytest.approx(-row['ci_high'])


def test_summarize_zero_standard_error_is_undefined():
    row = summarize(_fake_fit(0.3, 0.0)).iloc[0]
    assert np.isnan(row['z']) and np.isnan(row['p_value'])


def test_interpret_effects_orders_by_abs_z(model_frame):
    fit = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2', 'HomeTeam')))
    effects = interpret_effects(fit)
    assert 'Intercept' not in effects.index
    assert effects['z'].abs().is_monotonic_decreasing
    assert effects['irr'].to_numpy() == pytest.approx(np.exp(effects['coef'].to_numpy()))
    assert set(effects['direction']) <= {'up', 'down'}


def test_fit_info_block(model_frame):
    fit = fit_formula(model_frame, Formula('FTHG', ('x1', 'x2', 'HomeTeam')))
    info = dict(fit_info(fit))
    assert info['No. Observations:'] == '60'
    assert info['Df Model:'] == '4'
    assert info['Df Residuals:'] == '55'
    assert info['Method:'] == 'IRLS'
    assert info['Scale:'] == '1.0000'
