"""
Poisson GLM 服务 (glm_core)

职责：
  • Formula / build_design()  ← 公式 → 设计矩阵（类别变量用 treatment 编码，
                                 字典序最小的水平为参照水平）
  • irls_fit()                ← log 连接 Poisson GLM 的迭代重加权最小二乘
  • log_likelihood() / deviance() / pearson_chi2()
  • summarize()               ← coef / std err / z / P>|z| / 置信区间
  • interpret_effects()       ← 发生率比 exp(coef)，按 |z| 排序
  • fit_info()                ← 拟合摘要块（Dep. Variable, Deviance, ...）

IRLS 约定：
  • 初值 μ₀ = y + 0.5，第一步即在工作响应上做一次加权最小二乘
  • 收敛判据 |D_t − D_{t−1}| / (|D_t| + 0.1) < tol（默认 1e-8，最多 25 次）
  • 加权最小二乘先用 X'WX 的 Cholesky 分解，失败时退回 √W·X 的列主元 QR
  • 协方差 = (X'WX)⁻¹，scale 固定为 1
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr, solve_triangular
from scipy.special import xlogy

from src.errors import DesignError, DivergenceError, DomainError, SingularDesignError
from src.services.ingest_service import ModelFrame
from src.services.specfun import ln_gamma, normal_cdf, normal_quantile

logger = logging.getLogger(__name__)

INTERCEPT = 'Intercept'
_MAX_ETA = 700.0
_RANK_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class IrlsOptions:
    max_iter: int = 25
    tol: float = 1e-8


@dataclass(frozen=True)
class Formula:
    response: str
    terms: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise DesignError(f"公式中存在重复项: {' + '.join(self.terms)}")

    @property
    def label(self) -> str:
        """不含响应的右侧表达式；仅截距时为 '1'"""
        return ' + '.join(self.terms) if self.terms else '1'

    def __str__(self) -> str:
        return f"{self.response} ~ {self.label}"

    @classmethod
    def parse(cls, text: str, response: str = 'FTHG') -> 'Formula':
        """
        解析 'FTHG ~ HTAG + logHST' 或仅右侧 'HTAG + logHST'。
        右侧为 '1' 时表示仅截距模型。
        """
        if '~' in text:
            lhs, rhs = text.split('~', 1)
            response = lhs.strip() or response
        else:
            rhs = text
        terms = tuple(t.strip() for t in rhs.split('+') if t.strip())
        if terms == ('1',):
            terms = ()
        return cls(response=response, terms=terms)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    reference_levels: dict[str, str] = field(default_factory=dict)
    observation_ids: np.ndarray | None = None

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_params(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    fitted_means: np.ndarray
    deviance: float
    pearson_chi2: float
    llf: float
    df_resid: int
    df_model: int
    aic: float
    iterations: int
    converged: bool
    null_deviance: float
    deviance_history: tuple[float, ...]
    response: np.ndarray
    design: DesignMatrix
    formula: str = ''

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.design.column_names

    @property
    def n_obs(self) -> int:
        return self.design.n_obs

    @property
    def n_params(self) -> int:
        return self.design.n_params

    @property
    def observation_ids(self) -> np.ndarray:
        if self.design.observation_ids is None:
            return np.arange(self.n_obs)
        return self.design.observation_ids

    @property
    def params(self) -> pd.Series:
        return pd.Series(self.coefficients, index=list(self.column_names))


# ──────────────────────────────────────────────────────────────
# 设计矩阵
# ──────────────────────────────────────────────────────────────

def _is_categorical_term(frame: ModelFrame, term: str) -> bool:
    return term in frame.categorical or not pd.api.types.is_numeric_dtype(frame.data[term])


def build_design(frame: ModelFrame, formula: Formula) -> tuple[DesignMatrix, np.ndarray]:
    """列顺序：Intercept，类别哑变量（水平序），数值项（公式序）"""
    data = frame.data
    unknown = [t for t in (formula.response, *formula.terms) if t not in data.columns]
    if unknown:
        raise DesignError(f"数据中不存在公式项: {', '.join(unknown)}")

    n = len(data)
    columns: list[np.ndarray] = [np.ones(n)]
    names: list[str] = [INTERCEPT]
    references: dict[str, str] = {}

    categorical = [t for t in formula.terms if _is_categorical_term(frame, t)]
    numeric = [t for t in formula.terms if t not in categorical]

    for term in categorical:
        values = data[term].astype(str).to_numpy()
        levels = sorted(set(values))
        if len(levels) < 2:
            raise DesignError(f"类别变量 {term} 只有 1 个水平，无法构造对比")
        references[term] = levels[0]
        for level in levels[1:]:
            columns.append((values == level).astype(float))
            names.append(f"{term}[T.{level}]")

    for term in numeric:
        col = data[term].to_numpy(dtype=float)
        if not np.any(col):
            raise DesignError(f"数值项 {term} 全为 0")
        columns.append(col)
        names.append(term)

    y = data[formula.response].to_numpy(dtype=float)
    if np.any(y < 0):
        raise DesignError(f"响应 {formula.response} 含负值")

    design = DesignMatrix(
        values=np.column_stack(columns),
        column_names=tuple(names),
        reference_levels=references,
        observation_ids=data.index.to_numpy(),
    )
    return design, y


# ──────────────────────────────────────────────────────────────
# 拟合统计量
# ──────────────────────────────────────────────────────────────

def _check_pair(y, mu) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape:
        raise DomainError(f"y 与 μ 长度不一致: {y.shape} vs {mu.shape}")
    if np.any(mu <= 0):
        raise DomainError("μ 必须全部 > 0")
    return y, mu


def log_likelihood(y, mu) -> float:
    """Σ [ y·ln μ − μ − ln Γ(y+1) ]"""
    y, mu = _check_pair(y, mu)
    log_factorials = {v: ln_gamma(v + 1.0) for v in np.unique(y)}
    ln_y_fact = np.array([log_factorials[v] for v in y])
    return float(np.sum(xlogy(y, mu) - mu - ln_y_fact))


def deviance(y, mu) -> float:
    """2·Σ [ y·ln(y/μ) − (y − μ) ]，y = 0 时 y·ln(y/μ) 记为 0"""
    y, mu = _check_pair(y, mu)
    unit = xlogy(y, y) - xlogy(y, mu) - (y - mu)
    return float(max(0.0, 2.0 * np.sum(unit)))


def pearson_chi2(y, mu) -> float:
    y, mu = _check_pair(y, mu)
    return float(np.sum((y - mu) ** 2 / mu))


# ──────────────────────────────────────────────────────────────
# 加权最小二乘
# ──────────────────────────────────────────────────────────────

def weighted_qr(X: np.ndarray, w: np.ndarray, names: Sequence[str]):
    """√W·X 的列主元 QR；秩亏时抛 SingularDesignError。返回 (√w, Q, R, piv)"""
    sw = np.sqrt(w)
    q, r, piv = qr(X * sw[:, None], mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(X.shape) * _RANK_EPS if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        collinear = tuple(names[i] for i in piv[rank:])
        raise SingularDesignError(f"X'WX 奇异，共线列: {', '.join(collinear)}", collinear)
    return sw, q, r, piv


def _cholesky(xtwx: np.ndarray):
    """返回 cho_factor 结果；矩阵非正定或接近奇异时返回 None"""
    try:
        c, lower = cho_factor(xtwx, lower=True, check_finite=False)
    except LinAlgError:
        return None
    # L_jj² / a_jj：第 j 列不能被前面各列解释的比例，与列的尺度无关
    unexplained = np.diag(c) ** 2 / np.diag(xtwx)
    if not np.all(np.isfinite(unexplained)) or unexplained.min() <= 1e3 * _RANK_EPS:
        return None
    return c, lower


def solve_wls(X: np.ndarray, z: np.ndarray, w: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """argmin_β Σ w_i (z_i − x_iβ)²"""
    xtw = X.T * w
    factor = _cholesky(xtw @ X)
    if factor is not None:
        return cho_solve(factor, xtw @ z, check_finite=False)

    logger.debug("Cholesky 失败，改用列主元 QR")
    sw, q, r, piv = weighted_qr(X, w, names)
    beta = np.empty(X.shape[1])
    beta[piv] = solve_triangular(r, q.T @ (sw * z))
    return beta


def information_inverse(X: np.ndarray, w: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """(X'WX)⁻¹，对称化后返回"""
    p = X.shape[1]
    factor = _cholesky((X.T * w) @ X)
    if factor is not None:
        inv = cho_solve(factor, np.eye(p), check_finite=False)
    else:
        _, _, r, piv = weighted_qr(X, w, names)
        r_inv = solve_triangular(r, np.eye(p))
        inv = np.empty((p, p))
        inv[np.ix_(piv, piv)] = r_inv @ r_inv.T
    return 0.5 * (inv + inv.T)


# ──────────────────────────────────────────────────────────────
# IRLS
# ──────────────────────────────────────────────────────────────

def irls_fit(X: DesignMatrix, y, opts: IrlsOptions = IrlsOptions(), formula: str = '') -> GlmFit:
    values = X.values
    names = X.column_names
    y = np.asarray(y, dtype=float)
    n, p = values.shape
    if n < p:
        raise DesignError(f"观测数 {n} 少于参数个数 {p}")
    if y.shape != (n,):
        raise DesignError(f"响应长度 {y.shape[0]} 与设计矩阵行数 {n} 不一致")
    if np.any(y < 0):
        raise DesignError("响应含负值")

    mu = y + 0.5
    eta = np.log(mu)
    dev = dev_old = deviance(y, mu)
    history: list[float] = []
    converged = False
    beta = np.zeros(p)
    iteration = 0

    for iteration in range(1, opts.max_iter + 1):
        z = eta + (y - mu) / mu
        if not np.all(np.isfinite(z)):
            raise DivergenceError(f"第 {iteration} 次迭代工作响应出现非有限值")
        beta = solve_wls(values, z, mu, names)
        eta = values @ beta
        if not np.all(np.isfinite(eta)) or np.any(eta > _MAX_ETA):
            raise DivergenceError(f"第 {iteration} 次迭代线性预测值发散")
        mu = np.exp(eta)
        if np.any(mu <= 0):
            raise DivergenceError(f"第 {iteration} 次迭代拟合均值下溢为 0")

        dev = deviance(y, mu)
        history.append(dev)
        if abs(dev - dev_old) / (abs(dev) + 0.1) < opts.tol:
            converged = True
            break
        dev_old = dev

    if not converged:
        logger.warning(f"⚠️ IRLS 在 {opts.max_iter} 次迭代内未收敛: {formula or names}")
    for prev, cur in zip(history[1:], history[2:]):
        if cur > prev * (1 + 1e-12) + 1e-12:
            logger.warning(f"⚠️ 偏差序列非单调: {prev} → {cur} ({formula or names})")
            break

    llf = log_likelihood(y, mu)
    y_bar = float(np.mean(y))
    return GlmFit(
        coefficients=beta,
        covariance=information_inverse(values, mu, names),
        fitted_means=mu,
        deviance=dev,
        pearson_chi2=pearson_chi2(y, mu),
        llf=llf,
        df_resid=n - p,
        df_model=p - 1,
        aic=2.0 * p - 2.0 * llf,
        iterations=iteration,
        converged=converged,
        null_deviance=deviance(y, np.full(n, y_bar)) if y_bar > 0 else 0.0,
        deviance_history=tuple(history),
        response=y,
        design=X,
        formula=formula,
    )


def fit_formula(frame: ModelFrame, formula: Formula, opts: IrlsOptions = IrlsOptions()) -> GlmFit:
    design, y = build_design(frame, formula)
    return irls_fit(design, y, opts, formula=str(formula))


# ──────────────────────────────────────────────────────────────
# 摘要
# ──────────────────────────────────────────────────────────────

def summarize(fit: GlmFit, level: float = 0.95) -> pd.DataFrame:
    """
    Returns DataFrame（index = 列名）columns:
        coef, std_err, z, p_value, ci_low, ci_high
    std err 为 0 的行 z / p 记为 NaN。
    """
    if not fit.converged:
        logger.warning(f"⚠️ 对未收敛的拟合生成系数表: {fit.formula}")
    crit = normal_quantile(1.0 - (1.0 - level) / 2.0)
    se = np.sqrt(np.clip(np.diag(fit.covariance), 0.0, None))
    rows = []
    for name, coef, s in zip(fit.column_names, fit.coefficients, se):
        if s > 0:
            z = coef / s
            p = 2.0 * (1.0 - normal_cdf(abs(z)))
        else:
            z = p = float('nan')
        rows.append((name, coef, s, z, p, coef - crit * s, coef + crit * s))
    table = pd.DataFrame(rows, columns=['name', 'coef', 'std_err', 'z', 'p_value', 'ci_low', 'ci_high'])
    return table.set_index('name')


def interpret_effects(fit: GlmFit, level: float = 0.95) -> pd.DataFrame:
    """发生率比 (IRR)：协变量每增加 1 单位，期望进球数乘以 exp(coef)"""
    table = summarize(fit, level).drop(index=INTERCEPT, errors='ignore')
    table['irr'] = np.exp(table['coef'])
    table['irr_low'] = np.exp(table['ci_low'])
    table['irr_high'] = np.exp(table['ci_high'])
    table['direction'] = np.where(table['coef'] >= 0, 'up', 'down')
    order = table['z'].abs().sort_values(ascending=False, na_position='last').index
    return table.loc[order, ['coef', 'z', 'p_value', 'irr', 'irr_low', 'irr_high', 'direction']]


def fit_info(fit: GlmFit, response: str = 'FTHG') -> list[tuple[str, str]]:
    """拟合摘要块的 (标签, 值) 对，顺序同常见 GLM 报表左右两栏交替"""
    return [
        ('Dep. Variable:', response),
        ('No. Observations:', f"{fit.n_obs}"),
        ('Model:', 'GLM'),
        ('Df Residuals:', f"{fit.df_resid}"),
        ('Model Family:', 'Poisson'),
        ('Df Model:', f"{fit.df_model}"),
        ('Link Function:', 'log'),
        ('Scale:', '1.0000'),
        ('Method:', 'IRLS'),
        ('Log-Likelihood:', f"{fit.llf:.1f}"),
        ('No. Iterations:', f"{fit.iterations}"),
        ('Deviance:', f"{fit.deviance:.1f}"),
        ('Covariance Type:', 'nonrobust'),
        ('Pearson chi2:', f"{fit.pearson_chi2:.3g}"),
        ('Converged:', 'yes' if fit.converged else 'no'),
        ('AIC:', f"{fit.aic:.4f}"),
        ('Null Deviance:', f"{fit.null_deviance:.1f}"),
        ('', ''),
    ]
