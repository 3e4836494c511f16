"""
模型诊断服务 (diagnostics)

职责：
  • pearson_residuals()      ← r_i = (y_i − μ_i) / √μ_i
  • leverage()               ← 加权帽子矩阵对角线 h_ii，逐行计算，不生成 n×n 矩阵
  • standardized_residuals() ← r_i / √(1 − h_ii)（基于 Pearson 残差）
  • qq_points()              ← 理论分位点 Φ⁻¹((i − 0.5)/n) 对排序后的残差
  • flag_outliers()          ← 显式 id 列表 / |标准化残差| > c / h > m·p/n
  • refit_without()          ← 去掉指定观测后重拟合，给出前后对比与系数变化

输出 DiagnosticsBundle.to_frame() 结构（每个观测一行）：
  obs_id, observed, fitted, pearson_resid, leverage, std_resid
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from src.errors import ConfigurationError, DegenerateObservationError, DesignError, DomainError
from src.services.glm_service import (DesignMatrix, Formula, GlmFit, IrlsOptions,
                                      fit_formula, weighted_qr)
from src.services.ingest_service import ModelFrame
from src.services.specfun import normal_quantile

logger = logging.getLogger(__name__)

RULE_IDS = 'ids'
RULE_RESIDUAL = 'residual'
RULE_LEVERAGE = 'leverage'
OUTLIER_RULES: tuple[str, ...] = (RULE_IDS, RULE_RESIDUAL, RULE_LEVERAGE)

# 写入输出元数据
RESIDUAL_KIND = 'pearson'


@dataclass(frozen=True)
class DiagnosticsBundle:
    pearson_residuals: np.ndarray
    leverage: np.ndarray
    standardized_residuals: np.ndarray
    fitted_means: np.ndarray
    observation_ids: np.ndarray
    observed: np.ndarray
    n_params: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'obs_id'       : self.observation_ids,
            'observed'     : self.observed,
            'fitted'       : self.fitted_means,
            'pearson_resid': self.pearson_residuals,
            'leverage'     : self.leverage,
            'std_resid'    : self.standardized_residuals,
        })


@dataclass(frozen=True)
class OutlierRule:
    kind: str = RULE_IDS
    ids: tuple[int, ...] = ()
    cutoff: float = 4.0
    multiplier: float = 3.0

    def __post_init__(self):
        if self.kind not in OUTLIER_RULES:
            raise ConfigurationError(f"未知离群规则: {self.kind}（可选 {', '.join(OUTLIER_RULES)}）")
        if not self.cutoff > 0 or not self.multiplier > 0:
            raise ConfigurationError("离群规则的 c 与 m 必须 > 0")


@dataclass(frozen=True)
class RefitReport:
    before: GlmFit
    after: GlmFit
    deltas: pd.DataFrame
    dropped_ids: tuple[int, ...]


# ──────────────────────────────────────────────────────────────
# 残差与杠杆
# ──────────────────────────────────────────────────────────────

def pearson_residuals(y, mu) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DesignError("μ 必须全部 > 0")
    return (y - mu) / np.sqrt(mu)


def leverage(X: DesignMatrix | np.ndarray, w) -> np.ndarray:
    """
    H = √W·X (X'WX)⁻¹ X'·√W 的对角线。

    取 √W·X = QR，则 h_ii = ‖Q 的第 i 行‖²。
    """
    if isinstance(X, DesignMatrix):
        values, names = X.values, X.column_names
    else:
        values = np.asarray(X, dtype=float)
        names = tuple(f"x{j}" for j in range(values.shape[1]))
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise DesignError("权重必须全部 > 0")
    _, q, _, _ = weighted_qr(values, w, names)
    return np.einsum('ij,ij->i', q, q)


def standardized_residuals(residuals, lev) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=float)
    lev = np.asarray(lev, dtype=float)
    if np.any(lev >= 1.0):
        bad = np.flatnonzero(lev >= 1.0).tolist()
        raise DegenerateObservationError(f"杠杆值 ≥ 1 的观测（位置）: {bad}")
    return residuals / np.sqrt(1.0 - lev)


def build_diagnostics(fit: GlmFit) -> DiagnosticsBundle:
    resid = pearson_residuals(fit.response, fit.fitted_means)
    lev = leverage(fit.design, fit.fitted_means)
    return DiagnosticsBundle(
        pearson_residuals=resid,
        leverage=lev,
        standardized_residuals=standardized_residuals(resid, lev),
        fitted_means=fit.fitted_means,
        observation_ids=fit.observation_ids,
        observed=fit.response,
        n_params=fit.n_params,
    )


def qq_points(residuals: Sequence[float]) -> list[tuple[float, float]]:
    residuals = np.sort(np.asarray(residuals, dtype=float))
    n = len(residuals)
    if n < 2:
        raise DomainError(f"Q-Q 图至少需要 2 个残差，收到 {n}")
    theoretical = [normal_quantile((i - 0.5) / n) for i in range(1, n + 1)]
    return list(zip(theoretical, residuals.tolist()))


# ──────────────────────────────────────────────────────────────
# 离群观测
# ──────────────────────────────────────────────────────────────

def flag_outliers(bundle: DiagnosticsBundle, rule: OutlierRule) -> list[int]:
    ids = bundle.observation_ids
    if rule.kind == RULE_IDS:
        existing = set(int(i) for i in ids)
        for obs_id in rule.ids:
            if int(obs_id) not in existing:
                logger.warning(f"⚠️ 观测 {obs_id} 不在当前模型数据中，忽略")
        return sorted(int(i) for i in set(rule.ids) if int(i) in existing)

    if rule.kind == RULE_RESIDUAL:
        mask = np.abs(bundle.standardized_residuals) > rule.cutoff
    else:
        n = len(ids)
        mask = bundle.leverage > rule.multiplier * bundle.n_params / n
    return sorted(int(i) for i in ids[mask])


def refit_without(frame: ModelFrame, formula: Formula, drop_ids: Iterable[int],
                  opts: IrlsOptions = IrlsOptions()) -> RefitReport:
    drop_ids = tuple(sorted(set(int(i) for i in drop_ids)))
    before = fit_formula(frame, formula, opts)

    if drop_ids:
        missing = set(drop_ids) - set(int(i) for i in frame.observation_ids)
        if missing:
            raise ConfigurationError(f"要删除的观测不在数据中: {sorted(missing)}")
        reduced = frame.drop_ids(drop_ids)
        if len(reduced) <= before.n_params:
            raise DesignError(f"删除后仅剩 {len(reduced)} 个观测，不足以估计 {before.n_params} 个参数")
        after = fit_formula(reduced, formula, opts)
    else:
        after = before

    b = before.params
    a = after.params.reindex(b.index)
    deltas = pd.DataFrame({'before': b, 'after': a, 'delta': a - b})
    deltas.index.name = 'name'
    return RefitReport(before=before, after=after, deltas=deltas, dropped_ids=drop_ids)
