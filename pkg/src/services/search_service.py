"""
模型搜索服务 (model_search)

职责：
  • enumerate_formulas() ← 解释变量的全部非空子集（先按子集大小，再按给定变量顺序的字典序）
  • fit_all()            ← 逐个拟合，失败的公式保留一行并标记 status
  • gof_filter()         ← p_chisq = P(Χ²_{df_resid} > deviance)，保留 p_chisq ≥ alpha
  • rank_by_aic()        ← AIC 升序（同分时参数少者优先，再按公式字符串）

SelectionTable 为 pandas DataFrame，列：
  model, deviance, pearson_chi2, llf, df_resid, AIC, n_params, status[, p_chisq]
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from src.errors import ConfigurationError, PipelineError
from src.services.glm_service import Formula, IrlsOptions, fit_formula
from src.services.ingest_service import ModelFrame, RESPONSE
from src.services.specfun import chi2_sf

logger = logging.getLogger(__name__)

DEFAULT_VARIABLES: tuple[str, ...] = ('HTAG', 'logHST', 'logHC', 'HR', 'AR', 'HomeTeam')

SELECTION_COLUMNS: list[str] = [
    'model', 'deviance', 'pearson_chi2', 'llf', 'df_resid', 'AIC', 'n_params', 'status',
]
STATUS_OK = 'ok'


def enumerate_formulas(variables: Sequence[str], response: str = RESPONSE) -> list[Formula]:
    """全部 2^k − 1 个非空子集，每个都含截距"""
    if len(set(variables)) != len(variables):
        raise ConfigurationError(f"变量列表存在重复: {', '.join(variables)}")
    formulas = []
    for size in range(1, len(variables) + 1):
        for combo in itertools.combinations(variables, size):
            formulas.append(Formula(response=response, terms=combo))
    return formulas


def _empty_selection() -> pd.DataFrame:
    return pd.DataFrame(columns=SELECTION_COLUMNS)


def _fit_row(frame: ModelFrame, formula: Formula, opts: IrlsOptions) -> dict:
    try:
        fit = fit_formula(frame, formula, opts)
    except PipelineError as e:
        logger.warning(f"⚠️ 模型 {formula.label} 拟合失败: {e.error_class}: {e}")
        return {
            'model': formula.label, 'deviance': np.nan, 'pearson_chi2': np.nan, 'llf': np.nan,
            'df_resid': np.nan, 'AIC': np.nan, 'n_params': np.nan,
            'status': f"failed: {e.error_class}",
        }
    return {
        'model'       : formula.label,
        'deviance'    : fit.deviance,
        'pearson_chi2': fit.pearson_chi2,
        'llf'         : fit.llf,
        'df_resid'    : fit.df_resid,
        'AIC'         : fit.aic,
        'n_params'    : fit.n_params,
        'status'      : STATUS_OK if fit.converged else 'not converged',
    }


def fit_all(frame: ModelFrame, formulas: Sequence[Formula], workers: int = 1,
            opts: IrlsOptions = IrlsOptions()) -> pd.DataFrame:
    """
    拟合每个公式。结果按公式下标组装，与线程完成顺序无关。
    """
    if not formulas:
        return _empty_selection()

    def _task(formula: Formula) -> dict:
        return _fit_row(frame, formula, opts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_task, formulas))
    else:
        rows = [_task(f) for f in formulas]

    table = pd.DataFrame(rows, columns=SELECTION_COLUMNS)
    failed = int((table['status'] != STATUS_OK).sum())
    if failed:
        logger.warning(f"⚠️ {failed}/{len(table)} 个模型未正常拟合，将不参与筛选与排序")
    return table


def selection_from_records(records: Iterable[dict], n_obs: int) -> pd.DataFrame:
    """
    由已打印的结果行（model, deviance, pearson_chi2, llf, df_resid, AIC）构造 SelectionTable，
    参数个数取 n_obs − df_resid。
    """
    table = pd.DataFrame(list(records))
    table['n_params'] = n_obs - table['df_resid'].astype(int)
    if 'status' not in table.columns:
        table['status'] = STATUS_OK
    extra = [c for c in table.columns if c not in SELECTION_COLUMNS]
    return table[SELECTION_COLUMNS + extra]


def gof_filter(table: pd.DataFrame, alpha: float = 0.05) -> pd.DataFrame:
    """偏差拟合优度筛选；未正常拟合的行直接剔除"""
    if not (0.0 <= alpha < 1.0):
        raise ConfigurationError(f"alpha 必须在 [0, 1) 内，收到 {alpha}")
    usable = table[table['status'] == STATUS_OK].copy()
    usable['p_chisq'] = [
        chi2_sf(float(dev), float(df)) for dev, df in zip(usable['deviance'], usable['df_resid'])
    ]
    return usable[usable['p_chisq'] >= alpha]


def rank_by_aic(table: pd.DataFrame) -> pd.DataFrame:
    return table.sort_values(['AIC', 'n_params', 'model'], kind='mergesort').reset_index(drop=True)
