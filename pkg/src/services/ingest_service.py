"""
数据清洗与描述服务 (ingest)

职责：
  接收 MatchRepository.load_matches() 的 MatchTable，完成：
  • missingness_report()   ← 各列缺失数与缺失比例
  • prune_columns()        ← 按缺失比例 / 类别水平数剪枝
  • describe()             ← min Q1 median Q3 max mean sd n missing
  • goal_histogram()       ← FTHG 分箱计数（0..t 以及 "more than t"）
  • team_match_counts()    ← 各主队的比赛场数
  • build_model_frame()    ← 选队、取对数、去缺失，得到可建模的 ModelFrame
  IngestService(table) 把以上操作绑定到同一张 MatchTable 上，供命令行调用

约定：
  • 四分位数采用线性插值 (type-7: h = (n−1)p)，标准差分母为 n−1
  • log_mode='plain-log-drop-zeros' 时 HST=0 或 HC=0 的行被剔除并计数；
    log_mode='log1p' 时用 ln(1+x)，所有行保留
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from src.errors import ConfigurationError, EmptyFrameError, UnknownColumnError
from src.repositories.match_repo import MatchTable

logger = logging.getLogger(__name__)

LOG_MODE_PLAIN = 'plain-log-drop-zeros'
LOG_MODE_LOG1P = 'log1p'
LOG_MODES: tuple[str, ...] = (LOG_MODE_PLAIN, LOG_MODE_LOG1P)

RESPONSE = 'FTHG'
TEAM = 'HomeTeam'
REQUIRED_MODEL_COLUMNS: tuple[str, ...] = (RESPONSE, TEAM)
MODEL_SOURCE_COLUMNS: tuple[str, ...] = ('FTHG', 'HomeTeam', 'HTAG', 'HST', 'HC', 'HR', 'AR')
COVARIATE_SUMMARY_COLUMNS: tuple[str, ...] = ('HTAG', 'HST', 'HC', 'HR', 'AR')


@dataclass(frozen=True)
class SummaryStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    sd: float
    n: int
    missing: int

    def line(self) -> str:
        """R summary 风格的一行：min Q1 median Q3 max mean sd n missing"""
        values = [self.min, self.q1, self.median, self.q3, self.max, self.mean, self.sd]
        text = ' '.join('NA' if math.isnan(v) else f"{v:.7g}" for v in values)
        return f"{text} {self.n} {self.missing}"

    def as_dict(self) -> dict:
        return {
            'min': self.min, 'q1': self.q1, 'median': self.median, 'q3': self.q3,
            'max': self.max, 'mean': self.mean, 'sd': self.sd,
            'n': self.n, 'missing': self.missing,
        }


@dataclass(frozen=True)
class ModelFrame:
    """
    可直接建模的数据框：无缺失单元格，index 为原始观测编号。

    Attributes:
        data              : 响应列 + 数值协变量 + 类别列
        response_name     : 响应列名（默认 FTHG）
        categorical       : 类别列（默认 HomeTeam），水平按字典序
        log_mode          : 构造时使用的对数处理方式
        excluded_zero_rows: plain-log 模式下因 HST/HC 为 0 被剔除的行数
    """
    data: pd.DataFrame
    response_name: str = RESPONSE
    categorical: tuple[str, ...] = (TEAM,)
    log_mode: str = LOG_MODE_PLAIN
    excluded_zero_rows: int = 0
    excluded_ids: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.data)

    @property
    def response(self) -> np.ndarray:
        return self.data[self.response_name].to_numpy(dtype=float)

    @property
    def covariates(self) -> pd.DataFrame:
        names = [c for c in self.data.columns if c != self.response_name and c not in self.categorical]
        return self.data[names]

    @property
    def team(self) -> pd.Series:
        return self.data[self.categorical[0]]

    @property
    def observation_ids(self) -> np.ndarray:
        return self.data.index.to_numpy()

    def levels(self, column: str) -> list[str]:
        return sorted(self.data[column].unique().tolist())

    def drop_ids(self, ids: Iterable[int]) -> 'ModelFrame':
        ids = set(ids)
        kept = self.data[~self.data.index.isin(list(ids))]
        return ModelFrame(
            data=kept,
            response_name=self.response_name,
            categorical=self.categorical,
            log_mode=self.log_mode,
            excluded_zero_rows=self.excluded_zero_rows,
            excluded_ids=self.excluded_ids,
        )

    @classmethod
    def from_frame(cls, data: pd.DataFrame, response_name: str = RESPONSE,
                   categorical: Sequence[str] = ()) -> 'ModelFrame':
        """由任意数据框构造（合成数据、测试夹具）"""
        if data.isna().any().any():
            raise EmptyFrameError("ModelFrame 不允许存在缺失单元格")
        return cls(data=data, response_name=response_name, categorical=tuple(categorical))


# ──────────────────────────────────────────────────────────────
# 缺失与剪枝
# ──────────────────────────────────────────────────────────────

def missingness_report(table: MatchTable) -> pd.DataFrame:
    """
    Returns DataFrame columns:
        column, missing, present, fraction
    """
    total = len(table)
    rows = []
    for col, missing in table.column_missing_counts.items():
        rows.append({
            'column'  : col,
            'missing' : missing,
            'present' : total - missing,
            'fraction': missing / total if total else 0.0,
        })
    return pd.DataFrame(rows, columns=['column', 'missing', 'present', 'fraction'])


def _is_categorical(series: pd.Series) -> bool:
    return not (pd.api.types.is_numeric_dtype(series) or pd.api.types.is_datetime64_any_dtype(series))


def prune_columns(table: MatchTable, missing_threshold: float = 0.05,
                  max_category_levels: float = 50) -> MatchTable:
    """删除缺失比例 > missing_threshold 的列，以及水平数 > max_category_levels 的类别列"""
    if not (0.0 <= missing_threshold <= 1.0):
        raise ConfigurationError(f"missing_threshold 必须在 [0, 1] 内，收到 {missing_threshold}")

    report = missingness_report(table).set_index('column')
    frame = table.frame
    dropped: dict[str, str] = {}
    for col in frame.columns:
        if report.loc[col, 'fraction'] > missing_threshold:
            dropped[col] = f"缺失 {report.loc[col, 'fraction']:.1%}"
        elif _is_categorical(frame[col]):
            levels = frame[col].nunique(dropna=True)
            if levels > max_category_levels:
                dropped[col] = f"{levels} 个水平"

    required = [col for col in REQUIRED_MODEL_COLUMNS if col in dropped]
    if required:
        raise ConfigurationError(
            f"剪枝规则会删除建模必需列 {', '.join(required)} "
            f"({'; '.join(dropped[c] for c in required)})"
        )

    for col, reason in dropped.items():
        logger.info(f"剪除列 {col}: {reason}")
    return table.with_frame(frame.drop(columns=list(dropped)))


# ──────────────────────────────────────────────────────────────
# 描述统计
# ──────────────────────────────────────────────────────────────

def describe(table: MatchTable, column: str) -> SummaryStats:
    if column not in table.frame.columns:
        raise UnknownColumnError(f"未知列: {column}")
    series = table.frame[column]
    if not pd.api.types.is_numeric_dtype(series):
        raise UnknownColumnError(f"列 {column} 不是数值列")
    return describe_values(series)


def describe_values(series: pd.Series) -> SummaryStats:
    missing = int(series.isna().sum())
    values = series.dropna().astype('float64')
    n = len(values)
    if n == 0:
        nan = float('nan')
        return SummaryStats(nan, nan, nan, nan, nan, nan, nan, 0, missing)

    q1, median, q3 = values.quantile([0.25, 0.5, 0.75], interpolation='linear').tolist()
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    return SummaryStats(
        min=float(values.min()), q1=q1, median=median, q3=q3, max=float(values.max()),
        mean=float(values.mean()), sd=sd, n=n, missing=missing,
    )


def bin_goal_counts(goals: Iterable[int], tail_threshold: int = 5) -> list[int]:
    """分箱：0..tail_threshold 各一箱，再加一个 > tail_threshold 的尾箱"""
    counts = [0] * (tail_threshold + 2)
    for g in goals:
        counts[min(int(g), tail_threshold + 1)] += 1
    return counts


def goal_histogram(table: MatchTable, tail_threshold: int = 5) -> list[tuple[str, int]]:
    if tail_threshold < 1:
        raise ConfigurationError(f"tail_threshold 必须 ≥ 1，收到 {tail_threshold}")
    goals = table.frame[RESPONSE].dropna()
    labels = [str(k) for k in range(tail_threshold + 1)] + [f"more than {tail_threshold}"]
    return list(zip(labels, bin_goal_counts(goals, tail_threshold)))


def team_match_counts(table: MatchTable) -> pd.DataFrame:
    counts = (
        table.frame[TEAM]
        .dropna()
        .value_counts()
        .rename_axis('team')
        .reset_index(name='matches')
    )
    return counts.sort_values(['matches', 'team'], ascending=[False, True]).reset_index(drop=True)


# ──────────────────────────────────────────────────────────────
# 建模数据
# ──────────────────────────────────────────────────────────────

def build_model_frame(table: MatchTable, teams: Sequence[str],
                      log_mode: str = LOG_MODE_PLAIN) -> ModelFrame:
    """
    选出 teams 的主场比赛，去掉含缺失建模字段的行，并生成 logHST / logHC。

    输出列顺序：FTHG, HomeTeam, HTAG, logHST, logHC, HR, AR
    """
    if log_mode not in LOG_MODES:
        raise ConfigurationError(f"未知 log_mode: {log_mode}（可选 {', '.join(LOG_MODES)}）")
    if not teams:
        raise ConfigurationError("teams 不能为空")
    missing_cols = [c for c in MODEL_SOURCE_COLUMNS if c not in table.frame.columns]
    if missing_cols:
        raise UnknownColumnError(f"比赛表缺少建模列: {', '.join(missing_cols)}")

    df = table.frame.loc[table.frame[TEAM].isin(list(teams)), list(MODEL_SOURCE_COLUMNS)]
    df = df.dropna()

    excluded_ids: tuple[int, ...] = ()
    if log_mode == LOG_MODE_PLAIN:
        zero_rows = ((df['HST'] == 0) | (df['HC'] == 0)).to_numpy(dtype=bool)
        excluded_ids = tuple(int(i) for i in df.index[zero_rows])
        if excluded_ids:
            logger.info(f"plain-log 模式剔除 {len(excluded_ids)} 行 HST=0 或 HC=0 的比赛")
        df = df[~zero_rows]
        transform = np.log
    else:
        transform = np.log1p

    if df.empty:
        raise EmptyFrameError(f"所选 {len(teams)} 支球队过滤后没有可建模的比赛")

    data = pd.DataFrame({
        'FTHG'    : df['FTHG'].astype('int64'),
        'HomeTeam': df['HomeTeam'].astype(str),
        'HTAG'    : df['HTAG'].astype('float64'),
        'logHST'  : transform(df['HST'].astype('float64')),
        'logHC'   : transform(df['HC'].astype('float64')),
        'HR'      : df['HR'].astype('float64'),
        'AR'      : df['AR'].astype('float64'),
    }, index=df.index)
    return ModelFrame(
        data=data.sort_index(),
        log_mode=log_mode,
        excluded_zero_rows=len(excluded_ids),
        excluded_ids=excluded_ids,
    )


# ──────────────────────────────────────────────────────────────
# 服务对象
# ──────────────────────────────────────────────────────────────

class IngestService:

    def __init__(self, table: MatchTable, tail_threshold: int = 5, log_mode: str = LOG_MODE_PLAIN):
        """
        Args:
            table         : MatchRepository.load_matches() 的返回值
            tail_threshold: FTHG 分箱的尾箱阈值
            log_mode      : 'plain-log-drop-zeros' 或 'log1p'
        """
        if log_mode not in LOG_MODES:
            raise ConfigurationError(f"未知 log_mode: {log_mode}（可选 {', '.join(LOG_MODES)}）")
        self._table = table
        self._tail = tail_threshold
        self._log_mode = log_mode

    @property
    def table(self) -> MatchTable:
        return self._table

    def missingness(self) -> pd.DataFrame:
        return missingness_report(self._table)

    def prune(self, missing_threshold: float = 0.05, max_category_levels: float = 50) -> MatchTable:
        return prune_columns(self._table, missing_threshold, max_category_levels)

    def response_summary(self) -> SummaryStats:
        return describe(self._table, RESPONSE)

    def goal_histogram(self) -> list[tuple[str, int]]:
        return goal_histogram(self._table, self._tail)

    def covariate_summary(self) -> pd.DataFrame:
        """
        Returns DataFrame columns:
            column, min, q1, median, q3, max, mean, sd, n, missing
        """
        rows = [
            {'column': col, **describe_values(self._table.frame[col]).as_dict()}
            for col in COVARIATE_SUMMARY_COLUMNS
            if col in self._table.frame.columns
        ]
        return pd.DataFrame(rows)

    def covariate_values(self) -> dict[str, pd.Series]:
        """箱线图用：各协变量去缺失后的取值"""
        frame = self._table.frame
        return {
            col: frame[col].dropna().astype('float64')
            for col in COVARIATE_SUMMARY_COLUMNS
            if col in frame.columns
        }

    def log_covariate(self, source: str) -> pd.Series:
        """按 log_mode 变换 HST / HC；plain 模式只取正值"""
        values = self._table.frame[source].dropna().astype('float64')
        if self._log_mode == LOG_MODE_PLAIN:
            return np.log(values[values > 0])
        return np.log1p(values)

    def team_counts(self) -> pd.DataFrame:
        return team_match_counts(self._table)

    def model_frame(self, teams: Sequence[str]) -> ModelFrame:
        return build_model_frame(self._table, teams, self._log_mode)
