"""
Poisson 分布检验服务 (dist_check)

职责：
  • poisson_probability_table() ← ActualMatches / PoisProb / ExpectedMatches 表
  • chisq_gof()                 ← 给定概率的卡方拟合优度检验
  • check_team() / team_gof_table() / select_teams()
                                ← 逐队检验，保留服从 Poisson 的球队
  • collapse_empty_tail()       ← 尾部期望为 0 的分箱并入前一箱
  DistService(table) 持有比赛表与分箱参数，供命令行调用

约定：
  • prob_mode='rounded3'：每个概率先四舍五入到 3 位小数再计算期望频数
    （全局检验的默认值）；'exact'：使用全精度概率
  • 全局与逐队检验沿用同一分箱 (0..t 与 "> t")；尾箱期望为 0 时并入前一箱
  • 检验退化（期望 ≤ 0、非空箱少于 2 个、λ = 0 等）时 p = 0
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import pandas as pd

from src.errors import (ConfigurationError, DegenerateBinsError, EmptyFrameError, PipelineError,
                        ProbabilitySumError, UnknownTeamError)
from src.repositories.match_repo import MatchTable
from src.services.ingest_service import RESPONSE, TEAM, bin_goal_counts
from src.services.specfun import chi2_sf, poisson_pmf, poisson_sf

logger = logging.getLogger(__name__)

PROB_MODE_EXACT = 'exact'
PROB_MODE_ROUNDED = 'rounded3'
PROB_MODES: tuple[str, ...] = (PROB_MODE_EXACT, PROB_MODE_ROUNDED)

_EXACT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class GofRow:
    label: str
    observed: int
    prob: float
    expected: float


@dataclass(frozen=True)
class GofTable:
    rows: tuple[GofRow, ...]
    lam: float = float('nan')
    prob_mode: str = PROB_MODE_EXACT

    @property
    def total(self) -> int:
        return sum(r.observed for r in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.label, r.observed, r.prob, r.expected) for r in self.rows],
            columns=['FTHG', 'ActualMatches', 'PoisProb', 'ExpectedMatches'],
        )


@dataclass(frozen=True)
class GofResult:
    statistic: float
    df: int
    p_value: float
    table: GofTable

    def verdict(self, alpha: float) -> str:
        return 'reject' if self.p_value < alpha else 'fail_to_reject'


# ──────────────────────────────────────────────────────────────
# 全局检验
# ──────────────────────────────────────────────────────────────

def _bin_labels(tail_threshold: int) -> list[str]:
    return [str(k) for k in range(tail_threshold + 1)] + [f"more than {tail_threshold}"]


def poisson_probability_table(observed: Sequence[int], lam: float, tail_threshold: int = 5,
                              prob_mode: str = PROB_MODE_ROUNDED) -> GofTable:
    if prob_mode not in PROB_MODES:
        raise ConfigurationError(f"未知 prob_mode: {prob_mode}")
    if len(observed) != tail_threshold + 2:
        raise ConfigurationError(f"需要 {tail_threshold + 2} 个分箱，收到 {len(observed)}")

    probs = [poisson_pmf(k, lam) for k in range(tail_threshold + 1)]
    probs.append(poisson_sf(tail_threshold, lam))
    if prob_mode == PROB_MODE_ROUNDED:
        probs = [round(p, 3) for p in probs]
        tolerance = 0.0005 * len(probs)
    else:
        tolerance = _EXACT_SUM_TOL

    if abs(sum(probs) - 1.0) > tolerance:
        raise ProbabilitySumError(f"分箱概率之和为 {sum(probs):.12f}，超出容差 {tolerance}")

    n = sum(observed)
    rows = tuple(
        GofRow(label=label, observed=int(obs), prob=p, expected=n * p)
        for label, obs, p in zip(_bin_labels(tail_threshold), observed, probs)
    )
    return GofTable(rows=rows, lam=lam, prob_mode=prob_mode)


def chisq_gof(table: GofTable) -> GofResult:
    """Σ (O − E)² / E，df = 分箱数 − 1"""
    if any(r.expected <= 0 for r in table.rows):
        raise DegenerateBinsError("存在期望频数 ≤ 0 的分箱，需要重新分箱")
    statistic = sum((r.observed - r.expected) ** 2 / r.expected for r in table.rows)
    df = len(table.rows) - 1
    return GofResult(statistic=statistic, df=df, p_value=chi2_sf(statistic, df), table=table)


def collapse_empty_tail(table: GofTable) -> GofTable:
    """尾部期望为 0 的分箱依次并入前一箱，至少保留 2 个分箱"""
    rows = list(table.rows)
    while len(rows) > 2 and rows[-1].expected <= 0:
        tail = rows.pop()
        last = rows.pop()
        rows.append(GofRow(
            label=f"{last.label}+",
            observed=last.observed + tail.observed,
            prob=last.prob + tail.prob,
            expected=last.expected + tail.expected,
        ))
    return GofTable(rows=tuple(rows), lam=table.lam, prob_mode=table.prob_mode)


# ──────────────────────────────────────────────────────────────
# 逐队检验
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TeamTest:
    team: str
    matches: int
    lam: float
    p_value: float
    degenerate: bool
    statistic: float = float('nan')
    df: int = 0


def _team_goals(table: MatchTable, team: str) -> pd.Series:
    frame = table.frame
    home = frame[TEAM]
    if not home.eq(team).fillna(False).any():
        raise UnknownTeamError(f"比赛表中没有球队: {team}")
    return frame.loc[home.eq(team).fillna(False).astype(bool), RESPONSE].dropna()


def _run_team_test(table: MatchTable, team: str, tail_threshold: int, prob_mode: str) -> TeamTest:
    goals = _team_goals(table, team)
    matches = len(goals)
    lam = float(goals.mean()) if matches else 0.0
    observed = bin_goal_counts(goals, tail_threshold)

    if sum(1 for c in observed if c > 0) < 2 or not lam > 0:
        return TeamTest(team, matches, lam, p_value=0.0, degenerate=True)
    try:
        gof_table = collapse_empty_tail(
            poisson_probability_table(observed, lam, tail_threshold, prob_mode)
        )
        result = chisq_gof(gof_table)
    except PipelineError as e:
        logger.debug(f"{team} 的检验退化: {e}")
        return TeamTest(team, matches, lam, p_value=0.0, degenerate=True)
    return TeamTest(team, matches, lam, p_value=result.p_value, degenerate=False,
                    statistic=result.statistic, df=result.df)


def check_team(table: MatchTable, team: str, tail_threshold: int = 5,
               prob_mode: str = PROB_MODE_EXACT) -> float:
    """单支球队主场进球的 Poisson 检验 p 值；退化时返回 0"""
    return _run_team_test(table, team, tail_threshold, prob_mode).p_value


def teams_in_order(table: MatchTable) -> list[str]:
    """按首次出现顺序列出主队"""
    return table.frame[TEAM].dropna().drop_duplicates().tolist()


def team_gof_table(table: MatchTable, tail_threshold: int = 5,
                   prob_mode: str = PROB_MODE_EXACT, workers: int = 1) -> pd.DataFrame:
    """
    Returns DataFrame columns（首次出现顺序）:
        team, matches, lambda, statistic, df, p_value, degenerate
    """
    teams = teams_in_order(table)

    def _test(team: str) -> TeamTest:
        return _run_team_test(table, team, tail_threshold, prob_mode)

    if workers > 1 and len(teams) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tests = list(pool.map(_test, teams))
    else:
        tests = [_test(t) for t in teams]

    return pd.DataFrame(
        [(t.team, t.matches, t.lam, t.statistic, t.df, t.p_value, t.degenerate) for t in tests],
        columns=['team', 'matches', 'lambda', 'statistic', 'df', 'p_value', 'degenerate'],
    )


def select_teams(table: MatchTable, alpha: float = 0.05, tail_threshold: int = 5,
                 prob_mode: str = PROB_MODE_EXACT, workers: int = 1) -> list[str]:
    """保留 p ≥ alpha 且检验非退化的球队，顺序同首次出现"""
    if not (0.0 <= alpha < 1.0):
        raise ConfigurationError(f"alpha 必须在 [0, 1) 内，收到 {alpha}")
    return select_from_tests(team_gof_table(table, tail_threshold, prob_mode, workers), alpha)


def select_from_tests(tests: pd.DataFrame, alpha: float = 0.05) -> list[str]:
    """由 team_gof_table() 的结果筛选球队"""
    if not (0.0 <= alpha < 1.0):
        raise ConfigurationError(f"alpha 必须在 [0, 1) 内，收到 {alpha}")
    keep = tests[(~tests['degenerate'].astype(bool)) & (tests['p_value'] >= alpha)]
    teams = keep['team'].tolist()
    if not teams:
        logger.warning(f"⚠️ alpha={alpha} 下没有球队通过 Poisson 检验")
    return teams


# ──────────────────────────────────────────────────────────────
# 服务对象
# ──────────────────────────────────────────────────────────────

class DistService:

    def __init__(self, table: MatchTable, tail_threshold: int = 5, workers: int = 1):
        """
        Args:
            table         : MatchRepository.load_matches() 的返回值
            tail_threshold: 分箱 0..t 与 "more than t"
            workers       : 逐队检验的线程数
        """
        self._table = table
        self._tail = tail_threshold
        self._workers = workers

    # ──────────────────────────────────────────────────────────────
    # 全局检验
    # ──────────────────────────────────────────────────────────────

    def goal_lambda(self) -> float:
        goals = self._table.frame[RESPONSE].dropna()
        if goals.empty:
            raise EmptyFrameError("没有可检验的 FTHG 数据")
        return float(goals.astype('float64').mean())

    def probability_table(self, prob_mode: str = PROB_MODE_ROUNDED) -> GofTable:
        """全局分箱表；尾部期望为 0 的分箱已合并"""
        observed = bin_goal_counts(self._table.frame[RESPONSE].dropna(), self._tail)
        return collapse_empty_tail(
            poisson_probability_table(observed, self.goal_lambda(), self._tail, prob_mode)
        )

    def global_test(self, prob_mode: str = PROB_MODE_ROUNDED) -> GofResult:
        return chisq_gof(self.probability_table(prob_mode))

    # ──────────────────────────────────────────────────────────────
    # 逐队检验
    # ──────────────────────────────────────────────────────────────

    def team_tests(self, prob_mode: str = PROB_MODE_EXACT) -> pd.DataFrame:
        return team_gof_table(self._table, self._tail, prob_mode, self._workers)

    def select_teams(self, alpha: float = 0.05, prob_mode: str = PROB_MODE_EXACT) -> list[str]:
        return select_teams(self._table, alpha, self._tail, prob_mode, self._workers)
