import math

import pandas as pd
import pytest

from src.errors import ConfigurationError, DegenerateBinsError, EmptyFrameError, UnknownTeamError
from src.repositories import MatchRepository, MatchTable
from src.services.dist_service import (DistService, GofRow, GofTable, check_team, chisq_gof, collapse_empty_tail,
                                       poisson_probability_table, select_from_tests, select_teams, team_gof_table,
                                       teams_in_order)

OBSERVED_FTHG = [1695, 2310, 1787, 885, 357, 122, 64]
LAMBDA_FTHG = 1.522438


def _table_from_goals(goals_by_team: dict[str, list[int]]) -> MatchTable:
    rows = [(team, g) for team, goals in goals_by_team.items() for g in goals]
    frame = pd.DataFrame(rows, columns=['HomeTeam', 'FTHG'])
    frame['FTHG'] = frame['FTHG'].astype('Int64')
    frame.index = pd.RangeIndex(len(frame), name='obs_id')
    return MatchTable(frame=frame)


def _table_of(probs: list[float], observed: list[int]) -> GofTable:
    n = sum(observed)
    rows = tuple(GofRow(str(i), o, p, n * p) for i, (o, p) in enumerate(zip(observed, probs)))
    return GofTable(rows=rows)


# ──────────────────────────────────────────────────────────────
# 全局检验
# ──────────────────────────────────────────────────────────────

def test_rounded_probability_table_reproduces_reference():
    table = poisson_probability_table(OBSERVED_FTHG, LAMBDA_FTHG, 5, 'rounded3')
    assert [r.prob for r in table.rows] == [0.218, 0.332, 0.253, 0.128, 0.049, 0.015, 0.005]
    assert [round(r.expected) for r in table.rows] == [1574, 2397, 1827, 924, 354, 108, 36]
    assert table.rows[-1].label == 'more than 5'
    assert table.total == 7220


def test_global_chisq_reproduces_reference():
    result = chisq_gof(poisson_probability_table(OBSERVED_FTHG, LAMBDA_FTHG, 5, 'rounded3'))
    assert result.statistic == pytest.approx(38.314, abs=0.01)
    assert result.df == 6
    assert result.p_value == pytest.approx(9.752e-7, abs=1e-9)
    assert result.verdict(0.05) == 'reject'


def test_exact_mode_gives_larger_statistic():
    exact = chisq_gof(poisson_probability_table(OBSERVED_FTHG, LAMBDA_FTHG, 5, 'exact'))
    rounded = chisq_gof(poisson_probability_table(OBSERVED_FTHG, LAMBDA_FTHG, 5, 'rounded3'))
    assert sum(r.prob for r in exact.table.rows) == pytest.approx(1.0, abs=1e-9)
    # 尾箱概率 0.00478 被四舍五入成 0.005，精确模式的统计量更大
    assert 40.0 < exact.statistic < 45.0
    assert exact.statistic > rounded.statistic + 2.0


def test_exact_probabilities_analytic():
    table = poisson_probability_table([0, 0, 0], 1.0, 1, 'exact')
    e = math.exp(-1.0)
    assert [r.prob for r in table.rows] == pytest.approx([e, e, 1 - 2 * e], abs=1e-12)
    assert all(r.expected == 0 for r in table.rows)


def test_probability_table_requires_matching_bins():
    with pytest.raises(ConfigurationError):
        poisson_probability_table([1, 2, 3], 1.0, 5)


def test_chisq_hand_example():
    result = chisq_gof(_table_of([0.5, 0.5], [3, 7]))
    assert result.statistic == pytest.approx(1.6)
    assert result.df == 1
    assert result.p_value == pytest.approx(0.2059, abs=1e-3)


def test_chisq_exact_fit_has_p_one():
    result = chisq_gof(_table_of([0.2, 0.3, 0.5], [20, 30, 50]))
    assert result.statistic == pytest.approx(0.0, abs=1e-12)
    assert result.p_value == pytest.approx(1.0)
    assert result.verdict(0.05) == 'fail_to_reject'


def test_chisq_statistic_permutation_and_scaling():
    probs, observed = [0.1, 0.2, 0.3, 0.4], [15, 18, 27, 40]
    base = chisq_gof(_table_of(probs, observed)).statistic
    permuted = chisq_gof(_table_of(probs[::-1], observed[::-1])).statistic
    scaled = chisq_gof(_table_of(probs, [3 * o for o in observed])).statistic
    assert permuted == pytest.approx(base)
    assert scaled == pytest.approx(3 * base)


def test_chisq_rejects_zero_expected():
    with pytest.raises(DegenerateBinsError):
        chisq_gof(_table_of([0.5, 0.5, 0.0], [1, 1, 0]))


def test_collapse_empty_tail_merges_until_positive():
    table = _table_of([0.6, 0.4, 0.0, 0.0], [5, 3, 1, 1])
    collapsed = collapse_empty_tail(table)
    assert [r.label for r in collapsed.rows] == ['0', '1+']
    assert [r.observed for r in collapsed.rows] == [5, 5]
    assert collapsed.total == table.total
    assert chisq_gof(collapsed).df == 1

    assert collapse_empty_tail(_table_of([0.5, 0.5], [1, 1])).rows == _table_of([0.5, 0.5], [1, 1]).rows


def test_rounded_high_threshold_is_testable_after_collapse():
    observed = [300, 360, 216, 86, 26, 6, 1, 1, 0, 0]
    raw = poisson_probability_table(observed, 1.2, 8, 'rounded3')
    with pytest.raises(DegenerateBinsError):
        chisq_gof(raw)
    result = chisq_gof(collapse_empty_tail(raw))
    assert all(r.expected > 0 for r in result.table.rows)
    assert result.table.total == sum(observed)
    assert 0.0 <= result.p_value <= 1.0

    exact = chisq_gof(poisson_probability_table(observed, 1.2, 8, 'exact'))
    assert exact.df == 9


# ──────────────────────────────────────────────────────────────
# 逐队检验
# ──────────────────────────────────────────────────────────────

def test_single_match_team_is_degenerate():
    table = _table_from_goals({'Solo': [2], 'Other': [0, 1, 1, 2, 3, 0, 1]})
    assert check_team(table, 'Solo') == 0.0


def test_unknown_team_is_error():
    table = _table_from_goals({'Arsenal': [0, 1, 2]})
    with pytest.raises(UnknownTeamError, match='Chelsea'):
        check_team(table, 'Chelsea')


def test_team_table_first_appearance_order(season_files):
    table = MatchRepository().load_matches(season_files)
    tests = team_gof_table(table)
    assert tests['team'].tolist() == teams_in_order(table) == ['Leeds', 'Arsenal', 'Chelsea']
    assert list(tests.columns) == ['team', 'matches', 'lambda', 'statistic', 'df', 'p_value', 'degenerate']
    assert tests['matches'].tolist() == [80, 80, 80]
    assert tests['p_value'].between(0, 1).all()


def test_team_tests_are_worker_independent(season_files):
    table = MatchRepository().load_matches(season_files)
    pd.testing.assert_frame_equal(team_gof_table(table, workers=1), team_gof_table(table, workers=3))


def test_select_teams_threshold_semantics(season_files):
    table = MatchRepository().load_matches(season_files)
    tests = team_gof_table(table)
    # alpha = 0 时保留全部非退化球队
    assert select_teams(table, alpha=0.0) == tests.loc[~tests['degenerate'], 'team'].tolist()

    lowest = tests.loc[tests['p_value'].idxmin()]
    above = math.nextafter(float(lowest['p_value']), 1.0)
    if above < 1.0:
        assert lowest['team'] not in select_teams(table, alpha=above)


def test_select_from_tests_keeps_order_and_skips_degenerate():
    tests = pd.DataFrame({
        'team': ['A', 'B', 'C', 'D'],
        'p_value': [0.2, 0.01, 0.8, 0.0],
        'degenerate': [False, False, False, True],
    })
    assert select_from_tests(tests, 0.05) == ['A', 'C']
    assert select_from_tests(tests, 0.0) == ['A', 'B', 'C']


def test_select_from_tests_empty_is_warning(caplog):
    tests = pd.DataFrame({'team': ['A'], 'p_value': [0.01], 'degenerate': [False]})
    assert select_from_tests(tests, 0.05) == []
    assert '没有球队' in caplog.text


@pytest.mark.parametrize('alpha', [-0.1, 1.0])
def test_select_teams_rejects_bad_alpha(season_files, alpha):
    table = MatchRepository().load_matches(season_files)
    with pytest.raises(ConfigurationError):
        select_teams(table, alpha=alpha)


# ──────────────────────────────────────────────────────────────
# DistService
# ──────────────────────────────────────────────────────────────

def test_service_global_test_matches_functions(season_files):
    table = MatchRepository().load_matches(season_files)
    service = DistService(table, tail_threshold=5)
    goals = table.frame['FTHG'].dropna()
    assert service.goal_lambda() == pytest.approx(float(goals.mean()))

    result = service.global_test('exact')
    assert result.table.total == 240
    assert result.statistic >= 0 and 0.0 <= result.p_value <= 1.0
    assert result.table.prob_mode == 'exact'


def test_service_survives_high_tail_threshold(season_files):
    table = MatchRepository().load_matches(season_files)
    service = DistService(table, tail_threshold=8)
    assert service.global_test('exact').df == 9
    rounded = service.global_test('rounded3')
    assert rounded.df < 9
    assert all(r.expected > 0 for r in rounded.table.rows)


def test_service_team_selection(season_files):
    table = MatchRepository().load_matches(season_files)
    service = DistService(table, workers=2)
    pd.testing.assert_frame_equal(service.team_tests(), team_gof_table(table))
    assert service.select_teams(alpha=0.0) == select_teams(table, alpha=0.0)


def test_service_without_goals_is_empty_frame_error():
    table = _table_from_goals({'Arsenal': []})
    with pytest.raises(EmptyFrameError):
        DistService(table).goal_lambda()
