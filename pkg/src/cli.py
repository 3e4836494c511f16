"""
命令行入口

子命令：
  describe      缺失报告、FTHG 描述统计、进球分布、协变量摘要、各队比赛场数
  gof           全局 Poisson 卡方检验（--per-team 时附逐队 p 值）
  select-teams  逐队检验并输出通过的球队列表
  search        选队 → 建模数据 → 全子集拟合 → 偏差筛选 → AIC 排序 → 最优模型摘要
  fit           拟合指定公式（默认全部变量）
  diagnose      残差 / 杠杆 / Q-Q 诊断，标记离群观测并重拟合

退出码：0 成功；2 PipelineError；1 其他异常。失败时 stderr 打印一行
  ERROR <ClassName>: <message>
"""

import argparse
import logging
import sys
from typing import Callable, Sequence

import pandas as pd

from src.config import PipelineConfig, load_config
from src.errors import ConfigurationError, EmptyFrameError, PipelineError, UnknownTeamError
from src.repositories import MatchRepository, MatchTable
from src.services import DistService, IngestService
from src.services import chart_service as charts
from src.services.diagnostics_service import (RESIDUAL_KIND, OutlierRule, build_diagnostics,
                                              flag_outliers, refit_without)
from src.services.dist_service import PROB_MODES, select_from_tests, teams_in_order
from src.services.glm_service import Formula, IrlsOptions, fit_formula, interpret_effects, summarize
from src.services.ingest_service import LOG_MODES, RESPONSE, ModelFrame
from src.services.report_service import (ReportWriter, format_fit_summary, format_gof_report,
                                         format_refit_report, format_team_pvalues, round_selection)
from src.services.search_service import enumerate_formulas, fit_all, gof_filter, rank_by_aic

logger = logging.getLogger(__name__)


# ──────────────────────────────────────────────────────────────
# 公共步骤
# ──────────────────────────────────────────────────────────────

def _load_table(config: PipelineConfig) -> MatchTable:
    if not config.inputs:
        raise ConfigurationError("未指定输入文件")
    print(f"📂 读取 {len(config.inputs)} 个赛季文件...")
    table = MatchRepository().load_matches(config.inputs, workers=config.workers)
    print(f"   共 {len(table)} 场比赛")
    return table


def _irls_options(config: PipelineConfig) -> IrlsOptions:
    return IrlsOptions(max_iter=config.max_iter, tol=config.tol)


def _resolve_teams(config: PipelineConfig, table: MatchTable, writer: ReportWriter) -> list[str]:
    """显式 teams 优先；否则逐队检验选队。两种情况都写 selected_teams.txt"""
    if config.teams:
        known = set(teams_in_order(table))
        unknown = [t for t in config.teams if t not in known]
        if unknown:
            raise UnknownTeamError(f"比赛表中没有球队: {', '.join(unknown)}")
        teams = list(config.teams)
        writer.write_lines('selected_teams.txt', teams)
        print(f"✅ 使用配置指定的 {len(teams)} 支球队")
        return teams

    print("🔄 逐队 Poisson 检验...")
    tests = DistService(table, config.tail_threshold, config.workers).team_tests(config.team_prob_mode)
    writer.write_csv(tests, 'team_pvalues')
    teams = select_from_tests(tests, config.alpha_team)
    writer.write_lines('selected_teams.txt', teams)
    print(f"✅ {len(teams)}/{len(tests)} 支球队通过检验 (alpha={config.alpha_team})")
    return teams


def _model_frame(config: PipelineConfig, table: MatchTable, writer: ReportWriter) -> ModelFrame:
    teams = _resolve_teams(config, table, writer)
    if not teams:
        raise EmptyFrameError("没有可用于建模的球队")
    frame = IngestService(table, config.tail_threshold, config.log_mode).model_frame(teams)
    if frame.excluded_zero_rows:
        print(f"⚠️ {config.log_mode}: 剔除 {frame.excluded_zero_rows} 行 HST=0 或 HC=0 的比赛")
    print(f"   建模数据 {len(frame)} 个观测 ({len(teams)} 支球队, log_mode={frame.log_mode})")
    return frame


def _formula(config: PipelineConfig) -> Formula:
    if config.model:
        return Formula.parse(config.model, response=RESPONSE)
    return Formula(response=RESPONSE, terms=tuple(config.variables))


def _write_fit(writer: ReportWriter, fit, config: PipelineConfig, stem: str = 'model'):
    writer.write_text(f"{stem}_summary.txt", format_fit_summary(fit, config.ci_level))
    writer.write_csv(summarize(fit, config.ci_level), f"{stem}_coefficients", index=True)
    writer.write_csv(interpret_effects(fit, config.ci_level), f"{stem}_effects", index=True)


# ──────────────────────────────────────────────────────────────
# 子命令
# ──────────────────────────────────────────────────────────────

def cmd_describe(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    if len(table) == 0:
        print("⚠️ 数据为空，报告只包含表头")
    service = IngestService(table, config.tail_threshold, config.log_mode)

    missingness = service.missingness()
    writer.write_table(missingness, 'missingness')
    charts.missingness_chart(missingness, writer.path('missingness.svg'))
    pruned = service.prune(config.missing_threshold, config.max_category_levels)
    writer.write_lines('retained_columns.txt', pruned.columns)
    print(f"✅ 剪枝后保留 {len(pruned.columns)}/{len(table.columns)} 列")

    summary = service.response_summary().line()
    writer.write_text('fthg_summary.txt', summary)

    histogram = service.goal_histogram()
    writer.write_csv(pd.DataFrame(histogram, columns=['FTHG', 'ActualMatches']), 'goal_histogram')
    charts.goal_histogram_chart(histogram, writer.path('fthg_histogram.svg'))

    writer.write_table(service.covariate_summary(), 'covariate_summary')
    charts.covariate_box_chart(service.covariate_values(), writer.path('covariate_boxplots.svg'))

    counts = service.team_counts()
    writer.write_table(counts, 'team_counts')
    charts.team_counts_chart(counts, writer.path('team_counts.svg'))

    for source in ('HST', 'HC'):
        if source not in table.frame.columns:
            continue
        charts.covariate_histogram_chart(service.log_covariate(source), f"log{source}",
                                         writer.path(f"log{source.lower()}_histogram.svg"))

    print(f"✅ FTHG: {summary}")


def cmd_gof(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    service = DistService(table, config.tail_threshold, config.workers)
    print(f"🔄 卡方检验 (lambda={service.goal_lambda():.6f})...")

    result = service.global_test(config.prob_mode)
    writer.write_csv(result.table.to_frame(), f"gof_table_{config.prob_mode}")
    report = format_gof_report(result, config.alpha_gof)

    # 另一种概率模式只作对照，退化时不影响主检验
    other_mode = next(m for m in PROB_MODES if m != config.prob_mode)
    try:
        other = service.global_test(other_mode)
    except PipelineError as e:
        logger.warning(f"⚠️ {other_mode} 对照检验退化: {e}")
        report += f"\n\n({other_mode}: degenerate bins)"
    else:
        writer.write_csv(other.table.to_frame(), f"gof_table_{other_mode}")
        report += (f"\n\n({other_mode}: X-squared = {other.statistic:.3f}, "
                   f"df = {other.df}, p-value = {other.p_value:.4g})")
    writer.write_text('gof_report.txt', report)
    charts.observed_expected_chart(result.table, writer.path('observed_expected.svg'))

    print(f"✅ X-squared = {result.statistic:.3f}, df = {result.df}, p-value = {result.p_value:.4g}")
    print(report.splitlines()[5])

    if args.per_team:
        tests = service.team_tests(config.team_prob_mode)
        writer.write_csv(tests, 'team_pvalues')
        lines = format_team_pvalues(tests)
        writer.write_lines('team_pvalues.txt', lines)
        for line in lines:
            print(line)


def cmd_select_teams(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    teams = _resolve_teams(config, table, writer)
    for team in teams:
        print(f"   {team}")


def cmd_search(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    frame = _model_frame(config, table, writer)

    formulas = enumerate_formulas(config.variables, RESPONSE)
    print(f"🔄 拟合 {len(formulas)} 个候选模型 (workers={config.workers})...")
    selection = fit_all(frame, formulas, config.workers, _irls_options(config))
    writer.write_table(selection, 'selection_all')

    ranked = rank_by_aic(gof_filter(selection, config.alpha_gof))
    writer.write_table(round_selection(ranked), 'selection_ranked')
    print(f"✅ {len(ranked)}/{len(selection)} 个模型通过偏差检验 (alpha={config.alpha_gof})")

    if ranked.empty:
        print("⚠️ 没有模型通过偏差拟合优度检验，不输出最优模型")
        return
    best = Formula.parse(ranked.loc[0, 'model'], response=RESPONSE)
    fit = fit_formula(frame, best, _irls_options(config))
    _write_fit(writer, fit, config)
    print(f"🎯 最优模型: {best}  AIC={fit.aic:.4f}")


def cmd_fit(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    frame = _model_frame(config, table, writer)
    formula = _formula(config)
    print(f"🔄 拟合 {formula}...")
    fit = fit_formula(frame, formula, _irls_options(config))
    _write_fit(writer, fit, config)
    print(f"✅ deviance={fit.deviance:.4f}  llf={fit.llf:.4f}  AIC={fit.aic:.4f}  "
          f"iterations={fit.iterations}")


def cmd_diagnose(config: PipelineConfig, args: argparse.Namespace, writer: ReportWriter):
    table = _load_table(config)
    frame = _model_frame(config, table, writer)
    formula = _formula(config)
    opts = _irls_options(config)

    print(f"🔄 诊断 {formula}...")
    fit = fit_formula(frame, formula, opts)
    bundle = build_diagnostics(fit)
    writer.write_csv(bundle.to_frame(), 'diagnostics')
    writer.write_lines('diagnostics_meta.txt', [
        f"residual_kind = {RESIDUAL_KIND}",
        'standardized = pearson_resid / sqrt(1 - leverage)',
        'qq_positions = (i - 0.5) / n',
        f"outlier_rule = {config.outlier_rule}",
    ])
    charts.residual_fitted_chart(bundle, writer.path('residuals_fitted.svg'))
    charts.qq_chart(bundle, writer.path('qq.svg'))
    charts.leverage_chart(bundle, writer.path('leverage.svg'))

    rule = OutlierRule(
        kind=config.outlier_rule,
        ids=tuple(config.drop_ids),
        cutoff=config.residual_cutoff,
        multiplier=config.leverage_multiplier,
    )
    flagged = flag_outliers(bundle, rule)
    writer.write_lines('flagged_ids.txt', [str(i) for i in flagged])
    print(f"   标记 {len(flagged)} 个观测 (rule={rule.kind})")

    report = refit_without(frame, formula, flagged, opts)
    writer.write_text('refit_report.txt', format_refit_report(report, config.ci_level))
    writer.write_csv(report.deltas, 'refit_deltas', index=True)
    print(f"✅ n: {report.before.n_obs} → {report.after.n_obs}  "
          f"deviance: {report.before.deviance:.4f} → {report.after.deviance:.4f}")


COMMANDS: dict[str, Callable] = {
    'describe'    : cmd_describe,
    'gof'         : cmd_gof,
    'select-teams': cmd_select_teams,
    'search'      : cmd_search,
    'fit'         : cmd_fit,
    'diagnose'    : cmd_diagnose,
}


# ──────────────────────────────────────────────────────────────
# 参数解析
# ──────────────────────────────────────────────────────────────

def _common_arguments() -> argparse.ArgumentParser:
    """所有子命令共享的参数；默认 None 表示沿用配置文件"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('inputs', nargs='*', default=None, help='赛季 CSV 文件')
    common.add_argument('--config', default=None, help='ini 配置文件 (默认 conf/pipeline.ini)')
    common.add_argument('--output', dest='output_dir', default=None, help='输出目录 (默认 $GOALS_OUTPUT_DIR 或 output)')
    common.add_argument('--workers', type=int, default=None)
    common.add_argument('--verbose', action='store_true', help='DEBUG 级别日志')
    common.add_argument('--missing-threshold', type=float, default=None)
    common.add_argument('--max-category-levels', type=float, default=None)
    common.add_argument('--tail-threshold', type=int, default=None)
    common.add_argument('--alpha-team', type=float, default=None)
    common.add_argument('--alpha-gof', type=float, default=None)
    common.add_argument('--log-mode', choices=LOG_MODES, default=None)
    common.add_argument('--prob-mode', choices=PROB_MODES, default=None)
    common.add_argument('--team-prob-mode', choices=PROB_MODES, default=None)
    common.add_argument('--ci-level', type=float, default=None)
    common.add_argument('--variables', nargs='+', default=None)
    common.add_argument('--teams', nargs='+', default=None)
    common.add_argument('--model', default=None, help="例如 'FTHG ~ HTAG + logHST'")
    common.add_argument('--outlier-rule', choices=('ids', 'residual', 'leverage'), default=None)
    common.add_argument('--drop-ids', type=int, nargs='+', default=None)
    common.add_argument('--residual-cutoff', type=float, default=None)
    common.add_argument('--leverage-multiplier', type=float, default=None)
    common.add_argument('--max-iter', type=int, default=None)
    common.add_argument('--tol', type=float, default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='goals', description='主场进球 Poisson 回归分析工具')
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common_arguments()
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name == 'gof':
            cmd.add_argument('--per-team', action='store_true', help='附逐队 p 值')
    return parser


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )


def run(args: argparse.Namespace) -> None:
    overrides = vars(args).copy()
    if not overrides.get('inputs'):
        # 命令行未给文件时沿用配置文件的 inputs
        overrides['inputs'] = None
    config = load_config(args.config, overrides).validate()
    writer = ReportWriter(config.output_path)
    config.write_ini(writer.path('run_config.ini'))
    COMMANDS[args.command](config, args, writer)
    print(f"\n🎉 {args.command} 完成，输出目录: {writer.output_dir.resolve()}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        run(args)
    except PipelineError as e:
        print(f"❌ {args.command} 失败")
        print(f"ERROR {e.error_class}: {_one_line(e)}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"❌ {args.command} 失败")
        print(f"ERROR {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1
    return 0


def _one_line(error: Exception) -> str:
    return ' '.join(str(error).split())
