"""
SVG 图表服务 (ChartService)

职责：
  把各服务产出的 DataFrame / 列表渲染为独立 SVG 文件（pygal，数据点内嵌，不引用外部脚本）。

当前实现：
  • missingness_chart()       ← 各列缺失比例
  • goal_histogram_chart()    ← FTHG 分箱柱状图
  • covariate_box_chart()     ← HTAG / HST / HC / HR / AR 箱线图
  • team_counts_chart()       ← 各主队比赛场数
  • covariate_histogram_chart() ← logHST / logHC 等数值列的直方图
  • observed_expected_chart() ← 实际场数 vs Poisson 期望场数
  • residual_fitted_chart()   ← Pearson 残差 vs 拟合值
  • qq_chart()                ← 正态 Q-Q 图（含 y = x 参考线）
  • leverage_chart()          ← 标准化残差 vs 杠杆值
"""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import pygal
from pygal.style import Style

from src.services.diagnostics_service import DiagnosticsBundle, qq_points
from src.services.dist_service import GofTable

logger = logging.getLogger(__name__)

CHART_STYLE = Style(
    background='white',
    plot_background='white',
    foreground='#333333',
    foreground_strong='#111111',
    foreground_subtle='#999999',
    colors=('#4C78A8', '#F58518', '#54A24B', '#E45756'),
)

_COMMON = dict(style=CHART_STYLE, width=900, height=500, js=[])


def _save(chart, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chart.render_to_file(str(path))
    logger.debug(f"图表已写入 {path}")
    return path


# ──────────────────────────────────────────────────────────────
# 柱状图
# ──────────────────────────────────────────────────────────────

def missingness_chart(report: pd.DataFrame, path: Path) -> Path:
    """missingness_report() 中缺失比例 > 0 的列"""
    missing = report[report['fraction'] > 0]
    chart = pygal.Bar(title='Missing fraction', y_title='fraction', show_legend=False,
                      x_label_rotation=45, **_COMMON)
    if missing.empty:
        logger.info("没有缺失值，缺失比例图为空")
    else:
        chart.x_labels = missing['column'].tolist()
        chart.add('fraction', [float(v) for v in missing['fraction']])
    return _save(chart, path)


def goal_histogram_chart(histogram: Sequence[tuple[str, int]], path: Path) -> Path:
    chart = pygal.Bar(title='FTHG', x_title='FTHG', y_title='ActualMatches',
                      show_legend=False, **_COMMON)
    chart.x_labels = [label for label, _ in histogram]
    chart.add('ActualMatches', [count for _, count in histogram])
    return _save(chart, path)


def team_counts_chart(counts: pd.DataFrame, path: Path) -> Path:
    chart = pygal.HorizontalBar(title='HomeTeam', show_legend=False, **_COMMON)
    ordered = counts.iloc[::-1]
    chart.x_labels = ordered['team'].tolist()
    chart.add('matches', [int(v) for v in ordered['matches']])
    return _save(chart, path)


def covariate_histogram_chart(values: pd.Series, title: str, path: Path, bins: int = 20) -> Path:
    """数值列的等宽直方图；标签为各箱左端点"""
    data = values.dropna().to_numpy(dtype=float)
    chart = pygal.Bar(title=title, x_title=title, show_legend=False,
                      x_label_rotation=45, **_COMMON)
    if data.size:
        counts, edges = np.histogram(data, bins=bins)
        chart.x_labels = [f"{e:.2f}" for e in edges[:-1]]
        chart.add(title, [int(c) for c in counts])
    else:
        logger.warning(f"⚠️ {title} 没有可绘制的数据")
    return _save(chart, path)


def covariate_box_chart(values: dict[str, pd.Series], path: Path) -> Path:
    """每个协变量一个箱线"""
    chart = pygal.Box(title='Covariates', box_mode='1.5IQR', **_COMMON)
    for name, series in values.items():
        if series.empty:
            logger.warning(f"⚠️ {name} 没有可绘制的数据")
            continue
        chart.add(name, [float(v) for v in series])
    return _save(chart, path)


def observed_expected_chart(table: GofTable, path: Path) -> Path:
    chart = pygal.Bar(title='ActualMatches vs ExpectedMatches', x_title='FTHG', **_COMMON)
    chart.x_labels = [r.label for r in table.rows]
    chart.add('ActualMatches', [r.observed for r in table.rows])
    chart.add('ExpectedMatches', [round(r.expected, 3) for r in table.rows])
    return _save(chart, path)


# ──────────────────────────────────────────────────────────────
# 诊断散点图
# ──────────────────────────────────────────────────────────────

def _scatter(title: str, x_title: str, y_title: str):
    return pygal.XY(title=title, x_title=x_title, y_title=y_title, stroke=False,
                    show_legend=False, dots_size=2, **_COMMON)


def _labelled(bundle: DiagnosticsBundle, xs, ys) -> list[dict]:
    """每个点带观测编号，悬停可见"""
    return [
        {'value': (float(x), float(y)), 'label': f"obs {int(i)}"}
        for i, x, y in zip(bundle.observation_ids, xs, ys)
    ]


def residual_fitted_chart(bundle: DiagnosticsBundle, path: Path) -> Path:
    chart = _scatter('Pearson residuals vs fitted', 'fitted', 'pearson residual')
    chart.add('residual', _labelled(bundle, bundle.fitted_means, bundle.pearson_residuals))
    return _save(chart, path)


def qq_chart(bundle: DiagnosticsBundle, path: Path) -> Path:
    points = qq_points(bundle.standardized_residuals)
    chart = _scatter('Normal Q-Q', 'theoretical quantiles', 'standardized residuals')
    chart.add('sample', points)
    lo, hi = points[0][0], points[-1][0]
    chart.add('y = x', [(lo, lo), (hi, hi)], stroke=True, show_dots=False)
    return _save(chart, path)


def leverage_chart(bundle: DiagnosticsBundle, path: Path) -> Path:
    chart = _scatter('Standardized residuals vs leverage', 'leverage', 'standardized residual')
    chart.add('observation', _labelled(bundle, bundle.leverage, bundle.standardized_residuals))
    return _save(chart, path)
