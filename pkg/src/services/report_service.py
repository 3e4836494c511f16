"""
报表输出服务 (ReportWriter)

职责：
  把各服务返回的 DataFrame / 结果对象写入输出目录，每张表同时生成：
  • <name>.csv  ← 机器可读（pandas to_csv，列集合固定）
  • <name>.txt  ← 对齐文本（pandas to_string）

另外提供若干纯文本格式化函数：
  • format_fit_block()     ← 拟合摘要块，左右两栏
  • format_coefficients()  ← coef / std err / z / P>|z| / 置信区间
  • format_gof_report()    ← 卡方检验结论（含 α 水平下的判断文字）
  • format_refit_report()  ← 删除观测前后两个摘要块 + 系数变化
"""

import logging
from pathlib import Path
from typing import Iterable

import pandas as pd

from src.services.diagnostics_service import RefitReport
from src.services.dist_service import GofResult
from src.services.glm_service import GlmFit, fit_info, summarize

logger = logging.getLogger(__name__)

RULE = '=' * 86
THIN_RULE = '-' * 86
P_CHISQ_DECIMALS = 6


class ReportWriter:

    def __init__(self, output_dir: str | Path):
        self._dir = Path(output_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    @property
    def output_dir(self) -> Path:
        return self._dir

    def path(self, name: str) -> Path:
        return self._dir / name

    def _track(self, path: Path) -> Path:
        self.written.append(path)
        logger.debug(f"写入 {path}")
        return path

    def write_csv(self, df: pd.DataFrame, name: str, index: bool = False) -> Path:
        path = self.path(f"{name}.csv")
        df.to_csv(path, index=index, encoding='utf-8', lineterminator='\n')
        return self._track(path)

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text if text.endswith('\n') else text + '\n', encoding='utf-8')
        return self._track(path)

    def write_lines(self, name: str, lines: Iterable[str]) -> Path:
        return self.write_text(name, '\n'.join(lines))

    def write_table(self, df: pd.DataFrame, name: str, index: bool = False) -> list[Path]:
        """同一张表写 CSV 与对齐文本两份"""
        text = df.to_string(index=index) if not df.empty else '(empty)'
        return [self.write_csv(df, name, index=index), self.write_text(f"{name}.txt", text)]


# ──────────────────────────────────────────────────────────────
# 文本格式化
# ──────────────────────────────────────────────────────────────

def round_selection(table: pd.DataFrame) -> pd.DataFrame:
    """输出用：p_chisq 保留 6 位小数"""
    out = table.copy()
    if 'p_chisq' in out.columns:
        out['p_chisq'] = out['p_chisq'].round(P_CHISQ_DECIMALS)
    return out


def format_fit_block(fit: GlmFit, response: str = 'FTHG') -> str:
    pairs = fit_info(fit, response)
    lines = [
        'Generalized Linear Model Regression Results'.center(len(RULE)),
        RULE,
    ]
    for (l_label, l_value), (r_label, r_value) in zip(pairs[0::2], pairs[1::2]):
        left = f"{l_label:<22}{l_value:>20}"
        right = f"{r_label:<22}{r_value:>20}" if r_label else ''
        lines.append(f"{left}    {right}".rstrip())
    lines.append(RULE)
    return '\n'.join(lines)


def format_coefficients(fit: GlmFit, level: float = 0.95) -> str:
    table = summarize(fit, level)
    low = f"[{(1 - level) / 2:.3f}"
    high = f"{1 - (1 - level) / 2:.3f}]"
    header = f"{'':<34}{'coef':>10}{'std err':>10}{'z':>10}{'P>|z|':>9}{low:>10}{high:>10}"
    lines = [header, THIN_RULE]
    for name, row in table.iterrows():
        lines.append(
            f"{name:<34}{row['coef']:>10.4f}{row['std_err']:>10.3f}{row['z']:>10.3f}"
            f"{row['p_value']:>9.3f}{row['ci_low']:>10.3f}{row['ci_high']:>10.3f}"
        )
    lines.append(RULE)
    return '\n'.join(lines)


def format_fit_summary(fit: GlmFit, level: float = 0.95, response: str = 'FTHG') -> str:
    return f"{format_fit_block(fit, response)}\n{format_coefficients(fit, level)}"


def format_gof_report(result: GofResult, alpha: float) -> str:
    lines = [
        'Chi-squared test for given probabilities',
        '',
        f"lambda = {result.table.lam:.6f}, prob_mode = {result.table.prob_mode}",
        f"X-squared = {result.statistic:.3f}, df = {result.df}, p-value = {result.p_value:.4g}",
        '',
    ]
    if result.verdict(alpha) == 'reject':
        lines.append(f"p-value < {alpha}: 拒绝 H_0 (bác bỏ giả thuyết H_0)，主场进球不服从 Poisson 分布")
    else:
        lines.append(f"p-value ≥ {alpha}: 不拒绝 H_0，不能否认主场进球服从 Poisson 分布")
    return '\n'.join(lines)


def format_team_pvalues(tests: pd.DataFrame) -> list[str]:
    return [f"{row.team} has p-value from chisq test: {row.p_value:.7g}" for row in tests.itertuples()]


def format_refit_report(report: RefitReport, level: float = 0.95, response: str = 'FTHG') -> str:
    dropped = ', '.join(str(i) for i in report.dropped_ids) or '(none)'
    lines = [
        '删除观测前 (before)',
        format_fit_summary(report.before, level, response),
        '',
        f"删除的观测: {dropped}",
        '',
        '删除观测后 (after)',
        format_fit_summary(report.after, level, response),
        '',
        '系数变化 (after − before)',
        report.deltas.to_string(float_format=lambda v: f"{v:.6f}"),
    ]
    return '\n'.join(lines)
