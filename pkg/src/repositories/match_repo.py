"""
比赛记录仓库 (MatchRepository)

职责：纯粹的文件读取与解析层，不含统计逻辑。
  • 按表头名称（区分大小写）映射 football-data.co.uk 各赛季 CSV
  • 各赛季列集合、列顺序可以不同；某文件缺失的已知列记为缺失
  • 计数列中无法解析的单元格记为缺失，不报错
  • 日期同时接受 dd/mm/yy 与 dd/mm/yyyy

输出 MatchTable.frame 结构：
  index     : obs_id，0 起的全局观测编号（文件顺序，再按行顺序）
  Date      : datetime64
  HomeTeam / AwayTeam / Referee : string（可缺失）
  FTHG / HTAG / HST / HC / HR / AR / Attendance / HHW / HO : Int64（可缺失）
  其余未识别列原样保留（字符串），但不参与分析
"""
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from src.errors import SchemaError

from .base_repo import BaseRepository

logger = logging.getLogger(__name__)

REQUIRED_HEADER: tuple[str, ...] = ('Date', 'HomeTeam', 'FTHG')
_FOUR_DIGIT_YEAR = re.compile(r'\d{1,2}/\d{1,2}/\d{4}')

COUNT_COLUMNS: tuple[str, ...] = (
    'FTHG', 'HTAG', 'HST', 'HC', 'HR', 'AR', 'Attendance', 'HHW', 'HO',
)
TEXT_COLUMNS: tuple[str, ...] = ('HomeTeam', 'AwayTeam', 'Referee')
KNOWN_COLUMNS: tuple[str, ...] = (
    'Date', 'HomeTeam', 'AwayTeam', 'FTHG', 'HTAG', 'HST', 'HC', 'HR', 'AR',
    'Attendance', 'HHW', 'HO', 'Referee',
)


@dataclass(frozen=True)
class MatchRecord:
    date: date
    home_team: str | None
    ftHG: int | None
    htAG: int | None
    hst: int | None
    hc: int | None
    hr: int | None
    ar: int | None
    attendance: int | None = None
    hhw: int | None = None
    ho: int | None = None
    referee: str | None = None


@dataclass(frozen=True)
class MatchTable:
    """合并后的比赛表，构造后只读"""
    frame: pd.DataFrame
    source_files: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    @property
    def column_missing_counts(self) -> dict[str, int]:
        return {col: int(self.frame[col].isna().sum()) for col in self.frame.columns}

    def with_frame(self, frame: pd.DataFrame) -> 'MatchTable':
        return MatchTable(frame=frame, source_files=self.source_files)

    def records(self) -> Iterator[MatchRecord]:
        def _get(row, col):
            if col not in row.index or pd.isna(row[col]):
                return None
            return row[col]

        for _, row in self.frame.iterrows():
            yield MatchRecord(
                date=row['Date'].date(),
                home_team=_get(row, 'HomeTeam'),
                ftHG=_get(row, 'FTHG'),
                htAG=_get(row, 'HTAG'),
                hst=_get(row, 'HST'),
                hc=_get(row, 'HC'),
                hr=_get(row, 'HR'),
                ar=_get(row, 'AR'),
                attendance=_get(row, 'Attendance'),
                hhw=_get(row, 'HHW'),
                ho=_get(row, 'HO'),
                referee=_get(row, 'Referee'),
            )


class MatchRepository(BaseRepository):

    def load_matches(self, paths: Sequence[str | Path], workers: int = 1) -> MatchTable:
        """
        读取并合并多个赛季文件。

        Args:
            paths  : 赛季 CSV 路径，合并顺序即列表顺序
            workers: 并行读取的线程数（结果顺序与 paths 一致）
        """
        paths = [str(p) for p in paths]
        if workers > 1 and len(paths) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                raw_frames = list(pool.map(self._read_season, paths))
        else:
            raw_frames = [self._read_season(p) for p in paths]

        extra_columns: list[str] = []
        for raw in raw_frames:
            for col in raw.columns:
                if col not in KNOWN_COLUMNS and col not in extra_columns:
                    extra_columns.append(col)
        ordered = list(KNOWN_COLUMNS) + extra_columns

        if raw_frames:
            merged = pd.concat([raw.reindex(columns=ordered) for raw in raw_frames], ignore_index=True)
        else:
            merged = pd.DataFrame(columns=ordered)

        frame = self._coerce_types(merged)
        frame.index = pd.RangeIndex(len(frame), name='obs_id')
        logger.info(f"合并 {len(paths)} 个文件，共 {len(frame)} 场比赛")
        return MatchTable(frame=frame, source_files=tuple(paths))

    # ──────────────────────────────────────────────────────────────
    # Private helpers
    # ──────────────────────────────────────────────────────────────

    def _read_season(self, path: str) -> pd.DataFrame:
        df = self._read_csv(path)
        missing = [col for col in REQUIRED_HEADER if col not in df.columns]
        if missing:
            raise SchemaError(f"{path} 的表头缺少必需列: {', '.join(missing)}")
        logger.debug(f"📂 {path}: {len(df)} 行")
        return df

    def _coerce_types(self, raw: pd.DataFrame) -> pd.DataFrame:
        df = raw.copy()

        for col in COUNT_COLUMNS:
            df[col] = _parse_counts(df[col])
        for col in TEXT_COLUMNS:
            df[col] = _strip_cells(df[col]).astype('string')

        df['Date'] = _parse_dates(df['Date'])
        bad_dates = df['Date'].isna()
        if bad_dates.any():
            logger.warning(f"⚠️ 丢弃 {int(bad_dates.sum())} 行无法解析日期的记录")
            df = df[~bad_dates]
        return df.reset_index(drop=True)


def _strip_cells(raw: pd.Series) -> pd.Series:
    stripped = raw.astype(object).map(lambda v: (v.strip() or None) if isinstance(v, str) else None)
    return stripped.astype(object)


def _parse_counts(raw: pd.Series) -> pd.Series:
    """非负整数计数；非数值、小数、负数都记为缺失"""
    text = _strip_cells(raw).map(lambda v: v.replace(',', '') if v else None)
    values = pd.to_numeric(text, errors='coerce').astype('float64')
    valid = (values >= 0) & (values == np.floor(values))
    return values.where(valid).astype('Int64')


def _parse_dates(raw: pd.Series) -> pd.Series:
    text = _strip_cells(raw)
    four_digit = text.map(lambda v: bool(v and _FOUR_DIGIT_YEAR.fullmatch(v))).astype(bool)
    long_form = pd.to_datetime(text.where(four_digit), format='%d/%m/%Y', errors='coerce')
    short_form = pd.to_datetime(text.where(~four_digit), format='%d/%m/%y', errors='coerce')
    return long_form.fillna(short_form)
