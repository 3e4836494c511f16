import logging
import os

import pandas as pd

from src.errors import InputFileError

logger = logging.getLogger(__name__)

# football-data.co.uk 的老赛季文件是 Latin-1 编码
DEFAULT_ENCODINGS: tuple[str, ...] = ('utf-8', 'latin-1')


class BaseRepository:
    def __init__(self, encodings: tuple[str, ...] = DEFAULT_ENCODINGS):
        self.encodings = encodings

    def _read_csv(self, file_path) -> pd.DataFrame:
        """读取 CSV，所有单元格保留为字符串；空串与 NA 记为缺失"""
        if not os.path.exists(file_path):
            raise InputFileError(f"文件不存在: {file_path}")

        last_error = None
        for encoding in self.encodings:
            try:
                df = pd.read_csv(
                    file_path,
                    encoding=encoding,
                    dtype=str,
                    skipinitialspace=True,
                    na_values=['', 'NA', 'N/A', 'NaN', 'nan'],
                    keep_default_na=False,
                    on_bad_lines='warn',
                )
                # 文件末尾常见的整行空记录
                return df.dropna(how='all').reset_index(drop=True)
            except UnicodeDecodeError as e:
                last_error = e
                logger.debug(f"{file_path} 不是 {encoding} 编码，尝试下一种")
            except pd.errors.EmptyDataError:
                return pd.DataFrame()
            except (OSError, pd.errors.ParserError) as e:
                raise InputFileError(f"读取CSV失败: {file_path} ({e})") from e

        raise InputFileError(f"无法解码CSV: {file_path} ({last_error})")
