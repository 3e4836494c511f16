import configparser
import io
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from src.errors import ConfigurationError
from src.services.diagnostics_service import OUTLIER_RULES
from src.services.dist_service import PROB_MODES
from src.services.ingest_service import LOG_MODE_PLAIN, LOG_MODES
from src.services.search_service import DEFAULT_VARIABLES

logger = logging.getLogger(__name__)

SECTION = 'pipeline'
OUTPUT_ENV = 'GOALS_OUTPUT_DIR'
BASE_DIR = Path(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
DEFAULT_CONF = BASE_DIR / 'conf' / 'pipeline.ini'


def _split_list(value: str) -> tuple[str, ...]:
    """逗号或换行分隔"""
    parts = value.replace('\n', ',').split(',')
    return tuple(p.strip() for p in parts if p.strip())


def _parse_ids(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in _split_list(value))
    except ValueError as e:
        raise ConfigurationError(f"drop_ids 只能包含整数: {value}") from e


def _parse_float(value: str) -> float:
    return float(value.strip())


@dataclass(frozen=True)
class PipelineConfig:
    inputs: tuple[str, ...] = ()
    missing_threshold: float = 0.05
    max_category_levels: float = 50
    tail_threshold: int = 5
    alpha_team: float = 0.05
    alpha_gof: float = 0.05
    log_mode: str = LOG_MODE_PLAIN
    prob_mode: str = 'rounded3'
    team_prob_mode: str = 'exact'
    ci_level: float = 0.95
    variables: tuple[str, ...] = DEFAULT_VARIABLES
    teams: tuple[str, ...] = ()
    model: str = ''
    outlier_rule: str = 'ids'
    drop_ids: tuple[int, ...] = ()
    residual_cutoff: float = 4.0
    leverage_multiplier: float = 3.0
    max_iter: int = 25
    tol: float = 1e-8
    workers: int = 1
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, 'output'))

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'PipelineConfig':
        """命令行参数覆盖配置文件；值为 None 的参数视为未指定"""
        known = {f.name for f in fields(self)}
        values = {k: v for k, v in overrides.items() if k in known and v is not None}
        for key in ('inputs', 'variables', 'teams', 'drop_ids'):
            if key in values:
                values[key] = tuple(values[key])
        return replace(self, **values)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def validate(self) -> 'PipelineConfig':
        def _require(ok: bool, message: str):
            if not ok:
                raise ConfigurationError(message)

        _require(0.0 <= self.missing_threshold <= 1.0, f"missing_threshold 必须在 [0, 1] 内: {self.missing_threshold}")
        _require(self.max_category_levels >= 1, f"max_category_levels 必须 ≥ 1: {self.max_category_levels}")
        _require(self.tail_threshold >= 1, f"tail_threshold 必须 ≥ 1: {self.tail_threshold}")
        _require(0.0 <= self.alpha_team < 1.0, f"alpha_team 必须在 [0, 1) 内: {self.alpha_team}")
        _require(0.0 < self.alpha_gof < 1.0, f"alpha_gof 必须在 (0, 1) 内: {self.alpha_gof}")
        _require(0.0 < self.ci_level < 1.0, f"ci_level 必须在 (0, 1) 内: {self.ci_level}")
        _require(self.log_mode in LOG_MODES, f"未知 log_mode: {self.log_mode}")
        _require(self.prob_mode in PROB_MODES, f"未知 prob_mode: {self.prob_mode}")
        _require(self.team_prob_mode in PROB_MODES, f"未知 team_prob_mode: {self.team_prob_mode}")
        _require(self.outlier_rule in OUTLIER_RULES, f"未知 outlier_rule: {self.outlier_rule}")
        _require(self.residual_cutoff > 0, f"residual_cutoff 必须 > 0: {self.residual_cutoff}")
        _require(self.leverage_multiplier > 0, f"leverage_multiplier 必须 > 0: {self.leverage_multiplier}")
        _require(self.max_iter >= 1, f"max_iter 必须 ≥ 1: {self.max_iter}")
        _require(self.tol > 0, f"tol 必须 > 0: {self.tol}")
        _require(self.workers >= 1, f"workers 必须 ≥ 1: {self.workers}")
        _require(len(self.variables) > 0, "variables 不能为空")
        _require(len(set(self.variables)) == len(self.variables), f"variables 存在重复: {self.variables}")

        out = self.output_path
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigurationError(f"无法创建输出目录 {out}: {e}") from e
        _require(os.access(out, os.W_OK), f"输出目录不可写: {out}")
        return self

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser[SECTION] = {
            key: ", ".join(str(v) for v in value) if isinstance(value, tuple) else str(value)
            for key, value in asdict(self).items()
        }
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def write_ini(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.output_path / 'run_config.ini'
        path.write_text(self.to_ini(), encoding='utf-8')
        return path


_PARSERS = {
    'inputs': _split_list,
    'missing_threshold': _parse_float,
    'max_category_levels': _parse_float,
    'tail_threshold': int,
    'alpha_team': _parse_float,
    'alpha_gof': _parse_float,
    'log_mode': str.strip,
    'prob_mode': str.strip,
    'team_prob_mode': str.strip,
    'ci_level': _parse_float,
    'variables': _split_list,
    'teams': _split_list,
    'model': str.strip,
    'outlier_rule': str.strip,
    'drop_ids': _parse_ids,
    'residual_cutoff': _parse_float,
    'leverage_multiplier': _parse_float,
    'max_iter': int,
    'tol': _parse_float,
    'workers': int,
    'output_dir': str.strip,
}


def _read_ini(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ConfigurationError(f"配置文件未找到: {path}")
    text = path.read_text(encoding='utf-8')
    if not any(line.strip().startswith('[') for line in text.splitlines()):
        # 无节头的 key=value 文件
        text = f"[{SECTION}]\n{text}"
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigurationError(f"配置文件解析失败 {path}: {e}") from e
    if not parser.has_section(SECTION):
        raise ConfigurationError(f"配置文件 {path} 缺少 [{SECTION}] 节")
    return dict(parser.items(SECTION))


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """
    读取配置：默认值 ← 配置文件 ← 命令行参数。

    path 为 None 时尝试 conf/pipeline.ini，不存在则只用默认值。
    """
    if path is None:
        path = DEFAULT_CONF if DEFAULT_CONF.exists() else None

    values: dict[str, Any] = {}
    if path is not None:
        raw = _read_ini(Path(path))
        for key, text in raw.items():
            if key not in _PARSERS:
                logger.warning(f"⚠️ 忽略未知配置项: {key}")
                continue
            try:
                values[key] = _PARSERS[key](text)
            except ValueError as e:
                raise ConfigurationError(f"配置项 {key} 的值无效: {text!r}") from e
        logger.info(f"已读取配置文件 {path}")

    config = PipelineConfig(**values)
    return config.with_overrides(overrides or {})
