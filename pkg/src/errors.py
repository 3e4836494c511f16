"""
统一异常体系

所有可预期的失败都派生自 PipelineError，CLI 用类名作为机器可解析的错误类别：
    ERROR <ClassName>: <message>
"""


class PipelineError(Exception):
    """流水线所有可预期错误的基类"""

    @property
    def error_class(self) -> str:
        return type(self).__name__


class DomainError(PipelineError, ValueError):
    """特殊函数的参数超出定义域"""


class InputFileError(PipelineError, OSError):
    """输入文件不可读"""


class SchemaError(PipelineError):
    """CSV 表头缺少必需列 (Date / HomeTeam / FTHG)"""


class ConfigurationError(PipelineError):
    """配置非法，或剪枝规则会删除建模必需列"""


class UnknownColumnError(PipelineError, KeyError):
    """列不存在或不是数值列"""

    def __str__(self) -> str:
        # KeyError 默认会给消息加引号
        return str(self.args[0]) if self.args else ''


class UnknownTeamError(PipelineError):
    pass


class EmptyFrameError(PipelineError):
    """过滤后没有任何可建模的观测"""


class DesignError(PipelineError):
    """公式无法展开为设计矩阵"""


class SingularDesignError(PipelineError):
    """X'WX 数值奇异"""

    def __init__(self, message: str, collinear: tuple[str, ...] = ()):
        super().__init__(message)
        self.collinear = collinear


class DivergenceError(PipelineError):
    """IRLS 迭代出现非有限值"""


class DegenerateBinsError(PipelineError):
    """卡方检验存在期望频数 ≤ 0 的分箱"""


class ProbabilitySumError(PipelineError):
    """分箱概率之和偏离 1 超出容差（内部错误）"""


class DegenerateObservationError(PipelineError):
    """杠杆值 ≥ 1，无法标准化残差"""
