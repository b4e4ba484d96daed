"""
foldcalc 异常体系。库代码只抛出这些异常，命令行层负责转换为退出码。
"""


class FoldcalcError(Exception):
    """所有 foldcalc 异常的基类"""


# ---- 表达式 ----
class ExprError(FoldcalcError):
    pass


class ParseError(ExprError):
    def __init__(self, message, position):
        super().__init__(f"{message} (位置 {position})")
        self.position = position


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class EvalDomainError(ExprError):
    """除零、ln/sqrt 非正参数等定义域错误"""


# ---- 坐标卡与微分形式 ----
class ChartError(FoldcalcError):
    pass


class ChartMismatchError(ChartError):
    pass


class DegreeError(ChartError):
    pass


# ---- 几何检验与构造 ----
class PreconditionError(FoldcalcError):
    pass


class ProfileError(FoldcalcError):
    pass


class CertificationError(FoldcalcError):
    """检验未通过，附带失败的 StructureReport"""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ManifestError(FoldcalcError):
    def __init__(self, message, field=""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class LefschetzError(FoldcalcError):
    pass
