"""
Error hierarchy of the mutation toolkit
变异测试工具的异常定义
"""


class MutationToolkitError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(MutationToolkitError):
    pass


class ShapeMismatchError(MutationToolkitError, ValueError):
    """Raised when two tensors (or a tensor and a spec) disagree on shape"""

    def __init__(self, message: str, expected=None, actual=None):
        if expected is not None or actual is not None:
            message = f"{message}: expected {tuple(expected) if expected is not None else None}, " \
                      f"got {tuple(actual) if actual is not None else None}"
        super().__init__(message)
        self.expected = expected
        self.actual = actual


# ==================== 模型文件 ====================

class ModelFormatError(MutationToolkitError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class MalformedManifestError(ModelFormatError):
    pass


# ==================== IDX 文件 ====================

class IdxFormatError(MutationToolkitError):
    pass


class BadMagicError(IdxFormatError):
    pass


class IdxDimensionMismatchError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


# ==================== 数据集 ====================

class DatasetError(MutationToolkitError, ValueError):
    pass


class InsufficientDataError(DatasetError):
    pass


class ClassExhaustedError(DatasetError):
    pass


# ==================== 训练与变异 ====================

class TrainingDivergenceError(MutationToolkitError):
    """Loss became NaN/Inf; carries where it happened"""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class InvalidOperatorError(ConfigError, ValueError):
    """Operator parameters out of range, or an unknown operator name"""


class NoEligibleTargetError(MutationToolkitError):
    pass


# ==================== 分析 ====================

class EmptyPassedSetError(MutationToolkitError):
    pass


class EmptyMutantSetError(MutationToolkitError):
    pass
