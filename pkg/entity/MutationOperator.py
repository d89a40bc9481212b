"""
Mutation operator descriptions
变异算子描述：源码级（数据 / 程序）与模型级
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from util.Errors import InvalidOperatorError


class MutationLevel(Enum):
    SOURCE = "source"
    MODEL = "model"


class Scope(Enum):
    """数据算子作用范围：全部类别 / 单一类别"""
    GLOBAL = "Global"
    LOCAL = "Local"


class DataOpKind(Enum):
    DR = "DR"  # Data Repetition：复制少量训练数据
    LE = "LE"  # Label Error：篡改标签
    DM = "DM"  # Data Missing：删除部分训练数据
    DF = "DF"  # Data Shuffle：打乱训练数据顺序
    NP = "NP"  # Noise Perturb：给训练数据加噪声


class ProgramOpKind(Enum):
    LR = "LR"        # Layer Removal
    LA_S = "LA_s"    # Layer Addition
    AFR_S = "AFR_s"  # Activation Function Removal


class ModelOpKind(Enum):
    GF = "GF"        # Gaussian Fuzzing（权重级）
    WS = "WS"        # Weight Shuffling（神经元级）
    NEB = "NEB"      # Neuron Effect Block
    NAI = "NAI"      # Neuron Activation Inverse
    NS = "NS"        # Neuron Switch
    LD = "LD"        # Layer Deactivation（层级）
    LA_M = "LA_m"    # Layer Addition
    AFR_M = "AFR_m"  # Activation Function Removal

    @property
    def is_layer_level(self) -> bool:
        return self in (ModelOpKind.LD, ModelOpKind.LA_M, ModelOpKind.AFR_M)

    @classmethod
    def from_name(cls, name: str) -> 'ModelOpKind':
        for kind in cls:
            if kind.value == name:
                return kind
        raise InvalidOperatorError(f"unknown model operator: {name}")


@dataclass(frozen=True)
class DataOp:
    """
    数据级算子
    :param kind: DR/LE/DM/DF/NP
    :param scope: Global 或 Local
    :param ratio: 变异比例 (0,1]
    :param seed: 随机种子
    :param class_id: Local 作用的类别
    :param noise_sigma: NP 的高斯噪声标准差
    """
    kind: DataOpKind
    scope: Scope = Scope.GLOBAL
    ratio: float = 0.01
    seed: int = 0
    class_id: Optional[int] = None
    noise_sigma: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise InvalidOperatorError(f"ratio must lie in (0, 1], got {self.ratio}")
        if (self.scope == Scope.LOCAL) != (self.class_id is not None):
            raise InvalidOperatorError("class_id is required for, and only for, Local scope")
        if self.kind == DataOpKind.NP:
            if self.noise_sigma is None or not self.noise_sigma > 0:
                raise InvalidOperatorError("NP requires a positive noise_sigma")
        elif self.noise_sigma is not None:
            raise InvalidOperatorError(f"noise_sigma only applies to NP, not {self.kind.value}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}-{self.scope.value}"


@dataclass(frozen=True)
class ProgramOp:
    """
    程序级算子（作用于 ModelSpec）
    :param target: 可选层下标；LR/AFR_s 为被修改的层，LA_s 为插入位置之前的层
    """
    kind: ProgramOpKind
    target: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True)
class ModelOp:
    """
    模型级算子
    :param ratio: 权重/神经元级算子的选择比例 (0,1]
    :param gf_sigma: GF 的标准差；为空时取模型权重标准差的一半
    :param target_layer: 层级算子的目标层，为空时在合格层中均匀选择
    """
    kind: ModelOpKind
    ratio: Optional[float] = None
    gf_sigma: Optional[float] = None
    seed: int = 0
    target_layer: Optional[int] = None

    def __post_init__(self):
        if self.kind.is_layer_level:
            if self.ratio is not None:
                raise InvalidOperatorError(f"{self.kind.value} is layer-level and takes no ratio")
        elif self.ratio is None or not 0.0 < self.ratio <= 1.0:
            raise InvalidOperatorError(f"{self.kind.value} needs a ratio in (0, 1], got {self.ratio}")
        if self.gf_sigma is not None and (self.kind != ModelOpKind.GF or self.gf_sigma < 0):
            raise InvalidOperatorError("gf_sigma must be a non-negative value and only applies to GF")
