"""
Layer and activation enumerations
网络层与激活函数枚举
"""
from enum import Enum


class LayerKind(Enum):
    """
    层类型
    Layer kinds understood by the engine
    """
    DENSE = "Dense"
    CONV2D = "Conv2D"
    MAXPOOL2X2 = "MaxPool2x2"
    FLATTEN = "Flatten"
    ACTIVATION = "Activation"

    @classmethod
    def from_name(cls, name: str) -> 'LayerKind':
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown layer kind: {name}")


class ActivationKind(Enum):
    """
    激活函数
    Activation functions; attached to Dense/Conv2D or used as a standalone layer
    """
    RELU = "ReLU"
    SOFTMAX = "Softmax"
    IDENTITY = "Identity"

    @classmethod
    def from_name(cls, name: str) -> 'ActivationKind':
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown activation: {name}")
