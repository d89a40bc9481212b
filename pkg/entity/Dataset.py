from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from util.Errors import DatasetError


class Dataset:
    """
    带标签的数据集
    :param features: (N, ...) float32，取值在 [0, 1]
    :param labels: (N,) 类别编号，均小于 num_classes
    :param num_classes: 类别数 |C|
    构造后不可变（数组只读）
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, num_classes: int):
        features = np.array(features, dtype=np.float32)
        labels = np.array(labels, dtype=np.int64).reshape(-1)
        if num_classes <= 0:
            raise DatasetError(f"num_classes must be positive, got {num_classes}")
        if features.ndim < 1 or features.shape[0] != labels.shape[0]:
            raise DatasetError(f"{features.shape[0] if features.ndim else 0} feature rows "
                               f"but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise DatasetError(f"labels must lie in [0, {num_classes}), got [{labels.min()}, {labels.max()}]")
        if features.size and not (np.all(np.isfinite(features)) and features.min() >= 0.0 and features.max() <= 1.0):
            raise DatasetError("feature values must be finite and within [0, 1]")
        features.setflags(write=False)
        labels.setflags(write=False)
        self._features = features
        self._labels = labels
        self._num_classes = int(num_classes)

    @property
    def features(self) -> np.ndarray:
        return self._features

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self._features.shape[1:])

    def __len__(self):
        return int(self._labels.shape[0])

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self._features[indices], self._labels[indices], self._num_classes)

    def class_indices(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self._labels == class_id)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self._labels, minlength=self._num_classes)

    def present_classes(self) -> np.ndarray:
        return np.flatnonzero(self.class_counts() > 0)

    def sample_keys(self) -> list:
        """每个样本的 (特征字节, 标签) 键，用于多重集比较"""
        flat = self._features.reshape(len(self), -1)
        return [(flat[i].tobytes(), int(self._labels[i])) for i in range(len(self))]

    def __repr__(self):
        return f"Dataset(n={len(self)}, shape={self.sample_shape}, classes={self._num_classes})"


class SamplingSource(Enum):
    TRAIN = "train"
    TEST = "test"


class SamplingMode(Enum):
    UNIFORM = "uniform"
    NONUNIFORM = "nonuniform"


@dataclass(frozen=True)
class SamplingPlan:
    """
    受控采样计划
    :param source: 从训练集还是测试集采样
    :param size: 采样数量
    :param mode: uniform 或 nonuniform
    :param favored_class: 非均匀采样偏好的类别（仅 nonuniform）
    :param seed: 随机种子
    """
    source: SamplingSource
    size: int
    mode: SamplingMode
    favored_class: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.size < 0:
            raise DatasetError(f"sample size must be >= 0, got {self.size}")
        if (self.favored_class is not None) != (self.mode == SamplingMode.NONUNIFORM):
            raise DatasetError("favored_class is required for, and only for, non-uniform sampling")
