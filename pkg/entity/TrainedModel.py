from typing import List, Optional, Sequence, Tuple

import numpy as np

from entity.ModelSpec import ModelSpec
from util.Errors import ShapeMismatchError

LayerParams = Optional[Tuple[np.ndarray, np.ndarray]]


class TrainedModel:
    """
    训练好的模型：结构 + 每层权重与偏置
    构造后不可变，参数数组为只读 float32 副本，可在并发评估任务间共享
    """

    def __init__(self, spec: ModelSpec, params: Sequence[LayerParams]):
        if len(params) != len(spec.layers):
            raise ShapeMismatchError("parameter entries per layer", (len(spec.layers),), (len(params),))
        frozen: List[LayerParams] = []
        for index, (layer, entry) in enumerate(zip(spec.layers, params)):
            expected = layer.param_shapes()
            if expected is None:
                if entry is not None:
                    raise ShapeMismatchError(f"layer {index} ({layer.describe()}) takes no parameters")
                frozen.append(None)
                continue
            if entry is None:
                raise ShapeMismatchError(f"layer {index} ({layer.describe()}) missing parameters")
            weight, bias = (np.array(entry[0], dtype=np.float32), np.array(entry[1], dtype=np.float32))
            if weight.shape != expected[0]:
                raise ShapeMismatchError(f"layer {index} weight", expected[0], weight.shape)
            if bias.shape != expected[1]:
                raise ShapeMismatchError(f"layer {index} bias", expected[1], bias.shape)
            weight.setflags(write=False)
            bias.setflags(write=False)
            frozen.append((weight, bias))
        self._spec = spec
        self._params = tuple(frozen)

    @property
    def spec(self) -> ModelSpec:
        return self._spec

    @property
    def params(self) -> Tuple[LayerParams, ...]:
        return self._params

    def weight(self, index: int) -> np.ndarray:
        return self._params[index][0]

    def bias(self, index: int) -> np.ndarray:
        return self._params[index][1]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in (p for p in self._params if p is not None))

    def params_copy(self) -> List[Optional[List[np.ndarray]]]:
        """可写副本，供变异算子修改后重新构造模型"""
        return [None if p is None else [p[0].copy(), p[1].copy()] for p in self._params]

    def with_params(self, params: Sequence[LayerParams]) -> 'TrainedModel':
        return TrainedModel(self._spec, params)

    def bitwise_equal(self, other: 'TrainedModel') -> bool:
        """结构相同且每个参数字节都相同"""
        if self._spec != other.spec:
            return False
        for mine, theirs in zip(self._params, other.params):
            if (mine is None) != (theirs is None):
                return False
            if mine is None:
                continue
            if mine[0].tobytes() != theirs[0].tobytes() or mine[1].tobytes() != theirs[1].tobytes():
                return False
        return True

    def __repr__(self):
        return f"TrainedModel({self._spec.describe()}, params={self.param_count()})"
