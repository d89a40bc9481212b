"""
Forward pass and classification decision
前向传播与分类决策
"""
from math import prod
from typing import List, NamedTuple, Sequence

import numpy as np

from entity.LayerKind import LayerKind
from entity.ModelSpec import LayerSpec, ModelSpec
from entity.TrainedModel import TrainedModel
from service.engine.LayerService import LayerService
from util.Errors import ShapeMismatchError


class LayerTrace(NamedTuple):
    """单层前向记录：层输入、预激活值、层输出"""
    inputs: np.ndarray
    pre_activation: np.ndarray
    outputs: np.ndarray


class ForwardService:
    """
    整模型前向计算
    forward 是纯函数：相同模型与输入得到逐位相同的输出
    """

    def __init__(self):
        pass

    @staticmethod
    def prepare_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
        """
        校验并整理 batch 形状为 (N,) + input_shape
        每个样本的元素数与 input_shape 一致时允许重排（例如 28×28 → 1×28×28）
        """
        batch = np.asarray(batch)
        expected = spec.input_shape
        if batch.ndim >= 1 and tuple(batch.shape[1:]) == expected:
            return batch
        if batch.ndim >= 2 and prod(batch.shape[1:]) == prod(expected):
            return batch.reshape((batch.shape[0],) + expected)
        raise ShapeMismatchError("batch sample shape", expected, batch.shape[1:])

    @staticmethod
    def layer_forward(layer: LayerSpec, params, x: np.ndarray, dtype=np.float32):
        """
        单层前向
        Returns:
            (pre_activation, output)
        """
        if layer.kind == LayerKind.DENSE:
            pre = LayerService.dense_forward(params[0], params[1], x, out_dtype=dtype)
        elif layer.kind == LayerKind.CONV2D:
            pre = LayerService.conv2d_forward(params[0], params[1], x, out_dtype=dtype)
        elif layer.kind == LayerKind.MAXPOOL2X2:
            pre = LayerService.maxpool2x2(x)
        elif layer.kind == LayerKind.FLATTEN:
            pre = x.reshape(x.shape[0], -1)
        else:
            pre = x
        return pre, LayerService.apply_activation(pre, layer.activation)

    @staticmethod
    def run_layers(spec: ModelSpec, params: Sequence, batch: np.ndarray, dtype=np.float32,
                   keep_trace: bool = False):
        """
        逐层前向
        Args:
            spec: 模型结构
            params: 每层参数（无参数层为 None）
            batch: (N,) + input_shape
            dtype: 层间数据类型；推理为 float32，训练为 float64
            keep_trace: 是否保留每层的 LayerTrace（反向传播需要）
        Returns:
            (outputs, traces)
        """
        x = ForwardService.prepare_batch(spec, batch).astype(dtype, copy=False)
        traces: List[LayerTrace] = []
        for layer, layer_params in zip(spec.layers, params):
            pre, out = ForwardService.layer_forward(layer, layer_params, x, dtype)
            if keep_trace:
                traces.append(LayerTrace(x, pre, out))
            x = out
        return x, traces

    @staticmethod
    def forward(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
        """
        返回类别概率矩阵 (N, num_classes)，每行和为 1
        """
        outputs, _ = ForwardService.run_layers(model.spec, model.params, batch)
        return outputs

    @staticmethod
    def predict(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
        """
        每行概率的 argmax；并列时取最小类别下标
        """
        return np.argmax(ForwardService.forward(model, batch), axis=1)

    @staticmethod
    def predict_in_chunks(model: TrainedModel, batch: np.ndarray, chunk_size: int = 2048) -> np.ndarray:
        """大数据集分块预测，避免一次性展开卷积窗口"""
        if len(batch) <= chunk_size:
            return ForwardService.predict(model, batch)
        parts = [ForwardService.predict(model, batch[start:start + chunk_size])
                 for start in range(0, len(batch), chunk_size)]
        return np.concatenate(parts)

    @staticmethod
    def layer_traces(model: TrainedModel, batch: np.ndarray) -> List[LayerTrace]:
        """推理模式下的逐层记录，可用于查看某层的预激活值"""
        _, traces = ForwardService.run_layers(model.spec, model.params, batch, keep_trace=True)
        return traces
