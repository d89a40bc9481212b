"""
Deterministic mini-batch SGD trainer
确定性的 mini-batch SGD 训练（单线程数值、种子化初始化与打乱）
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from entity.Dataset import Dataset
from entity.LayerKind import ActivationKind, LayerKind
from entity.ModelSpec import ModelSpec
from entity.TrainConfig import TrainConfig
from entity.TrainedModel import TrainedModel
from service.engine.ForwardService import ForwardService
from service.engine.LayerService import LayerService
from util.Errors import DatasetError, ShapeMismatchError, TrainingDivergenceError
from util.SeedUtil import SeedUtil

logger = logging.getLogger(__name__)


class EpochRecord:
    """每轮训练日志"""

    def __init__(self, epoch: int, loss: float, accuracy: float):
        self.epoch = epoch
        self.loss = loss
        self.accuracy = accuracy

    def as_dict(self) -> Dict:
        return {'epoch': self.epoch, 'loss': self.loss, 'accuracy': self.accuracy}

    def __repr__(self):
        return f"EpochRecord(epoch={self.epoch}, loss={self.loss:.4f}, accuracy={self.accuracy:.4f})"


class TrainerService:
    """
    训练服务
    - 交叉熵损失 + 反向传播 + 朴素 SGD（无动量、无正则、无学习率衰减）
    - Glorot-uniform 权重初始化，偏置为 0
    - 同样的 (spec, data, cfg) 必定得到逐位相同的模型
    """

    def __init__(self):
        self.history: List[EpochRecord] = []

    # ==================== 初始化 ====================

    @staticmethod
    def initialize(spec: ModelSpec, seed: int) -> TrainedModel:
        """Glorot-uniform 初始化，使用 seed 的 init 子流"""
        rng = SeedUtil.rng(seed, "init")
        params = []
        for layer in spec.layers:
            shapes = layer.param_shapes()
            if shapes is None:
                params.append(None)
                continue
            weight_shape, bias_shape = shapes
            if layer.kind == LayerKind.CONV2D:
                receptive = layer.kernel_h * layer.kernel_w
                fan_in, fan_out = layer.in_channels * receptive, layer.out_channels * receptive
            else:
                fan_in, fan_out = layer.in_features, layer.out_features
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=weight_shape).astype(np.float32)
            params.append((weight, np.zeros(bias_shape, dtype=np.float32)))
        return TrainedModel(spec, params)

    # ==================== 损失与梯度 ====================

    @staticmethod
    def _check_labels(spec: ModelSpec, batch: np.ndarray, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(batch) != len(labels):
            raise ShapeMismatchError("labels per batch", (len(batch),), (len(labels),))
        if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
            raise DatasetError(f"labels must lie in [0, {spec.num_classes})")
        return labels

    @staticmethod
    def loss_with_params(spec: ModelSpec, params: Sequence, batch: np.ndarray, labels: np.ndarray) -> float:
        """在给定参数（float64）下计算平均交叉熵，供数值梯度检验使用"""
        loss, _ = TrainerService._loss_and_grads(spec, params, batch, labels, need_grads=False)
        return loss

    @staticmethod
    def loss_and_grads(model: TrainedModel, batch: np.ndarray, labels: np.ndarray):
        """
        平均交叉熵损失及其对每个参数的梯度
        Args:
            model: 当前模型
            batch: (N,) + input_shape
            labels: (N,)
        Returns:
            (loss, grads)；grads 与 model.params 一一对应，无参数层为 None
        """
        params = [None if p is None else (p[0].astype(np.float64), p[1].astype(np.float64))
                  for p in model.params]
        return TrainerService._loss_and_grads(model.spec, params, batch, labels)

    @staticmethod
    def _loss_and_grads(spec: ModelSpec, params: Sequence, batch: np.ndarray, labels: np.ndarray,
                        need_grads: bool = True) -> Tuple[float, Optional[List]]:
        labels = TrainerService._check_labels(spec, batch, labels)
        n = len(labels)
        if n == 0:
            raise DatasetError("cannot compute a loss on an empty batch")
        _, traces = ForwardService.run_layers(spec, params, batch, dtype=np.float64, keep_trace=True)

        # log-softmax 由最后一层的预激活值直接计算，避免 log(0)
        logits = traces[-1].pre_activation
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_probs[np.arange(n), labels].mean())
        if not need_grads:
            return loss, None

        # Softmax + 交叉熵 对最后一层预激活值的梯度
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        grad /= n

        grads: List = [None] * len(spec.layers)
        for index in range(len(spec.layers) - 1, -1, -1):
            layer, trace = spec.layers[index], traces[index]
            if index != len(spec.layers) - 1:
                # grad 目前是对该层输出的梯度，先穿过激活函数
                if layer.activation == ActivationKind.RELU:
                    grad = LayerService.relu_backward(trace.pre_activation, grad)
            if layer.kind == LayerKind.DENSE:
                grad_w, grad_b, grad = LayerService.dense_backward(params[index][0], trace.inputs, grad)
                grads[index] = (grad_w, grad_b)
            elif layer.kind == LayerKind.CONV2D:
                grad_w, grad_b, grad = LayerService.conv2d_backward(params[index][0], trace.inputs, grad)
                grads[index] = (grad_w, grad_b)
            elif layer.kind == LayerKind.MAXPOOL2X2:
                grad = LayerService.maxpool2x2_backward(trace.inputs, grad)
            elif layer.kind == LayerKind.FLATTEN:
                grad = grad.reshape(trace.inputs.shape)
        return loss, grads

    # ==================== SGD ====================

    @staticmethod
    def sgd_step(model: TrainedModel, batch: np.ndarray, labels: np.ndarray,
                 learning_rate: float) -> Tuple[TrainedModel, float]:
        """
        单步 SGD：p ← p − lr·∇p，float64 计算后存回 float32
        Returns:
            (新模型, 该 batch 的损失)
        """
        loss, grads = TrainerService.loss_and_grads(model, batch, labels)
        return TrainerService._apply_grads(model, grads, learning_rate), loss

    @staticmethod
    def _apply_grads(model: TrainedModel, grads: Sequence, learning_rate: float) -> TrainedModel:
        updated = []
        for layer_params, layer_grads in zip(model.params, grads):
            if layer_params is None:
                updated.append(None)
                continue
            updated.append(tuple(
                (p.astype(np.float64) - learning_rate * g).astype(np.float32)
                for p, g in zip(layer_params, layer_grads)
            ))
        return model.with_params(updated)

    def train(self, spec: ModelSpec, data: Dataset, cfg: TrainConfig) -> TrainedModel:
        """
        训练模型
        Args:
            spec: 模型结构
            data: 训练数据
            cfg: 训练配置
        Returns:
            训练后的模型
        Raises:
            TrainingDivergenceError: 损失出现 NaN/Inf
        """
        if len(data) == 0:
            raise DatasetError("cannot train on an empty dataset")
        if data.num_classes != spec.num_classes:
            raise ShapeMismatchError("dataset classes vs model outputs", (spec.num_classes,), (data.num_classes,))
        if cfg.batch_size > len(data):
            raise DatasetError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")
        features = ForwardService.prepare_batch(spec, data.features)
        labels = data.labels

        model = self.initialize(spec, cfg.seed)
        shuffle_rng = SeedUtil.rng(cfg.seed, "shuffle")
        order = np.arange(len(data))
        self.history = []

        for epoch in range(cfg.epochs):
            if cfg.shuffle_each_epoch:
                order = shuffle_rng.permutation(len(data))
            total_loss, seen = 0.0, 0
            for batch_index, start in enumerate(range(0, len(data), cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                loss, grads = self.loss_and_grads(model, features[idx], labels[idx])
                if not np.isfinite(loss) or any(
                        g is not None and not (np.all(np.isfinite(g[0])) and np.all(np.isfinite(g[1])))
                        for g in grads):
                    raise TrainingDivergenceError(epoch, batch_index, loss)
                model = self._apply_grads(model, grads, cfg.learning_rate)
                total_loss += loss * len(idx)
                seen += len(idx)
            record = EpochRecord(epoch, total_loss / seen, self.evaluate_accuracy(model, data))
            self.history.append(record)
            logger.info("epoch=%d loss=%.6f accuracy=%.4f", record.epoch, record.loss, record.accuracy)
        return model

    # ==================== 评估 ====================

    @staticmethod
    def evaluate_accuracy(model: TrainedModel, data: Dataset) -> float:
        """(# predict == label) / |data|"""
        if len(data) == 0:
            raise DatasetError("accuracy of an empty dataset is undefined")
        predictions = ForwardService.predict_in_chunks(model, data.features)
        return float(np.count_nonzero(predictions == data.labels)) / len(data)


if __name__ == '__main__':
    from service.fetch.DatasetFetchService import DatasetFetchService

    data = DatasetFetchService.make_synthetic(num_classes=3, per_class=100, dim=6, spread=0.08, seed=1)
    spec = ModelSpec.mlp((6,), [8], 3)
    trainer = TrainerService()
    trained = trainer.train(spec, data, TrainConfig(epochs=20, batch_size=16, learning_rate=0.2, seed=7))
    print(trained)
    print(f"训练集准确率: {trainer.evaluate_accuracy(trained, data):.4f}")
