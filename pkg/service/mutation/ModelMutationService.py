"""
Model-level mutation operators (applied to a trained model, no retraining)
模型级变异算子：直接修改训练好的模型，不重新训练

权重级：GF
神经元级：WS / NEB / NAI / NS（Dense 的输出单元、Conv2D 的输出通道视为神经元）
层级：LD / LA_m / AFR_m
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from entity.LayerKind import ActivationKind, LayerKind
from entity.ModelSpec import LayerSpec
from entity.MutantRecord import MutantRecord
from entity.MutationOperator import ModelOp, ModelOpKind, MutationLevel
from entity.TrainedModel import TrainedModel
from service.engine.ModelIOService import ModelIOService
from util.Constant import Constant
from util.Errors import NoEligibleTargetError
from util.SeedUtil import SeedUtil
from util.SelectionUtil import SelectionUtil

logger = logging.getLogger(__name__)

Neuron = Tuple[int, int]

WEIGHT_NEURON_OPS = (ModelOpKind.GF, ModelOpKind.WS, ModelOpKind.NEB, ModelOpKind.NAI, ModelOpKind.NS)
LAYER_OPS = (ModelOpKind.LD, ModelOpKind.LA_M, ModelOpKind.AFR_M)


class MutationOutcome:
    """一次变异的结果：新模型 + 受影响位置数 + 说明"""

    def __init__(self, model: TrainedModel, affected: int, details: Optional[Dict] = None):
        self.model = model
        self.affected = affected
        self.details = dict(details or {})

    def __repr__(self):
        return f"MutationOutcome(affected={self.affected}, details={self.details})"


class ModelMutationService:
    """
    模型级变异服务
    所有算子都是纯函数：原模型只读，每次调用返回新模型；相同 (模型, 算子, 种子) 结果相同
    """

    def __init__(self):
        self.shortfalls: Dict[str, int] = {}

    # ==================== 选择辅助 ====================

    @staticmethod
    def neurons(model: TrainedModel, layers: Optional[Sequence[int]] = None) -> List[Neuron]:
        """按层顺序列出 (层下标, 神经元下标)"""
        spec = model.spec
        indices = spec.parameterized_layers() if layers is None else layers
        return [(i, j) for i in indices for j in range(spec.layers[i].neuron_count)]

    @staticmethod
    def _select_neurons(population: List[Neuron], ratio: float, rng: np.random.Generator) -> List[Neuron]:
        count = SelectionUtil.selection_count(ratio, len(population))
        if count == 0:
            return []
        picked = rng.choice(len(population), size=count, replace=False)
        return [population[k] for k in sorted(picked)]

    @staticmethod
    def _incoming(weight: np.ndarray, neuron: int) -> np.ndarray:
        """神经元的入边权重视图：Dense 的一行 / Conv2D 的一个卷积核"""
        return weight[neuron].reshape(-1)

    @staticmethod
    def _consumer_columns(model: TrainedModel, layer_index: int, neuron: int):
        """
        找出下一个带参数层中读取该神经元输出的权重位置
        Returns:
            (consumer 层下标, 索引元组)；没有后续带参数层时返回 None
        """
        spec = model.spec
        shapes = spec.layer_shapes()
        flatten_shape = None
        for k in range(layer_index + 1, len(spec.layers)):
            layer = spec.layers[k]
            if layer.kind == LayerKind.FLATTEN:
                flatten_shape = shapes[k]
            if not layer.is_parameterized:
                continue
            if layer.kind == LayerKind.CONV2D:
                return k, (slice(None), neuron)
            if flatten_shape is not None and len(flatten_shape) == 3:
                block = flatten_shape[1] * flatten_shape[2]
                return k, (slice(None), slice(neuron * block, (neuron + 1) * block))
            return k, (slice(None), neuron)
        return None

    # ==================== 权重 / 神经元级 ====================

    def _gf(self, model: TrainedModel, ratio: float, sigma: Optional[float], seed: int) -> MutationOutcome:
        layers = model.spec.parameterized_layers()
        sizes = np.array([model.weight(i).size for i in layers], dtype=np.int64)
        total = int(sizes.sum())
        if total == 0:
            raise NoEligibleTargetError("GF needs at least one weight")
        if sigma is None:
            stacked = np.concatenate([model.weight(i).reshape(-1).astype(np.float64) for i in layers])
            sigma = Constant.DEFAULT_GF_SIGMA_SCALE * float(stacked.std())
        rng = np.random.default_rng(seed)
        count = SelectionUtil.selection_count(ratio, total)
        positions = np.sort(rng.choice(total, size=count, replace=False)) if count else np.array([], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        params = model.params_copy()
        for position in positions:
            slot = int(np.searchsorted(offsets, position, side='right') - 1)
            flat = params[layers[slot]][0].reshape(-1)
            local = int(position - offsets[slot])
            flat[local] = np.float32(rng.normal(float(flat[local]), sigma))
        return MutationOutcome(model.with_params(params), len(positions), {'sigma': float(sigma)})

    def _ws(self, model: TrainedModel, ratio: float, seed: int) -> MutationOutcome:
        rng = np.random.default_rng(seed)
        selected = self._select_neurons(self.neurons(model), ratio, rng)
        params = model.params_copy()
        for layer_index, neuron in selected:
            incoming = self._incoming(params[layer_index][0], neuron)
            incoming[:] = incoming[rng.permutation(incoming.size)]
        return MutationOutcome(model.with_params(params), len(selected))

    def _neb(self, model: TrainedModel, ratio: float, seed: int) -> MutationOutcome:
        rng = np.random.default_rng(seed)
        eligible = [n for n in self.neurons(model) if self._consumer_columns(model, *n) is not None]
        if not eligible:
            raise NoEligibleTargetError("NEB needs a neuron followed by another parameterized layer")
        selected = self._select_neurons(eligible, ratio, rng)
        params = model.params_copy()
        for layer_index, neuron in selected:
            consumer, columns = self._consumer_columns(model, layer_index, neuron)
            params[consumer][0][columns] = 0.0
        return MutationOutcome(model.with_params(params), len(selected),
                               {'blocked': [[int(i), int(j)] for i, j in selected]})

    def _nai(self, model: TrainedModel, ratio: float, seed: int) -> MutationOutcome:
        rng = np.random.default_rng(seed)
        selected = self._select_neurons(self.neurons(model), ratio, rng)
        params = model.params_copy()
        for layer_index, neuron in selected:
            params[layer_index][0][neuron] = -params[layer_index][0][neuron]
            params[layer_index][1][neuron] = -params[layer_index][1][neuron]
        return MutationOutcome(model.with_params(params), len(selected))

    def _ns(self, model: TrainedModel, ratio: float, seed: int) -> MutationOutcome:
        rng = np.random.default_rng(seed)
        spec = model.spec
        layers = [i for i in spec.parameterized_layers() if spec.layers[i].neuron_count >= 2]
        population = self.neurons(model, layers)
        wanted_pairs = (SelectionUtil.selection_count(ratio, len(population)) + 1) // 2
        pairs: List[Tuple[int, int, int]] = []
        pending: Dict[int, int] = {}
        for k in rng.permutation(len(population)):
            if len(pairs) == wanted_pairs:
                break
            layer_index, neuron = population[k]
            if layer_index in pending:
                pairs.append((layer_index, pending.pop(layer_index), neuron))
            else:
                pending[layer_index] = neuron
        params = model.params_copy()
        for layer_index, first, second in pairs:
            weight, bias = params[layer_index]
            weight[[first, second]] = weight[[second, first]]
            bias[[first, second]] = bias[[second, first]]
        return MutationOutcome(model.with_params(params), 2 * len(pairs),
                               {'pairs': [[int(a), int(b), int(c)] for a, b, c in pairs]})

    def mutate_gf(self, model: TrainedModel, ratio: float, sigma: Optional[float] = None,
                  seed: int = 0) -> TrainedModel:
        """
        Gaussian Fuzzing：随机选 ⌈ratio·权重总数⌉ 个权重，w ← N(w, σ²) 的一次抽样
        sigma 为空时取模型全部权重标准差的 0.5 倍
        """
        return self._gf(model, ratio, sigma, seed).model

    def mutate_ws(self, model: TrainedModel, ratio: float, seed: int = 0) -> TrainedModel:
        """Weight Shuffling：打乱选中神经元的入边权重（偏置不变）"""
        return self._ws(model, ratio, seed).model

    def mutate_neb(self, model: TrainedModel, ratio: float, seed: int = 0) -> TrainedModel:
        """Neuron Effect Block：把下一层读取选中神经元的权重置零；最后一层神经元不参与选择"""
        return self._neb(model, ratio, seed).model

    def mutate_nai(self, model: TrainedModel, ratio: float, seed: int = 0) -> TrainedModel:
        """Neuron Activation Inverse：入边权重与偏置取反，预激活值变为 −(原值)"""
        return self._nai(model, ratio, seed).model

    def mutate_ns(self, model: TrainedModel, ratio: float, seed: int = 0) -> TrainedModel:
        """Neuron Switch：同层内成对交换入边权重行与偏置，出边不变"""
        return self._ns(model, ratio, seed).model

    # ==================== 层级 ====================

    @staticmethod
    def eligible_layers(model: TrainedModel, kind: ModelOpKind) -> List[int]:
        """
        层级算子的合格层
        LD：形状保持、非输出层
        LA_m：形状保持的隐藏层（复制），或隐藏 Dense/Conv2D 层（其后插入 ReLU 激活层）
        AFR_m：激活函数非 Identity 的隐藏 Dense/Conv2D 层
        """
        spec = model.spec
        hidden = range(len(spec.layers) - 1)
        if kind == ModelOpKind.LD:
            return [i for i in hidden if spec.layers[i].is_shape_preserving]
        if kind == ModelOpKind.LA_M:
            return [i for i in hidden if spec.layers[i].is_shape_preserving or spec.layers[i].is_parameterized]
        if kind == ModelOpKind.AFR_M:
            return [i for i in hidden
                    if spec.layers[i].is_parameterized and spec.layers[i].activation == ActivationKind.RELU]
        raise ValueError(f"{kind.value} is not a layer-level operator")

    def _pick_layer(self, model: TrainedModel, kind: ModelOpKind, target_layer: Optional[int], seed: int) -> int:
        eligible = self.eligible_layers(model, kind)
        if not eligible:
            raise NoEligibleTargetError(f"{kind.value}: no eligible layer in {model.spec.describe()}")
        if target_layer is None:
            return eligible[int(np.random.default_rng(seed).integers(len(eligible)))]
        if target_layer not in eligible:
            raise NoEligibleTargetError(f"{kind.value}: layer {target_layer} is not eligible (eligible: {eligible})")
        return target_layer

    def mutate_ld(self, model: TrainedModel, target_layer: Optional[int] = None, seed: int = 0) -> TrainedModel:
        """Layer Deactivation：删除一个形状保持的隐藏层"""
        index = self._pick_layer(model, ModelOpKind.LD, target_layer, seed)
        params = list(model.params)
        del params[index]
        return TrainedModel(model.spec.without_layer(index), params)

    def mutate_la(self, model: TrainedModel, target_layer: Optional[int] = None, seed: int = 0) -> TrainedModel:
        """
        Layer Addition：在选中的隐藏层之后插入一层
        - 形状保持的层：复制该层（连同参数）
        - 其余 Dense/Conv2D 层：插入一个无参数的 ReLU 激活层
        """
        index = self._pick_layer(model, ModelOpKind.LA_M, target_layer, seed)
        params = list(model.params)
        layer = model.spec.layers[index]
        if layer.is_shape_preserving:
            params.insert(index + 1, params[index])
            return TrainedModel(model.spec.with_layer_inserted(index + 1, layer), params)
        params.insert(index + 1, None)
        inserted = LayerSpec.activation_layer(ActivationKind.RELU)
        return TrainedModel(model.spec.with_layer_inserted(index + 1, inserted), params)

    def mutate_afr(self, model: TrainedModel, target_layer: Optional[int] = None, seed: int = 0) -> TrainedModel:
        """Activation Function Removal：把一个隐藏层的激活函数改为 Identity，权重不变"""
        index = self._pick_layer(model, ModelOpKind.AFR_M, target_layer, seed)
        layer = model.spec.layers[index].with_activation(ActivationKind.IDENTITY)
        return TrainedModel(model.spec.with_layer_replaced(index, layer), model.params)

    # ==================== 调度与批量生成 ====================

    def apply(self, model: TrainedModel, op: ModelOp) -> MutationOutcome:
        """按算子类型调度"""
        if op.kind == ModelOpKind.GF:
            return self._gf(model, op.ratio, op.gf_sigma, op.seed)
        if op.kind == ModelOpKind.WS:
            return self._ws(model, op.ratio, op.seed)
        if op.kind == ModelOpKind.NEB:
            return self._neb(model, op.ratio, op.seed)
        if op.kind == ModelOpKind.NAI:
            return self._nai(model, op.ratio, op.seed)
        if op.kind == ModelOpKind.NS:
            return self._ns(model, op.ratio, op.seed)
        handlers = {ModelOpKind.LD: self.mutate_ld, ModelOpKind.LA_M: self.mutate_la, ModelOpKind.AFR_M: self.mutate_afr}
        index = self._pick_layer(model, op.kind, op.target_layer, op.seed)
        details = {'target_layer': index}
        if op.kind == ModelOpKind.LA_M:
            details['inserted'] = 'duplicate' if model.spec.layers[index].is_shape_preserving else 'relu'
        return MutationOutcome(handlers[op.kind](model, index), 1, details)

    def generate_model_mutants(self, model: TrainedModel, budget_per_op: int,
                               ratios: Union[float, Dict[ModelOpKind, float]] = Constant.DEFAULT_RATIO,
                               seed: int = 0, gf_sigma: Optional[float] = None,
                               layer_budget: Optional[int] = None,
                               operators: Optional[Sequence[ModelOpKind]] = None) -> List[MutantRecord]:
        """
        批量生成模型级变异体
        Args:
            model: 原始模型
            budget_per_op: 每个权重/神经元级算子生成的数量
            ratios: 统一比例或按算子的比例
            seed: 主种子，每个变异体使用 (seed, 算子, 序号) 派生的子种子
            gf_sigma: GF 标准差，为空时按模型权重自动计算
            layer_budget: 每个层级算子的上限，默认同 budget_per_op
            operators: 参与的算子，默认全部 8 个
        Returns:
            MutantRecord 列表；与原模型完全相同的结果不计入，并记在 self.shortfalls
        """
        if budget_per_op < 0:
            raise ValueError(f"budget_per_op must be >= 0, got {budget_per_op}")
        layer_budget = budget_per_op if layer_budget is None else layer_budget
        operators = list(operators) if operators is not None else list(WEIGHT_NEURON_OPS + LAYER_OPS)
        parent = ModelIOService.model_checksum(model)
        records: List[MutantRecord] = []
        self.shortfalls = {}

        for kind in operators:
            produced = 0
            if kind.is_layer_level:
                targets = self.eligible_layers(model, kind)
                order = SeedUtil.rng(seed, kind.value).permutation(len(targets))
                attempts = [(int(k), targets[int(k)]) for k in order[:layer_budget]]
                wanted = layer_budget
            else:
                ratio = ratios.get(kind, Constant.DEFAULT_RATIO) if isinstance(ratios, dict) else ratios
                attempts = [(i, None) for i in range(budget_per_op)]
                wanted = budget_per_op

            for number, target in attempts:
                op_seed = SeedUtil.derive_seed(seed, kind.value, number)
                op = ModelOp(kind, target_layer=target, seed=op_seed) if kind.is_layer_level else \
                    ModelOp(kind, ratio=ratio, gf_sigma=gf_sigma if kind == ModelOpKind.GF else None, seed=op_seed)
                try:
                    outcome = self.apply(model, op)
                except NoEligibleTargetError as e:
                    logger.warning("%s skipped: %s", kind.value, e)
                    break
                if outcome.model.bitwise_equal(model):
                    logger.debug("%s #%d left the model unchanged, discarded", kind.value, number)
                    continue
                details = dict(outcome.details)
                details.update({'affected': outcome.affected})
                if op.ratio is not None:
                    details['ratio'] = op.ratio
                mutant_id = f"{kind.value}-{number:04d}"
                records.append(MutantRecord(mutant_id, MutationLevel.MODEL, kind.value, op_seed, parent,
                                            model=outcome.model, params=details,
                                            checksum=ModelIOService.model_checksum(outcome.model)))
                produced += 1
            if produced < wanted:
                self.shortfalls[kind.value] = wanted - produced
            logger.info("%s: %d mutants generated (requested %d)", kind.value, produced, wanted)
        return records
