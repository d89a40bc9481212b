"""
Source-level mutation: mutate training data or the model structure, then retrain
源码级变异：修改训练数据或训练程序（模型结构），再重新训练得到变异模型

数据级：DR / LE / DM / DF / NP，作用范围 Global 或 Local（单一类别）
程序级：LR / LA_s / AFR_s
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from entity.Dataset import Dataset
from entity.LayerKind import ActivationKind, LayerKind
from entity.ModelSpec import LayerSpec, ModelSpec
from entity.MutantRecord import MutantRecord
from entity.MutationOperator import DataOp, DataOpKind, MutationLevel, ProgramOp, ProgramOpKind, Scope
from entity.TrainConfig import TrainConfig
from service.engine.ModelIOService import ModelIOService
from service.train.TrainerService import TrainerService
from util.Constant import Constant
from util.Errors import ClassExhaustedError, DatasetError, MutationToolkitError, NoEligibleTargetError
from util.SeedUtil import SeedUtil
from util.SelectionUtil import SelectionUtil

logger = logging.getLogger(__name__)

# 子进程共享的训练上下文：(原始数据, 原始结构, 训练配置)
_CONTEXT: Dict = {}


def _init_worker(data: Dataset, spec: ModelSpec, cfg: TrainConfig):
    _CONTEXT['data'] = data
    _CONTEXT['spec'] = spec
    _CONTEXT['cfg'] = cfg


def _train_job(job: Tuple[str, object, Dict]) -> Tuple[str, Optional[object], Optional[str]]:
    """
    单个变异体的变异 + 训练，在主进程或子进程中执行
    Returns:
        (mutant_id, 训练好的模型或 None, 失败原因)
    """
    mutant_id, op, _ = job
    data, spec, cfg = _CONTEXT['data'], _CONTEXT['spec'], _CONTEXT['cfg']
    try:
        if isinstance(op, DataOp):
            data = SourceMutationService.mutate_data(data, op)
        else:
            spec = SourceMutationService.mutate_program(spec, op)
        return mutant_id, TrainerService().train(spec, data, cfg), None
    except MutationToolkitError as e:
        return mutant_id, None, f"{type(e).__name__}: {e}"


class SourceMutationService:

    def __init__(self):
        self.failures: List[MutantRecord] = []

    # ==================== 数据级 ====================

    @staticmethod
    def _pool(data: Dataset, op: DataOp) -> np.ndarray:
        if op.scope == Scope.GLOBAL:
            return np.arange(len(data))
        pool = data.class_indices(op.class_id)
        if pool.size == 0:
            raise DatasetError(f"{op.label}: class {op.class_id} is absent from the training data")
        return pool

    @staticmethod
    def mutate_data(data: Dataset, op: DataOp) -> Dataset:
        """
        对训练数据应用数据级算子，未被选中的样本逐位不变
        pool 为 Global 时的全部样本或 Local 时该类别的样本，选中 ⌈ratio·|pool|⌉ 个
        Args:
            data: 原始训练数据
            op: 数据级算子
        Returns:
            变异后的数据集
        """
        rng = np.random.default_rng(op.seed)
        pool = SourceMutationService._pool(data, op)
        count = SelectionUtil.selection_count(op.ratio, len(pool))

        if op.kind == DataOpKind.DF:
            order = np.arange(len(data))
            order[pool] = pool[rng.permutation(len(pool))]
            return data.subset(order)

        chosen = np.sort(rng.choice(pool, size=count, replace=False))
        if op.kind == DataOpKind.DR:
            return data.subset(np.concatenate([np.arange(len(data)), chosen]))

        if op.kind == DataOpKind.LE:
            if data.num_classes < 2:
                raise DatasetError("LE needs at least two classes")
            labels = data.labels.copy()
            # 在其余 |C|-1 个类别中均匀选择新标签
            labels[chosen] = (labels[chosen] + rng.integers(1, data.num_classes, size=len(chosen))) % data.num_classes
            return Dataset(data.features, labels, data.num_classes)

        if op.kind == DataOpKind.DM:
            keep = np.ones(len(data), dtype=bool)
            keep[chosen] = False
            before = data.class_counts() > 0
            after = np.bincount(data.labels[keep], minlength=data.num_classes) > 0
            lost = np.flatnonzero(before & ~after)
            if lost.size:
                raise ClassExhaustedError(f"{op.label} would delete every sample of class(es) {lost.tolist()}")
            return data.subset(np.flatnonzero(keep))

        if op.kind == DataOpKind.NP:
            features = data.features.copy()
            noise = rng.normal(0.0, op.noise_sigma, size=(len(chosen),) + data.sample_shape)
            features[chosen] = np.clip(features[chosen].astype(np.float64) + noise, 0.0, 1.0).astype(np.float32)
            return Dataset(features, data.labels, data.num_classes)

        raise ValueError(f"unsupported data operator {op.kind}")

    # ==================== 程序级 ====================

    @staticmethod
    def program_candidates(spec: ModelSpec, kind: ProgramOpKind) -> List[Tuple[int, Optional[LayerSpec]]]:
        """
        程序级算子的候选位置
        LR：形状保持的隐藏层 (下标, None)
        LA_s：(插入到其后的层下标, 插入的层)：复制形状保持层；在 Identity 激活的隐藏 Dense/Conv2D 后插入 ReLU 层；
              在隐藏 Dense(·,n) 后插入新的 Dense(n,n)+ReLU
        AFR_s：激活函数为 ReLU 的隐藏 Dense/Conv2D 层 (下标, None)
        """
        hidden = range(len(spec.layers) - 1)
        if kind == ProgramOpKind.LR:
            return [(i, None) for i in hidden if spec.layers[i].is_shape_preserving]
        if kind == ProgramOpKind.AFR_S:
            return [(i, None) for i in hidden
                    if spec.layers[i].is_parameterized and spec.layers[i].activation == ActivationKind.RELU]
        candidates: List[Tuple[int, Optional[LayerSpec]]] = []
        relu = LayerSpec.activation_layer(ActivationKind.RELU)
        for i in hidden:
            layer = spec.layers[i]
            if layer.is_shape_preserving:
                candidates.append((i, layer))
            if layer.is_parameterized and layer.activation == ActivationKind.IDENTITY:
                candidates.append((i, relu))
            if layer.kind == LayerKind.DENSE:
                fresh = LayerSpec.dense(layer.out_features, layer.out_features, ActivationKind.RELU)
                if (i, fresh) not in candidates:
                    candidates.append((i, fresh))
        return candidates

    @staticmethod
    def mutate_program(spec: ModelSpec, op: ProgramOp) -> ModelSpec:
        """
        对模型结构应用程序级算子，结果必然通过形状推断
        Raises:
            NoEligibleTargetError: 没有满足条件的层
        """
        candidates = SourceMutationService.program_candidates(spec, op.kind)
        if op.target is not None:
            candidates = [c for c in candidates if c[0] == op.target]
        if not candidates:
            where = "" if op.target is None else f" at layer {op.target}"
            raise NoEligibleTargetError(f"{op.kind.value}: no eligible target{where} in {spec.describe()}")
        index, layer = candidates[int(np.random.default_rng(op.seed).integers(len(candidates)))]
        if op.kind == ProgramOpKind.LR:
            return spec.without_layer(index)
        if op.kind == ProgramOpKind.AFR_S:
            return spec.with_layer_replaced(index, spec.layers[index].with_activation(ActivationKind.IDENTITY))
        return spec.with_layer_inserted(index + 1, layer)

    # ==================== 批量生成 ====================

    @staticmethod
    def plan_jobs(data: Dataset, spec: ModelSpec, budget: int, ratio: float = Constant.DEFAULT_RATIO,
                  np_sigma: float = Constant.DEFAULT_NP_SIGMA, seed: int = 0,
                  data_operators: Sequence[DataOpKind] = tuple(DataOpKind),
                  program_operators: Sequence[ProgramOpKind] = tuple(ProgramOpKind)) -> List[Tuple[str, object, Dict]]:
        """
        规划变异任务
        数据级算子每个生成 budget 个（一半 Global，一半 Local，Local 轮流覆盖不同类别）
        程序级算子在条件满足时生成，每个结构最多一个，上限 budget
        """
        jobs: List[Tuple[str, object, Dict]] = []
        present = data.present_classes()
        for kind in data_operators:
            global_count = (budget + 1) // 2
            local_classes = SeedUtil.rng(seed, kind.value, "classes").permutation(present)
            for number in range(budget):
                op_seed = SeedUtil.derive_seed(seed, kind.value, number)
                sigma = np_sigma if kind == DataOpKind.NP else None
                if number < global_count:
                    op = DataOp(kind, Scope.GLOBAL, ratio, op_seed, noise_sigma=sigma)
                else:
                    class_id = int(local_classes[(number - global_count) % len(local_classes)])
                    op = DataOp(kind, Scope.LOCAL, ratio, op_seed, class_id=class_id, noise_sigma=sigma)
                params = {'scope': op.scope.value, 'ratio': ratio, 'class_id': op.class_id}
                if sigma is not None:
                    params['noise_sigma'] = sigma
                jobs.append((f"{kind.value}-{number:04d}", op, params))

        for kind in program_operators:
            seen = set()
            candidates = SourceMutationService.program_candidates(spec, kind)
            order = SeedUtil.rng(seed, kind.value).permutation(len(candidates))
            for number, k in enumerate(order):
                if len(seen) >= budget:
                    break
                target, _ = candidates[int(k)]
                op_seed = SeedUtil.derive_seed(seed, kind.value, number)
                op = ProgramOp(kind, target=target, seed=op_seed)
                mutated = SourceMutationService.mutate_program(spec, op)
                if mutated in seen:
                    continue
                seen.add(mutated)
                jobs.append((f"{kind.value}-{len(seen) - 1:04d}", op,
                             {'target': target, 'structure': mutated.describe()}))
            if not candidates:
                logger.warning("%s: no eligible layer in %s, operator skipped", kind.value, spec.describe())
        return jobs

    def generate_source_mutants(self, data: Dataset, spec: ModelSpec, cfg: TrainConfig, budget: int,
                                ratio: float = Constant.DEFAULT_RATIO, np_sigma: float = Constant.DEFAULT_NP_SIGMA,
                                seed: int = 0, parent_checksum: str = "", workers: int = 1,
                                data_operators: Sequence[DataOpKind] = tuple(DataOpKind),
                                program_operators: Sequence[ProgramOpKind] = tuple(ProgramOpKind)
                                ) -> List[MutantRecord]:
        """
        生成源码级变异体：变异后用同一训练配置重新训练
        单个变异体训练发散或变异不合法时记录失败并继续
        Returns:
            成功训练的 MutantRecord 列表（失败的记录在 self.failures）
        """
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        jobs = self.plan_jobs(data, spec, budget, ratio, np_sigma, seed, data_operators, program_operators)
        if workers > 1 and jobs:
            with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                     initargs=(data, spec, cfg)) as pool:
                results = list(pool.map(_train_job, jobs))
        else:
            _init_worker(data, spec, cfg)
            results = [_train_job(job) for job in jobs]

        records: List[MutantRecord] = []
        self.failures = []
        counts: Dict[str, int] = {}
        for (mutant_id, op, params), (_, model, failure) in zip(jobs, results):
            operator = op.kind.value
            record = MutantRecord(mutant_id, MutationLevel.SOURCE, operator, op.seed, parent_checksum,
                                  model=model, params=params, failure=failure,
                                  checksum=None if model is None else ModelIOService.model_checksum(model))
            if record.ok:
                records.append(record)
                counts[operator] = counts.get(operator, 0) + 1
            else:
                logger.warning("%s failed: %s", mutant_id, failure)
                self.failures.append(record)
        for operator, count in counts.items():
            logger.info("%s: %d source-level mutants trained", operator, count)
        return records


if __name__ == '__main__':
    from service.fetch.DatasetFetchService import DatasetFetchService

    demo_data = DatasetFetchService.make_synthetic(num_classes=3, per_class=60, dim=6, spread=0.08, seed=3)
    demo_spec = ModelSpec.mlp((6,), [6, 6], 3)
    service = SourceMutationService()
    mutants = service.generate_source_mutants(demo_data, demo_spec, TrainConfig(epochs=5, batch_size=16, seed=1),
                                              budget=2, ratio=0.05)
    for mutant in mutants:
        print(mutant, mutant.params)
