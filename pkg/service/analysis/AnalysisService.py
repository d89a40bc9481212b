"""
Mutation analysis: passed-test filtering, quality control, kill matrix and metrics
变异分析：通过测试过滤、质量控制、杀死矩阵、变异分数与平均错误率
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from entity.Dataset import Dataset
from entity.KillMatrix import KillMatrix, MutationReport, PassedTestSet
from entity.MutantRecord import MutantRecord
from entity.TrainedModel import TrainedModel
from service.engine.ForwardService import ForwardService
from util.Constant import Constant
from util.Errors import EmptyMutantSetError, EmptyPassedSetError

logger = logging.getLogger(__name__)


class AnalysisService:

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))

    # ==================== 过滤 ====================

    @staticmethod
    def filter_passed(model: TrainedModel, tests: Dataset) -> PassedTestSet:
        """
        只保留原始模型分类正确的样本，保持原顺序
        Raises:
            EmptyPassedSetError: 测试集为空或没有样本通过
        """
        if len(tests) == 0:
            raise EmptyPassedSetError("test set is empty")
        predictions = ForwardService.predict_in_chunks(model, tests.features)
        indices = np.flatnonzero(predictions == tests.labels)
        if indices.size == 0:
            raise EmptyPassedSetError(f"none of the {len(tests)} test samples is classified correctly "
                                      f"by the original model")
        logger.info("T': %d of %d test samples pass the original model", indices.size, len(tests))
        return PassedTestSet(tests.subset(indices), indices)

    # ==================== 单个变异体 ====================

    @staticmethod
    def class_errors(mutant: TrainedModel, passed: PassedTestSet) -> np.ndarray:
        """每个类别中被变异体误分类的 T′ 样本数"""
        labels = passed.original_labels
        predictions = ForwardService.predict_in_chunks(mutant, passed.samples.features)
        return np.bincount(labels[predictions != labels], minlength=passed.num_classes).astype(np.int64)

    @staticmethod
    def error_rate(mutant: TrainedModel, passed: PassedTestSet) -> float:
        if len(passed) == 0:
            raise EmptyPassedSetError("error rate needs a nonempty T'")
        return float(AnalysisService.class_errors(mutant, passed).sum()) / len(passed)

    @staticmethod
    def killed_classes(original: TrainedModel, mutant: TrainedModel, passed: PassedTestSet) -> set:
        """
        类别 c 被杀死：存在标签为 c 的样本，原始模型分类正确而变异体分类错误
        """
        features = passed.samples.features
        labels = passed.original_labels
        witnesses = (ForwardService.predict_in_chunks(original, features) == labels) & \
                    (ForwardService.predict_in_chunks(mutant, features) != labels)
        return set(int(c) for c in np.unique(labels[witnesses]))

    # ==================== 质量控制 ====================

    @staticmethod
    def quality_control(mutants: Sequence[MutantRecord], passed: PassedTestSet,
                        threshold: float = Constant.DEFAULT_QC_THRESHOLD
                        ) -> Tuple[List[MutantRecord], Dict[str, Dict]]:
        """
        错误率严格大于阈值的变异体被排除，并记录其错误率
        Returns:
            (保留的变异体, {被排除的编号: {error_rate, reason, operator}})
        """
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {threshold}")
        kept, excluded = [], {}
        for record in mutants:
            rate = AnalysisService.error_rate(record.model, passed)
            if rate > threshold:
                excluded[record.mutant_id] = AnalysisService._exclusion(record, rate, threshold)
            else:
                kept.append(record)
        logger.info("quality control at %.2f: %d kept, %d excluded", threshold, len(kept), len(excluded))
        return kept, excluded

    @staticmethod
    def _exclusion(record: MutantRecord, rate: float, threshold: float) -> Dict:
        return {'error_rate': rate, 'operator': record.operator,
                'reason': f"error rate {rate:.4f} > {threshold:.2f}"}

    # ==================== 杀死矩阵 ====================

    def _evaluate_all(self, models: List[TrainedModel], passed: PassedTestSet) -> List[np.ndarray]:
        if self.workers > 1 and len(models) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(lambda m: self.class_errors(m, passed), models))
        return [self.class_errors(m, passed) for m in models]

    def build_kill_matrix(self, mutants: Sequence[MutantRecord], passed: PassedTestSet,
                          threshold: Optional[float] = Constant.DEFAULT_QC_THRESHOLD) -> KillMatrix:
        """
        评估所有变异体并组装杀死矩阵，行按变异体编号排序
        T′ 已按原始模型过滤，因此误分类即满足杀死条件
        Args:
            mutants: 变异体
            passed: T′
            threshold: 质量控制阈值，为 None 时不做质量控制
        """
        if len(passed) == 0:
            raise EmptyPassedSetError("kill matrix needs a nonempty T'")
        if threshold is not None and not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {threshold}")
        records = sorted((r for r in mutants if r.ok), key=lambda r: r.mutant_id)
        errors = self._evaluate_all([r.model for r in records], passed)
        support = np.bincount(passed.original_labels, minlength=passed.num_classes).astype(np.int64)

        ids, operators, checksums, rows, excluded = [], [], [], [], {}
        for record, class_errors in zip(records, errors):
            rate = float(class_errors.sum()) / len(passed)
            if threshold is not None and rate > threshold:
                excluded[record.mutant_id] = self._exclusion(record, rate, threshold)
                continue
            ids.append(record.mutant_id)
            operators.append(record.operator)
            checksums.append(record.checksum)
            rows.append(class_errors)
        class_errors = np.array(rows, dtype=np.int64).reshape(len(rows), passed.num_classes)
        matrix = KillMatrix(ids, operators, checksums, class_errors > 0, class_errors, support,
                            excluded, threshold)
        logger.info("kill matrix: %d mutants evaluated, %d excluded", len(ids), len(excluded))
        return matrix

    # ==================== 指标 ====================

    @staticmethod
    def mutation_score(killed: Sequence[Iterable[int]], num_classes: int) -> float:
        """
        Σ|KilledClasses(m)| / (|M′|·|C|)
        Raises:
            EmptyMutantSetError: 没有变异体
        """
        if len(killed) == 0:
            raise EmptyMutantSetError("mutation score is undefined without mutants")
        total = 0
        for classes in killed:
            total += len(set(classes))
        return total / (len(killed) * num_classes)

    @staticmethod
    def ave_error_rate(error_rates: Sequence[float]) -> float:
        """按顺序累加后取平均"""
        if len(error_rates) == 0:
            raise EmptyMutantSetError("average error rate is undefined without mutants")
        total = 0.0
        for rate in error_rates:
            total += float(rate)
        return total / len(error_rates)

    @staticmethod
    def matrix_score(matrix: KillMatrix) -> float:
        return AnalysisService.mutation_score([matrix.killed_classes(i) for i in range(len(matrix.mutant_ids))],
                                              matrix.num_classes)

    @staticmethod
    def matrix_aer(matrix: KillMatrix) -> float:
        return AnalysisService.ave_error_rate(list(matrix.error_rate))

    # ==================== 按类别 / 按算子 ====================

    @staticmethod
    def per_class_report(passed_by_class: Mapping[int, PassedTestSet], mutants: Sequence[TrainedModel],
                         num_classes: int) -> pd.DataFrame:
        """
        按类别的变异分数与平均错误率
        score_c = Σ_m [类别 c 被 T′_c 杀死] / (|M′|·|C|)，单个类别最大为 1/|C|
        T′_c 为空的类别记为 N/A（NaN）
        """
        if len(mutants) == 0:
            raise EmptyMutantSetError("per-class report needs mutants")
        rows = []
        for c in range(num_classes):
            subset = passed_by_class.get(c)
            if subset is None or len(subset) == 0:
                rows.append({'class': c, 'support': 0, 'killed_by': 0, 'score': np.nan, 'aer': np.nan})
                continue
            rates = [AnalysisService.error_rate(m, subset) for m in mutants]
            killed_by = sum(1 for rate in rates if rate > 0.0)
            rows.append({'class': c, 'support': len(subset), 'killed_by': killed_by,
                         'score': killed_by / (len(mutants) * num_classes),
                         'aer': AnalysisService.ave_error_rate(rates)})
        return pd.DataFrame(rows).set_index('class')

    @staticmethod
    def per_class_from_matrix(matrix: KillMatrix) -> pd.DataFrame:
        """与 per_class_report 相同的结果，直接由杀死矩阵计算"""
        count = len(matrix.mutant_ids)
        if count == 0:
            raise EmptyMutantSetError("per-class report needs mutants")
        rows = []
        for c in range(matrix.num_classes):
            support = int(matrix.class_support[c])
            if support == 0:
                rows.append({'class': c, 'support': 0, 'killed_by': 0, 'score': np.nan, 'aer': np.nan})
                continue
            killed_by = int(matrix.kill[:, c].sum())
            rates = [int(e) / support for e in matrix.class_errors[:, c]]
            rows.append({'class': c, 'support': support, 'killed_by': killed_by,
                         'score': killed_by / (count * matrix.num_classes),
                         'aer': AnalysisService.ave_error_rate(rates)})
        return pd.DataFrame(rows).set_index('class')

    @staticmethod
    def per_operator(matrix: KillMatrix) -> pd.DataFrame:
        rows = []
        for operator in sorted(set(matrix.operators)):
            part = matrix.select(matrix.rows_for(operator))
            rows.append({'operator': operator, 'mutants': len(part.mutant_ids),
                         'excluded': sum(1 for e in matrix.excluded.values() if e.get('operator') == operator),
                         'score': AnalysisService.matrix_score(part),
                         'aer': AnalysisService.matrix_aer(part)})
        return pd.DataFrame(rows, columns=['operator', 'mutants', 'excluded', 'score', 'aer']).set_index('operator')

    @staticmethod
    def build_report(matrix: KillMatrix, generated: Optional[int] = None) -> MutationReport:
        """
        由杀死矩阵计算完整报告
        Raises:
            EmptyMutantSetError: 质量控制后没有剩余变异体
        """
        evaluated = len(matrix.mutant_ids)
        if evaluated == 0:
            raise EmptyMutantSetError(f"no mutant survives quality control ({len(matrix.excluded)} excluded)")
        generated = evaluated + len(matrix.excluded) if generated is None else generated
        absent = [int(c) for c in np.flatnonzero(matrix.class_support == 0)]
        return MutationReport(AnalysisService.matrix_score(matrix), AnalysisService.matrix_aer(matrix),
                              AnalysisService.per_class_from_matrix(matrix), AnalysisService.per_operator(matrix),
                              {'generated': generated, 'excluded': len(matrix.excluded), 'evaluated': evaluated},
                              absent)

    def analyze(self, original: TrainedModel, mutants: Sequence[MutantRecord], tests: Dataset,
                threshold: Optional[float] = Constant.DEFAULT_QC_THRESHOLD) -> Tuple[KillMatrix, MutationReport]:
        """filter → QC → 杀死矩阵 → 指标"""
        passed = self.filter_passed(original, tests)
        matrix = self.build_kill_matrix(mutants, passed, threshold)
        return matrix, self.build_report(matrix, generated=len(mutants))
