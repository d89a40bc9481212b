"""
Mutation analysis results
变异分析结果：通过测试集、杀死矩阵、变异测试报告
"""
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from entity.Dataset import Dataset


class PassedTestSet:
    """
    T′：原始模型分类正确的测试样本（保持原顺序）
    :param samples: 通过的样本
    :param source_indices: 在原测试集中的下标
    """

    def __init__(self, samples: Dataset, source_indices: np.ndarray):
        self.samples = samples
        self.source_indices = np.asarray(source_indices, dtype=np.int64)

    @property
    def original_labels(self) -> np.ndarray:
        return self.samples.labels

    @property
    def num_classes(self) -> int:
        return self.samples.num_classes

    def __len__(self):
        return len(self.samples)

    def class_subset(self, class_id: int) -> 'PassedTestSet':
        local = self.samples.class_indices(class_id)
        return PassedTestSet(self.samples.subset(local), self.source_indices[local])

    def __repr__(self):
        return f"PassedTestSet(n={len(self)}, classes={self.num_classes})"


class KillMatrix:
    """
    杀死矩阵
    :param mutant_ids: 参与评估（通过质量控制）的变异体编号，按编号排序
    :param operators: 每个变异体的算子
    :param checksums: 每个变异体的模型指纹（报告以指纹引用变异体，不依赖路径）
    :param kill: (M, C) 布尔矩阵，kill[m][c] 表示类别 c 被杀死
    :param class_errors: (M, C) 每个类别中被误分类的 T′ 样本数
    :param class_support: (C,) T′ 中每个类别的样本数
    :param excluded: 被质量控制排除的变异体 {id: {error_rate, reason, operator}}
    """

    def __init__(self, mutant_ids: List[str], operators: List[str], checksums: List[Optional[str]],
                 kill: np.ndarray, class_errors: np.ndarray, class_support: np.ndarray,
                 excluded: Optional[Dict[str, Dict]] = None, threshold: Optional[float] = None):
        self.mutant_ids = list(mutant_ids)
        self.operators = list(operators)
        self.checksums = list(checksums)
        self.kill = np.asarray(kill, dtype=bool).reshape(len(self.mutant_ids), -1)
        self.class_errors = np.asarray(class_errors, dtype=np.int64).reshape(self.kill.shape)
        self.class_support = np.asarray(class_support, dtype=np.int64)
        self.excluded = dict(excluded or {})
        self.threshold = threshold
        if self.kill.shape[1] != self.class_support.shape[0]:
            raise ValueError(f"kill matrix has {self.kill.shape[1]} classes, support has {self.class_support.shape[0]}")
        if np.any(self.kill[:, self.class_support == 0]):
            raise ValueError("a class absent from T' cannot be killed")

    @property
    def num_classes(self) -> int:
        return int(self.class_support.shape[0])

    @property
    def passed_size(self) -> int:
        return int(self.class_support.sum())

    @property
    def error_rate(self) -> np.ndarray:
        """每个变异体在 T′ 上的错误率"""
        if self.passed_size == 0:
            return np.zeros(len(self.mutant_ids))
        return self.class_errors.sum(axis=1) / self.passed_size

    def killed_classes(self, row: int) -> set:
        return set(int(c) for c in np.flatnonzero(self.kill[row]))

    def rows_for(self, operator: str) -> np.ndarray:
        return np.array([i for i, op in enumerate(self.operators) if op == operator], dtype=np.int64)

    def select(self, rows: np.ndarray) -> 'KillMatrix':
        rows = np.asarray(rows, dtype=np.int64)
        return KillMatrix([self.mutant_ids[i] for i in rows], [self.operators[i] for i in rows],
                          [self.checksums[i] for i in rows], self.kill[rows], self.class_errors[rows],
                          self.class_support, {}, self.threshold)

    def to_dict(self) -> Dict:
        return {
            'schema': 'kill-matrix/1',
            'num_classes': self.num_classes,
            'threshold': self.threshold,
            'class_support': self.class_support.tolist(),
            'mutants': [
                {'id': mutant_id, 'operator': operator, 'checksum': checksum,
                 'killed': sorted(self.killed_classes(i)),
                 'class_errors': self.class_errors[i].tolist(),
                 'error_rate': float(self.error_rate[i])}
                for i, (mutant_id, operator, checksum) in enumerate(zip(self.mutant_ids, self.operators, self.checksums))
            ],
            'excluded': self.excluded,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'KillMatrix':
        num_classes = int(data['num_classes'])
        mutants = data['mutants']
        kill = np.zeros((len(mutants), num_classes), dtype=bool)
        for i, mutant in enumerate(mutants):
            kill[i, mutant['killed']] = True
        errors = np.array([m['class_errors'] for m in mutants], dtype=np.int64).reshape(len(mutants), num_classes)
        return cls([m['id'] for m in mutants], [m['operator'] for m in mutants], [m.get('checksum') for m in mutants],
                   kill, errors, np.array(data['class_support'], dtype=np.int64),
                   data.get('excluded', {}), data.get('threshold'))

    def __repr__(self):
        return f"KillMatrix(mutants={len(self.mutant_ids)}, classes={self.num_classes}, excluded={len(self.excluded)})"


class MutationReport:
    """
    变异测试报告
    :param mutation_score: Σ|KilledClasses| / (|M′|·|C|)
    :param aer: 平均错误率
    :param per_class: 每个类别的 score / aer（T′ 中无样本的类别为 NaN，表示 N/A）
    :param per_operator: 每个算子的 score / aer
    :param counts: generated / excluded / evaluated
    """

    def __init__(self, mutation_score: float, aer: float, per_class: pd.DataFrame,
                 per_operator: pd.DataFrame, counts: Dict[str, int], absent_classes: List[int]):
        self.mutation_score = mutation_score
        self.aer = aer
        self.per_class = per_class
        self.per_operator = per_operator
        self.counts = dict(counts)
        self.absent_classes = list(absent_classes)

    def to_dict(self) -> Dict:
        def clean(value):
            return None if value is None or (isinstance(value, float) and np.isnan(value)) else value

        return {
            'mutation_score': self.mutation_score,
            'aer': self.aer,
            'counts': self.counts,
            'absent_classes': self.absent_classes,
            'per_class': [{key: clean(v) for key, v in row.items()}
                          for row in self.per_class.reset_index().to_dict(orient='records')],
            'per_operator': [{key: clean(v) for key, v in row.items()}
                             for row in self.per_operator.reset_index().to_dict(orient='records')],
        }

    def table(self) -> str:
        """
        按类别排列的对齐表格：两行 mu. sc. / avg.err.（百分比），列为类别
        """
        def fmt(value):
            return "N/A" if pd.isna(value) else f"{100.0 * value:.2f}"

        columns = [str(c) for c in self.per_class.index]
        frame = pd.DataFrame(
            [[fmt(v) for v in self.per_class['score']], [fmt(v) for v in self.per_class['aer']]],
            index=['mu. sc.', 'avg.err.'], columns=columns)
        lines = [frame.to_string(),
                 "",
                 f"mutation score: {100.0 * self.mutation_score:.2f}%   AER: {100.0 * self.aer:.2f}%",
                 f"mutants: generated={self.counts.get('generated', 0)} "
                 f"excluded={self.counts.get('excluded', 0)} evaluated={self.counts.get('evaluated', 0)}"]
        if self.absent_classes:
            lines.append(f"classes absent from T' (cannot be killed, still counted in |C|): {self.absent_classes}")
        return "\n".join(lines)

    def __repr__(self):
        return f"MutationReport(score={self.mutation_score:.4f}, aer={self.aer:.4f}, counts={self.counts})"
