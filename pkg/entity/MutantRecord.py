from typing import Dict, Optional

from entity.MutationOperator import MutationLevel
from entity.TrainedModel import TrainedModel


class MutantRecord:
    """
    变异模型及其来源信息
    :param mutant_id: 唯一编号，例如 GF-0003
    :param level: source / model
    :param operator: 算子代码，例如 DR、LA_s、GF
    :param params: 算子参数（scope、ratio、sigma、target、affected 等）
    :param seed: 生成该变异体的种子
    :param parent_checksum: 原始模型指纹
    :param model: 变异模型；生成失败时为 None
    :param failure: 失败原因
    """

    def __init__(self, mutant_id: str, level: MutationLevel, operator: str, seed: int,
                 parent_checksum: str, model: Optional[TrainedModel] = None,
                 params: Optional[Dict] = None, failure: Optional[str] = None, checksum: Optional[str] = None):
        self.mutant_id = mutant_id
        self.level = level
        self.operator = operator
        self.seed = seed
        self.parent_checksum = parent_checksum
        self.model = model
        self.params = dict(params or {})
        self.failure = failure
        self.checksum = checksum

    @property
    def ok(self) -> bool:
        return self.model is not None and self.failure is None

    def provenance(self) -> Dict:
        """写入元数据文件的来源信息"""
        return {
            'mutant_id': self.mutant_id,
            'level': self.level.value,
            'operator': self.operator,
            'seed': int(self.seed),
            'parent_checksum': self.parent_checksum,
            'checksum': self.checksum,
            'params': self.params,
            'failure': self.failure,
        }

    def __repr__(self):
        state = "ok" if self.ok else f"failed: {self.failure}"
        return f"MutantRecord({self.mutant_id}, {self.level.value}/{self.operator}, {state})"
