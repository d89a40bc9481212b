"""
Mutant directory: <id>.nmm model file plus <id>.yaml provenance sidecar
变异体目录读写
"""
import glob
import logging
import os
from typing import List, Sequence

import yaml

from entity.MutantRecord import MutantRecord
from entity.MutationOperator import MutationLevel
from service.engine.ModelIOService import ModelIOService
from util.Constant import Constant
from util.Errors import ModelFormatError

logger = logging.getLogger(__name__)


class MutantStoreService:

    def __init__(self):
        self.failures: List[str] = []

    @staticmethod
    def stored_ids(directory: str) -> List[str]:
        """目录中已有变异体的编号（有 .nmm 或 .yaml 即算）"""
        if not os.path.isdir(directory):
            return []
        ids = set()
        for extension in (Constant.MODEL_EXTENSION, Constant.PROVENANCE_EXTENSION):
            for path in glob.glob(os.path.join(directory, '*' + extension)):
                ids.add(os.path.basename(path)[:-len(extension)])
        return sorted(ids)

    @staticmethod
    def save_mutants(records: Sequence[MutantRecord], directory: str) -> List[str]:
        """
        写出变异体，失败记录只写 provenance
        Returns:
            写出的模型文件路径
        """
        os.makedirs(directory, exist_ok=True)
        paths = []
        for record in records:
            if record.ok:
                path = os.path.join(directory, record.mutant_id + Constant.MODEL_EXTENSION)
                ModelIOService.save_model(record.model, path)
                paths.append(path)
            sidecar = os.path.join(directory, record.mutant_id + Constant.PROVENANCE_EXTENSION)
            with open(sidecar, 'w', encoding='utf-8') as file:
                yaml.safe_dump(record.provenance(), file, sort_keys=True, allow_unicode=True)
        logger.info("wrote %d mutants to %s", len(paths), directory)
        return paths

    def load_mutants(self, directory: str) -> List[MutantRecord]:
        """
        按编号顺序读取目录中的全部变异体
        无法读取的文件记入 self.failures 并跳过
        """
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"mutant directory not found: {directory}")
        self.failures = []
        records = []
        for path in sorted(glob.glob(os.path.join(directory, '*' + Constant.MODEL_EXTENSION))):
            mutant_id = os.path.basename(path)[:-len(Constant.MODEL_EXTENSION)]
            try:
                model = ModelIOService.load_model(path)
            except ModelFormatError as e:
                logger.error("skipping %s: %s", path, e)
                self.failures.append(mutant_id)
                continue
            provenance = self._read_provenance(os.path.join(directory, mutant_id + Constant.PROVENANCE_EXTENSION))
            checksum = ModelIOService.model_checksum(model)
            if provenance.get('checksum') not in (None, checksum):
                logger.warning("%s: checksum %s differs from provenance %s", mutant_id, checksum,
                               provenance.get('checksum'))
            records.append(MutantRecord(
                mutant_id,
                MutationLevel(provenance.get('level', MutationLevel.MODEL.value)),
                provenance.get('operator', mutant_id.split('-')[0]),
                int(provenance.get('seed', 0)),
                provenance.get('parent_checksum', ''),
                model=model,
                params=provenance.get('params') or {},
                checksum=checksum))
        logger.info("loaded %d mutants from %s", len(records), directory)
        return records

    @staticmethod
    def _read_provenance(path: str) -> dict:
        if not os.path.exists(path):
            return {}
        with open(path, 'r', encoding='utf-8') as file:
            try:
                return yaml.safe_load(file) or {}
            except yaml.YAMLError as e:
                logger.warning("unreadable provenance %s: %s", path, e)
                return {}
