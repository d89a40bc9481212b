"""
Report files
报告输出：
    kill_matrix.json    杀死矩阵（可在不重新运行模型的情况下重算指标）
    report.json         变异分数、AER、按类别与按算子结果
    report.txt          按类别对齐的表格
    per_class.csv / per_operator.csv
变异体以模型指纹引用，不写绝对路径
"""
import json
import logging
import os
from typing import Dict, List

import pandas as pd

from entity.KillMatrix import KillMatrix, MutationReport
from util.Errors import MalformedManifestError

logger = logging.getLogger(__name__)

KILL_MATRIX_FILE = "kill_matrix.json"


class ReportService:

    def __init__(self):
        pass

    @staticmethod
    def save_kill_matrix(matrix: KillMatrix, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, KILL_MATRIX_FILE)
        with open(path, 'w', encoding='utf-8') as file:
            json.dump(matrix.to_dict(), file, indent=1, sort_keys=True)
        return path

    @staticmethod
    def load_kill_matrix(path: str) -> KillMatrix:
        if os.path.isdir(path):
            path = os.path.join(path, KILL_MATRIX_FILE)
        with open(path, 'r', encoding='utf-8') as file:
            try:
                return KillMatrix.from_dict(json.load(file))
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedManifestError(f"{path}: not a kill matrix: {e}") from e

    @staticmethod
    def write_report(report: MutationReport, directory: str, prefix: str = "report") -> Dict[str, str]:
        """写出 json / txt / csv 三种形式的报告"""
        os.makedirs(directory, exist_ok=True)
        paths = {
            'json': os.path.join(directory, f"{prefix}.json"),
            'table': os.path.join(directory, f"{prefix}.txt"),
            'per_class': os.path.join(directory, f"{prefix}_per_class.csv"),
            'per_operator': os.path.join(directory, f"{prefix}_per_operator.csv"),
        }
        with open(paths['json'], 'w', encoding='utf-8') as file:
            json.dump(report.to_dict(), file, indent=1, sort_keys=True)
        with open(paths['table'], 'w', encoding='utf-8') as file:
            file.write(report.table() + "\n")
        report.per_class.to_csv(paths['per_class'])
        report.per_operator.to_csv(paths['per_operator'])
        logger.info("report written to %s", paths['table'])
        return paths

    @staticmethod
    def experiment_table(rows: List[Dict]) -> pd.DataFrame:
        """
        受控实验结果：每行为一次 (设置, 重复, 采样方式) 的分数与 AER
        末尾追加每个设置、每种采样方式的平均值
        """
        df = pd.DataFrame(rows, columns=['setting', 'repetition', 'sampling', 'favored_class',
                                         'passed', 'evaluated', 'excluded', 'score', 'aer'])
        if df.empty:
            return df
        means = df.groupby(['setting', 'sampling'], sort=True)[['score', 'aer']].mean().reset_index()
        means['repetition'] = 'mean'
        return pd.concat([df, means], ignore_index=True)

    @staticmethod
    def write_experiment(table: pd.DataFrame, directory: str) -> Dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {'csv': os.path.join(directory, "experiment.csv"),
                 'table': os.path.join(directory, "experiment.txt")}
        table.to_csv(paths['csv'], index=False)
        with open(paths['table'], 'w', encoding='utf-8') as file:
            file.write(table.to_string(index=False, na_rep='') + "\n")
        logger.info("experiment table written to %s", paths['table'])
        return paths

    @staticmethod
    def experiment_operator_table(rows: List[Dict]) -> pd.DataFrame:
        """
        受控实验的按算子拆分：每个 (设置, 采样方式, 算子) 在各次重复上的平均值
        """
        df = pd.DataFrame(rows, columns=['setting', 'repetition', 'sampling', 'operator',
                                         'mutants', 'excluded', 'score', 'aer'])
        if df.empty:
            return pd.DataFrame(columns=['setting', 'sampling', 'operator', 'mutants', 'excluded', 'score', 'aer',
                                         'repetitions'])
        grouped = df.groupby(['setting', 'sampling', 'operator'], sort=True)
        means = grouped[['mutants', 'excluded', 'score', 'aer']].mean()
        means['repetitions'] = grouped.size()
        return means.reset_index()

    @staticmethod
    def write_experiment_per_operator(table: pd.DataFrame, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "experiment_per_operator.csv")
        table.to_csv(path, index=False)
        return path
