"""
Command drivers: train / mutate / evaluate / experiment / report
命令行各子命令的实现，所有结果只由配置与主种子决定
"""
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from entity.Dataset import Dataset
from entity.KillMatrix import MutationReport
from entity.ModelSpec import ModelSpec
from entity.MutantRecord import MutantRecord
from entity.RunConfig import RunConfig
from entity.TrainedModel import TrainedModel
from service.analysis.AnalysisService import AnalysisService
from service.analysis.ReportService import ReportService
from service.engine.ModelIOService import ModelIOService
from service.fetch.DatasetFetchService import DatasetFetchService
from service.fetch.SamplingService import SamplingService
from service.mutation.ModelMutationService import ModelMutationService
from service.mutation.MutantStoreService import MutantStoreService
from service.mutation.SourceMutationService import SourceMutationService
from service.train.TrainerService import TrainerService
from util.Errors import ConfigError, EmptyMutantSetError
from util.SeedUtil import SeedUtil

logger = logging.getLogger(__name__)

CNN_KERNEL = 3


class PipelineService:

    def __init__(self, config: RunConfig):
        self.config = config

    # ==================== 数据与模型 ====================

    def _require(self, *keys: str):
        missing = [key for key in keys if not getattr(self.config, key)]
        if missing:
            raise ConfigError(f"dataset_format={self.config.dataset_format} needs {missing}")

    def load_data(self) -> Tuple[Dataset, Dataset]:
        """按配置读取 (训练集, 测试集)"""
        cfg = self.config
        if cfg.dataset_format == "idx":
            self._require("train_images", "train_labels", "test_images", "test_labels")
            train = DatasetFetchService.load_idx(cfg.train_images, cfg.train_labels)
            test = DatasetFetchService.load_idx(cfg.test_images, cfg.test_labels)
        elif cfg.dataset_format == "csv":
            self._require("train_csv", "test_csv")
            train = DatasetFetchService.load_csv(cfg.train_csv)
            test = DatasetFetchService.load_csv(cfg.test_csv)
            num_classes = max(train.num_classes, test.num_classes)
            train = Dataset(train.features, train.labels, num_classes)
            test = Dataset(test.features, test.labels, num_classes)
        else:
            train = DatasetFetchService.make_synthetic(cfg.synthetic_classes, cfg.synthetic_per_class,
                                                       cfg.synthetic_dim, cfg.synthetic_spread,
                                                       SeedUtil.derive_seed(cfg.seed, "synthetic-train"))
            test = DatasetFetchService.make_synthetic(cfg.synthetic_classes, max(1, cfg.synthetic_per_class // 2),
                                                      cfg.synthetic_dim, cfg.synthetic_spread,
                                                      SeedUtil.derive_seed(cfg.seed, "synthetic-test"))
        if cfg.train_subset is not None and cfg.train_subset < len(train):
            train = SamplingService.sample_uniform(train, cfg.train_subset, SeedUtil.derive_seed(cfg.seed, "subset"))
            logger.info("training on a class-balanced subset of %d samples", len(train))
        return train, test

    def build_spec(self, sample_shape: Tuple[int, ...], num_classes: int) -> ModelSpec:
        cfg = self.config
        if cfg.architecture == "mlp":
            return ModelSpec.mlp(sample_shape, cfg.hidden_units, num_classes)
        if len(sample_shape) not in (2, 3):
            raise ConfigError(f"cnn needs image samples, got shape {sample_shape}")
        return ModelSpec.cnn(sample_shape, cfg.conv_channels, CNN_KERNEL, cfg.hidden_units[0], num_classes)

    def check_batch_size(self, train: Dataset):
        if self.config.batch_size > len(train):
            raise ConfigError(f"batch_size {self.config.batch_size} exceeds the {len(train)} training samples")

    def load_original(self) -> TrainedModel:
        if not os.path.exists(self.config.model_path):
            raise FileNotFoundError(f"original model not found: {self.config.model_path} (run train first)")
        return ModelIOService.load_model(self.config.model_path)

    def load_mutants(self, mutant_dir: Optional[str] = None) -> List[MutantRecord]:
        records = MutantStoreService().load_mutants(mutant_dir or self.config.mutant_dir)
        if not records:
            raise EmptyMutantSetError(f"no mutant in {mutant_dir or self.config.mutant_dir} (run mutate first)")
        return records

    # ==================== 子命令 ====================

    def cmd_train(self) -> TrainedModel:
        """训练原始模型，输出训练/测试准确率，保存 .nmm 与逐轮日志"""
        train, test = self.load_data()
        self.check_batch_size(train)
        spec = self.build_spec(train.sample_shape, train.num_classes)
        logger.info("training %s on %d samples", spec.describe(), len(train))
        trainer = TrainerService()
        model = trainer.train(spec, train, self.config.train_config())
        ModelIOService.save_model(model, self.config.model_path)
        history = pd.DataFrame([record.as_dict() for record in trainer.history],
                               columns=['epoch', 'loss', 'accuracy'])
        history.to_csv(self.config.model_path + ".log.csv", index=False)

        train_accuracy = trainer.evaluate_accuracy(model, train)
        test_accuracy = trainer.evaluate_accuracy(model, test)
        print(f"train accuracy: {train_accuracy:.4f}")
        print(f"test accuracy:  {test_accuracy:.4f}")
        print(f"model saved to {self.config.model_path} ({ModelIOService.model_checksum(model)})")
        return model

    def cmd_mutate(self, level: str) -> List[MutantRecord]:
        """生成变异体并写入变异体目录，打印每个算子的数量"""
        cfg = self.config
        original = self.load_original()
        parent = ModelIOService.model_checksum(original)
        stale = MutantStoreService.stored_ids(cfg.mutant_dir)
        if stale:
            logger.warning("%s already holds %d mutants; they will be pooled with this run's when evaluated",
                           cfg.mutant_dir, len(stale))
        if level == "model":
            records = ModelMutationService().generate_model_mutants(
                original, cfg.model_budget, cfg.ratio, seed=cfg.seed, gf_sigma=cfg.gf_sigma,
                layer_budget=cfg.layer_budget)
            failures: List[MutantRecord] = []
        elif level == "source":
            train, _ = self.load_data()
            self.check_batch_size(train)
            service = SourceMutationService()
            records = service.generate_source_mutants(
                train, original.spec, cfg.train_config(), cfg.source_budget, ratio=cfg.ratio,
                np_sigma=cfg.np_sigma, seed=cfg.seed, parent_checksum=parent, workers=cfg.workers)
            failures = service.failures
        else:
            raise ConfigError(f"level must be source or model, got {level!r}")
        MutantStoreService.save_mutants(list(records) + list(failures), cfg.mutant_dir)

        counts: Dict[str, int] = {}
        for record in records:
            counts[record.operator] = counts.get(record.operator, 0) + 1
        for operator in sorted(counts):
            print(f"{operator:>6}: {counts[operator]}")
        print(f"{len(records)} {level}-level mutants written to {cfg.mutant_dir}"
              + (f", {len(failures)} failed" if failures else ""))
        return records

    def cmd_evaluate(self, mutant_dir: Optional[str] = None) -> MutationReport:
        """过滤 → 质量控制 → 杀死矩阵 → 指标，写出报告"""
        cfg = self.config
        original = self.load_original()
        mutants = self.load_mutants(mutant_dir)
        _, test = self.load_data()
        analysis = AnalysisService(cfg.workers)
        passed = analysis.filter_passed(original, test)
        matrix = analysis.build_kill_matrix(mutants, passed, cfg.qc_threshold)
        ReportService.save_kill_matrix(matrix, cfg.report_dir)
        report = analysis.build_report(matrix, generated=len(mutants))
        ReportService.write_report(report, cfg.report_dir)
        print(report.table())
        return report

    def cmd_experiment(self) -> pd.DataFrame:
        """
        受控实验：对每次重复、每个设置分别评估均匀/非均匀采样的测试数据，最后按设置取平均
        """
        cfg = self.config
        original = self.load_original()
        mutants = self.load_mutants()
        train, test = self.load_data()
        if len(train) < cfg.train_sample_size:
            logger.warning("training data has %d samples, fewer than train_sample_size=%d; "
                           "only the test-source setting is run", len(train), cfg.train_sample_size)
            train = None
        pairs = SamplingService.make_controlled_pairs(train, test, cfg.repetitions, cfg.seed,
                                                      cfg.train_sample_size, cfg.test_sample_size)
        analysis = AnalysisService(cfg.workers)
        rows, operator_rows = [], []
        for pair in pairs:
            for sampling, data in (("uniform", pair.uniform), ("nonuniform", pair.nonuniform)):
                passed = analysis.filter_passed(original, data)
                matrix = analysis.build_kill_matrix(mutants, passed, cfg.qc_threshold)
                row = {'setting': pair.setting, 'repetition': pair.repetition, 'sampling': sampling,
                       'favored_class': pair.favored_class if sampling == "nonuniform" else None,
                       'passed': len(passed), 'evaluated': len(matrix.mutant_ids),
                       'excluded': len(matrix.excluded), 'score': np.nan, 'aer': np.nan}
                if matrix.mutant_ids:
                    row['score'] = analysis.matrix_score(matrix)
                    row['aer'] = analysis.matrix_aer(matrix)
                    for operator, stats in analysis.per_operator(matrix).iterrows():
                        operator_rows.append({'setting': pair.setting, 'repetition': pair.repetition,
                                              'sampling': sampling, 'operator': operator, **stats.to_dict()})
                else:
                    logger.warning("setting %d repetition %d %s: every mutant excluded by quality control",
                                   pair.setting, pair.repetition, sampling)
                rows.append(row)
        table = ReportService.experiment_table(rows)
        ReportService.write_experiment(table, cfg.report_dir)
        ReportService.write_experiment_per_operator(ReportService.experiment_operator_table(operator_rows),
                                                    cfg.report_dir)
        print(table.to_string(index=False, na_rep=''))
        return table

    def cmd_report(self) -> MutationReport:
        """只根据已保存的杀死矩阵重新计算并输出报告"""
        matrix = ReportService.load_kill_matrix(self.config.report_dir)
        report = AnalysisService.build_report(matrix)
        ReportService.write_report(report, self.config.report_dir)
        print(report.table())
        return report
