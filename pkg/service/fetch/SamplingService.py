"""
Controlled sampling for test-set quality experiments
受控采样：均匀采样 / 非均匀采样（偏好单一类别）
所有采样均为无放回采样，结果只由 (数据, 计划) 决定
"""
import logging
from typing import List, Optional

import numpy as np

from entity.Dataset import Dataset, SamplingMode, SamplingPlan, SamplingSource
from util.Constant import Constant
from util.Errors import ClassExhaustedError, DatasetError, InsufficientDataError
from util.SeedUtil import SeedUtil

logger = logging.getLogger(__name__)


class ControlledPair:
    """一组受控数据：同一设置、同一重复下的 (均匀, 非均匀) 数据集"""

    def __init__(self, setting: int, repetition: int, uniform: Dataset, nonuniform: Dataset,
                 favored_class: int, source: SamplingSource):
        self.setting = setting
        self.repetition = repetition
        self.uniform = uniform
        self.nonuniform = nonuniform
        self.favored_class = favored_class
        self.source = source

    def __repr__(self):
        return (f"ControlledPair(setting={self.setting}, rep={self.repetition}, "
                f"size={len(self.uniform)}, favored={self.favored_class})")


class SamplingService:

    def __init__(self):
        pass

    @staticmethod
    def uniform_indices(data: Dataset, size: int, seed: int) -> np.ndarray:
        """
        按类别轮转抽取，各类别数量相差不超过 1（某类耗尽后跳过该类）
        """
        if size > len(data):
            raise InsufficientDataError(f"cannot sample {size} from {len(data)} samples")
        rng = np.random.default_rng(seed)
        pools = [list(rng.permutation(data.class_indices(c))) for c in rng.permutation(data.num_classes)]
        pools = [pool for pool in pools if pool]
        chosen: List[int] = []
        cursor = 0
        while len(chosen) < size:
            for pool in pools:
                if len(chosen) == size:
                    break
                if cursor < len(pool):
                    chosen.append(pool[cursor])
            cursor += 1
        return rng.permutation(np.asarray(chosen, dtype=np.int64))

    @staticmethod
    def sample_uniform(data: Dataset, size: int, seed: int) -> Dataset:
        return data.subset(SamplingService.uniform_indices(data, size, seed))

    @staticmethod
    def nonuniform_indices(data: Dataset, size: int, favored_class: int, seed: int,
                           favored_probability: float = Constant.NONUNIFORM_FAVORED_PROBABILITY) -> np.ndarray:
        """
        每次抽取：以 0.8 概率取偏好类别，否则在其余类别中均匀选择一个类别
        非偏好类别耗尽时改选其他非偏好类别；偏好类别耗尽时报错
        """
        if size > len(data):
            raise InsufficientDataError(f"cannot sample {size} from {len(data)} samples")
        rng = np.random.default_rng(seed)
        favored_pool = list(rng.permutation(data.class_indices(favored_class)))
        if not favored_pool:
            raise ClassExhaustedError(f"favored class {favored_class} has no samples")
        others = {c: list(rng.permutation(data.class_indices(c)))
                  for c in range(data.num_classes) if c != favored_class}
        others = {c: pool for c, pool in others.items() if pool}

        chosen: List[int] = []
        for _ in range(size):
            if rng.random() < favored_probability or not others:
                if not favored_pool:
                    raise ClassExhaustedError(f"favored class {favored_class} exhausted after {len(chosen)} draws")
                chosen.append(favored_pool.pop())
                continue
            classes = sorted(others)
            picked = classes[int(rng.integers(len(classes)))]
            chosen.append(others[picked].pop())
            if not others[picked]:
                del others[picked]
        return np.asarray(chosen, dtype=np.int64)

    @staticmethod
    def sample_nonuniform(data: Dataset, size: int, favored_class: int, seed: int) -> Dataset:
        return data.subset(SamplingService.nonuniform_indices(data, size, favored_class, seed))

    @staticmethod
    def apply(plan: SamplingPlan, train: Optional[Dataset], test: Optional[Dataset]) -> Dataset:
        """按采样计划从训练集或测试集采样"""
        source = train if plan.source == SamplingSource.TRAIN else test
        if source is None:
            raise DatasetError(f"no {plan.source.value} dataset available for sampling")
        if plan.mode == SamplingMode.UNIFORM:
            return SamplingService.sample_uniform(source, plan.size, plan.seed)
        return SamplingService.sample_nonuniform(source, plan.size, plan.favored_class, plan.seed)

    @staticmethod
    def make_controlled_pairs(train: Optional[Dataset], test: Dataset, repetitions: int, seed: int,
                              train_size: int = 5000, test_size: int = 1000) -> List[ControlledPair]:
        """
        生成受控实验数据
        设置 1：从训练集各采样 train_size（均匀/非均匀）；设置 2：从测试集各采样 test_size
        train 为 None 时只生成设置 2
        Returns:
            每次重复、每个设置一对数据集，按 (重复, 设置) 排序
        """
        settings = []
        if train is not None:
            settings.append((1, SamplingSource.TRAIN, train, train_size))
        settings.append((2, SamplingSource.TEST, test, test_size))
        for setting, source, data, size in settings:
            if size > len(data):
                raise InsufficientDataError(f"setting {setting} needs {size} samples, "
                                            f"{source.value} data has {len(data)}")

        pairs: List[ControlledPair] = []
        for repetition in range(repetitions):
            for setting, source, data, size in settings:
                present = data.present_classes()
                favored_rng = SeedUtil.rng(seed, "favored", setting, repetition)
                favored = int(present[favored_rng.integers(len(present))])
                uniform_plan = SamplingPlan(source, size, SamplingMode.UNIFORM,
                                            seed=SeedUtil.derive_seed(seed, "uniform", setting, repetition))
                nonuniform_plan = SamplingPlan(source, size, SamplingMode.NONUNIFORM, favored_class=favored,
                                               seed=SeedUtil.derive_seed(seed, "nonuniform", setting, repetition))
                pairs.append(ControlledPair(setting, repetition,
                                            SamplingService.apply(uniform_plan, train, test),
                                            SamplingService.apply(nonuniform_plan, train, test),
                                            favored, source))
                logger.info("setting %d repetition %d: %d samples, favored class %d",
                            setting, repetition, size, favored)
        return pairs
