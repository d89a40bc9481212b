from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    """
    训练配置
    :param epochs: 训练轮数（0 表示直接返回初始化模型）
    :param batch_size: mini-batch 大小，不超过数据集大小
    :param learning_rate: SGD 学习率，必须为正
    :param seed: 64 位种子；初始化与每轮打乱分别使用派生子流
    :param shuffle_each_epoch: 每轮是否重新打乱数据
    """
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
