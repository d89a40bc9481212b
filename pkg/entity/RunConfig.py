from dataclasses import dataclass, field, fields
from typing import List, Optional

from entity.TrainConfig import TrainConfig
from util.Errors import ConfigError


@dataclass
class RunConfig:
    """
    命令行运行配置，字段与 config.yaml 的键一一对应，每个键都可用 --<键名> 覆盖
    """
    # 数据集
    dataset_format: str = "idx"
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    train_subset: Optional[int] = None
    synthetic_classes: int = 10
    synthetic_per_class: int = 100
    synthetic_dim: int = 20
    synthetic_spread: float = 0.1

    # 模型结构
    architecture: str = "mlp"
    hidden_units: List[int] = field(default_factory=lambda: [128, 64])
    conv_channels: int = 8

    # 路径
    model_path: str = "output/original.nmm"
    mutant_dir: str = "output/mutants"
    report_dir: str = "output/report"

    # 训练
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    shuffle_each_epoch: bool = True

    # 变异
    ratio: float = 0.01
    np_sigma: float = 0.1
    gf_sigma: Optional[float] = None
    source_budget: int = 20
    model_budget: int = 50
    layer_budget: Optional[int] = None

    # 分析与实验
    qc_threshold: float = 0.20
    repetitions: int = 5
    train_sample_size: int = 5000
    test_sample_size: int = 1000

    seed: int = 0
    workers: int = 1
    log_level: str = "INFO"

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def validate(self):
        if self.dataset_format not in ("idx", "csv", "synthetic"):
            raise ConfigError(f"dataset_format must be idx, csv or synthetic, got {self.dataset_format!r}")
        if self.architecture not in ("mlp", "cnn"):
            raise ConfigError(f"architecture must be mlp or cnn, got {self.architecture!r}")
        for name in ("ratio", "qc_threshold"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        for name in ("source_budget", "model_budget", "epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.layer_budget is not None and self.layer_budget < 0:
            raise ConfigError(f"layer_budget must be >= 0, got {self.layer_budget}")
        for name in ("batch_size", "repetitions", "train_sample_size", "test_sample_size", "workers",
                     "synthetic_classes", "synthetic_per_class", "synthetic_dim", "conv_channels"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.np_sigma > 0:
            raise ConfigError(f"np_sigma must be > 0, got {self.np_sigma}")
        if self.gf_sigma is not None and self.gf_sigma < 0:
            raise ConfigError(f"gf_sigma must be >= 0, got {self.gf_sigma}")
        if self.train_subset is not None and self.train_subset <= 0:
            raise ConfigError(f"train_subset must be positive, got {self.train_subset}")
        if any(units <= 0 for units in self.hidden_units):
            raise ConfigError(f"hidden_units must be positive, got {self.hidden_units}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           seed=self.seed, shuffle_each_epoch=self.shuffle_each_epoch)
