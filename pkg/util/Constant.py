class Constant:
    CONFIG_PATH: str = "config.yaml"

    # 模型文件
    MODEL_EXTENSION: str = ".nmm"
    PROVENANCE_EXTENSION: str = ".yaml"
    FORMAT_VERSION: int = 1
    FORMAT_MAGIC: str = "NMM"

    # 变异与度量默认值
    DEFAULT_RATIO: float = 0.01
    DEFAULT_QC_THRESHOLD: float = 0.20
    DEFAULT_NP_SIGMA: float = 0.1
    DEFAULT_GF_SIGMA_SCALE: float = 0.5
    NONUNIFORM_FAVORED_PROBABILITY: float = 0.8

    # 退出码
    EXIT_OK: int = 0
    EXIT_CONFIG_ERROR: int = 2
    EXIT_IO_ERROR: int = 3
    EXIT_DIVERGENCE: int = 4
    EXIT_EMPTY_PASSED: int = 5
    EXIT_EMPTY_MUTANTS: int = 6

    def __init__(self):
        pass
