import hashlib

import numpy as np


class SeedUtil:
    """
    Named random sub-streams derived from one master seed
    从主种子派生命名子随机流，保证各组件可单独复现
    """

    def __init__(self):
        pass

    @staticmethod
    def derive_seed(master: int, *names) -> int:
        """
        派生子种子
        Args:
            master: 主种子
            names: 子流名称（字符串或整数），顺序敏感
        Returns:
            64位非负整数种子
        """
        key = ":".join([str(int(master))] + [str(name) for name in names])
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")

    @staticmethod
    def rng(master: int, *names) -> np.random.Generator:
        if not names:
            return np.random.default_rng(int(master))
        return np.random.default_rng(SeedUtil.derive_seed(master, *names))
