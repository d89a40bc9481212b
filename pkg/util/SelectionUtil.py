import math


class SelectionUtil:

    def __init__(self):
        pass

    @staticmethod
    def selection_count(ratio: float, population: int) -> int:
        """
        ⌈ratio·population⌉，ratio > 0 时至少为 1，且不超过 population
        减去 1e-9 以消除 0.01×60000 这类浮点误差
        """
        if ratio <= 0 or population <= 0:
            return 0
        return min(population, max(1, math.ceil(ratio * population - 1e-9)))
