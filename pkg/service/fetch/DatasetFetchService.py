"""
Dataset ingestion: MNIST IDX, CSV and synthetic Gaussian blobs
数据集读取：IDX（大端）、CSV、合成高斯团
"""
import gzip
import logging
import os
import struct
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from entity.Dataset import Dataset
from util.Errors import BadMagicError, DatasetError, IdxDimensionMismatchError, TruncatedPayloadError
from util.SeedUtil import SeedUtil

logger = logging.getLogger(__name__)

# IDX 文件格式（大端）：
#   [offset] [type]          [value]
#   0000     32 bit integer  0x00000803 (2051) 图像 / 0x00000801 (2049) 标签
#   0004     32 bit integer  样本数
#   0008     32 bit integer  行数（仅图像）
#   0012     32 bit integer  列数（仅图像）
#   ...      unsigned byte   像素 / 标签
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DatasetFetchService:

    def __init__(self):
        pass

    # ==================== IDX ====================

    @staticmethod
    def _read_bytes(path: str) -> bytes:
        opener = gzip.open if path.endswith('.gz') else open
        with opener(path, 'rb') as file:
            return file.read()

    @staticmethod
    def _parse_idx_images(raw: bytes, path: str) -> np.ndarray:
        if len(raw) < 16:
            raise TruncatedPayloadError(f"{path}: image header needs 16 bytes, file has {len(raw)}")
        magic, count, rows, cols = struct.unpack('>IIII', raw[:16])
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagicError(f"{path}: image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        expected = count * rows * cols
        if len(raw) - 16 < expected:
            raise TruncatedPayloadError(f"{path}: expected {expected} pixel bytes, found {len(raw) - 16}")
        return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16).reshape(count, rows, cols)

    @staticmethod
    def _parse_idx_labels(raw: bytes, path: str) -> np.ndarray:
        if len(raw) < 8:
            raise TruncatedPayloadError(f"{path}: label header needs 8 bytes, file has {len(raw)}")
        magic, count = struct.unpack('>II', raw[:8])
        if magic != IDX_LABEL_MAGIC:
            raise BadMagicError(f"{path}: label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        if len(raw) - 8 < count:
            raise TruncatedPayloadError(f"{path}: expected {count} label bytes, found {len(raw) - 8}")
        return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8)

    @staticmethod
    def load_idx(images_path: str, labels_path: str, num_classes: int = 10) -> Dataset:
        """
        读取 IDX 图像与标签文件（支持 .gz）
        Args:
            images_path: 图像文件路径
            labels_path: 标签文件路径
            num_classes: 类别数，MNIST 为 10
        Returns:
            像素缩放到 [0,1] 的 Dataset，特征形状 (N, rows, cols)
        Raises:
            BadMagicError / IdxDimensionMismatchError / TruncatedPayloadError
        """
        images = DatasetFetchService._parse_idx_images(DatasetFetchService._read_bytes(images_path), images_path)
        labels = DatasetFetchService._parse_idx_labels(DatasetFetchService._read_bytes(labels_path), labels_path)
        if images.shape[0] != labels.shape[0]:
            raise IdxDimensionMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        if labels.size and labels.max() >= num_classes:
            raise DatasetError(f"{labels_path}: label {labels.max()} outside [0, {num_classes})")
        features = images.astype(np.float32) / np.float32(255.0)
        logger.info("loaded %d samples of shape %s from %s", len(labels), images.shape[1:], images_path)
        return Dataset(features, labels.astype(np.int64), num_classes)

    @staticmethod
    def write_idx(data: Dataset, images_path: str, labels_path: str):
        """
        把二维样本数据集写回 IDX 格式（像素四舍五入到 0..255）
        """
        if len(data.sample_shape) != 2:
            raise DatasetError(f"IDX images need 2-D samples, got {data.sample_shape}")
        rows, cols = data.sample_shape
        pixels = np.rint(data.features * 255.0).astype(np.uint8)
        for path in (images_path, labels_path):
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
        with open(images_path, 'wb') as file:
            file.write(struct.pack('>IIII', IDX_IMAGE_MAGIC, len(data), rows, cols))
            file.write(pixels.tobytes())
        with open(labels_path, 'wb') as file:
            file.write(struct.pack('>II', IDX_LABEL_MAGIC, len(data)))
            file.write(data.labels.astype(np.uint8).tobytes())

    # ==================== CSV ====================

    @staticmethod
    def load_csv(path: str, num_classes: Optional[int] = None, label_column: str = 'label',
                 sample_shape: Optional[Sequence[int]] = None) -> Dataset:
        """
        读取带表头的 CSV：特征列 + 标签列
        Args:
            path: 文件路径
            num_classes: 类别数；为空时取 max(label)+1
            label_column: 标签列名
            sample_shape: 可选，把每行特征重排为该形状
        """
        df = pd.read_csv(path)
        if label_column not in df.columns:
            raise DatasetError(f"{path}: missing '{label_column}' column")
        labels = df[label_column].to_numpy(dtype=np.int64)
        features = df.drop(columns=[label_column]).to_numpy(dtype=np.float32)
        if sample_shape is not None:
            features = features.reshape((len(features),) + tuple(sample_shape))
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 1
        return Dataset(features, labels, num_classes)

    @staticmethod
    def save_csv(data: Dataset, path: str, label_column: str = 'label'):
        flat = data.features.reshape(len(data), -1)
        df = pd.DataFrame(flat, columns=[f"f{i}" for i in range(flat.shape[1])])
        df[label_column] = data.labels
        df.to_csv(path, index=False)

    # ==================== 合成数据 ====================

    @staticmethod
    def make_synthetic(num_classes: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
        """
        高斯团合成数据
        类别 c 的均值：所有特征为 0.25，第 (c mod dim) 个特征为 0.75；
        标准差为 spread，结果截断到 [0,1]，样本按类别交错排列
        """
        if dim <= 0 or per_class <= 0:
            raise DatasetError("synthetic data needs dim > 0 and per_class > 0")
        rng = SeedUtil.rng(seed, "synthetic")
        means = np.full((num_classes, dim), 0.25)
        means[np.arange(num_classes), np.arange(num_classes) % dim] = 0.75
        labels = np.tile(np.arange(num_classes), per_class)
        features = means[labels] + rng.normal(0.0, spread, size=(len(labels), dim))
        return Dataset(np.clip(features, 0.0, 1.0).astype(np.float32), labels, num_classes)
