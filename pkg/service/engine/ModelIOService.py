"""
Model file (.nmm) reader / writer
模型文件读写

文件格式：
    第一行   NMM <format_version> <crc32(正文)>
    正文     JSON manifest（键排序，保证两次保存逐字节一致）
             {
               "format_version": 1,
               "spec": {...},
               "params": [{"layer": i, "name": "weight"|"bias", "shape": [...],
                           "dtype": "<f4", "data": base64, "crc32": "xxxxxxxx"}, ...],
               "checksum": crc32(所有参数解码后字节按顺序拼接)
             }
权重以小端 32 位浮点、行优先顺序编码
"""
import base64
import hashlib
import json
import os
import zlib
from typing import Dict, List

import numpy as np

from entity.ModelSpec import ModelSpec
from entity.TrainedModel import TrainedModel
from util.Constant import Constant
from util.Errors import ChecksumError, MalformedManifestError, ShapeMismatchError, VersionMismatchError


class ModelIOService:

    def __init__(self):
        pass

    @staticmethod
    def _crc(data: bytes) -> str:
        return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"

    @staticmethod
    def build_manifest(model: TrainedModel) -> Dict:
        """把模型转换为 manifest 字典"""
        entries = []
        running = 0
        for index, layer_params in enumerate(model.params):
            if layer_params is None:
                continue
            for name, array in zip(("weight", "bias"), layer_params):
                raw = np.ascontiguousarray(array, dtype='<f4').tobytes(order='C')
                running = zlib.crc32(raw, running)
                entries.append({
                    'layer': index,
                    'name': name,
                    'shape': list(array.shape),
                    'dtype': '<f4',
                    'data': base64.b64encode(raw).decode('ascii'),
                    'crc32': ModelIOService._crc(raw),
                })
        return {
            'format_version': Constant.FORMAT_VERSION,
            'spec': model.spec.to_dict(),
            'params': entries,
            'checksum': f"{running & 0xFFFFFFFF:08x}",
        }

    @staticmethod
    def dump_manifest(manifest: Dict, path: str, version: int = Constant.FORMAT_VERSION):
        """写出 manifest（带正文校验的文件头）"""
        body = json.dumps(manifest, sort_keys=True, indent=1).encode('utf-8')
        header = f"{Constant.FORMAT_MAGIC} {version} {ModelIOService._crc(body)}\n".encode('ascii')
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as file:
            file.write(header + body)

    @staticmethod
    def save_model(model: TrainedModel, path: str):
        ModelIOService.dump_manifest(ModelIOService.build_manifest(model), path)

    @staticmethod
    def model_bytes(model: TrainedModel) -> bytes:
        return json.dumps(ModelIOService.build_manifest(model), sort_keys=True, indent=1).encode('utf-8')

    @staticmethod
    def model_checksum(model: TrainedModel) -> str:
        """模型内容指纹（SHA-256 前 16 位），报告中以此引用模型，不依赖路径"""
        return hashlib.sha256(ModelIOService.model_bytes(model)).hexdigest()[:16]

    @staticmethod
    def load_model(path: str) -> TrainedModel:
        """
        读取模型文件
        Raises:
            VersionMismatchError: 文件头或 manifest 版本不是 1
            ChecksumError: 正文或参数校验失败（包括文件被截断）
            MalformedManifestError: manifest 结构错误、未知层类型、形状不符
        """
        with open(path, 'rb') as file:
            content = file.read()
        newline = content.find(b"\n")
        if newline < 0:
            raise ChecksumError(f"{path}: missing header line (truncated file?)")
        header = content[:newline].decode('ascii', errors='replace').split()
        body = content[newline + 1:]
        if len(header) != 3 or header[0] != Constant.FORMAT_MAGIC:
            raise MalformedManifestError(f"{path}: bad header {header!r}")
        if header[1] != str(Constant.FORMAT_VERSION):
            raise VersionMismatchError(f"{path}: format version {header[1]}, expected {Constant.FORMAT_VERSION}")
        if ModelIOService._crc(body) != header[2]:
            raise ChecksumError(f"{path}: body checksum mismatch (expected {header[2]}, got {ModelIOService._crc(body)})")
        try:
            manifest = json.loads(body.decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise MalformedManifestError(f"{path}: manifest is not valid JSON: {e}") from e
        return ModelIOService.model_from_manifest(manifest, source=path)

    @staticmethod
    def model_from_manifest(manifest: Dict, source: str = "<manifest>") -> TrainedModel:
        if not isinstance(manifest, dict):
            raise MalformedManifestError(f"{source}: manifest must be a mapping")
        if manifest.get('format_version') != Constant.FORMAT_VERSION:
            raise VersionMismatchError(f"{source}: format_version {manifest.get('format_version')!r}")
        try:
            spec = ModelSpec.from_dict(manifest['spec'])
        except (KeyError, TypeError, ValueError) as e:
            # ShapeMismatchError 也是 ValueError：不自洽的结构同样视为 manifest 错误
            raise MalformedManifestError(f"{source}: bad spec: {e}") from e

        params: List = [None if layer.param_shapes() is None else [None, None] for layer in spec.layers]
        running = 0
        try:
            for entry in manifest['params']:
                index, name = int(entry['layer']), entry['name']
                if entry.get('dtype', '<f4') != '<f4' or name not in ('weight', 'bias'):
                    raise MalformedManifestError(f"{source}: bad parameter entry {index}/{name}")
                raw = base64.b64decode(entry['data'], validate=True)
                if ModelIOService._crc(raw) != entry['crc32']:
                    raise ChecksumError(f"{source}: layer {index} {name} checksum mismatch")
                running = zlib.crc32(raw, running)
                shape = tuple(int(d) for d in entry['shape'])
                array = np.frombuffer(raw, dtype='<f4')
                if array.size != int(np.prod(shape)):
                    raise MalformedManifestError(f"{source}: layer {index} {name} size does not match {shape}")
                if params[index] is None:
                    raise MalformedManifestError(f"{source}: layer {index} takes no parameters")
                params[index][0 if name == 'weight' else 1] = array.reshape(shape).astype(np.float32)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise MalformedManifestError(f"{source}: bad parameter list: {e}") from e
        if f"{running & 0xFFFFFFFF:08x}" != manifest.get('checksum'):
            raise ChecksumError(f"{source}: parameter checksum mismatch")
        if any(entry is not None and (entry[0] is None or entry[1] is None) for entry in params):
            raise MalformedManifestError(f"{source}: missing parameter entries")
        try:
            return TrainedModel(spec, [None if p is None else (p[0], p[1]) for p in params])
        except ShapeMismatchError as e:
            raise MalformedManifestError(f"{source}: {e}") from e
