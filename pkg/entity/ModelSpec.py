"""
Model architecture description
模型结构描述：有序的层列表 + 输入形状 + 类别数
"""
from dataclasses import dataclass, replace
from math import prod
from typing import Dict, List, Optional, Sequence, Tuple

from entity.LayerKind import ActivationKind, LayerKind
from util.Errors import ShapeMismatchError

Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """
    单层描述
    Dense 使用 in_features/out_features；Conv2D 使用通道与卷积核尺寸；
    Activation 层的激活函数同样放在 activation 字段
    """
    kind: LayerKind
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    activation: ActivationKind = ActivationKind.IDENTITY

    # ==================== 构造 ====================

    @classmethod
    def dense(cls, in_features: int, out_features: int,
              activation: ActivationKind = ActivationKind.IDENTITY) -> 'LayerSpec':
        return cls(LayerKind.DENSE, in_features=in_features, out_features=out_features, activation=activation)

    @classmethod
    def conv2d(cls, in_channels: int, out_channels: int, kernel_h: int, kernel_w: int,
               activation: ActivationKind = ActivationKind.IDENTITY) -> 'LayerSpec':
        return cls(LayerKind.CONV2D, in_channels=in_channels, out_channels=out_channels,
                   kernel_h=kernel_h, kernel_w=kernel_w, activation=activation)

    @classmethod
    def maxpool2x2(cls) -> 'LayerSpec':
        return cls(LayerKind.MAXPOOL2X2)

    @classmethod
    def flatten(cls) -> 'LayerSpec':
        return cls(LayerKind.FLATTEN)

    @classmethod
    def activation_layer(cls, fn: ActivationKind) -> 'LayerSpec':
        return cls(LayerKind.ACTIVATION, activation=fn)

    def with_activation(self, fn: ActivationKind) -> 'LayerSpec':
        return replace(self, activation=fn)

    # ==================== 结构属性 ====================

    @property
    def is_parameterized(self) -> bool:
        return self.kind in (LayerKind.DENSE, LayerKind.CONV2D)

    @property
    def neuron_count(self) -> int:
        """Dense 的输出单元数；Conv2D 以输出通道（卷积核）为神经元"""
        if self.kind == LayerKind.DENSE:
            return self.out_features
        if self.kind == LayerKind.CONV2D:
            return self.out_channels
        return 0

    @property
    def is_shape_preserving(self) -> bool:
        """输入输出形状一致的层（Softmax 激活层除外）"""
        if self.kind == LayerKind.ACTIVATION:
            return self.activation != ActivationKind.SOFTMAX
        if self.kind == LayerKind.DENSE:
            return self.in_features == self.out_features and self.activation != ActivationKind.SOFTMAX
        if self.kind == LayerKind.CONV2D:
            return (self.in_channels == self.out_channels and self.kernel_h == 1 and self.kernel_w == 1
                    and self.activation != ActivationKind.SOFTMAX)
        return False

    def param_shapes(self) -> Optional[Tuple[Shape, Shape]]:
        if self.kind == LayerKind.DENSE:
            return (self.out_features, self.in_features), (self.out_features,)
        if self.kind == LayerKind.CONV2D:
            return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w), (self.out_channels,)
        return None

    def param_count(self) -> int:
        shapes = self.param_shapes()
        if shapes is None:
            return 0
        return prod(shapes[0]) + prod(shapes[1])

    def output_shape(self, input_shape: Shape) -> Shape:
        """
        形状推断
        Args:
            input_shape: 单个样本的输入形状（不含 batch 维）
        Returns:
            输出形状
        """
        input_shape = tuple(input_shape)
        if self.kind == LayerKind.DENSE:
            if input_shape != (self.in_features,):
                raise ShapeMismatchError("Dense input", (self.in_features,), input_shape)
            return (self.out_features,)
        if self.kind == LayerKind.CONV2D:
            if len(input_shape) != 3 or input_shape[0] != self.in_channels:
                raise ShapeMismatchError("Conv2D input (channels, height, width)",
                                         (self.in_channels, '?', '?'), input_shape)
            _, h, w = input_shape
            if self.kernel_h > h or self.kernel_w > w:
                raise ShapeMismatchError("Conv2D kernel larger than image",
                                         (self.kernel_h, self.kernel_w), (h, w))
            return self.out_channels, h - self.kernel_h + 1, w - self.kernel_w + 1
        if self.kind == LayerKind.MAXPOOL2X2:
            if len(input_shape) != 3 or input_shape[1] % 2 or input_shape[2] % 2:
                raise ShapeMismatchError("MaxPool2x2 needs (channels, even height, even width)",
                                         None, input_shape)
            c, h, w = input_shape
            return c, h // 2, w // 2
        if self.kind == LayerKind.FLATTEN:
            return (prod(input_shape),)
        return input_shape

    def describe(self) -> str:
        if self.kind == LayerKind.DENSE:
            body = f"Dense({self.in_features},{self.out_features})"
        elif self.kind == LayerKind.CONV2D:
            body = f"Conv2D({self.in_channels},{self.out_channels},{self.kernel_h},{self.kernel_w})"
        elif self.kind == LayerKind.ACTIVATION:
            return f"Activation({self.activation.value})"
        else:
            return self.kind.value
        if self.activation != ActivationKind.IDENTITY:
            body += f"+{self.activation.value}"
        return body

    # ==================== 序列化 ====================

    def to_dict(self) -> Dict:
        data = {'kind': self.kind.value, 'activation': self.activation.value}
        if self.kind == LayerKind.DENSE:
            data.update({'in_features': self.in_features, 'out_features': self.out_features})
        elif self.kind == LayerKind.CONV2D:
            data.update({'in_channels': self.in_channels, 'out_channels': self.out_channels,
                         'kernel_h': self.kernel_h, 'kernel_w': self.kernel_w})
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'LayerSpec':
        kind = LayerKind.from_name(data['kind'])
        activation = ActivationKind.from_name(data.get('activation', ActivationKind.IDENTITY.value))
        fields = {}
        if kind == LayerKind.DENSE:
            fields = {'in_features': int(data['in_features']), 'out_features': int(data['out_features'])}
        elif kind == LayerKind.CONV2D:
            fields = {key: int(data[key]) for key in ('in_channels', 'out_channels', 'kernel_h', 'kernel_w')}
        return cls(kind, activation=activation, **fields)


@dataclass(frozen=True)
class ModelSpec:
    """
    模型结构
    构造时即完成端到端形状推断：最后一层输出宽度等于类别数，且 Softmax 只出现在最后一层
    """
    input_shape: Shape
    layers: Tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, 'layers', tuple(self.layers))
        if self.num_classes <= 0:
            raise ShapeMismatchError(f"num_classes must be positive, got {self.num_classes}")
        if not self.layers:
            raise ShapeMismatchError("model has no layers")
        if any(d <= 0 for d in self.input_shape):
            raise ShapeMismatchError("input dimensions must be positive", None, self.input_shape)
        shapes = self.layer_shapes()
        if shapes[-1] != (self.num_classes,):
            raise ShapeMismatchError("final layer width", (self.num_classes,), shapes[-1])
        for index, layer in enumerate(self.layers):
            if layer.activation == ActivationKind.SOFTMAX and index != len(self.layers) - 1:
                raise ShapeMismatchError(f"Softmax on layer {index}; only the final layer may carry it")
        if self.layers[-1].activation != ActivationKind.SOFTMAX:
            raise ShapeMismatchError("final layer must end in Softmax")

    def layer_shapes(self) -> List[Shape]:
        """返回每层的输入形状，末尾追加模型输出形状"""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def output_index(self) -> int:
        return len(self.layers) - 1

    def parameterized_layers(self) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if layer.is_parameterized]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def without_layer(self, index: int) -> 'ModelSpec':
        return ModelSpec(self.input_shape, self.layers[:index] + self.layers[index + 1:], self.num_classes)

    def with_layer_inserted(self, index: int, layer: LayerSpec) -> 'ModelSpec':
        return ModelSpec(self.input_shape, self.layers[:index] + (layer,) + self.layers[index:], self.num_classes)

    def with_layer_replaced(self, index: int, layer: LayerSpec) -> 'ModelSpec':
        return ModelSpec(self.input_shape, self.layers[:index] + (layer,) + self.layers[index + 1:],
                         self.num_classes)

    def describe(self) -> str:
        return " -> ".join(layer.describe() for layer in self.layers)

    def to_dict(self) -> Dict:
        return {
            'input_shape': list(self.input_shape),
            'num_classes': self.num_classes,
            'layers': [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ModelSpec':
        return cls(tuple(data['input_shape']),
                   tuple(LayerSpec.from_dict(layer) for layer in data['layers']),
                   int(data['num_classes']))

    # ==================== 常用结构 ====================

    @classmethod
    def mlp(cls, input_shape: Sequence[int], hidden_units: Sequence[int], num_classes: int) -> 'ModelSpec':
        """
        多层感知机：Flatten → Dense+ReLU … → Dense+Softmax
        Args:
            input_shape: 单样本形状，例如 (28, 28)
            hidden_units: 隐藏层宽度，例如 [128, 64]
            num_classes: 类别数
        """
        layers: List[LayerSpec] = []
        width = prod(input_shape)
        if len(input_shape) != 1:
            layers.append(LayerSpec.flatten())
        for units in hidden_units:
            layers.append(LayerSpec.dense(width, units, ActivationKind.RELU))
            width = units
        layers.append(LayerSpec.dense(width, num_classes, ActivationKind.SOFTMAX))
        return cls(tuple(input_shape), tuple(layers), num_classes)

    @classmethod
    def cnn(cls, input_shape: Sequence[int], conv_channels: int, kernel: int,
            hidden_units: int, num_classes: int) -> 'ModelSpec':
        """
        小型卷积网络：Conv2D+ReLU → MaxPool2x2 → Flatten → Dense+ReLU → Dense+Softmax
        input_shape 为 (channels, height, width)；二维输入会补上通道维
        """
        if len(input_shape) == 2:
            input_shape = (1,) + tuple(input_shape)
        channels, height, width = input_shape
        conv_h, conv_w = height - kernel + 1, width - kernel + 1
        flat = conv_channels * (conv_h // 2) * (conv_w // 2)
        layers = (
            LayerSpec.conv2d(channels, conv_channels, kernel, kernel, ActivationKind.RELU),
            LayerSpec.maxpool2x2(),
            LayerSpec.flatten(),
            LayerSpec.dense(flat, hidden_units, ActivationKind.RELU),
            LayerSpec.dense(hidden_units, num_classes, ActivationKind.SOFTMAX),
        )
        return cls(tuple(input_shape), layers, num_classes)
