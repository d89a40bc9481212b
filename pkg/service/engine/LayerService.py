"""
Layer kernels of the embedded NN engine
单层前向/反向计算：float32 存储，float64 累加
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from entity.LayerKind import ActivationKind
from util.Errors import ShapeMismatchError


class LayerService:
    """
    Dense / Conv2D / MaxPool2x2 / 激活函数的前向与反向
    所有方法均为纯函数，不修改输入
    """

    def __init__(self):
        pass

    # ==================== 前向 ====================

    @staticmethod
    def dense_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray,
                      out_dtype=np.float32) -> np.ndarray:
        """
        y[i] = Σ_j W[i,j]·x[j] + b[i]
        Args:
            weight: (out, in)
            bias: (out,)
            x: (in,) 或 (N, in)
        Returns:
            (out,) 或 (N, out)
        """
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ShapeMismatchError("Dense bias", (weight.shape[0],), bias.shape)
        if x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
            raise ShapeMismatchError(f"Dense input for weight {tuple(weight.shape)}",
                                     (weight.shape[1],), x.shape)
        y = np.asarray(x, dtype=np.float64) @ np.asarray(weight, dtype=np.float64).T
        y += np.asarray(bias, dtype=np.float64)
        return y.astype(out_dtype)

    @staticmethod
    def conv2d_forward(kernels: np.ndarray, bias: np.ndarray, image: np.ndarray,
                       out_dtype=np.float32) -> np.ndarray:
        """
        互相关卷积，valid padding，stride 1
        Args:
            kernels: (out_ch, in_ch, kh, kw)
            bias: (out_ch,)
            image: (in_ch, H, W) 或 (N, in_ch, H, W)
        Returns:
            (out_ch, H-kh+1, W-kw+1)，带 batch 维时前置 N
        """
        single = image.ndim == 3
        x = image[None] if single else image
        if kernels.ndim != 4 or x.ndim != 4 or x.shape[1] != kernels.shape[1]:
            raise ShapeMismatchError(f"Conv2D input for kernels {tuple(kernels.shape)}",
                                     (kernels.shape[1], '?', '?'), image.shape)
        if bias.shape != (kernels.shape[0],):
            raise ShapeMismatchError("Conv2D bias", (kernels.shape[0],), bias.shape)
        kh, kw = kernels.shape[2], kernels.shape[3]
        if kh > x.shape[2] or kw > x.shape[3]:
            raise ShapeMismatchError("Conv2D kernel larger than image", (kh, kw), x.shape[2:])
        windows = sliding_window_view(np.asarray(x, dtype=np.float64), (kh, kw), axis=(2, 3))
        # windows: (N, C, OH, OW, kh, kw) -> (N, OH, OW, O)
        y = np.tensordot(windows, np.asarray(kernels, dtype=np.float64), axes=([1, 4, 5], [1, 2, 3]))
        y = y.transpose(0, 3, 1, 2) + np.asarray(bias, dtype=np.float64)[None, :, None, None]
        y = y.astype(out_dtype)
        return y[0] if single else y

    @staticmethod
    def maxpool2x2(feature_map: np.ndarray) -> np.ndarray:
        """2×2 最大池化，空间维度必须为偶数"""
        if feature_map.ndim < 2 or feature_map.shape[-1] % 2 or feature_map.shape[-2] % 2:
            raise ShapeMismatchError("MaxPool2x2 needs even spatial dims", None, feature_map.shape)
        h, w = feature_map.shape[-2], feature_map.shape[-1]
        blocks = feature_map.reshape(feature_map.shape[:-2] + (h // 2, 2, w // 2, 2))
        return blocks.max(axis=(-3, -1))

    @staticmethod
    def softmax(logits: np.ndarray, out_dtype=np.float32) -> np.ndarray:
        """
        沿最后一维的 softmax，先减去最大值保证数值稳定
        """
        z = np.asarray(logits, dtype=np.float64)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return (e / e.sum(axis=-1, keepdims=True)).astype(out_dtype)

    @staticmethod
    def relu(x: np.ndarray) -> np.ndarray:
        return np.maximum(x, np.zeros((), dtype=x.dtype))

    @staticmethod
    def apply_activation(x: np.ndarray, kind: ActivationKind) -> np.ndarray:
        if kind == ActivationKind.RELU:
            return LayerService.relu(x)
        if kind == ActivationKind.SOFTMAX:
            return LayerService.softmax(x, out_dtype=x.dtype)
        return x

    # ==================== 反向（训练使用，float64） ====================

    @staticmethod
    def dense_backward(weight: np.ndarray, x: np.ndarray, grad_out: np.ndarray):
        """
        Args:
            weight: (out, in)
            x: (N, in) 前向输入
            grad_out: (N, out) 损失对预激活值的梯度
        Returns:
            (dW, db, dx)
        """
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
        grad_x = grad_out @ weight
        return grad_w, grad_b, grad_x

    @staticmethod
    def conv2d_backward(kernels: np.ndarray, x: np.ndarray, grad_out: np.ndarray):
        """
        Args:
            kernels: (O, C, kh, kw)
            x: (N, C, H, W)
            grad_out: (N, O, OH, OW)
        Returns:
            (dK, db, dx)
        """
        kh, kw = kernels.shape[2], kernels.shape[3]
        oh, ow = grad_out.shape[2], grad_out.shape[3]
        windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
        grad_k = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = grad_out.sum(axis=(0, 2, 3))
        grad_x = np.zeros_like(x)
        for i in range(kh):
            for j in range(kw):
                grad_x[:, :, i:i + oh, j:j + ow] += np.einsum('nohw,oc->nchw', grad_out, kernels[:, :, i, j])
        return grad_k, grad_b, grad_x

    @staticmethod
    def maxpool2x2_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        """梯度只回传给每个 2×2 窗口中第一个最大值位置"""
        n, c, h, w = x.shape
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        winner = blocks.argmax(axis=-1)
        grad_blocks = np.zeros(blocks.shape, dtype=grad_out.dtype)
        np.put_along_axis(grad_blocks, winner[..., None], grad_out[..., None], axis=-1)
        grad = grad_blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return grad.reshape(n, c, h, w)

    @staticmethod
    def relu_backward(pre_activation: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * (pre_activation > 0)
