"""
Operaciones espaciales del motor: convolución 2-D, max-pool 2x2 y upsample

Todas trabajan sobre lotes en formato B x C x H x W.
"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 1) -> Tensor:
    """
    Convolución 2-D con stride 1 y padding de ceros simétrico

    Args:
        x: entrada B x C x H x W
        weight: kernel O x C x k x k
        bias: vector O (opcional)
        padding: ceros añadidos en cada borde
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d incompatible: entrada {x.shape}, kernel {weight.shape}")
    k_h, k_w = weight.shape[2:]
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))
    out_h, out_w = windows.shape[2], windows.shape[3]
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: kernel {weight.shape} mayor que la entrada {x.shape}")

    out_data = np.einsum("bchwij,ocij->bohw", windows, weight.data)
    parents: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv2d: bias {bias.shape} para kernel {weight.shape}")
        out_data = out_data + bias.data[None, :, None, None]
        parents = parents + (bias,)

    def backward(grad: np.ndarray) -> None:
        weight._accumulate(np.einsum("bchwij,bohw->ocij", windows, grad))
        if bias is not None:
            bias._accumulate(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            grad_padded = np.zeros_like(padded)
            for i in range(k_h):
                for j in range(k_w):
                    grad_padded[:, :, i:i + out_h, j:j + out_w] += np.einsum(
                        "bohw,oc->bchw", grad, weight.data[:, :, i, j]
                    )
            height, width = x.shape[2:]
            x._accumulate(grad_padded[:, :, padding:padding + height, padding:padding + width])

    return Tensor._make(out_data, parents, "conv2d", backward)


def max_pool2d(x: Tensor) -> Tensor:
    """Max-pool 2x2 con stride 2; en empates gana el primer elemento de la ventana"""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"max_pool2d requiere B x C x H x W con H, W pares, shape {x.shape}")
    batch, channels, height, width = x.shape
    cells = (
        x.data.reshape(batch, channels, height // 2, 2, width // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, height // 2, width // 2, 4)
    )
    winner = cells.argmax(axis=-1)
    out_data = np.take_along_axis(cells, winner[..., None], axis=-1)[..., 0]

    def backward(grad: np.ndarray) -> None:
        routed = np.zeros_like(cells)
        np.put_along_axis(routed, winner[..., None], grad[..., None], axis=-1)
        full = (
            routed.reshape(batch, channels, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height, width)
        )
        x._accumulate(full)

    return Tensor._make(out_data, (x,), "max_pool2d", backward)


def interpolation_matrix(size_in: int, size_out: int, mode: str) -> np.ndarray:
    """
    Matriz size_out x size_in que interpola un eje

    bilinear usa centros de píxel (align_corners=False) con recorte en los bordes.
    """
    if mode == "nearest":
        source = np.floor(np.arange(size_out) * size_in / size_out).astype(np.int64)
        matrix = np.zeros((size_out, size_in))
        matrix[np.arange(size_out), np.minimum(source, size_in - 1)] = 1.0
        return matrix
    if mode != "bilinear":
        raise ValueError(f"Modo de upsample desconocido: {mode}")

    position = (np.arange(size_out) + 0.5) * size_in / size_out - 0.5
    position = np.clip(position, 0.0, size_in - 1)
    low = np.floor(position).astype(np.int64)
    high = np.minimum(low + 1, size_in - 1)
    weight_high = position - low
    matrix = np.zeros((size_out, size_in))
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, low), 1.0 - weight_high)
    np.add.at(matrix, (rows, high), weight_high)
    return matrix


def upsample2d(x: Tensor, size: Tuple[int, int], mode: str = "bilinear") -> Tensor:
    """Reescalar B x C x H x W a B x C x size[0] x size[1]"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample2d requiere B x C x H x W, shape {x.shape}")
    rows = Tensor(interpolation_matrix(x.shape[2], size[0], mode))
    cols = Tensor(interpolation_matrix(x.shape[3], size[1], mode).T)
    return rows @ x @ cols
