"""Forward and backward kernels for the layer kinds of the engine.

Activations are NCHW float64 arrays; convolution weights use the
(s, s, c, m) layout of a raw convolutional layer.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from scipy.special import log_softmax

Array = NDArray[np.float64]


def conv_output_size(size: int, s: int, stride: int, padding: str) -> int:
    if padding == "same":
        return (size + stride - 1) // stride
    return (size - s) // stride + 1


def _pads(h: int, w: int, s: int, stride: int, padding: str) -> list[tuple[int, int]]:
    if padding != "same":
        return [(0, 0), (0, 0)]
    pads = []
    for size in (h, w):
        out = conv_output_size(size, s, stride, padding)
        total = max(0, (out - 1) * stride + s - size)
        pads.append((total // 2, total - total // 2))
    return pads


def _pad(x: Array, s: int, stride: int, padding: str) -> Array:
    if padding != "same":
        return x
    pads = _pads(x.shape[2], x.shape[3], s, stride, padding)
    return np.pad(x, ((0, 0), (0, 0), pads[0], pads[1]))


def _windows(xp: Array, s: int, stride: int, out_h: int, out_w: int) -> Array:
    # (B, C, Ho, Wo, s, s) view; no copy
    win = sliding_window_view(xp, (s, s), axis=(2, 3))[:, :, ::stride, ::stride]
    return win[:, :, :out_h, :out_w]


def conv2d_forward(
    x: Array, weight: Array, bias: Array, stride: int, padding: str
) -> tuple[Array, Array]:
    """Returns the output map and the padded input kept for backward."""
    s = weight.shape[0]
    out_h = conv_output_size(x.shape[2], s, stride, padding)
    out_w = conv_output_size(x.shape[3], s, stride, padding)
    xp = _pad(x, s, stride, padding)
    win = _windows(xp, s, stride, out_h, out_w)
    # contract (C, i, j) of the windows with (i, j, c) of the weight
    out = np.tensordot(win, weight, axes=([1, 4, 5], [2, 0, 1]))  # (B, Ho, Wo, M)
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    return np.ascontiguousarray(out), xp


def conv2d_backward(
    dout: Array, xp: Array, x_shape: tuple[int, ...], weight: Array, stride: int, padding: str
) -> tuple[Array, Array, Array]:
    """Gradients (dx, dweight, dbias) of a convolution."""
    s = weight.shape[0]
    out_h, out_w = dout.shape[2], dout.shape[3]
    win = _windows(xp, s, stride, out_h, out_w)
    dweight = np.tensordot(win, dout, axes=([0, 2, 3], [0, 2, 3]))  # (C, i, j, M)
    dweight = dweight.transpose(1, 2, 0, 3)
    dbias = dout.sum(axis=(0, 2, 3))

    dxp = np.zeros_like(xp)
    for i in range(s):
        for j in range(s):
            # (B, M, Ho, Wo) x (C, M) -> (B, C, Ho, Wo)
            contrib = np.tensordot(dout, weight[i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
            dxp[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += contrib
    (top, _), (left, _) = _pads(x_shape[2], x_shape[3], s, stride, padding)
    dx = dxp[:, :, top : top + x_shape[2], left : left + x_shape[3]]
    return np.ascontiguousarray(dx), np.ascontiguousarray(dweight), dbias


def maxpool_forward(x: Array, window: int, stride: int) -> tuple[Array, NDArray[np.intp]]:
    out_h = (x.shape[2] - window) // stride + 1
    out_w = (x.shape[3] - window) // stride + 1
    win = _windows(x, window, stride, out_h, out_w)
    flat = win.reshape(*win.shape[:4], window * window)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool_backward(
    dout: Array, argmax: NDArray[np.intp], x_shape: tuple[int, ...], window: int, stride: int
) -> Array:
    dx = np.zeros(x_shape)
    out_h, out_w = dout.shape[2], dout.shape[3]
    for i in range(window):
        for j in range(window):
            mask = argmax == i * window + j
            rows = slice(i, i + stride * out_h, stride)
            cols = slice(j, j + stride * out_w, stride)
            dx[:, :, rows, cols] += dout * mask
    return dx


def relu_forward(x: Array) -> Array:
    return np.maximum(x, 0.0)


def relu_backward(dout: Array, x: Array) -> Array:
    return dout * (x > 0)


def dense_forward(x: Array, weight: Array, bias: Array) -> Array:
    return x.reshape(x.shape[0], -1) @ weight + bias


def dense_backward(
    dout: Array, x: Array, weight: Array
) -> tuple[Array, Array, Array]:
    flat = x.reshape(x.shape[0], -1)
    dweight = flat.T @ dout
    dbias = dout.sum(axis=0)
    dx = (dout @ weight.T).reshape(x.shape)
    return dx, dweight, dbias


def softmax(logits: Array) -> Array:
    """Class probabilities per row of a (B, classes) logit batch."""
    return np.exp(log_softmax(logits, axis=1))


def softmax_cross_entropy(logits: Array, labels: NDArray[np.int64]) -> tuple[float, Array]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    batch = logits.shape[0]
    log_probs = log_softmax(logits, axis=1)
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / batch
