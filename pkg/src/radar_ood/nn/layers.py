"""Batched NHWC layers with explicit forward/backward passes.

Every layer maps ``forward(x, params) -> (y, cache)`` and
``backward(dy, cache, params, grads) -> dx``, accumulating parameter
gradients into ``grads`` under the layer's parameter names. Arrays carry a
leading batch axis; the single-sample functions below add/strip it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

KERNEL = 3


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, 9*C) patches of the zero-padded input, (ky, kx, c) order."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))  # (N, H, W, C, 3, 3)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, KERNEL * KERNEL * c)


def _check_kernel(x: np.ndarray, kernels: np.ndarray) -> None:
    if kernels.ndim != 4 or kernels.shape[:2] != (KERNEL, KERNEL):
        raise ValueError(f"kernels must be (3, 3, C_in, C_out), got {kernels.shape}")
    if x.ndim != 4 or x.shape[-1] != kernels.shape[2]:
        raise ValueError(f"input channels {x.shape[-1:]} do not match kernel C_in={kernels.shape[2]}")


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation, (N,H,W,C_in) -> (N,H,W,C_out)."""
    _check_kernel(x, kernels)
    n, h, w, _ = x.shape
    out = _im2col(x) @ kernels.reshape(-1, kernels.shape[3]) + bias
    return out.reshape(n, h, w, kernels.shape[3])


def _conv_input_grad(dy: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    # adjoint of same-padded correlation: correlate with the flipped, channel-swapped kernel
    return conv2d(dy, kernels[::-1, ::-1].transpose(0, 1, 3, 2), np.zeros(kernels.shape[2]))


def tconv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 same-padded transposed convolution (scatter form), (N,H,W,C_in) -> (N,H,W,C_out).

    Each input pixel spreads ``kernels[:, :, c_in, :]`` over its 3x3
    neighbourhood, so ``tconv2d(y, K.transpose(0,1,3,2))`` is the adjoint of
    ``conv2d(., K)``.
    """
    _check_kernel(x, kernels)
    return conv2d(x, kernels[::-1, ::-1], bias)


def maxpool2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool; returns (pooled, argmax in 0..3, row-major, first max wins)."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pooling needs even spatial dims, got {h}x{w}")
    a, b, cc, d = x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2]
    m = np.maximum(np.maximum(a, b), np.maximum(cc, d))
    idx = np.where(a == m, 0, np.where(b == m, 1, np.where(cc == m, 2, 3))).astype(np.int8)
    return m, idx


def maxpool2d_backward(dy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, h2, w2, c = dy.shape
    dx = np.zeros((n, 2 * h2, 2 * w2, c))
    for k, (r, s) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, r::2, s::2] = np.where(idx == k, dy, 0.0)
    return dx


def upsample2d(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 on the spatial axes of an (N,H,W,C) array."""
    n, h, w, c = x.shape
    return np.broadcast_to(x[:, :, None, :, None, :], (n, h, 2, w, 2, c)).reshape(n, 2 * h, 2 * w, c)


def upsample2d_backward(dy: np.ndarray) -> np.ndarray:
    n, h, w, c = dy.shape
    return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


# -- layer objects ----------------------------------------------------------------


@dataclass
class Layer:
    name: str = ""

    @property
    def param_names(self) -> tuple[str, ...]:
        return ()

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def forward(self, x, params):
        raise NotImplementedError

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        raise NotImplementedError


def _shift_sum(u: np.ndarray) -> np.ndarray:
    """out[p] = sum_d u_pad[p + d, d] for per-tap products u of shape (N, H, W, 9, C)."""
    n, h, w, _, c = u.shape
    up = np.zeros((n, h + 2, w + 2, KERNEL * KERNEL, c))
    up[:, 1:-1, 1:-1] = u
    out = np.zeros((n, h, w, c))
    for d in range(KERNEL * KERNEL):
        dy, dx = divmod(d, KERNEL)
        out += up[:, dy : dy + h, dx : dx + w, d]
    return out


def _col2im(dcols: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_im2col` for dcols of shape (N, H, W, 9, C)."""
    n, h, w, _, c = dcols.shape
    out = np.zeros((n, h + 2, w + 2, c))
    for d in range(KERNEL * KERNEL):
        dy, dx = divmod(d, KERNEL)
        out[:, dy : dy + h, dx : dx + w] += dcols[:, :, :, d]
    return out[:, 1:-1, 1:-1]


@dataclass
class Conv2D(Layer):
    """3x3 same-padded convolution; ``transposed`` gives the scatter-form transposed conv.

    Only (N, H, W, 9, min(C_in, C_out)) patch arrays are ever materialized:
    narrow-input layers unfold the input, narrow-output layers unfold the
    output gradient and shift-sum in the forward pass.
    """

    c_in: int = 1
    c_out: int = 1
    transposed: bool = False

    @property
    def param_names(self):
        return (f"{self.name}.kernel", f"{self.name}.bias")

    def param_shapes(self):
        return {f"{self.name}.kernel": (KERNEL, KERNEL, self.c_in, self.c_out), f"{self.name}.bias": (self.c_out,)}

    def _kernel(self, params):
        k = params[f"{self.name}.kernel"]
        return k[::-1, ::-1] if self.transposed else k

    @property
    def _unfold_input(self) -> bool:
        return self.c_in <= self.c_out

    def forward(self, x, params):
        k = self._kernel(params)
        _check_kernel(x, k)
        n, h, w, _ = x.shape
        bias = params[f"{self.name}.bias"]
        if self._unfold_input:
            cols = _im2col(x)
            y = (cols @ k.reshape(-1, self.c_out) + bias).reshape(n, h, w, self.c_out)
            return y, cols
        u = x.reshape(-1, self.c_in) @ k.transpose(2, 0, 1, 3).reshape(self.c_in, -1)
        y = _shift_sum(u.reshape(n, h, w, KERNEL * KERNEL, self.c_out)) + bias
        return y, x

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        k = self._kernel(params)
        n, h, w, _ = dy.shape
        dy2 = dy.reshape(-1, self.c_out)
        if self._unfold_input:
            cols = cache
            dk = (cols.T @ dy2).reshape(KERNEL, KERNEL, self.c_in, self.c_out)
            dx = None
            if need_input_grad:
                dcols = dy2 @ k.reshape(-1, self.c_out).T
                dx = _col2im(dcols.reshape(n, h, w, KERNEL * KERNEL, self.c_in))
        else:
            x = cache
            # dycols[q, e] = dy[q + e - 1]; kernel tap d pairs with e = 8 - d
            dycols = _im2col(dy)
            dk = (x.reshape(-1, self.c_in).T @ dycols).reshape(self.c_in, KERNEL, KERNEL, self.c_out)
            dk = dk[:, ::-1, ::-1].transpose(1, 2, 0, 3)
            dx = None
            if need_input_grad:
                kf = k[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, self.c_in)
                dx = (dycols @ kf).reshape(n, h, w, self.c_in)
        if self.transposed:
            dk = dk[::-1, ::-1]
        grads[f"{self.name}.kernel"] = grads.get(f"{self.name}.kernel", 0) + dk
        grads[f"{self.name}.bias"] = grads.get(f"{self.name}.bias", 0) + dy2.sum(axis=0)
        return dx


def TConv2D(name: str, c_in: int, c_out: int) -> Conv2D:
    return Conv2D(name=name, c_in=c_in, c_out=c_out, transposed=True)


@dataclass
class Dense(Layer):
    n_in: int = 1
    n_out: int = 1

    @property
    def param_names(self):
        return (f"{self.name}.kernel", f"{self.name}.bias")

    def param_shapes(self):
        return {f"{self.name}.kernel": (self.n_in, self.n_out), f"{self.name}.bias": (self.n_out,)}

    def forward(self, x, params):
        w = params[f"{self.name}.kernel"]
        if x.shape[-1] != w.shape[0]:
            raise ValueError(f"dense input width {x.shape[-1]} does not match weights {w.shape}")
        return x @ w + params[f"{self.name}.bias"], x

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        x = cache
        grads[f"{self.name}.kernel"] = grads.get(f"{self.name}.kernel", 0) + x.T @ dy
        grads[f"{self.name}.bias"] = grads.get(f"{self.name}.bias", 0) + dy.sum(axis=0)
        return dy @ params[f"{self.name}.kernel"].T if need_input_grad else None


@dataclass
class MaxPool2D(Layer):
    def forward(self, x, params):
        return maxpool2d(x)

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        return maxpool2d_backward(dy, cache)


@dataclass
class Upsample2D(Layer):
    def forward(self, x, params):
        return upsample2d(x), None

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        return upsample2d_backward(dy)


@dataclass
class Flatten(Layer):
    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        return dy.reshape(cache)


@dataclass
class Reshape(Layer):
    target: tuple[int, ...] = ()

    def forward(self, x, params):
        return x.reshape(x.shape[0], *self.target), x.shape

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        return dy.reshape(cache)


@dataclass
class ReLU(Layer):
    def forward(self, x, params):
        return relu(x), x > 0

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        # subgradient at exactly 0 is 0
        return dy * cache


@dataclass
class Sigmoid(Layer):
    def forward(self, x, params):
        y = sigmoid(x)
        return y, y

    def backward(self, dy, cache, params, grads, need_input_grad=True):
        return dy * cache * (1.0 - cache)


@dataclass
class Sequential:
    layers: list[Layer] = field(default_factory=list)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for layer in self.layers:
            shapes.update(layer.param_shapes())
        return shapes

    def forward(self, x, params, keep_cache=True):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, params)
            if keep_cache:
                caches.append(cache)
        return x, caches

    def backward(self, dy, caches, params, grads=None, need_input_grad=False):
        grads = {} if grads is None else grads
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            dy = self.layers[i].backward(dy, caches[i], params, grads, need_input_grad=need_input_grad or i > 0)
            if dy is None:
                break
        return grads, dy


# -- loss ---------------------------------------------------------------------------

BCE_CLAMP = 1e-7


def bce_loss(prediction: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    prediction = np.asarray(prediction, dtype=float)
    target = np.asarray(target, dtype=float)
    if prediction.shape != target.shape:
        raise ValueError(f"prediction shape {prediction.shape} != target shape {target.shape}")
    p = np.clip(prediction, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log1p(-p))))


def bce_grad(prediction: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d bce_loss / d prediction; zero where the clamp is active."""
    if prediction.shape != target.shape:
        raise ValueError(f"prediction shape {prediction.shape} != target shape {target.shape}")
    inside = (prediction > BCE_CLAMP) & (prediction < 1.0 - BCE_CLAMP)
    p = np.clip(prediction, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return inside * (p - target) / (p * (1.0 - p)) / prediction.size


# -- single-sample helpers ---------------------------------------------------------


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(H, W, C_in) -> (H, W, C_out)."""
    return conv2d(np.asarray(x, dtype=float)[None], kernels, bias)[0]


def tconv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return tconv2d(np.asarray(x, dtype=float)[None], kernels, bias)[0]


def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y, idx = maxpool2d(np.asarray(x, dtype=float)[None])
    return y[0], idx[0]


def upsample2d_forward(x: np.ndarray) -> np.ndarray:
    return upsample2d(np.asarray(x)[None])[0]


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or weights.shape != (x.shape[0], bias.shape[0]):
        raise ValueError(f"dense shapes disagree: input {x.shape}, weights {weights.shape}, bias {bias.shape}")
    return x @ weights + bias
