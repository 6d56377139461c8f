"""Layer kernels with hand-written backward passes.

Tensors are batch-first numpy arrays.  Each layer caches what its backward
pass needs during ``forward`` and fills ``grads`` (parallel to ``params``)
during ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..ir import LayerSpec


class Layer:
    def __init__(self, spec: LayerSpec, params: list[np.ndarray]):
        self.spec = spec
        self.params = params
        self.grads = [np.zeros_like(p) for p in params]
        self._cache = None

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Identity(Layer):
    def forward(self, x, training, rng):
        return x

    def backward(self, g):
        return g


class Dense(Layer):
    def forward(self, x, training, rng):
        w, b = self.params
        self._cache = x
        return x @ w.T + b

    def backward(self, g):
        w, _ = self.params
        x = self._cache
        self.grads[0][...] = g.T @ x
        self.grads[1][...] = g.sum(axis=0)
        return g @ w


def _windows(x: np.ndarray, kernel, stride) -> np.ndarray:
    """(B, C, Ho, Wo, kh, kw) view of the pooling/convolution windows."""
    kh, kw = kernel
    sh, sw = stride
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::sh, ::sw]


def _scatter(dx: np.ndarray, patches: np.ndarray, stride, out_hw) -> None:
    """Add per-window contributions ``patches`` (B, C, Ho, Wo, kh, kw) into ``dx``."""
    sh, sw = stride
    ho, wo = out_hw
    kh, kw = patches.shape[-2:]
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += patches[..., i, j]


class Conv2D(Layer):
    def forward(self, x, training, rng):
        w, b = self.params
        ph, pw = self.spec.pad
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
        win = _windows(xp, self.spec.kernel, self.spec.stride)
        bsz, c, ho, wo, kh, kw = win.shape
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, c * kh * kw)
        out = cols @ w.reshape(w.shape[0], -1).T + b
        self._cache = (xp.shape, cols, (ho, wo))
        return out.reshape(bsz, ho, wo, -1).transpose(0, 3, 1, 2)

    def backward(self, g):
        w, _ = self.params
        xp_shape, cols, (ho, wo) = self._cache
        bsz, co = g.shape[:2]
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, co)
        self.grads[0][...] = (g2.T @ cols).reshape(w.shape)
        self.grads[1][...] = g2.sum(axis=0)
        dcols = (g2 @ w.reshape(co, -1)).reshape(bsz, ho, wo, *w.shape[1:])
        dxp = np.zeros(xp_shape, dtype=g.dtype)
        _scatter(dxp, dcols.transpose(0, 3, 1, 2, 4, 5), self.spec.stride, (ho, wo))
        ph, pw = self.spec.pad
        return dxp[:, :, ph:xp_shape[2] - ph, pw:xp_shape[3] - pw]


class MaxPool2D(Layer):
    def forward(self, x, training, rng):
        win = _windows(x, self.spec.kernel, self.spec.stride)
        bsz, c, ho, wo, kh, kw = win.shape
        flat = win.reshape(bsz, c, ho, wo, kh * kw)
        arg = flat.argmax(axis=-1)
        self._cache = (x.shape, arg, (ho, wo))
        return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(self, g):
        shape, arg, (ho, wo) = self._cache
        kh, kw = self.spec.kernel
        onehot = (arg[..., None] == np.arange(kh * kw)).astype(g.dtype)
        patches = (onehot * g[..., None]).reshape(*g.shape, kh, kw)
        dx = np.zeros(shape, dtype=g.dtype)
        _scatter(dx, patches, self.spec.stride, (ho, wo))
        return dx


class ReLU(Layer):
    def forward(self, x, training, rng):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype, copy=False)

    def backward(self, g):
        return g * self._cache


class PReLU(Layer):
    """Leaky ReLU with one learned slope per channel (first feature axis)."""

    def _alpha(self, x):
        (a,) = self.params
        return a.reshape((1, -1) + (1,) * (x.ndim - 2))

    def forward(self, x, training, rng):
        self._cache = x
        return np.where(x > 0, x, self._alpha(x) * x)

    def backward(self, g):
        x = self._cache
        neg = x <= 0
        axes = (0,) + tuple(range(2, x.ndim))
        self.grads[0][...] = (g * x * neg).sum(axis=axes)
        return np.where(neg, self._alpha(x) * g, g)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) while training."""

    def forward(self, x, training, rng):
        rate = self.spec.rate
        if not training or rate == 0:
            self._cache = None
            return x
        keep = rng.random(x.shape) >= rate
        self._cache = keep.astype(x.dtype) / x.dtype.type(1 - rate)
        return x * self._cache

    def backward(self, g):
        return g if self._cache is None else g * self._cache


class Flatten(Layer):
    def forward(self, x, training, rng):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._cache)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    def forward(self, x, training, rng):
        s = softmax(x)
        self._cache = s
        return s

    def backward(self, g):
        s = self._cache
        return s * (g - (g * s).sum(axis=-1, keepdims=True))


KERNELS = {
    "Input": Identity,
    "Dense": Dense,
    "Conv2D": Conv2D,
    "MaxPool2D": MaxPool2D,
    "ReLU": ReLU,
    "PReLU": PReLU,
    "Dropout": Dropout,
    "Flatten": Flatten,
    "Softmax": Softmax,
}


def init_params(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> list[np.ndarray]:
    """Uniform fan-in scaled initialisation.

    Weights use the He bound sqrt(6 / fan_in); biases the smaller
    1 / sqrt(fan_in), so that no blob region is a run of zero bytes.
    PReLU slopes start at 0.25.
    """
    shapes = spec.param_shapes
    if spec.kind == "PReLU":
        return [np.full(shapes[0], 0.25, dtype=dtype)]
    if not shapes:
        return []
    wshape, bshape = shapes
    fan_in = int(np.prod(wshape[1:]))
    w = rng.uniform(-1, 1, wshape) * np.sqrt(6.0 / fan_in)
    b = rng.uniform(-1, 1, bshape) / np.sqrt(fan_in)
    return [w.astype(dtype), b.astype(dtype)]
