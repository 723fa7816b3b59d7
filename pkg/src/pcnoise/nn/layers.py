"""Differentiable layers with hand-written forward/backward passes.

Every layer caches what its backward pass needs during forward; backward
consumes the cache, accumulates parameter gradients into ``Param.grad``
(callers zero them between batches) and returns the gradient with respect
to the layer input.  All math is float64.

Layers keep persistent output buffers sized to the last input, so the
array a forward/backward call returns is only valid until the next call
on the same layer, and ``backward`` may mutate the gradient array passed
to it.  Model code treats gradients as single-consumer scratch.

Batch statistics are always computed over the sample at hand (the points
of one cloud, the edges of one graph, the pixels of one image), never
across a minibatch, so forward passes of different samples are independent.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A named trainable tensor paired with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _buffer(holder, name: str, shape: tuple[int, ...]) -> np.ndarray:
    buf = getattr(holder, name)
    if buf is None or buf.shape != shape:
        buf = np.empty(shape)
        setattr(holder, name, buf)
    return buf


class Linear:
    """Row-wise affine map (N, F_in) -> (N, F_out), shared across rows.

    Applied per point this is the "1x1 convolution" of pointwise MLPs.
    """

    def __init__(self, in_dim: int, out_dim: int, name: str = "linear"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Param(f"{name}.weight", np.zeros((out_dim, in_dim)))
        self.bias = Param(f"{name}.bias", np.zeros(out_dim))
        self._x: np.ndarray | None = None
        self._y: np.ndarray | None = None
        self._dx: np.ndarray | None = None

    def init(self, rng: np.random.Generator) -> None:
        self.weight.value[...] = glorot_uniform(
            rng, (self.out_dim, self.in_dim), self.in_dim, self.out_dim
        )
        self.bias.value[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected (N, {self.in_dim}) input, got {x.shape}")
        self._x = x
        y = _buffer(self, "_y", (x.shape[0], self.out_dim))
        np.matmul(x, self.weight.value.T, out=y)
        y += self.bias.value
        return y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._x
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        dx = _buffer(self, "_dx", (grad.shape[0], self.in_dim))
        return np.matmul(grad, self.weight.value, out=dx)

    def params(self) -> list[Param]:
        return [self.weight, self.bias]


class BatchNorm:
    """Per-channel normalization over the rows of an (N, F) tensor.

    Train mode normalizes with the statistics of the rows seen in this
    forward pass and folds them into the running estimates; eval mode
    normalizes with the running estimates and mutates nothing.
    """

    def __init__(self, n_features: int, momentum: float = 0.9, eps: float = 1e-5, name: str = "bn"):
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(f"{name}.gamma", np.ones(n_features))
        self.beta = Param(f"{name}.beta", np.zeros(n_features))
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self._xhat: np.ndarray | None = None
        self._y: np.ndarray | None = None
        self._tmp: np.ndarray | None = None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected (N, {self.n_features}) input, got {x.shape}")
        xhat = _buffer(self, "_xhat", x.shape)
        if train:
            mean = x.mean(axis=0)
            np.subtract(x, mean, out=xhat)
            # two-pass variance on the already centered values
            var = np.einsum("nf,nf->f", xhat, xhat) / x.shape[0]
            self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
            np.subtract(x, mean, out=xhat)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat *= inv_std
        self._cache = (inv_std, train, x.shape[0])
        y = _buffer(self, "_y", x.shape)
        np.multiply(xhat, self.gamma.value, out=y)
        y += self.beta.value
        return y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        inv_std, train, n = self._cache
        xhat = self._xhat
        self.gamma.grad += np.einsum("nf,nf->f", grad, xhat)
        self.beta.grad += grad.sum(axis=0)
        grad = np.multiply(grad, self.gamma.value, out=grad)  # now holds dxhat
        if not train:
            grad *= inv_std
            return grad
        # training statistics depend on x: standard batch-norm backward
        s1 = grad.sum(axis=0)
        s2 = np.einsum("nf,nf->f", grad, xhat)
        grad *= n
        grad -= s1
        tmp = _buffer(self, "_tmp", xhat.shape)
        np.multiply(xhat, s2, out=tmp)
        grad -= tmp
        grad *= inv_std / n
        return grad

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        base = self.gamma.name.rsplit(".", 1)[0]
        return [(f"{base}.running_mean", self.running_mean), (f"{base}.running_var", self.running_var)]

    def set_buffers(self, mean: np.ndarray, var: np.ndarray) -> None:
        self.running_mean = np.ascontiguousarray(mean, dtype=np.float64)
        self.running_var = np.ascontiguousarray(var, dtype=np.float64)


class ReLU:
    def __init__(self):
        self._x: np.ndarray | None = None
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        y = _buffer(self, "_y", x.shape)
        return np.maximum(x, 0.0, out=y)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        grad *= self._x > 0.0
        return grad


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    return np.maximum(x, 0.0)


def global_max_pool(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise max over the point axis of an (N, F) tensor.

    Returns the (F,) pooled vector and the (F,) argmax row indices; ties go
    to the lowest row index, which is where backward routes the gradient.
    """
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected nonempty (N, F) input, got {x.shape}")
    pooled = x.max(axis=0)
    # equality scan instead of argmax(axis=0), which walks the array with a
    # column stride; same first-maximizer tie rule, much friendlier access
    argmax = (x == pooled).argmax(axis=0)
    return pooled, argmax


class GlobalMaxPool:
    def __init__(self):
        self._argmax: np.ndarray | None = None
        self._dx: np.ndarray | None = None
        self._n: int = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        pooled, self._argmax = global_max_pool(x)
        self._n = x.shape[0]
        return pooled[None, :].copy()

    def backward(self, grad: np.ndarray) -> np.ndarray:
        dx = _buffer(self, "_dx", (self._n, grad.shape[1]))
        dx.fill(0.0)
        dx[self._argmax, np.arange(grad.shape[1])] = grad[0]
        return dx

    @property
    def last_argmax(self) -> np.ndarray:
        return self._argmax


def _im2col(x: np.ndarray) -> np.ndarray:
    """3x3 patches of a zero-padded (C, R, R) image as a (C*9, R*R) matrix."""
    c, r, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(c, 3, 3, r, r), strides=(s0, s1, s2, s1, s2), writeable=False
    )
    return windows.reshape(c * 9, r * r).copy()


class Conv2d:
    """3x3 cross-correlation, stride 1, zero padding 1: (C_in, R, R) -> (C_out, R, R)."""

    def __init__(self, in_ch: int, out_ch: int, name: str = "conv"):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = Param(f"{name}.kernel", np.zeros((out_ch, in_ch, 3, 3)))
        self.bias = Param(f"{name}.bias", np.zeros(out_ch))
        self._cols: np.ndarray | None = None
        self._r: int = 0

    def init(self, rng: np.random.Generator) -> None:
        fan_in, fan_out = self.in_ch * 9, self.out_ch * 9
        self.kernel.value[...] = glorot_uniform(
            rng, (self.out_ch, self.in_ch, 3, 3), fan_in, fan_out
        )
        self.bias.value[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        # zero padding keeps the 3x3 window defined down to R = 1, which the
        # pooled tail of small reduced configs relies on
        if x.ndim != 3 or x.shape[0] != self.in_ch or x.shape[1] != x.shape[2] or x.shape[1] < 1:
            raise ValueError(f"expected ({self.in_ch}, R, R) square image, got {x.shape}")
        self._r = x.shape[1]
        self._cols = _im2col(x)
        kmat = self.kernel.value.reshape(self.out_ch, self.in_ch * 9)
        y = kmat @ self._cols + self.bias.value[:, None]
        return y.reshape(self.out_ch, self._r, self._r)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        r = self._r
        gmat = grad.reshape(self.out_ch, r * r)
        self.kernel.grad += (gmat @ self._cols.T).reshape(self.kernel.value.shape)
        self.bias.grad += gmat.sum(axis=1)
        # dx is the full correlation of grad with the spatially flipped kernel
        krot = self.kernel.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        kmat2 = np.ascontiguousarray(krot).reshape(self.in_ch, self.out_ch * 9)
        return (kmat2 @ _im2col(grad)).reshape(self.in_ch, r, r)

    def params(self) -> list[Param]:
        return [self.kernel, self.bias]


class MaxPool2d:
    """Non-overlapping 2x2 max pooling: (C, R, R) -> (C, R/2, R/2), R even."""

    def __init__(self):
        self._argmax: np.ndarray | None = None
        self._shape: tuple[int, int] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        c, r, r2 = x.shape
        if r != r2 or r % 2 != 0:
            raise ValueError(f"expected square image with even side, got {x.shape}")
        win = x.reshape(c, r // 2, 2, r // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, r // 2, r // 2, 4)
        self._argmax = win.argmax(axis=3)  # first maximizer within each window
        self._shape = (c, r)
        return np.take_along_axis(win, self._argmax[..., None], axis=3)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        c, r = self._shape
        win = np.zeros((c, r // 2, r // 2, 4))
        np.put_along_axis(win, self._argmax[..., None], grad[..., None], axis=3)
        return win.reshape(c, r // 2, r // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, r, r)
