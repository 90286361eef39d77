"""Layer primitives with hand-derived forward/backward passes.

Everything runs on plain numpy arrays.  A layer caches what its backward
pass needs during forward; backward takes the upstream gradient dL/dy and
returns dL/dx while accumulating (+=) parameter gradients into each Param,
so parameters shared between layers collect contributions from all of them.
Convolutions are stride-1 with zero "same" padding; pooling is 2x2x2
ceil-mode max, the only place spatial dims shrink.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, LabelError, ShapeError

# Cap on scratch im2col elements per chunk; batches larger than this are
# processed in slices so full-resolution volumes do not exhaust memory.
_COL_BUDGET = 1 << 24


class Param:
    """A trainable tensor with its accumulated gradient."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name, data):
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _vol2col(x, k, pad):
    """(N, C, D, H, W) -> (N, C*k^3, D*H*W) patch matrix for stride-1 same conv."""
    n, c, d, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    col = np.empty((n, c, k, k, k, d, h, w), dtype=x.dtype)
    for kd in range(k):
        for kh in range(k):
            for kw in range(k):
                col[:, :, kd, kh, kw] = xp[:, :, kd:kd + d, kh:kh + h, kw:kw + w]
    return col.reshape(n, c * k * k * k, d * h * w)


def _col2vol(col, shape, k, pad):
    """Adjoint of _vol2col: scatter-add patch columns back onto the grid."""
    n, c, d, h, w = shape
    col = col.reshape(n, c, k, k, k, d, h, w)
    xp = np.zeros((n, c, d + 2 * pad, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for kd in range(k):
        for kh in range(k):
            for kw in range(k):
                xp[:, :, kd:kd + d, kh:kh + h, kw:kw + w] += col[:, :, kd, kh, kw]
    return xp[:, :, pad:pad + d, pad:pad + h, pad:pad + w]


class Conv3d:
    """Stride-1 zero-padded cross-correlation with per-channel bias."""

    def __init__(self, c_in, c_out, k=3, rng=None, dtype=np.float32, kernel=None, bias=None):
        if k % 2 == 0 or k < 1:
            raise ConfigError(f"kernel size must be odd and positive, got {k}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.pad = (k - 1) // 2
        if kernel is not None:
            self.kernel, self.bias = kernel, bias  # aliased storage (weight sharing)
        else:
            fan_in = c_in * k ** 3
            self.kernel = Param("kernel", he_normal(rng, (c_out, c_in, k, k, k), fan_in, dtype))
            self.bias = Param("bias", np.zeros(c_out, dtype=dtype))
        self._x = None
        self._col = None

    def params(self):
        return [("kernel", self.kernel), ("bias", self.bias)]

    def buffers(self):
        return []

    def _chunk(self, n, spatial):
        per_item = self.c_in * self.k ** 3 * spatial
        return max(1, min(n, _COL_BUDGET // max(1, per_item)))

    def forward(self, x, train=False):
        if x.ndim != 5 or x.shape[1] != self.c_in:
            raise ShapeError(f"conv3d expected (N,{self.c_in},D,H,W), got {x.shape}")
        n, _, d, h, w = x.shape
        w2 = self.kernel.data.reshape(self.c_out, -1)
        y = np.empty((n, self.c_out, d, h, w), dtype=x.dtype)
        step = self._chunk(n, d * h * w)
        keep_col = train and step >= n  # whole batch in one chunk: reuse in backward
        for i in range(0, n, step):
            col = _vol2col(x[i:i + step], self.k, self.pad)
            out = y[i:i + step].reshape(-1, self.c_out, d * h * w)
            np.matmul(w2[None], col, out=out)
        if train:
            self._x = x
            self._col = col if keep_col else None
        y += self.bias.data.reshape(1, -1, 1, 1, 1)
        return y

    def backward(self, dy, need_dx=True):
        x = self._x
        if x is None:
            raise ShapeError("conv3d backward called before a train-mode forward")
        n, _, d, h, w = x.shape
        w2 = self.kernel.data.reshape(self.c_out, -1)
        self.bias.grad += dy.sum(axis=(0, 2, 3, 4))
        dw2 = np.zeros_like(w2)
        dx = np.empty_like(x) if need_dx else None
        step = self._chunk(n, d * h * w)
        for i in range(0, n, step):
            col = self._col if self._col is not None else _vol2col(x[i:i + step], self.k, self.pad)
            dy_m = dy[i:i + step].reshape(-1, self.c_out, d * h * w)
            dw2 += np.matmul(dy_m, col.transpose(0, 2, 1)).sum(axis=0)
            if need_dx:
                dcol = np.matmul(w2.T[None], dy_m)
                dx[i:i + step] = _col2vol(dcol, x[i:i + step].shape, self.k, self.pad)
        self.kernel.grad += dw2.reshape(self.kernel.shape)
        self._x = None
        self._col = None
        return dx


class MaxPool3d:
    """2x2x2 max pooling, stride 2, ceil mode (partial edge windows allowed)."""

    def forward(self, x, train=False):
        if x.ndim != 5:
            raise ShapeError(f"maxpool3d expected 5D input, got {x.shape}")
        n, c, d, h, w = x.shape
        od, oh, ow = -(-d // 2), -(-h // 2), -(-w // 2)
        pads = (2 * od - d, 2 * oh - h, 2 * ow - w)
        xp = np.pad(
            x,
            ((0, 0), (0, 0), (0, pads[0]), (0, pads[1]), (0, pads[2])),
            constant_values=-np.inf,
        )
        windows = (
            xp.reshape(n, c, od, 2, oh, 2, ow, 2)
            .transpose(0, 1, 2, 4, 6, 3, 5, 7)
            .reshape(n, c, od, oh, ow, 8)
        )
        argmax = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        if train:
            self._argmax = argmax
            self._in_shape = x.shape
        return y

    def backward(self, dy):
        n, c, d, h, w = self._in_shape
        od, oh, ow = dy.shape[2:]
        scatter = np.zeros((n, c, od, oh, ow, 8), dtype=dy.dtype)
        np.put_along_axis(scatter, self._argmax[..., None], dy[..., None], axis=-1)
        xp = (
            scatter.reshape(n, c, od, oh, ow, 2, 2, 2)
            .transpose(0, 1, 2, 5, 3, 6, 4, 7)
            .reshape(n, c, 2 * od, 2 * oh, 2 * ow)
        )
        return np.ascontiguousarray(xp[:, :, :d, :h, :w])

    def params(self):
        return []

    def buffers(self):
        return []


class BatchNorm:
    """Per-channel batch normalization over axis 1 with running statistics."""

    def __init__(self, channels, eps=1e-5, momentum=0.9, dtype=np.float32, gamma=None, beta=None):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        if gamma is not None:
            self.gamma, self.beta = gamma, beta  # aliased (weight sharing)
        else:
            self.gamma = Param("gamma", np.ones(channels, dtype=dtype))
            self.beta = Param("beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def _bshape(self, ndim):
        return (1, self.channels) + (1,) * (ndim - 2)

    def forward(self, x, train=False):
        if x.ndim < 2 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm expected channel axis of {self.channels}, got {x.shape}")
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = self._bshape(x.ndim)
        if train:
            count = x.size // self.channels
            if count < 2:
                raise ShapeError(f"train-mode batchnorm needs >=2 values per channel, got {count}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * var
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(bshape)) * invstd.reshape(bshape)
            self._xhat, self._invstd, self._count = xhat, invstd, count
        else:
            invstd = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean.reshape(bshape)) * invstd.reshape(bshape)
            self._xhat, self._invstd, self._count = xhat, invstd, None
        return self.gamma.data.reshape(bshape) * xhat + self.beta.data.reshape(bshape)

    def backward(self, dy):
        axes = (0,) + tuple(range(2, dy.ndim))
        bshape = self._bshape(dy.ndim)
        xhat, invstd = self._xhat, self._invstd
        self.beta.grad += dy.sum(axis=axes)
        self.gamma.grad += (dy * xhat).sum(axis=axes)
        dxhat = dy * self.gamma.data.reshape(bshape)
        if self._count is None:  # inference: running stats are constants
            return dxhat * invstd.reshape(bshape)
        m = self._count
        term = (
            m * dxhat
            - dxhat.sum(axis=axes).reshape(bshape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
        )
        return term * (invstd.reshape(bshape) / m)


class ReLU:
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask

    def params(self):
        return []

    def buffers(self):
        return []


class Dropout:
    """Inverted dropout: train-time masking and scaling, inference identity.

    Setting frozen=True reuses the last drawn mask, which the gradient
    checker needs to keep the forward map deterministic.
    """

    def __init__(self, p, rng=None):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self.frozen = False
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if not (self.frozen and self._mask is not None and self._mask.shape == x.shape):
            self._mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype)
        return x * self._mask / (1.0 - self.p)

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask / (1.0 - self.p)

    def params(self):
        return []

    def buffers(self):
        return []


class Dense:
    """Fully connected layer: y = x @ W.T + b."""

    def __init__(self, f_in, f_out, rng=None, dtype=np.float32, weight=None, bias=None):
        self.f_in, self.f_out = f_in, f_out
        if weight is not None:
            self.weight, self.bias = weight, bias
        else:
            self.weight = Param("weight", he_normal(rng, (f_out, f_in), f_in, dtype))
            self.bias = Param("bias", np.zeros(f_out, dtype=dtype))
        self._x = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.f_in:
            raise ShapeError(f"dense expected (N,{self.f_in}), got {x.shape}")
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dy):
        self.weight.grad += dy.T @ self._x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data


class Flatten:
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def params(self):
        return []

    def buffers(self):
        return []


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against one-hot labels.

    Returns (loss, dL/dlogits); computed with max subtraction so huge logit
    gaps neither overflow nor lose the zero-loss limit.
    """
    if logits.shape != labels.shape or logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"need matching (N,K>=2) logits/labels, got {logits.shape} vs {labels.shape}")
    if not np.all((labels == 0) | (labels == 1)) or not np.all(labels.sum(axis=1) == 1):
        raise LabelError("labels must be one-hot rows")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-(labels * logp).sum() / n)
    grad = (np.exp(logp) - labels) / n
    return loss, grad
