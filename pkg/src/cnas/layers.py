"""Layer kinds for the task network.

All layers operate on row-major float arrays (NHWC for image tensors) and
implement an explicit forward/backward pair. Parameters default to float32;
a float64 instance can be built for gradient-check shadow computations by
passing dtype explicitly.
"""
import numpy as np

from .errors import ShapeError

KERNEL = 3  # fixed 3x3 kernels, stride 1, same padding
POOL = 2    # fixed 2x2 pooling, stride 2


def relu(x):
    return np.maximum(x, 0)


def he_uniform(shape, fan_in, rng, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(shape, fan_in, fan_out, rng, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: forward caches whatever backward needs."""

    def params(self):
        """List of parameter arrays, mutated in place by the optimizer."""
        return []

    def grads(self):
        """Gradient arrays aligned with params()."""
        return []

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def clone(self):
        raise NotImplementedError


class Dense(Layer):
    """Fully-connected layer, optionally followed by ReLU."""

    def __init__(self, in_dim, out_dim, activation="relu", dtype=np.float32):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.activation = activation
        self.W = np.zeros((self.in_dim, self.out_dim), dtype=dtype)
        self.b = np.zeros(self.out_dim, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        if self.activation == "relu":
            self.W = he_uniform(self.W.shape, self.in_dim, rng, self.W.dtype)
        else:
            self.W = glorot_uniform(self.W.shape, self.in_dim, self.out_dim,
                                    rng, self.W.dtype)
        self.b = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"Dense expects (N, {self.in_dim}), got {x.shape}")
        self._x = x
        z = x @ self.W + self.b
        if self.activation == "relu":
            self._mask = z > 0
            return z * self._mask
        return z

    def backward(self, dout):
        if self.activation == "relu":
            dout = dout * self._mask
        self.dW = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.W.T

    def clone(self):
        c = Dense(self.in_dim, self.out_dim, self.activation, self.W.dtype)
        c.W = self.W.copy()
        c.b = self.b.copy()
        return c


class Conv2D(Layer):
    """3x3 same-padding convolution with ReLU, stride 1, NHWC layout.

    Weights are stored HWIO: (3, 3, in_ch, out_ch).
    """

    def __init__(self, in_ch, out_ch, dtype=np.float32):
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.W = np.zeros((KERNEL, KERNEL, self.in_ch, self.out_ch),
                          dtype=dtype)
        self.b = np.zeros(self.out_ch, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        fan_in = KERNEL * KERNEL * self.in_ch
        self.W = he_uniform(self.W.shape, fan_in, rng, self.W.dtype)
        self.b = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def _im2col(self, xp, h, w):
        n = xp.shape[0]
        cols = np.empty((n, h, w, KERNEL, KERNEL, self.in_ch),
                        dtype=xp.dtype)
        for i in range(KERNEL):
            for j in range(KERNEL):
                cols[:, :, :, i, j, :] = xp[:, i:i + h, j:j + w, :]
        return cols

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_ch:
            raise ShapeError(
                f"Conv2D expects (N, H, W, {self.in_ch}), got {x.shape}")
        n, h, w, _ = x.shape
        pad = KERNEL // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        cols = self._im2col(xp, h, w)
        self._cols = cols.reshape(n * h * w, -1)
        self._shape = (n, h, w)
        z = self._cols @ self.W.reshape(-1, self.out_ch) + self.b
        z = z.reshape(n, h, w, self.out_ch)
        self._mask = z > 0
        return z * self._mask

    def backward(self, dout):
        n, h, w = self._shape
        dz = (dout * self._mask).reshape(n * h * w, self.out_ch)
        self.dW = (self._cols.T @ dz).reshape(self.W.shape)
        self.db = dz.sum(axis=0)
        dcols = (dz @ self.W.reshape(-1, self.out_ch).T).reshape(
            n, h, w, KERNEL, KERNEL, self.in_ch)
        pad = KERNEL // 2
        dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, self.in_ch),
                       dtype=dout.dtype)
        for i in range(KERNEL):
            for j in range(KERNEL):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pad:pad + h, pad:pad + w, :]

    def clone(self):
        c = Conv2D(self.in_ch, self.out_ch, self.W.dtype)
        c.W = self.W.copy()
        c.b = self.b.copy()
        return c


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2; odd trailing rows/cols are dropped."""

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"MaxPool2D expects NHWC, got {x.shape}")
        n, h, w, c = x.shape
        h2, w2 = h // POOL, w // POOL
        if h2 == 0 or w2 == 0:
            raise ShapeError(f"MaxPool2D input too small: {x.shape}")
        x = x[:, :h2 * POOL, :w2 * POOL, :]
        win = x.reshape(n, h2, POOL, w2, POOL, c)
        flat = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c,
                                                       POOL * POOL)
        self._argmax = flat.argmax(axis=-1)
        self._in_shape = (n, h, w, c)
        return flat.max(axis=-1)

    def backward(self, dout):
        n, h, w, c = self._in_shape
        h2, w2 = dout.shape[1], dout.shape[2]
        flat = np.zeros((n, h2, w2, c, POOL * POOL), dtype=dout.dtype)
        np.put_along_axis(flat, self._argmax[..., None], dout[..., None],
                          axis=-1)
        dx = flat.reshape(n, h2, w2, c, POOL, POOL).transpose(
            0, 1, 4, 2, 5, 3).reshape(n, h2 * POOL, w2 * POOL, c)
        if (h2 * POOL, w2 * POOL) != (h, w):
            full = np.zeros((n, h, w, c), dtype=dout.dtype)
            full[:, :h2 * POOL, :w2 * POOL, :] = dx
            dx = full
        return dx

    def clone(self):
        return MaxPool2D()


class Dropout(Layer):
    """Inverted dropout; identity at evaluation time."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def clone(self):
        return Dropout(self.rate)


class Flatten(Layer):
    def forward(self, x, training=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)

    def clone(self):
        return Flatten()


class SoftmaxOutput(Layer):
    """Final dense layer with softmax over class logits."""

    def __init__(self, in_dim, classes, dtype=np.float32):
        self.in_dim = int(in_dim)
        self.classes = int(classes)
        self.W = np.zeros((self.in_dim, self.classes), dtype=dtype)
        self.b = np.zeros(self.classes, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        self.W = glorot_uniform(self.W.shape, self.in_dim, self.classes,
                                rng, self.W.dtype)
        self.b = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"SoftmaxOutput expects (N, {self.in_dim}), got {x.shape}")
        self._x = x
        self.logits = x @ self.W + self.b
        return softmax(self.logits)

    def backward(self, dlogits):
        # Caller supplies the gradient w.r.t. the pre-softmax logits.
        self.dW = self._x.T @ dlogits
        self.db = dlogits.sum(axis=0)
        return dlogits @ self.W.T

    def clone(self):
        c = SoftmaxOutput(self.in_dim, self.classes, self.W.dtype)
        c.W = self.W.copy()
        c.b = self.b.copy()
        return c


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
