"""Forward/backward building blocks for the from-scratch CNN engine.

Activations are plain numpy arrays in NCHW layout; each layer caches what its
backward pass needs. Math runs in whatever dtype the network was built with
(float32 for training, float64 for gradient checking); loss reductions are
always accumulated in double precision.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x: np.ndarray, weights: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Direct cross-correlation of NCHW input with (O, C, k, k) weights.

    Output spatial dims are floor((in + 2*pad - k)/stride) + 1.
    """
    n, c, h, w = x.shape
    o, cw, k, _ = weights.shape
    if cw != c:
        raise ValueError(f"weight channels {cw} != input channels {c}")
    cols, ho, wo = _im2col(x, k, stride, padding)
    out = cols @ weights.reshape(o, -1).T
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)


def conv2d_backward(
    x: np.ndarray,
    weights: np.ndarray,
    upstream_grad: np.ndarray,
    stride: int,
    padding: int,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of conv2d_forward w.r.t. input and weights."""
    n, c, h, w = x.shape
    o, _, k, _ = weights.shape
    _, _, ho, wo = upstream_grad.shape
    if cols is None:
        cols, _, _ = _im2col(x, k, stride, padding)
    dout = upstream_grad.transpose(0, 2, 3, 1).reshape(-1, o)
    grad_w = (dout.T @ cols).reshape(weights.shape)
    dcols = (dout @ weights.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    grad_x = _col2im(dcols, (n, c, h, w), k, stride, padding)
    return grad_x, grad_w


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    n, c, h, w = x.shape
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {k} too large for padded input {x.shape[2]}x{x.shape[3]}")
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (n, c, ho, wo, k, k) -> (n*ho*wo, c*k*k), contiguous for the BLAS matmul
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)
    return cols, ho, wo


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    _, ho, wo = dcols.shape[0], dcols.shape[1], dcols.shape[2]
    dxp = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    d = dcols.transpose(0, 3, 1, 2, 4, 5)  # (n, c, ho, wo, k, k)
    for ki in range(k):
        ys = slice(ki, ki + stride * (ho - 1) + 1, stride)
        for kj in range(k):
            xs = slice(kj, kj + stride * (wo - 1) + 1, stride)
            dxp[:, :, ys, xs] += d[:, :, :, :, ki, kj]
    if padding > 0:
        return dxp[:, :, padding:padding + h, padding:padding + w]
    return dxp


class Conv2d:
    """Convolution (no bias; a BatchNorm always follows in these nets)."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int | None = None, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.needs_input_grad = True  # cleared on a network's first layer
        self.w = np.zeros((out_channels, in_channels, kernel, kernel), dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self._x = None
        self._cols = None

    def params(self):
        return {"w": self.w}

    def grads(self):
        return {"w": self.gw}

    def buffers(self):
        return {}

    def forward(self, x, train: bool):
        self._x = x
        cols, ho, wo = _im2col(x, self.kernel, self.stride, self.padding)
        self._cols = cols
        out = cols @ self.w.reshape(self.out_channels, -1).T
        return out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dout):
        o = self.out_channels
        dout_mat = dout.transpose(0, 2, 3, 1).reshape(-1, o)
        self.gw[...] = (dout_mat.T @ self._cols).reshape(self.w.shape)
        dx = None
        if self.needs_input_grad:
            n, c, h, w = self._x.shape
            _, _, ho, wo = dout.shape
            dcols = (dout_mat @ self.w.reshape(o, -1)).reshape(n, ho, wo, c,
                                                               self.kernel, self.kernel)
            dx = _col2im(dcols, (n, c, h, w), self.kernel, self.stride, self.padding)
        self._x = None
        self._cols = None
        return dx


class BatchNorm2d:
    """Per-channel batch normalization over (n, h, w).

    Train mode normalizes by biased batch statistics and updates running stats
    with momentum 0.9 (running = 0.9*running + 0.1*batch); eval mode uses the
    running stats as constants.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.g_gamma = np.zeros_like(self.gamma)
        self.g_beta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.g_gamma, "beta": self.g_beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train: bool):
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train, x.shape)
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def backward(self, dout):
        xhat, inv_std, train, shape = self._cache
        self._cache = None
        self.g_gamma[...] = (dout * xhat).sum(axis=(0, 2, 3))
        self.g_beta[...] = dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.gamma[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        m = shape[0] * shape[2] * shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return {}

    def grads(self):
        return {}

    def buffers(self):
        return {}

    def forward(self, x, train: bool):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class MaxPool2d:
    """Max pooling; gradient routes to the first maximum in each window."""

    def __init__(self, kernel: int, stride: int, padding: int = 0):
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self._cache = None

    def params(self):
        return {}

    def grads(self):
        return {}

    def buffers(self):
        return {}

    def forward(self, x, train: bool):
        n, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        if p > 0:
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf)
        else:
            xp = x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n_, c_, ho, wo = win.shape[:4]
        flat = win.reshape(n, c, ho, wo, k * k)
        arg = flat.argmax(axis=4)
        out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
        self._cache = (arg, x.shape, xp.shape, ho, wo)
        return out

    def backward(self, dout):
        arg, x_shape, xp_shape, ho, wo = self._cache
        self._cache = None
        n, c, h, w = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        hp, wp = xp_shape[2], xp_shape[3]
        ki, kj = arg // k, arg % k
        iy = np.arange(ho)[None, None, :, None] * s + ki
        ix = np.arange(wo)[None, None, None, :] * s + kj
        base = (np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (hp * wp)
        idx = (base + iy * wp + ix).ravel()
        dxp = np.zeros(n * c * hp * wp, dtype=dout.dtype)
        np.add.at(dxp, idx, dout.ravel())
        dxp = dxp.reshape(n, c, hp, wp)
        if p > 0:
            return dxp[:, :, p:p + h, p:p + w]
        return dxp


class GlobalAvgPool:
    """(n, c, h, w) -> (n, c) spatial mean."""

    def __init__(self):
        self._hw = None

    def params(self):
        return {}

    def grads(self):
        return {}

    def buffers(self):
        return {}

    def forward(self, x, train: bool):
        self._hw = x.shape[2:]
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        h, w = self._hw
        return np.broadcast_to(dout[:, :, None, None], dout.shape + (h, w)).copy() / (h * w)


class FullyConnected:
    def __init__(self, in_features: int, out_features: int, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.w = np.zeros((in_features, out_features), dtype=dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def buffers(self):
        return {}

    def forward(self, x, train: bool):
        if x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.gw[...] = self._x.T @ dout
        self.gb[...] = dout.sum(axis=0)
        dx = dout @ self.w.T
        self._x = None
        return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch.

    Returns (loss, probabilities, dlogits); the loss reduction runs in double
    precision regardless of the logits dtype.
    """
    n = logits.shape[0]
    probs = softmax(logits)
    picked = np.clip(probs[np.arange(n), labels].astype(np.float64), 1e-300, None)
    loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits


class _Seq:
    """Shared plumbing for composites: ordered named children."""

    def __init__(self):
        self._children: list[tuple[str, object]] = []

    def add(self, name, layer):
        self._children.append((name, layer))
        return layer

    def params(self):
        out = {}
        for name, child in self._children:
            for k, v in child.params().items():
                out[f"{name}.{k}"] = v
        return out

    def grads(self):
        out = {}
        for name, child in self._children:
            for k, v in child.grads().items():
                out[f"{name}.{k}"] = v
        return out

    def buffers(self):
        out = {}
        for name, child in self._children:
            for k, v in child.buffers().items():
                out[f"{name}.{k}"] = v
        return out


class ResidualBlock(_Seq):
    """conv-BN-ReLU-conv-BN plus shortcut, ReLU after the add.

    The shortcut is a 1x1 projection conv + BN when the channel count or
    spatial size changes, identity otherwise.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, dtype=np.float32):
        super().__init__()
        self.conv1 = self.add("conv1", Conv2d(in_channels, out_channels, kernel, stride, dtype=dtype))
        self.bn1 = self.add("bn1", BatchNorm2d(out_channels, dtype=dtype))
        self.relu1 = ReLU()
        self.conv2 = self.add("conv2", Conv2d(out_channels, out_channels, kernel, 1, dtype=dtype))
        self.bn2 = self.add("bn2", BatchNorm2d(out_channels, dtype=dtype))
        self.relu2 = ReLU()
        if stride != 1 or in_channels != out_channels:
            self.proj = self.add("proj", Conv2d(in_channels, out_channels, 1, stride, padding=0, dtype=dtype))
            self.proj_bn = self.add("proj_bn", BatchNorm2d(out_channels, dtype=dtype))
        else:
            self.proj = None
            self.proj_bn = None

    def forward(self, x, train: bool):
        main = self.bn2.forward(
            self.conv2.forward(
                self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train),
                train),
            train)
        if self.proj is not None:
            short = self.proj_bn.forward(self.proj.forward(x, train), train)
        else:
            short = x
        return self.relu2.forward(main + short, train)

    def backward(self, dout):
        d = self.relu2.backward(dout)
        dmain = self.conv1.backward(
            self.bn1.backward(self.relu1.backward(self.conv2.backward(self.bn2.backward(d)))))
        if self.proj is not None:
            dshort = self.proj.backward(self.proj_bn.backward(d))
        else:
            dshort = d
        return dmain + dshort


class DenseLayer(_Seq):
    """Pre-activation bottleneck layer; output is concat(input, new features)."""

    def __init__(self, in_channels: int, bottleneck: int, growth: int, kernel: int = 3, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.bn1 = self.add("bn1", BatchNorm2d(in_channels, dtype=dtype))
        self.relu1 = ReLU()
        self.conv1 = self.add("conv1", Conv2d(in_channels, bottleneck, 1, 1, padding=0, dtype=dtype))
        self.bn2 = self.add("bn2", BatchNorm2d(bottleneck, dtype=dtype))
        self.relu2 = ReLU()
        self.conv2 = self.add("conv2", Conv2d(bottleneck, growth, kernel, 1, dtype=dtype))

    def forward(self, x, train: bool):
        new = self.conv2.forward(
            self.relu2.forward(
                self.bn2.forward(
                    self.conv1.forward(
                        self.relu1.forward(self.bn1.forward(x, train), train), train), train), train), train)
        return np.concatenate([x, new], axis=1)

    def backward(self, dout):
        dx_direct = dout[:, :self.in_channels]
        dnew = dout[:, self.in_channels:]
        dx_path = self.bn1.backward(
            self.relu1.backward(
                self.conv1.backward(
                    self.bn2.backward(self.relu2.backward(self.conv2.backward(dnew))))))
        return dx_direct + dx_path


class Transition(_Seq):
    """BN-ReLU-1x1 conv to a fixed channel count, then 2x2 max pool stride 2."""

    def __init__(self, in_channels: int, out_channels: int, dtype=np.float32):
        super().__init__()
        self.bn = self.add("bn", BatchNorm2d(in_channels, dtype=dtype))
        self.relu = ReLU()
        self.conv = self.add("conv", Conv2d(in_channels, out_channels, 1, 1, padding=0, dtype=dtype))
        self.pool = MaxPool2d(2, 2, 0)

    def forward(self, x, train: bool):
        return self.pool.forward(
            self.conv.forward(self.relu.forward(self.bn.forward(x, train), train), train), train)

    def backward(self, dout):
        return self.bn.backward(self.relu.backward(self.conv.backward(self.pool.backward(dout))))


class Network(_Seq):
    """An ordered chain of named layers with aggregated parameter access."""

    def forward(self, x, train: bool):
        for _, layer in self._children:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self._children):
            dout = layer.backward(dout)
        return dout

    def state_arrays(self):
        """Parameters plus buffers, the full serializable state."""
        out = dict(self.params())
        out.update(self.buffers())
        return out

    def load_state(self, arrays: dict):
        state = self.state_arrays()
        missing = set(state) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint missing arrays: {sorted(missing)[:4]}...")
        for name, arr in state.items():
            src = arrays[name]
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src.astype(arr.dtype)
