"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every learnable component in this package is expressed through the
operations here. Tensors wrap numpy arrays; each non-leaf tensor keeps
references to its parents and a closure that routes its adjoint backward.
Calling :func:`backward` on a scalar loss walks the graph in reverse
topological order and accumulates gradients on every ``requires_grad``
ancestor.

Design constraints:
  * float64 only (gradient checks demand the precision),
  * broadcasting limited to a trailing vector over leading axes
    (covers bias additions; no general broadcast engine),
  * single writer per graph: one training step builds and consumes one
    graph on one thread.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionError, ParameterError, TrainingDiverged, UsageError


class Tensor:
    """N-d float64 array, optionally tracked on the autodiff tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    # Convenience arithmetic; all routed through the traced ops below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording (inference / validation)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _make(data, parents, backward_fn):
    """Create a graph node; drops the tape linkage when no parent needs grads."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(tensor, grad):
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        tensor.grad = tensor.grad + grad


# ---------------------------------------------------------------------------
# Core operations


def matmul(a, b):
    """Matrix product; ``a`` may carry leading batch axes, ``b`` is 2-d."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward_fn(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(out_data, (a, b), backward_fn)


def _binary_shapes(a, b):
    """Equal shapes, or b a trailing vector broadcast over a's leading axes."""
    if a.shape == b.shape:
        return None
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return tuple(range(a.data.ndim - 1))
    raise DimensionError(f"elementwise: incompatible shapes {a.shape} and {b.shape}")


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    reduce_axes = _binary_shapes(a, b)

    def backward_fn(g):
        gb = g if reduce_axes is None else g.sum(axis=reduce_axes)
        return g, gb

    return _make(a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    reduce_axes = _binary_shapes(a, b)

    def backward_fn(g):
        gb = -g if reduce_axes is None else -g.sum(axis=reduce_axes)
        return g, gb

    return _make(a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    reduce_axes = _binary_shapes(a, b)
    out_data = a.data * b.data

    def backward_fn(g):
        ga = g * b.data
        gb = g * a.data
        if reduce_axes is not None:
            gb = gb.sum(axis=reduce_axes)
        return ga, gb

    return _make(out_data, (a, b), backward_fn)


def scale(a, c):
    """Multiply by a python constant (not a graph node)."""
    a = _as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a):
    a = _as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    a = _as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """Tanh approximation of the Gaussian error linear unit."""
    a = _as_tensor(a)
    x = a.data
    x_sq = x * x
    t = np.tanh(_GELU_C * (x + 0.044715 * x_sq * x))
    out = 0.5 * x * (1.0 + t)

    def backward_fn(g):
        d_inner = _GELU_C * (1.0 + 0.134145 * x_sq)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        return (g * d,)

    return _make(out, (a,), backward_fn)


def reshape(a, shape):
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    old_shape = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old_shape),))


def permute(a, axes):
    a = _as_tensor(a)
    axes = tuple(int(ax) for ax in axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of axes of {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def stack(tensors, axis=0):
    """Stack equal-shape tensors along a new axis."""
    tensors = [_as_tensor(t) for t in tensors]
    base = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != base:
            raise DimensionError(f"stack: mismatched shapes {base} and {t.shape}")
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        pieces = np.split(g, len(tensors), axis=axis)
        return tuple(p.reshape(base) for p in pieces)

    return _make(out_data, tuple(tensors), backward_fn)


def take_row(a, index, axis=0):
    """Select one index along ``axis``, dropping that axis."""
    a = _as_tensor(a)
    index = int(index)
    out_data = np.take(a.data, index, axis=axis)
    a_shape = a.shape

    def backward_fn(g):
        ga = np.zeros(a_shape)
        sl = [slice(None)] * len(a_shape)
        sl[axis] = index
        ga[tuple(sl)] = g
        return (ga,)

    return _make(out_data, (a,), backward_fn)


def mean_axis(a, axis):
    """Mean over one or more axes (removed from the result)."""
    a = _as_tensor(a)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    out_data = a.data.mean(axis=axes)
    a_shape = a.shape

    def backward_fn(g):
        g_exp = np.expand_dims(g, axis=axes)
        return (np.broadcast_to(g_exp, a_shape) / count,)

    return _make(out_data, (a,), backward_fn)


def total_sum(a):
    a = _as_tensor(a)
    a_shape = a.shape
    return _make(a.data.sum(), (a,), lambda g: (np.full(a_shape, g),))


def normalize_layer(x, gamma, beta, eps=1e-5):
    """Standardize the last axis to mean 0 / variance 1, then affine by gamma, beta."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"normalize_layer: gamma/beta must have shape ({d},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward_fn(g):
        leading = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=leading)
        g_beta = g.sum(axis=leading)
        gx_hat = g * gamma.data
        # classic layer-norm backward over the last axis
        gx = inv_std * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gamma, g_beta

    return _make(out_data, (x, gamma, beta), backward_fn)


def dropout(x, p, training, rng):
    """Inverted dropout: survivors scaled by 1/(1-p); identity in eval mode."""
    x = _as_tensor(x)
    p = float(p)
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return _make(x.data, (x,), lambda g: (g,))
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def loss_mse(pred, target):
    """Mean of squared differences over all elements."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"loss_mse: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    n = pred.size

    def backward_fn(g):
        base = g * 2.0 * diff / n
        return base, -base

    return _make(np.mean(diff * diff), (pred, target), backward_fn)


def loss_bce_logits(logits, labels):
    """Numerically stable mean binary cross-entropy on logits."""
    logits, labels = _as_tensor(logits), _as_tensor(labels)
    if logits.shape != labels.shape:
        raise DimensionError(
            f"loss_bce_logits: shapes {logits.shape} and {labels.shape} differ"
        )
    y = labels.data
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("loss_bce_logits: labels must be 0/1")
    x = logits.data
    # log(1 + exp(-|x|)) + max(x, 0) - x*y, stable for large |x|
    per_elem = np.logaddexp(0.0, -np.abs(x)) + np.maximum(x, 0.0) - x * y
    n = logits.size
    s = 1.0 / (1.0 + np.exp(-x))

    def backward_fn(g):
        return (g * (s - y) / n, np.zeros_like(y))

    return _make(per_elem.mean(), (logits, labels), backward_fn)


def backward(loss):
    """Populate ``grad`` on every requires_grad ancestor of a scalar loss."""
    if loss.shape != ():
        raise UsageError(f"backward requires a scalar, got shape {loss.shape}")
    # reverse topological order via iterative DFS
    order = []
    visited = set()
    stack_ = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack_.append((parent, False))

    loss.grad = np.ones(())
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad:
                _accumulate(parent, g)


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam with bias correction, applied in place to a fixed parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(
                    f"non-finite gradient in parameter {p.name or i} at step {self.t}"
                )
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_grad_norm(params, max_norm=5.0):
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm
