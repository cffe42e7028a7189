"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import backward


def numerical_grad(fn, tensor, h=1e-5):
    """Central finite differences of scalar ``fn()`` w.r.t. one tensor's entries.

    ``fn`` must read ``tensor.data`` afresh on every call and return a float.
    """
    grad = np.zeros(tensor.shape)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """Scale-aware discrepancy: ||a - n|| / max(||a||, ||n||, 1)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1.0)
    return np.linalg.norm(a - n) / denom


def check_gradients(loss_fn, tensors, h=1e-5, tol=1e-5):
    """Compare analytic and finite-difference gradients for each tensor.

    ``loss_fn`` rebuilds the graph from the current tensor values and
    returns the scalar loss Tensor. Returns the worst relative error.
    """
    for t in tensors:
        t.zero_grad()
    loss = loss_fn()
    backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        numeric = numerical_grad(lambda: float(loss_fn().data), t, h=h)
        err = relative_error(analytic, numeric)
        worst = max(worst, err)
        if err > tol:
            raise AssertionError(
                f"gradient mismatch for {t.name or t.shape}: relative error {err:.3e} > {tol}"
            )
    return worst
