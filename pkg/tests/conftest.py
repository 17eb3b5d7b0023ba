"""Shared numeric helpers for the test suite."""

import numpy as np


def numerical_grad(loss_fn, array, eps=1e-5):
    """Central finite differences of a scalar function w.r.t. one array.

    Mutates entries of ``array`` in place (restoring them), so ``loss_fn``
    must recompute the forward pass from that same array on every call.
    """
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        original = flat[j]
        flat[j] = original + eps
        hi = loss_fn()
        flat[j] = original - eps
        lo = loss_fn()
        flat[j] = original
        gflat[j] = (hi - lo) / (2.0 * eps)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a| + |n|, floor), the usual gradcheck metric."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
