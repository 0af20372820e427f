"""Independent oracles shared by the tests."""

import math

import numpy as np


def numeric_grad(f, x, h=1e-5, index=None):
    """Central finite differences of scalar ``f`` w.r.t. ``x`` (modified in place, then restored)."""
    grad = np.zeros_like(x)
    coords = np.ndindex(x.shape) if index is None else index
    for i in coords:
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-7):
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def rrc_reference(t, beta):
    """Scalar root-raised-cosine, written out from the textbook closed form."""
    if abs(t) < 1e-12:
        return 1.0 - beta + 4.0 * beta / math.pi
    if abs(abs(t) - 1.0 / (4.0 * beta)) < 1e-12:
        return beta / math.sqrt(2.0) * (
            (1 + 2 / math.pi) * math.sin(math.pi / (4 * beta)) + (1 - 2 / math.pi) * math.cos(math.pi / (4 * beta))
        )
    num = math.sin(math.pi * t * (1 - beta)) + 4 * beta * t * math.cos(math.pi * t * (1 + beta))
    return num / (math.pi * t * (1 - (4 * beta * t) ** 2))
