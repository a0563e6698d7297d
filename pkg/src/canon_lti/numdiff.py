"""Central finite-difference derivatives used as independent oracles."""

from __future__ import annotations

import numpy as np

__all__ = ["central_gradient", "central_jacobian", "hessian_from_grad", "central_hessian"]


def _steps(x, h, relative):
    x = np.asarray(x, dtype=float)
    if relative:
        return h * np.maximum(1.0, np.abs(x))
    return np.full(x.shape, h)


def central_gradient(f, x, h=1e-6, relative=True) -> np.ndarray:
    """Gradient of scalar f by second-order central differences."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h, relative)
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += hs[i]
        xm[i] -= hs[i]
        g[i] = (f(xp) - f(xm)) / (2.0 * hs[i])
    return g


def central_jacobian(f, x, h=1e-6, relative=True) -> np.ndarray:
    """Jacobian of vector-valued f, shape (len(f(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h, relative)
    f0 = np.asarray(f(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += hs[i]
        xm[i] -= hs[i]
        J[:, i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * hs[i])
    return J


def hessian_from_grad(grad, x, h=1e-4, relative=True) -> np.ndarray:
    """Symmetrized Hessian from central differences of an analytic gradient."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h, relative)
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += hs[i]
        xm[i] -= hs[i]
        H[:, i] = (np.asarray(grad(xp)) - np.asarray(grad(xm))) / (2.0 * hs[i])
    return 0.5 * (H + H.T)


def central_hessian(f, x, h=1e-4, relative=True) -> np.ndarray:
    """Hessian of scalar f by nested central differences."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h, relative)
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                xp = x.copy()
                xm = x.copy()
                xp[i] += hs[i]
                xm[i] -= hs[i]
                H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / hs[i] ** 2
            else:
                xpp = x.copy()
                xpm = x.copy()
                xmp = x.copy()
                xmm = x.copy()
                xpp[i] += hs[i]
                xpp[j] += hs[j]
                xpm[i] += hs[i]
                xpm[j] -= hs[j]
                xmp[i] -= hs[i]
                xmp[j] += hs[j]
                xmm[i] -= hs[i]
                xmm[j] -= hs[j]
                H[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hs[i] * hs[j])
                H[j, i] = H[i, j]
    return H
