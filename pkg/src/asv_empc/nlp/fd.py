"""Central finite differences."""

import numpy as np


def _steps(x, step):
    return step * (1.0 + np.abs(x))


def gradient_fd(fun, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``fun``; per-coordinate step ``step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, step)
    g = np.empty_like(x)
    xp = x.copy()
    for i in range(x.size):
        xp[i] = x[i] + h[i]
        fp = float(fun(xp))
        xp[i] = x[i] - h[i]
        fm = float(fun(xp))
        xp[i] = x[i]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value while differencing coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def jacobian_fd(fun, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian (m x n) of vector ``fun``."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, step)
    m = np.atleast_1d(np.asarray(fun(x), dtype=float)).size
    jac = np.empty((m, x.size))
    xp = x.copy()
    for i in range(x.size):
        xp[i] = x[i] + h[i]
        fp = np.atleast_1d(np.asarray(fun(xp), dtype=float))
        xp[i] = x[i] - h[i]
        fm = np.atleast_1d(np.asarray(fun(xp), dtype=float))
        xp[i] = x[i]
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise FloatingPointError(f"non-finite function value while differencing coordinate {i}")
        jac[:, i] = (fp - fm) / (2.0 * h[i])
    return jac
