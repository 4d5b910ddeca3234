"""Cylinder functions and the 2D Helmholtz fundamental solution.

Orders 0 and 1 go through the Cephes rational approximations exposed by
``scipy.special.j0/j1/y0/y1``; higher orders use the AMOS routines behind
``jv``/``yv``. All functions accept scalars or arrays and broadcast.
"""

import numpy as np
from scipy import special

MAX_ORDER = 80
COINCIDENCE_TOL = 1e-14


class CoincidenceError(ValueError):
    """Raised when the kernel is evaluated at (numerically) coincident points."""


def _check(order, arg):
    if not (0 <= order <= MAX_ORDER) or int(order) != order:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}], got {order}")
    arg = np.asarray(arg, dtype=float)
    if np.any(~(arg > 0)):
        raise ValueError("Bessel argument must be positive and finite")
    if np.any(~np.isfinite(arg)):
        raise ValueError("Bessel argument must be positive and finite")
    return int(order), arg


def _scalarize(out):
    return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out


def bessel_j(order, arg):
    """Bessel function of the first kind J_n(x) for integer n, x > 0."""
    n, x = _check(order, arg)
    if n == 0:
        out = special.j0(x)
    elif n == 1:
        out = special.j1(x)
    else:
        out = special.jv(n, x)
    return _scalarize(out)


def bessel_y(order, arg):
    """Bessel function of the second kind Y_n(x) for integer n, x > 0."""
    n, x = _check(order, arg)
    if n == 0:
        out = special.y0(x)
    elif n == 1:
        out = special.y1(x)
    else:
        out = special.yv(n, x)
    return _scalarize(out)


def hankel1(order, arg):
    """Hankel function of the first kind, J_n(x) + i Y_n(x)."""
    n, x = _check(order, arg)
    out = np.empty(x.shape, dtype=complex)
    out.real = bessel_j(n, x)
    out.imag = bessel_y(n, x)
    return _scalarize(out)


def _distance(x, z):
    diff = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    r = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(r < COINCIDENCE_TOL):
        raise CoincidenceError("kernel evaluated at coincident points")
    return diff, r


def fundamental_solution(k, x, z):
    """Outgoing fundamental solution (i/4) H_0^(1)(k|x - z|).

    ``x`` and ``z`` are points of shape ``(..., 2)``; they broadcast against
    each other, so ``x[:, None, :]`` and ``z[None, :, :]`` yield a kernel
    matrix.
    """
    _, r = _distance(x, z)
    return 0.25j * hankel1(0, k * r)


def grad_fundamental_solution(k, x, z):
    """Gradient of the fundamental solution in its first argument.

    Returns an array of shape ``(..., 2)``:
    -(ik/4) H_1^(1)(k|x - z|) (x - z)/|x - z|.
    """
    diff, r = _distance(x, z)
    scale = -0.25j * k * hankel1(1, k * r) / r
    return np.asarray(scale)[..., None] * diff
