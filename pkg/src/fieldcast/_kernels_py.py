"""Pure Python implementations of the numerical kernels.

Mirrors the API of the compiled ``fieldcast._kernels`` extension. Used as
the fallback when the extension is not built; also handy as a readable
reference for what the compiled code does.
"""

import numpy as np
from scipy.signal import lfilter

__all__ = ["bspline_design", "eta2_recursion", "argarch_simulate_core"]


def bspline_design(knots, degree, x):
    """Evaluate the nonzero B-spline basis functions at each point.

    Parameters
    ----------
    knots : ndarray
        Full (clamped) nondecreasing knot vector.
    degree : int
        Spline degree p; each point has p+1 supported functions.
    x : ndarray
        Evaluation points, all inside [knots[p], knots[-p-1]].

    Returns
    -------
    starts : int64 ndarray, shape (n,)
        Index of the first supported basis function per point.
    values : float64 ndarray, shape (n, degree+1)
        Values of the supported functions, left to right.
    """
    knots = np.asarray(knots, dtype=np.float64)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    p = int(degree)
    n_basis = knots.size - p - 1
    # Knot span per point; points at the right endpoint fall in the last
    # nonempty span (limit from the left).
    spans = np.searchsorted(knots, x, side="right") - 1
    spans = np.clip(spans, p, n_basis - 1)

    n = x.size
    values = np.zeros((n, p + 1))
    values[:, 0] = 1.0
    left = np.empty((n, p + 1))
    right = np.empty((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.where(denom != 0.0, values[:, r] / np.where(denom == 0.0, 1.0, denom), 0.0)
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    starts = (spans - p).astype(np.int64)
    return starts, values


def eta2_recursion(drive, gamma, eta1_sq):
    """Run the conditional scale recursion eta2[t] = drive[t-1] + gamma*eta2[t-1].

    ``drive[t]`` holds omega + alpha*u[t]**2. Returns the full eta2 series of
    length ``len(drive) + 1`` starting at ``eta1_sq``.
    """
    drive = np.asarray(drive, dtype=np.float64)
    out = np.empty(drive.size + 1)
    out[0] = eta1_sq
    if drive.size:
        # IIR filter y[t] = x[t] + gamma*y[t-1] with y[-1] = eta1_sq
        out[1:], _ = lfilter([1.0], [1.0, -gamma], drive, zi=np.array([gamma * eta1_sq]))
    return out


def argarch_simulate_core(eps, psi, omega, alpha, gamma, eta1_sq, beta0):
    """Generate an AR(1)+GARCH(1,1) path from pre-drawn unit-scale shocks.

    ``eps`` are raw Student-t draws; the innovation at t is eta[t]*eps[t].

    Returns
    -------
    beta, u, eta2 : float64 ndarrays of the same length as ``eps``.
    """
    eps = np.asarray(eps, dtype=np.float64)
    n = eps.size
    beta = np.empty(n)
    u = np.empty(n)
    eta2 = np.empty(n)
    e2 = eta1_sq
    b = beta0
    for t in range(n):
        eta2[t] = e2
        ut = np.sqrt(e2) * eps[t]
        u[t] = ut
        b = psi * b + ut
        beta[t] = b
        e2 = omega + alpha * ut * ut + gamma * e2
    return beta, u, eta2
