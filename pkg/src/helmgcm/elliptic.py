"""Dirichlet problems ``Lap w - p . grad w = f`` for complex data on a box grid.

Second-order finite differences on the nodes of a :class:`~helmgcm.grid.Grid3`:
the 7-point Laplacian and centred first differences for the drift. Boundary
nodes carry the Dirichlet trace, interior nodes are unknowns. The system is
solved by right-preconditioned GMRES with the exact inverse of the discrete
Laplacian (a type-I sine transform) as preconditioner; without drift that
preconditioner is the solution and no iteration is needed.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .forward import ConvergenceError
from .grid import Grid3

log = logging.getLogger(__name__)

_INT = (slice(1, -1),) * 3


def _shift(a: np.ndarray, axis: int, step: int) -> np.ndarray:
    """Interior view of ``a`` displaced by ``step`` nodes along ``axis``."""
    sl = [slice(1, -1)] * 3
    sl[axis] = slice(1 + step, a.shape[axis] - 1 + step)
    return a[tuple(sl)]


def apply_operator(w: np.ndarray, grid: Grid3, p_grad: np.ndarray | None = None) -> np.ndarray:
    """``Lap w - p . grad w`` at the interior nodes of ``grid``."""
    out = np.zeros(tuple(n - 2 for n in grid.shape), dtype=np.result_type(w, complex))
    for a, h in enumerate(grid.spacing):
        fwd, bwd = _shift(w, a, 1), _shift(w, a, -1)
        out += (fwd - 2.0 * w[_INT] + bwd) / (h * h)
        if p_grad is not None:
            out -= p_grad[a][_INT] * (fwd - bwd) / (2.0 * h)
    return out


class _LaplaceInverse:
    """Exact inverse of the interior 7-point Laplacian with zero Dirichlet data."""

    def __init__(self, grid: Grid3):
        m = [n - 2 for n in grid.shape]
        lam = 0.0
        for a, (n, h) in enumerate(zip(m, grid.spacing)):
            j = np.arange(1, n + 1)
            ev = (2.0 * np.cos(np.pi * j / (n + 1)) - 2.0) / (h * h)
            shape = [1, 1, 1]
            shape[a] = n
            lam = lam + ev.reshape(shape)
        self.eigenvalues = lam

    def __call__(self, r: np.ndarray) -> np.ndarray:
        c = sfft.dstn(r, type=1, workers=-1)
        c /= self.eigenvalues
        return sfft.idstn(c, type=1, workers=-1, overwrite_x=True)


def _lift(grid: Grid3, mu) -> np.ndarray:
    w = np.zeros(grid.shape, dtype=complex)
    if mu is None:
        return w
    mu = np.asarray(mu)
    if mu.shape != grid.shape:
        raise ValueError(f"boundary trace shape {mu.shape} does not match the grid {grid.shape}")
    bmask = grid.boundary_mask()
    if not np.all(np.isfinite(mu[bmask])):
        raise ValueError("boundary trace must be finite")
    w[bmask] = mu[bmask]
    return w


def solve_dirichlet(p_grad: np.ndarray | None, f, mu, grid: Grid3, tol: float = 1e-8,
                    max_iter: int = 2000, restart: int = 40, return_info: bool = False):
    """Solve ``Lap w - p_grad . grad w = f`` in the interior, ``w = mu`` on the boundary.

    Parameters
    ----------
    p_grad : (3, nx, ny, nz) array or None
        Drift vector field; ``None`` means no drift.
    f : array or scalar
        Right-hand side; only interior nodes are used.
    mu : array or None
        Dirichlet trace as a volume array; only boundary nodes are read.
        ``None`` means homogeneous data.
    tol : float
        Relative residual ``||A w - b|| / ||b||`` of the interior system.

    Returns
    -------
    w : complex array of ``grid.shape``
    info : dict, only with ``return_info``
        ``iterations`` and ``residual``.

    Raises
    ------
    ConvergenceError
        If GMRES stops above ``tol``.
    """
    if min(grid.shape) < 3:
        raise ValueError("the grid needs an interior")
    w = _lift(grid, mu)
    f_int = np.broadcast_to(np.asarray(f), grid.shape)[_INT]
    if p_grad is not None:
        p_grad = np.asarray(p_grad)
        if p_grad.shape != (3,) + grid.shape:
            raise ValueError("drift field must have shape (3, nx, ny, nz)")
        size = float(np.max(np.abs(p_grad))) * max(grid.spacing)
        if size > 1.0:
            warnings.warn(f"drift is large relative to the mesh (h*|p| = {size:.2f}); "
                          "the discrete problem may lose its diagonal dominance",
                          RuntimeWarning, stacklevel=2)
    b = f_int - apply_operator(w, grid, p_grad)
    bnorm = np.linalg.norm(b)
    info = {"iterations": 0, "residual": 0.0}
    if bnorm == 0.0:
        return (w, info) if return_info else w
    inv = _LaplaceInverse(grid)
    shape = b.shape
    if p_grad is None:
        x = inv(b)
    else:
        n = b.size
        inner = np.zeros(grid.shape, dtype=complex)

        def matvec(y):
            inner[_INT] = inv(y.reshape(shape))
            return apply_operator(inner, grid, p_grad).ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=complex)
        count = [0]

        def tick(_):
            count[0] += 1

        y, _ = gmres(A, b.ravel(), rtol=tol, atol=0.0, restart=restart,
                     maxiter=max(1, -(-max_iter // restart)), callback=tick,
                     callback_type="pr_norm")
        x = inv(y.reshape(shape))
        info["iterations"] = count[0]
    w[_INT] = x
    res = float(np.linalg.norm(f_int - apply_operator(w, grid, p_grad)) / bnorm)
    info["residual"] = res
    # the sine-transform path is exact up to rounding, hence the slack
    if res > max(tol, 1e-10):
        raise ConvergenceError("elliptic GMRES did not converge", res, info["iterations"])
    log.debug("dirichlet solve: %d iterations, residual %.2e", info["iterations"], res)
    return (w, info) if return_info else w


def solve_laplace_component(boundary, grid: Grid3, tol: float = 1e-8) -> np.ndarray:
    """Discrete harmonic extension of a boundary trace."""
    return solve_dirichlet(None, 0.0, boundary, grid, tol=tol)
