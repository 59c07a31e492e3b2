"""Lippmann-Schwinger forward solver for the 3D Helmholtz equation.

The volume potential ``k^2 int Phi(x - y) f(y) dy`` is discretised with
Vainikko's periodisation: the kernel is cut off smoothly beyond the domain
diameter, periodised, and applied to the trigonometric interpolant of the
nodal values. The resulting discrete operator is a convolution with weights
``G_d`` that are the inverse DFT of the exact Fourier coefficients of the
truncated kernel. Those weights are tabulated once per (grid, k) and then
applied by zero-padded FFT convolution, so no periodic wrap-around enters the
result on the physical grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import CoefficientField, Grid3
from .measurements import FrequencyGrid, MeasurementSet, PlaneGrid

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def green_kernel(r, k: float):
    """Outgoing fundamental solution ``exp(i k r) / (4 pi r)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("the Green's function is singular at r <= 0")
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


def radial_cutoff(r, r0: float, r1: float):
    """C-infinity cutoff: 1 for ``r <= r0``, 0 for ``r >= r1``."""
    t = np.clip((np.asarray(r, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)

    def bump(s):
        with np.errstate(divide="ignore"):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a, b = bump(1.0 - t), bump(t)
    return a / (a + b)


def truncated_kernel_spectrum(rho, k: float, r0: float, r1: float | None = None,
                              order: int = 10) -> np.ndarray:
    """Fourier transform of ``Phi(x) * cutoff(|x|)`` evaluated at ``|xi| = rho``.

    For a radial function the transform reduces to
    ``int_0^r1 exp(i k r) cutoff(r) r sinc(rho r) dr``, which is evaluated by
    composite Gauss-Legendre quadrature with panels short enough to resolve
    the oscillation at the largest ``rho``. ``r1=None`` means a sharp cutoff
    at ``r0``.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    sharp = r1 is None
    r_end = r0 if sharp else r1
    x, w = np.polynomial.legendre.leggauss(order)
    n_panels = max(8, int(math.ceil((rho.max() + abs(k)) * r_end / 8.0)))
    if not sharp:
        n_panels = max(n_panels, int(math.ceil(16 * r_end / (r1 - r0))))
    edges = np.linspace(0.0, r_end, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wq = (half[:, None] * w[None, :]).ravel()
    weight = wq * np.exp(1j * k * r) * (1.0 if sharp else radial_cutoff(r, r0, r1))
    out = np.empty(rho.shape, dtype=complex)
    zero = rho == 0
    out[zero] = np.sum(weight * r)
    nz = np.flatnonzero(~zero)
    chunk = max(1, 2_000_000 // r.size)
    for start in range(0, nz.size, chunk):
        sel = nz[start:start + chunk]
        out[sel] = (np.sin(np.outer(rho[sel], r)) @ weight) / rho[sel]
    return out


@dataclass(frozen=True)
class _WeightTable:
    """Convolution weights ``k^2 G_d`` for offsets ``|d_a| <= half`` (octant, by symmetry)."""

    k: float
    h: float
    period_nodes: int
    r0: float
    r1: float
    weights: np.ndarray = field(repr=False)

    def lookup(self, d0, d1, d2) -> np.ndarray:
        return self.weights[np.ix_(np.abs(d0), np.abs(d1), np.abs(d2))]


@lru_cache(maxsize=4)
def _weight_table(k: float, h: float, extent: tuple[float, float, float],
                  ramp: float = 0.25) -> _WeightTable:
    edges = np.asarray(extent)
    r0 = float(np.linalg.norm(edges))
    r1 = (1.0 + ramp) * r0
    # images of the cut-off kernel must not reach any pair of domain nodes
    min_nodes = int(math.ceil((r1 + edges.max()) / h)) + 1
    M = sfft.next_fast_len(min_nodes + (min_nodes % 2))
    while M % 2:
        M = sfft.next_fast_len(M + 1)
    half = M // 2
    m = np.arange(half + 1)
    sq = m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2
    rho = (2.0 * np.pi / (M * h)) * np.sqrt(np.arange(sq.max() + 1, dtype=float))
    spectrum = truncated_kernel_spectrum(rho, k, r0, r1)
    # even symmetry in every axis turns the inverse DFT into a DCT-I on the octant
    G = sfft.dctn(spectrum[sq], type=1, workers=-1) / float(M) ** 3
    log.debug("weight table k=%.4f h=%.4g: period %d nodes, r0=%.3f r1=%.3f", k, h, M, r0, r1)
    return _WeightTable(k, h, M, r0, r1, (k * k) * G)


def weight_table(grid: Grid3, k: float) -> _WeightTable:
    if not grid.is_uniform():
        raise ValueError(f"the periodised kernel needs equal spacing on all axes, got {grid.spacing}")
    h = grid.spacing[0]
    extent = tuple(round(float(e), 12) for e in grid.box.edges)
    return _weight_table(round(float(k), 14), round(h, 14), extent)


class _Convolution:
    """Linear (non-periodic) convolution from an index block of the grid to another."""

    def __init__(self, table: _WeightTable, src_lo, src_shape, tgt_lo, tgt_shape, min_shape=None):
        self.src_shape = tuple(int(n) for n in src_shape)
        self.tgt_shape = tuple(int(n) for n in tgt_shape)
        L, pos, idx, out = [], [], [], []
        for a in range(3):
            need = self.src_shape[a] + self.tgt_shape[a] - 1
            if min_shape is not None:
                need = max(need, int(min_shape[a]))
            La = sfft.next_fast_len(need)
            d = np.arange(tgt_lo[a] - (src_lo[a] + self.src_shape[a] - 1),
                          tgt_lo[a] + self.tgt_shape[a] - src_lo[a])
            if np.abs(d).max() > table.weights.shape[a] - 1:
                raise ValueError("offsets exceed the tabulated kernel extent")
            L.append(La)
            pos.append(d % La)
            idx.append(d)
            out.append((tgt_lo[a] - src_lo[a] + np.arange(self.tgt_shape[a])) % La)
        self.shape = tuple(L)
        kern = np.zeros(self.shape, dtype=complex)
        kern[np.ix_(*pos)] = table.lookup(*idx)
        self.kernel_hat = sfft.fftn(kern, workers=-1)
        self._out = np.ix_(*out)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.src_shape:
            raise ValueError(f"source block {x.shape} != {self.src_shape}")
        X = sfft.fftn(x, s=self.shape, workers=-1)
        X *= self.kernel_hat
        return sfft.ifftn(X, workers=-1, overwrite_x=True)[self._out]


@dataclass(frozen=True)
class PeriodizedKernel:
    """Spectral representation of ``k^2 Phi`` on a zero-padded copy of ``grid``.

    ``spectral_values`` are the DFT coefficients, on the padded grid of shape
    ``padded_shape`` (at least twice ``grid.shape`` per axis), of the discrete
    convolution weights.
    """

    grid: Grid3
    k: float
    padded_shape: tuple[int, int, int]
    spectral_values: np.ndarray = field(repr=False)
    _conv: _Convolution = field(repr=False, compare=False)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self._conv(f)


def assemble_periodized_kernel(grid: Grid3, k: float) -> PeriodizedKernel:
    table = weight_table(grid, k)
    n = grid.shape
    conv = _Convolution(table, (0, 0, 0), n, (0, 0, 0), n, min_shape=[2 * m for m in n])
    return PeriodizedKernel(grid, float(k), conv.shape, conv.kernel_hat, conv)


def apply_ls_operator(u: np.ndarray, beta_hat: np.ndarray, kernel: PeriodizedKernel) -> np.ndarray:
    """``(K u)(x) = k^2 int Phi(x, y) beta_hat(y) u(y) dy`` at every grid node."""
    if u.shape != kernel.grid.shape or beta_hat.shape != kernel.grid.shape:
        raise ValueError("u, beta_hat and the kernel must share one grid")
    return kernel(beta_hat * u)


def incident_field(grid: Grid3, k: float) -> np.ndarray:
    z = grid.axis(2)
    return np.broadcast_to(np.exp(1j * k * z), grid.shape).astype(complex)


def _support_box(mask: np.ndarray):
    idx = np.nonzero(mask)
    lo = tuple(int(i.min()) for i in idx)
    hi = tuple(int(i.max()) + 1 for i in idx)
    return lo, hi


def ls_residual(u: np.ndarray, beta_hat: np.ndarray, kernel: PeriodizedKernel) -> float:
    """``||u - u0 - K u|| / ||u0||`` on the kernel's grid."""
    u0 = incident_field(kernel.grid, kernel.k)
    r = u - u0 - apply_ls_operator(u, beta_hat, kernel)
    return float(np.linalg.norm(r) / np.linalg.norm(u0))


def solve_ls(beta_hat: np.ndarray, k: float, grid: Grid3, tol: float = 1e-6,
             max_iter: int = 500, restart: int = 50) -> np.ndarray:
    """Total field ``u`` solving ``(I - K) u = exp(i k x3)`` on the grid.

    Only nodes where ``beta_hat`` is nonzero couple, so GMRES runs on the
    bounding box of its support; the field elsewhere follows from one more
    convolution. The relative residual on the full grid is bounded by the
    one on the support box.

    Raises
    ------
    ConvergenceError
        If GMRES does not reach ``tol`` within ``max_iter`` iterations.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    beta_hat = np.asarray(beta_hat)
    if beta_hat.shape != grid.shape:
        raise ValueError("beta_hat does not match the grid")
    if not np.all(np.isfinite(beta_hat)):
        raise ValueError("beta_hat must be finite")
    u0 = incident_field(grid, k)
    mask = beta_hat != 0
    if not mask.any():
        return u0
    table = weight_table(grid, k)
    lo, hi = _support_box(mask)
    shape = tuple(b - a for a, b in zip(lo, hi))
    block = tuple(slice(a, b) for a, b in zip(lo, hi))
    bh = beta_hat[block]
    conv = _Convolution(table, lo, shape, lo, shape)
    n = int(np.prod(shape))

    def matvec(x):
        x = x.reshape(shape)
        return (x - conv(bh * x)).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    b = u0[block].ravel()
    count = [0]

    def tick(_):
        count[0] += 1

    x, _ = gmres(A, b, rtol=tol, atol=0.0, restart=min(restart, n),
                 maxiter=max(1, math.ceil(max_iter / restart)),
                 callback=tick, callback_type="pr_norm")
    res = float(np.linalg.norm(b - A.matvec(x)) / np.linalg.norm(b))
    if res > tol:
        raise ConvergenceError("Lippmann-Schwinger GMRES did not converge", res, count[0])
    log.debug("LS solve k=%.4f: block %s, %d iterations, residual %.2e", k, shape, count[0], res)
    u_block = x.reshape(shape)
    outer = _Convolution(table, lo, shape, (0, 0, 0), grid.shape)
    return u0 + outer(bh * u_block)


def evaluate_exterior(u: np.ndarray, beta_hat: np.ndarray, k: float, points,
                      grid: Grid3) -> np.ndarray:
    """Total field at points outside the grid box by midpoint quadrature."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    box = grid.box
    inside = box.contains(pts[:, 0], pts[:, 1], pts[:, 2], closed=True)
    if np.any(inside):
        raise ValueError(f"{int(inside.sum())} evaluation point(s) lie inside the domain")
    out = np.exp(1j * k * pts[:, 2])
    src = np.nonzero(beta_hat)
    if src[0].size == 0:
        return out
    ax = grid.axes
    y = np.stack([ax[a][src[a]] for a in range(3)], axis=1)
    density = (k * k * grid.cell_volume) * beta_hat[src] * u[src]
    chunk = max(1, 4_000_000 // y.shape[0])
    for start in range(0, pts.shape[0], chunk):
        p = pts[start:start + chunk]
        r = np.sqrt(((p[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1))
        out[start:start + chunk] += green_kernel(r, k) @ density
    return out


def simulate_measurements(coef: CoefficientField, k_grid, plane: PlaneGrid,
                          tol: float = 1e-6, max_iter: int = 500,
                          return_fields: bool = False):
    """Total field on ``plane`` for every wavenumber of ``k_grid``.

    With ``return_fields`` the volume solutions on the grid are returned as a
    second value, shape ``(N + 1, nx, ny, nz)``.
    """
    if isinstance(k_grid, FrequencyGrid):
        ks, h = k_grid.k, k_grid.h
    else:
        ks = np.asarray(k_grid, dtype=float)
        h = float(ks[0] - ks[1]) if ks.size > 1 else 0.0
    grid = coef.grid
    pts = plane.points()
    if grid.box.contains(pts[:, 0], pts[:, 1], pts[:, 2], closed=True).any():
        raise ValueError("measurement plane intersects the domain")
    beta_hat = coef.beta_hat
    samples, fields = [], []
    for k in ks:
        u = solve_ls(beta_hat, float(k), grid, tol=tol, max_iter=max_iter)
        g = evaluate_exterior(u, beta_hat, float(k), pts, grid)
        samples.append(g.reshape(plane.shape, order="F"))
        if return_fields:
            fields.append(u)
    m = MeasurementSet(plane, ks, h, np.stack(samples))
    if return_fields:
        return m, np.stack(fields)
    return m
