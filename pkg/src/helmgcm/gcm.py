"""Frequency-marching reconstruction of the coefficient ``c``.

With ``u = exp(v)`` the Helmholtz equation becomes
``Lap v + (grad v)^2 = -k^2 c``. Differentiating in ``k`` eliminates ``c``
and leaves an elliptic equation for ``q = d_k v`` whose lower-order terms
depend on the "tail" ``V = v(., k_bar)``. The driver below marches down the
wavenumber grid, solving one linearised Dirichlet problem for ``q_n`` per
inner iteration, recovering ``c`` from ``grad v`` and refreshing the tail with
a forward solve at ``k_bar``.

Only ``grad V`` and ``Lap V`` are ever needed, so the tail is stored as that
pair.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .elliptic import solve_dirichlet, solve_laplace_component
from .forward import solve_ls
from .grid import Grid3, gradient, laplacian, relative_l2_error
from .preprocess import BoundaryData, TargetRegion

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A sub-solver failed; ``stage`` names where.

    When raised from :func:`run_reconstruction`, ``records`` holds the
    iterations completed before the failure.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.detail = message
        self.records: list = []


@dataclass(frozen=True)
class TailState:
    grad_V: np.ndarray = field(repr=False)
    lap_V: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.grad_V.shape[0] != 3 or self.grad_V.shape[1:] != self.lap_V.shape:
            raise ValueError("tail gradient and Laplacian do not match")
        if not (np.all(np.isfinite(self.grad_V)) and np.all(np.isfinite(self.lap_V))):
            raise ValueError("tail contains non-finite values")


@dataclass
class GCMConfig:
    """Knobs of the reconstruction; the defaults are the reference setup.

    ``q_source`` selects which previous ``q`` enters the right-hand side:
    ``"outer"`` (default) always uses ``q_{n-1}``, ``"inner"`` uses
    ``q_{n,i-1}`` (equal to ``q_{n-1}`` on the first inner pass). ``initial_q`` is the gradient
    of ``q_0`` used at ``n = 1``: ``"tail"`` takes ``grad V_0 / k_bar``, the
    high-frequency value of ``q``; ``"zero"`` takes zero.
    """

    max_inner: int = 3
    inner_tol: float = 1e-6
    outer_tol: float = 5e-4
    outer_run: int = 3
    smooth_sigma: float = 0.65
    smooth: bool = True
    q_source: str = "outer"
    initial_q: str = "tail"
    ls_tol: float = 1e-6
    ls_max_iter: int = 500
    elliptic_tol: float = 1e-8
    elliptic_max_iter: int = 2000
    u_floor: float = 1e-8
    u_floor_fraction: float = 0.01

    def __post_init__(self):
        if self.q_source not in ("inner", "outer"):
            raise ValueError("q_source must be 'inner' or 'outer'")
        if self.initial_q not in ("tail", "zero"):
            raise ValueError("initial_q must be 'tail' or 'zero'")
        if self.max_inner < 2:
            raise ValueError("at least two inner iterations are needed to measure a change")


def initial_tail(data: BoundaryData, tol: float = 1e-8) -> TailState:
    """``grad V_0`` as three harmonic extensions of ``grad u / u`` at ``k_0``; ``Lap V_0 = 0``."""
    grid = data.grid
    try:
        grad = np.stack([solve_laplace_component(data.grad_top[j], grid, tol=tol) for j in range(3)])
    except Exception as exc:
        raise StageError("initial-tail", str(exc)) from exc
    return TailState(grad, np.zeros(grid.shape, dtype=complex))


def coefficient_from_v(grad_v: np.ndarray, lap_v: np.ndarray, k: float) -> np.ndarray:
    """``c = -(Lap v + grad v . grad v) / k^2`` (complex, before truncation)."""
    if not k > 1:
        raise ValueError("k must exceed 1")
    return -(lap_v + np.sum(grad_v * grad_v, axis=0)) / (k * k)


def qn_solve(tail: TailState, grad_q_prev: np.ndarray, Q_prev: np.ndarray, psi_n: np.ndarray,
             k_n: float, h: float, grid: Grid3, tol: float = 1e-8, max_iter: int = 2000) -> np.ndarray:
    """Solve ``Lap q - 2h grad Q . grad q = F / k_n`` with ``q = psi_n`` on the boundary,

    ``F = -2 k_n grad V . grad q_prev + 2 Lap(V - h Q) + 2 (grad(V - h Q))^2``.
    """
    grad_Q = gradient(Q_prev, grid)
    W = tail.grad_V - h * grad_Q
    F = (-2.0 * k_n * np.sum(tail.grad_V * grad_q_prev, axis=0)
         + 2.0 * (tail.lap_V - h * laplacian(Q_prev, grid))
         + 2.0 * np.sum(W * W, axis=0))
    drift = 2.0 * h * grad_Q if np.any(Q_prev) else None
    return solve_dirichlet(drift, F / k_n, psi_n, grid, tol=tol, max_iter=max_iter)


def update_v_gradient(q: np.ndarray, Q_prev: np.ndarray, tail: TailState, h: float,
                      grid: Grid3) -> tuple[np.ndarray, np.ndarray]:
    """``grad v = -h (grad q + grad Q) + grad V`` and the matching Laplacian."""
    S = q + Q_prev
    grad_v = -h * gradient(S, grid) + tail.grad_V
    lap_v = -h * laplacian(S, grid) + tail.lap_V
    return grad_v, lap_v


def truncate_and_smooth(c_raw: np.ndarray, mask: np.ndarray, sigma: float = 0.65,
                        smooth: bool = True) -> np.ndarray:
    """``max(|c|, 1)`` on ``mask`` and 1 elsewhere, then a 3x3x3 Gaussian blur.

    After blurring the field is clamped to ``>= 1`` and reset to 1 outside
    ``mask`` so the support never grows from one iteration to the next.
    """
    c = np.where(mask, np.maximum(np.abs(c_raw), 1.0), 1.0)
    if smooth:
        c = ndimage.gaussian_filter(c, sigma=sigma, mode="nearest", radius=1)
        c = np.where(mask, np.maximum(c, 1.0), 1.0)
    return c


def update_tail(c: np.ndarray, chi: np.ndarray, k_bar: float, grid: Grid3, tol: float = 1e-6,
                max_iter: int = 500, floor: float = 1e-8, floor_fraction: float = 0.01) -> TailState:
    """Tail of the medium ``c``: ``grad V = grad u / u`` for the forward field at ``k_bar``.

    ``Lap V`` follows from ``Lap u = -k^2 (1 + chi (c - 1)) u`` rather than
    from differentiating twice.
    """
    if np.any(c < 1.0):
        raise ValueError("coefficient must be >= 1")
    beta_hat = chi * (c - 1.0)
    try:
        u = solve_ls(beta_hat, k_bar, grid, tol=tol, max_iter=max_iter)
    except Exception as exc:
        raise StageError("tail-update", str(exc)) from exc
    small = np.abs(u) < floor
    if small.mean() > floor_fraction:
        raise StageError("tail-update", f"|u| < {floor:g} on {100 * small.mean():.2f}% of the nodes")
    if small.any():
        u = np.where(small, floor * np.exp(1j * np.angle(u)), u)
    grad_V = field_gradient(u, k_bar, grid) / u
    lap_V = -k_bar ** 2 * (1.0 + beta_hat) - np.sum(grad_V * grad_V, axis=0)
    return TailState(grad_V, lap_V)


def field_gradient(u: np.ndarray, k: float, grid: Grid3) -> np.ndarray:
    """``grad u`` with the incident wave ``exp(i k x3)`` differentiated exactly.

    Only the scattered part goes through finite differences, so a
    homogeneous medium yields the exact ``(0, 0, i k u)``.
    """
    u0 = np.broadcast_to(np.exp(1j * k * grid.axis(2)), grid.shape)
    g = gradient(u - u0, grid)
    g[2] += 1j * k * u0
    return g


def inner_error(c_new: np.ndarray, c_old: np.ndarray, grid: Grid3 | None = None) -> float:
    return relative_l2_error(c_new, c_old, grid)


@dataclass
class IterationRecord:
    n: int
    i: int
    k: float
    error: float | None
    bridge_error: float | None
    c_max: float
    q_norm: float
    elapsed: float


@dataclass
class ReconstructionResult:
    c_comp: np.ndarray = field(repr=False)
    c_max: list[float]
    stopping_reason: str
    outer_iterations: int
    log: list[IterationRecord]
    averaged: list[tuple[int, int]]
    config: dict
    region: dict
    elapsed: float = 0.0

    def report(self) -> dict:
        return {
            "c_max": self.c_max,
            "c_max_global": float(self.c_comp.max()),
            "stopping_reason": self.stopping_reason,
            "outer_iterations": self.outer_iterations,
            "averaged_iterates": [list(p) for p in self.averaged],
            "iterations": [asdict(r) for r in self.log],
            "region": self.region,
            "config": self.config,
            "elapsed_seconds": self.elapsed,
        }


def _qualifying_run(seq: list[tuple[float, tuple[int, int]]], tol: float, run: int):
    """Members of every run of at least ``run`` consecutive entries ``<= tol``."""
    hits: list[tuple[int, int]] = []
    i = 0
    while i < len(seq):
        j = i
        while j < len(seq) and seq[j][0] <= tol:
            j += 1
        if j - i >= run:
            hits.extend(key for _, key in seq[i:j])
        i = max(j, i + 1)
    return hits


def run_reconstruction(data: BoundaryData, region: TargetRegion | np.ndarray, chi: np.ndarray,
                       config: GCMConfig | None = None) -> ReconstructionResult:
    """Run the frequency-marching reconstruction.

    Parameters
    ----------
    data : BoundaryData
        Traces on the whole boundary of ``data.grid``.
    region : TargetRegion or bool array
        Where the coefficient may differ from 1.
    chi : array
        Cutoff multiplying ``c - 1`` in the forward solves of the tail update.
    config : GCMConfig, optional
    """
    cfg = config or GCMConfig()
    grid = data.grid
    if isinstance(region, TargetRegion):
        masks = region.volume_masks(grid)
        mask = region.volume_mask(grid)
        region_info = region.to_dict()
    else:
        mask = np.asarray(region, dtype=bool)
        masks = [mask]
        region_info = {"count": 1, "sizes": [int(mask.sum())]}
    t_start = time.perf_counter()
    records: list[IterationRecord] = []

    try:
        return _march(data, masks, mask, region_info, chi, cfg, records, t_start)
    except StageError as exc:
        exc.records = records
        raise


def _march(data, masks, mask, region_info, chi, cfg, records, t_start) -> ReconstructionResult:
    grid, k, N = data.grid, data.k, data.N
    h = float(k[0] - k[1])
    k_bar = float(k[0])
    tail = initial_tail(data, tol=cfg.elliptic_tol)
    grad_q_prev = tail.grad_V / k_bar if cfg.initial_q == "tail" else np.zeros_like(tail.grad_V)
    Q = np.zeros(grid.shape, dtype=complex)
    iterates: dict[tuple[int, int], np.ndarray] = {}
    sequences: dict[int, list[tuple[float, tuple[int, int]]]] = {}
    c_last = None
    reason, averaged, n_done = "exhausted", [], 0

    for n in range(1, N + 1):
        k_n = float(k[n])
        psi_n = data.psi_at(n)
        grad_q_rhs = grad_q_prev
        tail_cur = tail
        c_prev = None
        seq: list[tuple[float, tuple[int, int]]] = []
        for i in range(1, cfg.max_inner + 1):
            try:
                q = qn_solve(tail_cur, grad_q_rhs, Q, psi_n, k_n, h, grid,
                             tol=cfg.elliptic_tol, max_iter=cfg.elliptic_max_iter)
            except Exception as exc:
                raise StageError(f"q-solve n={n} i={i}", str(exc)) from exc
            grad_v, lap_v = update_v_gradient(q, Q, tail_cur, h, grid)
            c = truncate_and_smooth(coefficient_from_v(grad_v, lap_v, k_n), mask,
                                    cfg.smooth_sigma, cfg.smooth)
            try:
                tail_cur = update_tail(c, chi, k_bar, grid, tol=cfg.ls_tol, max_iter=cfg.ls_max_iter,
                                       floor=cfg.u_floor, floor_fraction=cfg.u_floor_fraction)
            except StageError as exc:
                raise StageError(f"{exc.stage} n={n} i={i}", f"{exc.detail} (c_max {c.max():.4g})") from exc
            err = bridge = None
            if i == 1:
                if c_last is not None:
                    bridge = inner_error(c, c_last, grid)
                    seq.append((bridge, (n, i)))
            else:
                err = inner_error(c, c_prev, grid)
                seq.append((err, (n, i)))
            iterates[(n, i)] = c
            records.append(IterationRecord(n, i, k_n, err, bridge, float(c.max()),
                                           float(np.linalg.norm(q) * np.sqrt(grid.cell_volume)),
                                           time.perf_counter() - t_start))
            log.info("n=%d i=%d k=%.4f e=%s bridge=%s c_max=%.4f", n, i, k_n,
                     "-" if err is None else f"{err:.3e}", "-" if bridge is None else f"{bridge:.3e}",
                     c.max())
            c_prev = c
            if cfg.q_source == "inner":
                grad_q_rhs = gradient(q, grid)
            if err is not None and err < cfg.inner_tol:
                break
        Q = Q + q
        grad_q_prev = gradient(q, grid)
        tail = tail_cur
        c_last = c
        sequences[n] = seq
        n_done = n
        # drop iterates that can no longer enter an average
        for key in [key for key in iterates if key[0] < n - 1]:
            del iterates[key]
        if n >= 2:
            hits = _qualifying_run(sequences[n - 1] + seq, cfg.outer_tol, cfg.outer_run)
            if hits:
                reason, averaged = "converged", hits
                break

    if reason == "converged":
        c_comp = np.mean([iterates[key] for key in averaged], axis=0)
    else:
        c_comp = c_last
        averaged = [(records[-1].n, records[-1].i)]
    c_max = [float(c_comp[m].max()) if m.any() else 1.0 for m in masks]
    return ReconstructionResult(c_comp, c_max, reason, n_done, records, averaged,
                                asdict(cfg), region_info, time.perf_counter() - t_start)
