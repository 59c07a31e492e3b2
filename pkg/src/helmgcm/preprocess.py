"""From raw plane measurements to the inputs of the reconstruction.

Noise injection, the wavenumber difference quotient, the boundary function
``psi = d_k g / g``, target localisation on propagated data and completion of
backscatter data to the whole boundary of the computational box.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Grid3
from .measurements import MeasurementSet, PlaneField, PlaneGrid

log = logging.getLogger(__name__)

#: |g| below this value makes ``psi`` meaningless.
G_FLOOR = 1e-8

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


def add_noise(m: MeasurementSet, level: float, seed: int, relative_to: str = "total") -> MeasurementSet:
    """Additive complex uniform noise with a prescribed relative L2 size.

    For every wavenumber ``g + level * ||ref|| * sigma / ||sigma||`` with
    ``sigma = sigma1 + i sigma2`` and ``sigma1, sigma2 ~ U(-1, 1)``. The
    reference ``ref`` is the total field (``relative_to="total"``) or the
    scattered field ``g - exp(i k z)`` (``"scattered"``); in the latter case
    the noise is added to the scattered part, which is the same thing.
    """
    if level < 0:
        raise ValueError(f"noise level must be non-negative, got {level}")
    if relative_to not in ("total", "scattered"):
        raise ValueError("relative_to must be 'total' or 'scattered'")
    if level == 0:
        return m
    rng = np.random.default_rng(seed)
    ref = m.samples if relative_to == "total" else m.scattered()
    noisy = m.samples.copy()
    for n in range(m.k.size):
        sigma = rng.uniform(-1.0, 1.0, m.plane.shape) + 1j * rng.uniform(-1.0, 1.0, m.plane.shape)
        noisy[n] += level * np.linalg.norm(ref[n]) * sigma / np.linalg.norm(sigma)
    return m.with_samples(noisy, noise_level=float(level))


def k_derivative(samples: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Backward difference in ``k``: ``(g(k_{n-1}) - g(k_n)) / (k_{n-1} - k_n)``.

    Returns ``N`` arrays, entry ``n - 1`` belonging to ``k_n`` for ``n = 1..N``.
    """
    samples = np.asarray(samples)
    k = np.asarray(k, dtype=float)
    if k.size < 2:
        raise ValueError("the k-derivative needs at least two wavenumbers")
    dk = (k[:-1] - k[1:]).reshape((-1,) + (1,) * (samples.ndim - 1))
    return (samples[:-1] - samples[1:]) / dk


def measurement_k_derivative(m: MeasurementSet) -> list[PlaneField]:
    d = k_derivative(m.samples, m.k)
    return [PlaneField(m.plane, d[n - 1], float(m.k[n])) for n in range(1, m.k.size)]


def boundary_psi(g: np.ndarray, dg_dk: np.ndarray, floor: float = G_FLOOR) -> np.ndarray:
    """Pointwise ``dg_dk / g``; fails if ``|g|`` drops below ``floor``."""
    g = np.asarray(g)
    small = np.abs(g) < floor
    if np.any(small):
        idx = tuple(int(i) for i in np.argwhere(small)[0])
        raise ValueError(f"|g| = {abs(g[idx]):.2e} below {floor:g} at node {idx}; data are not usable")
    return np.asarray(dg_dk) / g


@dataclass(frozen=True)
class TargetRegion:
    """Detected targets: boolean masks on a plane sampling plus a depth range."""

    plane: PlaneGrid
    components: tuple[np.ndarray, ...]
    z_range: tuple[float, float] = (-0.75, 1.0)
    peaks: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=bool) for c in self.components)
        for i, c in enumerate(comps):
            if c.shape != self.plane.shape or not c.any():
                raise ValueError("target components must be nonempty masks on the plane")
            for d in comps[:i]:
                if np.any(c & d):
                    raise ValueError("target components overlap")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    def centers(self) -> list[tuple[float, float]]:
        X, Y = np.meshgrid(self.plane.x, self.plane.y, indexing="ij")
        return [(float(X[c].mean()), float(Y[c].mean())) for c in self.components]

    def volume_masks(self, grid: Grid3) -> list[np.ndarray]:
        """Component masks extended to ``grid``: nearest plane sample in (x, y),
        and ``z`` strictly inside ``z_range``."""
        ix = np.rint((grid.axis(0) - self.plane.x0) / self.plane.dx).astype(int)
        iy = np.rint((grid.axis(1) - self.plane.y0) / self.plane.dy).astype(int)
        okx = (ix >= 0) & (ix < self.plane.nx)
        oky = (iy >= 0) & (iy < self.plane.ny)
        z = grid.axis(2)
        zin = (z > self.z_range[0]) & (z < self.z_range[1])
        out = []
        for c in self.components:
            m2 = np.zeros(grid.shape[:2], dtype=bool)
            m2[np.ix_(okx, oky)] = c[np.ix_(ix[okx], iy[oky])]
            out.append(m2[:, :, None] & zin[None, None, :])
        return out

    def volume_mask(self, grid: Grid3) -> np.ndarray:
        mask = np.zeros(grid.shape, dtype=bool)
        for m in self.volume_masks(grid):
            mask |= m
        return mask

    def to_dict(self) -> dict:
        return {
            "count": len(self),
            "z_range": list(self.z_range),
            "centers": [list(c) for c in self.centers()],
            "peaks": [list(p) for p in self.peaks],
            "sizes": [int(c.sum()) for c in self.components],
        }


def locate_targets(f: PlaneField | np.ndarray, threshold_ratio: float = 0.7,
                   plane: PlaneGrid | None = None, window: int = 5,
                   peak_fraction: float = 0.5, z_range=(-0.75, 1.0)) -> TargetRegion:
    """Targets as super-level sets of ``|f|`` around its dominant peaks.

    Peaks are local maxima of ``|f|`` over a ``window x window``
    neighbourhood that exceed ``peak_fraction`` times the global maximum.
    Each peak grows into the 4-connected component of
    ``{|f| > threshold_ratio * peak}`` containing it; components that touch
    are merged.
    """
    if not 0 < threshold_ratio < 1:
        raise ValueError("threshold_ratio must lie in (0, 1)")
    if isinstance(f, PlaneField):
        plane, a = f.grid, np.abs(f.values)
    else:
        if plane is None:
            raise ValueError("a plane sampling is needed for raw arrays")
        a = np.abs(np.asarray(f))
    top = a.max()
    ring = np.ones((window, window), dtype=bool)
    ring[window // 2, window // 2] = False
    # ties (a maximum shared by neighbouring samples) collapse in the merge below
    local_max = a >= ndimage.maximum_filter(a, footprint=ring, mode="nearest")
    is_peak = local_max & (a > a.mean()) & (a >= peak_fraction * top)
    peak_idx = np.argwhere(is_peak)
    if peak_idx.size == 0:
        warnings.warn("no peak above the mean; the target region is empty", RuntimeWarning, stacklevel=2)
        return TargetRegion(plane, (), tuple(z_range))
    order = np.argsort(-a[tuple(peak_idx.T)])
    four = ndimage.generate_binary_structure(2, 1)
    comps: list[np.ndarray] = []
    peaks: list[tuple[float, float]] = []
    for i, j in peak_idx[order]:
        labels, _ = ndimage.label(a > threshold_ratio * a[i, j], structure=four)
        comp = labels == labels[i, j]
        touching = [c for c in comps if np.any(ndimage.binary_dilation(c, four) & comp)]
        for c in touching:
            comp |= c
        comps = [c for c in comps if not any(c is t for t in touching)]
        comps.append(comp)
        if not touching:
            peaks.append((float(plane.x[i]), float(plane.y[j])))
    return TargetRegion(plane, tuple(comps), tuple(z_range), tuple(peaks))


def face_slices(face: str):
    axis = "xyz".index(face[0])
    idx = 0 if face[1] == "-" else -1
    sl = [slice(None)] * 3
    sl[axis] = idx
    return tuple(sl)


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet traces on the boundary of the computational grid.

    Volume-shaped arrays are used for traces; only boundary nodes carry
    meaning, interior entries are zero.

    Attributes
    ----------
    g : (N+1, nx, ny, nz) complex
        Total field traces for ``k_0 > ... > k_N``.
    psi : (N, nx, ny, nz) complex
        ``d_k g / g`` at ``k_1 .. k_N``.
    grad_top : (3, nx, ny, nz) complex
        ``grad u / u`` at ``k_0``.
    sources : dict
        ``"measured"`` or ``"completed"`` for each face.
    """

    grid: Grid3
    k: np.ndarray
    g: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    grad_top: np.ndarray = field(repr=False)
    sources: dict = field(default_factory=dict)

    def __post_init__(self):
        bmask = self.grid.boundary_mask()
        for name in ("g", "psi", "grad_top"):
            arr = getattr(self, name)
            if arr.shape[-3:] != self.grid.shape:
                raise ValueError(f"{name} does not match the grid")
            if not np.all(np.isfinite(arr[..., bmask])):
                raise ValueError(f"{name} is not finite on the boundary")
        if self.psi.shape[0] != self.k.size - 1 or self.g.shape[0] != self.k.size:
            raise ValueError("trace counts do not match the k-grid")

    @property
    def N(self) -> int:
        return self.k.size - 1

    def psi_at(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.N:
            raise IndexError(f"psi is defined for n = 1..{self.N}")
        return self.psi[n - 1]


def _plane_gradient(values: np.ndarray, dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = np.gradient(values, dx, dy, edge_order=2)
    return gx, gy


def assemble_boundary_data(grid: Grid3, k: np.ndarray, traces: np.ndarray, grad_top: np.ndarray,
                           sources: dict[str, str]) -> BoundaryData:
    """Build ``psi`` from total-field traces.

    Measured faces use the difference quotient; completed faces, where the
    trace is the incident wave, use the exact value ``i x3``.
    """
    k = np.asarray(k, dtype=float)
    bmask = grid.boundary_mask()
    g = np.where(bmask, traces, 0.0)
    psi = np.zeros((k.size - 1,) + grid.shape, dtype=complex)
    dg = k_derivative(g[..., bmask], k)
    measured = np.zeros((k.size - 1,) + grid.shape, dtype=complex)
    measured[..., bmask] = boundary_psi(g[1:, bmask], dg)
    z = grid.axis(2)[None, None, :] * np.ones(grid.shape)
    # measured faces are written last so that they own shared edges
    for face in sorted(FACES, key=lambda f: sources[f] == "measured"):
        sl = (slice(None),) + face_slices(face)
        psi[sl] = 1j * z[sl[1:]] if sources[face] == "completed" else measured[sl]
    return BoundaryData(grid, k, g, psi, np.where(bmask, grad_top, 0.0), dict(sources))


def complete_boundary_data(gamma: np.ndarray, k, grid: Grid3, dz_gamma: np.ndarray | None = None,
                           z_tol: float = 1e-9) -> BoundaryData:
    """Extend traces on the bottom face by the incident wave.

    Parameters
    ----------
    gamma : (N+1, nx, ny) complex
        Total field on the face ``{x3 = grid.origin[2]}`` at the grid nodes.
    k : array or FrequencyGrid
        Descending wavenumbers.
    grid : Grid3
    dz_gamma : (nx, ny) complex, optional
        ``d u / d x3`` on the face at ``k_0``. Without it the plane-wave value
        ``i k_0 u`` is used.
    """
    k = np.asarray(getattr(k, "k", k), dtype=float)
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.shape != (k.size,) + grid.shape[:2]:
        raise ValueError(f"face data {gamma.shape} do not match the bottom face {grid.shape[:2]}")
    z = grid.axis(2)
    traces = np.exp(1j * k[:, None, None, None] * z[None, None, None, :]) * np.ones((k.size,) + grid.shape)
    traces[:, :, :, 0] = gamma
    grad = np.zeros((3,) + grid.shape, dtype=complex)
    grad[2] = 1j * k[0]
    u0 = gamma[0]
    gx, gy = _plane_gradient(u0, grid.spacing[0], grid.spacing[1])
    dz = 1j * k[0] * u0 if dz_gamma is None else np.asarray(dz_gamma)
    grad[0, :, :, 0] = gx / u0
    grad[1, :, :, 0] = gy / u0
    grad[2, :, :, 0] = dz / u0
    sources = {f: "completed" for f in FACES}
    sources["z-"] = "measured"
    return assemble_boundary_data(grid, k, traces, grad, sources)
