"""Uniform Cartesian grids, discrete differential operators and coefficients.

Scalar fields are plain ``numpy`` arrays of shape ``grid.shape`` (indexing
``[ix, iy, iz]``); vector fields carry the component axis first, shape
``(3, nx, ny, nz)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``(lo[0], hi[0]) x (lo[1], hi[1]) x (lo[2], hi[2])``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("a Box needs three (lo, hi) pairs")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Box":
        """Build from ``(x0, x1, y0, y1, z0, z1)``."""
        b = [float(v) for v in bounds]
        if len(b) != 6:
            raise ValueError("expected six numbers x0 x1 y0 y1 z0 z1")
        return cls((b[0], b[2], b[4]), (b[1], b[3], b[5]))

    @property
    def bounds(self) -> tuple[float, ...]:
        return (self.lo[0], self.hi[0], self.lo[1], self.hi[1], self.lo[2], self.hi[2])

    @property
    def edges(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def is_degenerate(self) -> bool:
        return bool(np.any(self.edges <= 0))

    def shrink(self, amount: float | Sequence[float]) -> "Box":
        d = np.broadcast_to(np.asarray(amount, dtype=float), (3,))
        return Box(tuple(np.add(self.lo, d)), tuple(np.subtract(self.hi, d)))

    def contains_box(self, other: "Box") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )

    def contains(self, x, y, z, closed: bool = False):
        """Pointwise membership; the open box unless ``closed``."""
        if closed:
            return (
                (x >= self.lo[0]) & (x <= self.hi[0])
                & (y >= self.lo[1]) & (y <= self.hi[1])
                & (z >= self.lo[2]) & (z <= self.hi[2])
            )
        return (
            (x > self.lo[0]) & (x < self.hi[0])
            & (y > self.lo[1]) & (y < self.hi[1])
            & (z > self.lo[2]) & (z < self.hi[2])
        )


#: Computational domain of the simulated experiments, in units of 10 cm.
DEFAULT_DOMAIN = Box((-2.5, -2.5, -0.75), (2.5, 2.5, 4.25))


@dataclass(frozen=True)
class Grid3:
    """Node-centred uniform grid: node ``j`` on axis ``a`` sits at
    ``origin[a] + j * spacing[a]``, ``j = 0 .. dims[a] - 1``."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(spacing) != 3 or len(dims) != 3:
            raise ValueError("Grid3 needs three origin, spacing and dims entries")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"grid spacing must be positive, got {spacing}")
        if any(n < 2 for n in dims):
            raise ValueError(f"grid needs at least two nodes per axis, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "dims", dims)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def box(self) -> Box:
        hi = tuple(o + s * (n - 1) for o, s, n in zip(self.origin, self.spacing, self.dims))
        return Box(self.origin, hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.box.edges))

    def axis(self, a: int) -> np.ndarray:
        return self.origin[a] + self.spacing[a] * np.arange(self.dims[a])

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.axis(0), self.axis(1), self.axis(2)

    def mesh(self, sparse: bool = True):
        return np.meshgrid(*self.axes, indexing="ij", sparse=sparse)

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        s = np.asarray(self.spacing)
        return bool(np.all(np.abs(s - s[0]) <= rtol * s[0]))

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.dims, dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = False
        return mask

    def subgrid(self, lo: Sequence[int], hi: Sequence[int]) -> "Grid3":
        """Grid of the index block ``lo[a] <= j < hi[a]``."""
        origin = tuple(o + s * i for o, s, i in zip(self.origin, self.spacing, lo))
        return Grid3(origin, self.spacing, tuple(int(b - a) for a, b in zip(lo, hi)))

    def same_as(self, other: "Grid3", rtol: float = 1e-12) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.origin, other.origin, rtol=0, atol=rtol * max(1.0, *map(abs, self.origin)))
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
        )


def make_grid(box: Box, spacing: float) -> Grid3:
    """Cover ``box`` with nodes at (approximately) the requested spacing.

    The node count per axis is ``round(edge / spacing) + 1``; the actual
    spacing is then stretched so that the first and last nodes land exactly
    on the box faces.
    """
    if box.is_degenerate():
        raise ValueError(f"degenerate box {box.bounds}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    edges = box.edges
    if spacing > edges.min():
        raise ValueError(f"spacing {spacing} exceeds the shortest box edge {edges.min()}")
    dims = tuple(max(2, int(round(e / spacing)) + 1) for e in edges)
    actual = tuple(float(e / (n - 1)) for e, n in zip(edges, dims))
    return Grid3(box.lo, actual, dims)


def _check_field(f: np.ndarray, grid: Grid3 | None):
    if grid is not None and f.shape[-3:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if min(f.shape[-3:]) < 3:
        raise ValueError("finite-difference stencils need at least 3 nodes per axis")


def gradient(f: np.ndarray, grid: Grid3) -> np.ndarray:
    """Second-order finite-difference gradient, one-sided second order on faces."""
    _check_field(f, grid)
    return np.stack(np.gradient(f, *grid.spacing, edge_order=2))


def divergence(v: np.ndarray, grid: Grid3) -> np.ndarray:
    _check_field(v[0], grid)
    return sum(np.gradient(v[a], grid.spacing[a], axis=a, edge_order=2) for a in range(3))


def second_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """d^2 f / dx_axis^2: 3-point centred inside, 4-point one-sided on the two end planes."""
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    if f.shape[0] >= 4:
        out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
        out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    out /= h * h
    return np.moveaxis(out, 0, axis)


def laplacian(f: np.ndarray, grid: Grid3) -> np.ndarray:
    """7-point Laplacian in the interior, one-sided second differences on faces."""
    _check_field(f, grid)
    return sum(second_derivative(f, grid.spacing[a], a) for a in range(3))


def l2_norm(f: np.ndarray, grid: Grid3 | None = None) -> float:
    vol = 1.0 if grid is None else grid.cell_volume
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * vol))


def relative_l2_error(a: np.ndarray, b: np.ndarray, grid: Grid3 | None = None) -> float:
    """``||a - b|| / ||b||`` in the discrete L2 norm over the grid."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if grid is not None and a.shape != grid.shape:
        raise ValueError(f"fields of shape {a.shape} do not live on grid {grid.shape}")
    den = l2_norm(b, grid)
    if den == 0.0:
        raise ZeroDivisionError("reference field has zero L2 norm")
    return l2_norm(a - b, grid) / den


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def cutoff_function(grid: Grid3, inner: Box) -> np.ndarray:
    """Tensor-product cutoff: 1 on ``inner``, 0 on the grid boundary,
    cubic Hermite ramp in between."""
    outer = grid.box
    if not outer.contains_box(inner) or any(
        i <= o for i, o in zip(inner.lo, outer.lo)
    ) or any(i >= o for i, o in zip(inner.hi, outer.hi)):
        raise ValueError("inner region must lie strictly inside the grid box")
    chi = np.ones(grid.shape)
    for a, x in enumerate(grid.axes):
        lo = _smoothstep((x - outer.lo[a]) / (inner.lo[a] - outer.lo[a]))
        hi = _smoothstep((outer.hi[a] - x) / (outer.hi[a] - inner.hi[a]))
        shape = [1, 1, 1]
        shape[a] = -1
        chi = chi * (lo * hi).reshape(shape)
    return chi


def default_inner_region(grid: Grid3, cells: int = 3) -> Box:
    return grid.box.shrink(np.asarray(grid.spacing) * cells)


@dataclass(frozen=True)
class CoefficientField:
    """Real coefficient ``c >= 1`` with contrast supported in ``inner``,
    together with the cutoff ``chi`` used by the volume integral solver."""

    grid: Grid3
    c: np.ndarray
    chi: np.ndarray
    inner: Box = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        chi = np.asarray(self.chi, dtype=float)
        if c.shape != self.grid.shape or chi.shape != self.grid.shape:
            raise ValueError("coefficient arrays do not match the grid")
        if not np.all(np.isfinite(c)) or np.any(c < 1.0):
            raise ValueError("coefficient must be finite and >= 1 everywhere")
        if np.any(chi < 0.0) or np.any(chi > 1.0):
            raise ValueError("cutoff must lie in [0, 1]")
        x, y, z = self.grid.mesh()
        inside = self.inner.contains(x, y, z, closed=True)
        if np.any((c != 1.0) & ~inside):
            raise ValueError("contrast c - 1 must vanish outside the inner region")
        if not np.allclose(chi[inside], 1.0):
            raise ValueError("cutoff must equal 1 on the inner region")
        if np.any(chi[self.grid.boundary_mask()] != 0.0):
            raise ValueError("cutoff must vanish on the grid boundary")
        c.setflags(write=False)
        chi.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "chi", chi)

    @property
    def beta(self) -> np.ndarray:
        return self.c - 1.0

    @property
    def beta_hat(self) -> np.ndarray:
        return self.chi * (self.c - 1.0)


def rasterize_inclusions(
    inclusions: Iterable[tuple[Box, float]], grid: Grid3
) -> np.ndarray:
    """``c`` equal to the inclusion value on nodes strictly inside each box, 1 elsewhere."""
    c = np.ones(grid.shape)
    x, y, z = grid.mesh()
    for box, value in inclusions:
        c = np.where(box.contains(x, y, z), float(value), c)
    return c


def build_coefficient(
    inclusions: Iterable[tuple[Box, float]],
    grid: Grid3,
    inner_region: Box | None = None,
) -> CoefficientField:
    """Piecewise-constant coefficient from a list of ``(box, value)`` inclusions.

    Parameters
    ----------
    inclusions : iterable of (Box, float)
        Each box must sit inside ``inner_region``; values must be >= 1.
    grid : Grid3
        Computational grid of the domain.
    inner_region : Box, optional
        Region where the cutoff equals one. Defaults to the grid box shrunk
        by three cells.
    """
    inclusions = list(inclusions)
    inner = default_inner_region(grid) if inner_region is None else inner_region
    for box, value in inclusions:
        if value < 1.0:
            raise ValueError(f"inclusion value {value} < 1")
        if not inner.contains_box(box):
            raise ValueError(f"inclusion {box.bounds} is not inside the inner region {inner.bounds}")
    c = rasterize_inclusions(inclusions, grid)
    return CoefficientField(grid, c, cutoff_function(grid, inner), inner)
