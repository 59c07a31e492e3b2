"""Plane samplings, plane fields, wavenumber grids and measurement sets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class PlaneGrid:
    """Uniform sampling ``(x0 + i*dx, y0 + j*dy)`` of the plane ``{x3 = z}``."""

    z: float
    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("plane sampling steps must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a plane needs at least 2x2 samples")

    @classmethod
    def centered(cls, z: float, half_width: float, n: int) -> "PlaneGrid":
        """``n x n`` cell-centred samples of the square ``(-half_width, half_width)^2``."""
        d = 2.0 * half_width / n
        x0 = -half_width + 0.5 * d
        return cls(float(z), x0, x0, d, d, int(n), int(n))

    @classmethod
    def from_grid_face(cls, grid, z_index: int = 0) -> "PlaneGrid":
        """Sampling matching the ``z_index`` layer of a :class:`~helmgcm.grid.Grid3`."""
        return cls(
            float(grid.axis(2)[z_index]), grid.origin[0], grid.origin[1],
            grid.spacing[0], grid.spacing[1], grid.dims[0], grid.dims[1],
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def points(self) -> np.ndarray:
        """All sample points as an ``(nx*ny, 3)`` array (x fastest)."""
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        Z = np.full(X.shape, self.z)
        return np.stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")], axis=1)

    def at(self, z: float) -> "PlaneGrid":
        return replace(self, z=float(z))


@dataclass(frozen=True)
class PlaneField:
    """Complex samples of a time-harmonic field on a plane at wavenumber ``k``."""

    grid: PlaneGrid
    values: np.ndarray
    k: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values {v.shape} do not match plane sampling {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("plane field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def z(self) -> float:
        return self.grid.z

    def incident(self) -> np.ndarray:
        """Trace of the incident wave ``exp(i k x3)`` on this plane."""
        return np.full(self.grid.shape, np.exp(1j * self.k * self.grid.z))


@dataclass(frozen=True)
class FrequencyGrid:
    """Descending wavenumbers ``k_n = k_bar - n*h``, ``n = 0..N``."""

    k_bar: float
    k_under: float
    N: int

    def __post_init__(self):
        if not self.k_bar > self.k_under > 1.0:
            raise ValueError(f"need k_bar > k_under > 1, got {self.k_bar}, {self.k_under}")
        if self.N < 1:
            raise ValueError("N must be at least 1")

    @property
    def h(self) -> float:
        return (self.k_bar - self.k_under) / self.N

    @property
    def k(self) -> np.ndarray:
        k = self.k_bar - self.h * np.arange(self.N + 1)
        k[-1] = self.k_under
        return k

    def nearest(self, value: float) -> int:
        return int(np.argmin(np.abs(self.k - value)))


@dataclass(frozen=True)
class MeasurementSet:
    """Total-field samples ``g(x, k_n)`` on one plane for a descending k-grid.

    ``samples`` has shape ``(N + 1, nx, ny)``.
    """

    plane: PlaneGrid
    k: np.ndarray
    h: float
    samples: np.ndarray
    noise_level: float = field(default=0.0)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        s = np.asarray(self.samples, dtype=complex)
        if k.ndim != 1 or k.size < 1:
            raise ValueError("k-grid must be a non-empty 1-D sequence")
        if s.shape != (k.size,) + self.plane.shape:
            raise ValueError(f"samples {s.shape} do not match {k.size} wavenumbers on {self.plane.shape}")
        if np.any(k <= 1.0):
            raise ValueError("all wavenumbers must exceed 1")
        if k.size > 1:
            if np.any(np.diff(k) >= 0):
                raise ValueError("wavenumbers must be strictly descending")
            if abs((k[0] - k[-1]) - (k.size - 1) * self.h) > 1e-12:
                raise ValueError("k-grid is not uniform with step h")
        if not np.all(np.isfinite(s)):
            raise ValueError("measurement samples contain non-finite values")
        if self.noise_level < 0:
            raise ValueError("noise level must be non-negative")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.k.size - 1

    def field(self, n: int) -> PlaneField:
        return PlaneField(self.plane, self.samples[n], float(self.k[n]))

    def incident(self) -> np.ndarray:
        """``exp(i k_n z)`` broadcast over the plane, shape like ``samples``."""
        return np.exp(1j * self.k * self.plane.z)[:, None, None] * np.ones(self.plane.shape)

    def scattered(self) -> np.ndarray:
        return self.samples - self.incident()

    def with_samples(self, samples: np.ndarray, **changes) -> "MeasurementSet":
        return replace(self, samples=samples, **changes)
