"""Angular spectrum propagation of plane data between parallel planes.

A field sampled on ``{x3 = z}`` is expanded in plane waves
``exp(i (xi1 x1 + xi2 x2))``. Each propagating mode (``|xi| < k``) is moved
to another plane by the phase ``exp(i s kz dz)`` with
``kz = sqrt(k^2 - |xi|^2)``; evanescent modes are discarded.

The direction ``s`` is the sign of the travel direction along ``x3``: waves
travelling towards ``+x3`` (such as the incident wave ``exp(i k x3)``) use
``s = +1``; the backscattered field recorded on a plane below the target
travels towards ``-x3`` and uses ``s = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .measurements import PlaneField, PlaneGrid

FORWARD = 1
BACKWARD = -1


@dataclass(frozen=True)
class _Spectrum:
    """2D DFT of a zero-padded plane field together with its wavenumbers."""

    plane: PlaneGrid
    padded: tuple[int, int]
    coeffs: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    k: float

    @property
    def kz(self) -> np.ndarray:
        rho2 = self.xi1[:, None] ** 2 + self.xi2[None, :] ** 2
        return np.sqrt(np.maximum(self.k * self.k - rho2, 0.0))

    @property
    def propagating(self) -> np.ndarray:
        rho2 = self.xi1[:, None] ** 2 + self.xi2[None, :] ** 2
        return rho2 < self.k * self.k


def _spectrum(f: PlaneField, pad: int) -> _Spectrum:
    if pad < 1:
        raise ValueError("padding factor must be >= 1")
    p = f.grid
    shape = (pad * p.nx, pad * p.ny)
    coeffs = sfft.fft2(f.values, s=shape)
    xi1 = 2.0 * np.pi * sfft.fftfreq(shape[0], d=p.dx)
    xi2 = 2.0 * np.pi * sfft.fftfreq(shape[1], d=p.dy)
    return _Spectrum(p, shape, coeffs, xi1, xi2, f.k)


def _transfer(spec: _Spectrum, dz: float, direction: int) -> np.ndarray:
    if direction not in (FORWARD, BACKWARD):
        raise ValueError("direction must be +1 or -1")
    return np.where(spec.propagating, np.exp(1j * direction * spec.kz * dz), 0.0)


def _to_plane(spec: _Spectrum, coeffs: np.ndarray, z: float, k: float) -> PlaneField:
    p = spec.plane
    values = sfft.ifft2(coeffs)[: p.nx, : p.ny]
    return PlaneField(p.at(z), values, k)


def angular_spectrum_propagate(f: PlaneField, z_target: float, direction: int = BACKWARD,
                               pad: int = 2) -> PlaneField:
    """Propagate ``f`` to the plane ``{x3 = z_target}``.

    Parameters
    ----------
    f : PlaneField
        Samples on a uniform rectangle.
    z_target : float
        Target plane; must differ from ``f.z``.
    direction : {+1, -1}
        Travel direction of the waves along ``x3`` (see module docstring).
    pad : int
        Zero-padding factor of the 2D transforms. ``pad=1`` makes the
        operator exactly invertible on band-limited periodic data.
    """
    dz = float(z_target) - f.z
    if dz == 0.0:
        raise ValueError("source and target planes coincide")
    spec = _spectrum(f, pad)
    return _to_plane(spec, spec.coeffs * _transfer(spec, dz, direction), z_target, f.k)


def band_limit(f: PlaneField, pad: int = 1) -> PlaneField:
    """Remove the evanescent part of ``f`` (``|xi| >= k``)."""
    spec = _spectrum(f, pad)
    return _to_plane(spec, np.where(spec.propagating, spec.coeffs, 0.0), f.z, f.k)


def spectral_z_derivative(f: PlaneField, direction: int = BACKWARD, pad: int = 2) -> PlaneField:
    """Exact ``d/dx3`` of the propagating part: each mode times ``i s kz``."""
    spec = _spectrum(f, pad)
    factor = np.where(spec.propagating, 1j * direction * spec.kz, 0.0)
    return _to_plane(spec, spec.coeffs * factor, f.z, f.k)


def z_derivative_via_propagation(f: PlaneField, epsilon: float = 0.1,
                                 direction: int = BACKWARD, pad: int = 2) -> PlaneField:
    """Forward difference ``(P_eps f - P_0 f) / eps`` of the propagated field.

    ``P_0`` is the band-limited field itself, so the quotient is a first
    order approximation of the ``x3``-derivative at the plane of ``f``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    spec = _spectrum(f, pad)
    diff = (_transfer(spec, epsilon, direction) - spec.propagating) / epsilon
    return _to_plane(spec, spec.coeffs * diff, f.z, f.k)


def resample(f: PlaneField, target: PlaneGrid, pad: int = 2) -> PlaneField:
    """Trigonometric interpolation of ``f`` onto another sampling of its plane.

    The interpolant is the inverse DFT of the zero-padded field evaluated
    off-grid, so band-limited data are reproduced exactly. Target points
    outside the source rectangle see the (zero) padding region.
    """
    spec = _spectrum(f, pad)
    p = f.grid
    Ex = np.exp(1j * np.outer(target.x - p.x0, spec.xi1)) / spec.padded[0]
    Ey = np.exp(1j * np.outer(target.y - p.y0, spec.xi2)) / spec.padded[1]
    values = Ex @ spec.coeffs @ Ey.T
    return PlaneField(target.at(f.z), values, f.k)
