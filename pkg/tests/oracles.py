"""Reference implementations used only by the tests.

They trade speed for directness: explicit sums and dense matrices instead of
transforms and Krylov iterations.
"""

import numpy as np
from scipy import integrate

from helmgcm.forward import radial_cutoff


def kernel_spectrum_quad(rho, k, r0, r1):
    """Fourier transform of the cut-off kernel by adaptive radial quadrature."""

    def f(r, part):
        s = r if rho == 0 else np.sin(rho * r) / rho
        v = np.exp(1j * k * r) * radial_cutoff(r, r0, r1) * s
        return v.real if part == 0 else v.imag

    re = integrate.quad(f, 0, r1, args=(0,), limit=400, epsabs=1e-13, epsrel=1e-12)[0]
    im = integrate.quad(f, 0, r1, args=(1,), limit=400, epsabs=1e-13, epsrel=1e-12)[0]
    return re + 1j * im


def weights_direct_dft(spectrum_fn, k, M, h, nmax):
    """``k^2 G_d`` for ``0 <= d < nmax`` by an explicit inverse DFT over all ``M^3`` modes."""
    j = np.fft.fftfreq(M, 1.0 / M)
    xi = 2 * np.pi * j / (M * h)
    rho = np.sqrt(xi[:, None, None] ** 2 + xi[None, :, None] ** 2 + xi[None, None, :] ** 2)
    S = spectrum_fn(rho.ravel()).reshape(rho.shape)
    d = np.arange(nmax)
    E = np.exp(2j * np.pi * np.outer(j, d) / M)  # (M, nmax)
    G = np.einsum("abc,ad,be,cf->def", S, E, E, E, optimize=True) / M ** 3
    return k * k * G


def dense_ls_matrix(weights, beta_hat):
    """Dense ``I - K`` with ``(K u)_i = sum_j w(x_i - x_j) beta_hat_j u_j``."""
    shape = beta_hat.shape
    idx = np.indices(shape).reshape(3, -1)
    d = np.abs(idx[:, :, None] - idx[:, None, :])
    W = weights[d[0], d[1], d[2]]
    n = idx.shape[1]
    return np.eye(n) - W * beta_hat.ravel()[None, :]


def point_source_plane(k, src, plane, strength=1.0):
    """``strength * Phi(x - src)`` on the points of a PlaneGrid."""
    p = plane.points()
    r = np.linalg.norm(p - np.asarray(src)[None, :], axis=1)
    return (strength * np.exp(1j * k * r) / (4 * np.pi * r)).reshape(plane.shape, order="F")
