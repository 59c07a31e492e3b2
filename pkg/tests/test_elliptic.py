import numpy as np
import pytest

from helmgcm.elliptic import apply_operator, solve_dirichlet, solve_laplace_component
from helmgcm.forward import ConvergenceError
from helmgcm.grid import DEFAULT_DOMAIN, Box, make_grid


def _manufactured(grid):
    x, y, z = grid.mesh()
    w = np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z) + x * y * z
    p = np.stack(np.broadcast_arrays(0.5 + 0 * x, 1j * y + 0 * x, np.cos(z) + 0 * x))
    lap = -5 * np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z) - np.pi ** 2 * np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z)
    gx = 1j * np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z) + y * z
    gy = 2j * np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z) + x * z
    gz = np.pi * np.exp(1j * (x + 2 * y)) * np.cos(np.pi * z) + x * y
    f = lap - (p[0] * gx + p[1] * gy + p[2] * gz)
    return np.broadcast_to(w, grid.shape), p, np.broadcast_to(f, grid.shape)


def _error(h):
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), h)
    w, p, f = _manufactured(g)
    sol = solve_dirichlet(p, f, w, g, tol=1e-12)
    return np.abs(sol - w).max()


def test_manufactured_order():
    e = [_error(h) for h in (0.2, 0.1, 0.05)]
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2)), orders


def test_discrete_harmonic_exact():
    g = make_grid(DEFAULT_DOMAIN, 0.2)
    x, y, z = g.mesh()
    w = np.broadcast_to(x ** 2 - y ** 2 + 3j * x * z, g.shape)
    got = solve_laplace_component(w, g)
    assert np.abs(got - w).max() < 1e-10


def test_operator_residual_small():
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), 0.1)
    w, p, f = _manufactured(g)
    sol, info = solve_dirichlet(p, f, w, g, tol=1e-10, return_info=True)
    r = apply_operator(sol, g, p) - f[1:-1, 1:-1, 1:-1]
    assert info["residual"] <= 1e-10 and info["iterations"] > 0
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(f)
    assert np.array_equal(sol[g.boundary_mask()], w[g.boundary_mask()])


def test_zero_data_gives_zero():
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), 0.25)
    assert not solve_dirichlet(None, 0.0, None, g).any()


def test_input_validation():
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), 0.25)
    with pytest.raises(ValueError):
        solve_dirichlet(None, 0.0, np.zeros((2, 2, 2)), g)
    mu = np.zeros(g.shape)
    mu[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        solve_dirichlet(None, 0.0, mu, g)
    with pytest.raises(ValueError):
        solve_dirichlet(np.zeros((2,) + g.shape), 1.0, None, g)


def test_large_drift_warns_and_budget_raises():
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), 0.1)
    p = np.zeros((3,) + g.shape, dtype=complex)
    p[0] = 40.0
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ConvergenceError):
            solve_dirichlet(p, 1.0, None, g, tol=1e-14, max_iter=2, restart=2)
