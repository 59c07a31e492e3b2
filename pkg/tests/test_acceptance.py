"""Acceptance criteria 1-11, one test each, one PASS/FAIL line each.

Criterion 12 (the laboratory data set) is documentation only; see the README.
The scenario runs use the default configuration and are shared through
session fixtures; a reconstruction that aborts is recorded, not re-raised, so
that every criterion still reports.
"""

import time
import traceback

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helmgcm import pipeline
from helmgcm.elliptic import solve_dirichlet
from helmgcm.forward import (apply_ls_operator, assemble_periodized_kernel, incident_field,
                             simulate_measurements, solve_ls, truncated_kernel_spectrum,
                             weight_table)
from helmgcm.grid import Box, build_coefficient, make_grid, relative_l2_error
from helmgcm.measurements import PlaneField, PlaneGrid
from helmgcm.preprocess import add_noise
from helmgcm.propagate import BACKWARD, angular_spectrum_propagate
from helmgcm.pipeline import RunConfig

from oracles import dense_ls_matrix, point_source_plane, weights_direct_dft


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- shared scenario runs -----------------------------------------------------


class Run:
    def __init__(self, cfg, result=None, error=None, region=None, seconds=0.0, records=()):
        self.cfg, self.result, self.error, self.region, self.seconds = cfg, result, error, region, seconds
        self.trajectory = [round(r.c_max, 3) for r in records]

    def describe(self):
        if self.error is not None:
            return f"aborted: {self.error}; c_max by iterate {self.trajectory}"
        r = self.result
        return f"stopping={r.stopping_reason} outer={r.outer_iterations} c_max={[round(c, 3) for c in r.c_max]}"


@pytest.fixture(scope="session")
def cube_data():
    cfg = RunConfig.for_scenario("cube")
    clean, fields = simulate_measurements(cfg.truth(), cfg.frequencies(), cfg.plane(),
                                          tol=cfg.ls_tol, return_fields=True)
    noisy = add_noise(clean, cfg.noise, cfg.seed, relative_to="scattered")
    return cfg, clean, noisy, fields


def _reconstruct(cfg, m, fields=None):
    t0 = time.perf_counter()
    p = pipeline.propagate_measurements(m, cfg.target_z)
    region = pipeline.locate(p, cfg)
    try:
        res = pipeline.reconstruct(p, cfg, region=region, fields=fields)
        return Run(cfg, res, region=region, seconds=time.perf_counter() - t0)
    except Exception as exc:  # recorded; the criteria below report it
        traceback.print_exc()
        return Run(cfg, error=f"{type(exc).__name__}: {exc}", region=region,
                   seconds=time.perf_counter() - t0, records=getattr(exc, "records", ()))


@pytest.fixture(scope="session")
def cube_complete(cube_data):
    cfg, _, noisy, fields = cube_data
    return _reconstruct(RunConfig(**{**vars(cfg), "mode": "complete"}), noisy, fields)


@pytest.fixture(scope="session")
def cube_backscatter(cube_data):
    cfg, _, noisy, _ = cube_data
    return _reconstruct(RunConfig(**{**vars(cfg), "mode": "backscatter"}), noisy)


@pytest.fixture(scope="session")
def two_cubes_backscatter():
    cfg = RunConfig.for_scenario("two_cubes", mode="backscatter")
    return _reconstruct(cfg, pipeline.simulate(cfg))


# -- criteria -----------------------------------------------------------------


def test_criterion_01_forward_fixed_point():
    cfg = RunConfig()
    grid = cfg.grid()
    worst, slowest = 0.0, 0.0
    for k in cfg.frequencies().k:
        t0 = time.perf_counter()
        u = solve_ls(np.zeros(grid.shape), float(k), grid)
        slowest = max(slowest, time.perf_counter() - t0)
        u0 = incident_field(grid, float(k))
        worst = max(worst, relative_l2_error(u, u0, grid))
    record(1, worst <= 1e-10 and slowest < 1.0,
           f"max relative error {worst:.1e} (<= 1e-10), slowest solve {slowest:.3f} s (< 1 s)")


def test_criterion_02_dense_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    grid = make_grid(Box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), 1.0 / 11)
    assert grid.shape == (12, 12, 12)
    k = 6.7
    table = weight_table(grid, k)
    w = weights_direct_dft(lambda rho: truncated_kernel_spectrum(rho, k, table.r0, table.r1),
                           k, table.period_nodes, grid.spacing[0], 12)
    beta_hat = build_coefficient([], grid).chi * rng.uniform(0.0, 2.0, grid.shape)
    A = dense_ls_matrix(w, beta_hat)
    u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    dense_apply = u.ravel() - A @ u.ravel()
    fft_apply = apply_ls_operator(u, beta_hat, assemble_periodized_kernel(grid, k)).ravel()
    e_apply = np.linalg.norm(fft_apply - dense_apply) / np.linalg.norm(dense_apply)
    dense_sol = np.linalg.solve(A, incident_field(grid, k).ravel())
    fft_sol = solve_ls(beta_hat, k, grid, tol=1e-13).ravel()
    e_solve = np.linalg.norm(fft_sol - dense_sol) / np.linalg.norm(dense_sol)
    dt = time.perf_counter() - t0
    record(2, e_apply <= 1e-10 and e_solve <= 1e-10 and dt < 30,
           f"12^3 grid: apply {e_apply:.1e}, solve {e_solve:.1e} (<= 1e-10), {dt:.1f} s (< 30 s)")


def test_criterion_03_born_regime():
    cfg = RunConfig()
    grid = cfg.grid()
    coef = build_coefficient([(Box((-0.3, -0.3, 0.0), (0.3, 0.3, 0.6)), 1.001)], grid)
    k = cfg.k_bar
    u = solve_ls(coef.beta_hat, k, grid, tol=1e-10)
    u0 = incident_field(grid, k)
    born = apply_ls_operator(u0, coef.beta_hat, assemble_periodized_kernel(grid, k))
    gap = relative_l2_error(u - u0, born, grid)
    record(3, gap <= 0.01, f"relative gap u_sc vs single scattering {gap:.2e} (<= 1e-2)")


def test_criterion_04_elliptic_order():
    t0 = time.perf_counter()
    errs = []
    for h in (0.2, 0.1, 0.05):
        g = make_grid(Box((0, 0, 0), (1, 1, 1)), h)
        x, y, z = g.mesh()
        e = np.exp(1j * (x + 2 * y)) * np.sin(np.pi * z)
        w = np.broadcast_to(e + x * y * z, g.shape)
        p = np.stack(np.broadcast_arrays(0.5 + 0 * x, 1j * y + 0 * x, np.cos(z) + 0 * x))
        lap = -(5 + np.pi ** 2) * e
        grad = (1j * e + y * z, 2j * e + x * z, np.pi * np.exp(1j * (x + 2 * y)) * np.cos(np.pi * z) + x * y)
        f = np.broadcast_to(lap - sum(p[a] * grad[a] for a in range(3)), g.shape)
        errs.append(np.abs(solve_dirichlet(p, f, w, g, tol=1e-12) - w).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    dt = time.perf_counter() - t0
    ok = bool(np.all((orders >= 1.8) & (orders <= 2.2))) and dt < 120
    record(4, ok, f"observed orders {np.round(orders, 3).tolist()} (in [1.8, 2.2]), {dt:.2f} s (< 120 s)")


def test_criterion_05_propagation():
    rng = np.random.default_rng(5)
    plane = RunConfig().plane()
    k = 6.7
    # band-limited field: exactly periodic propagating modes of the aperture
    L = plane.nx * plane.dx
    x, y = np.meshgrid(plane.x, plane.y, indexing="ij")
    vals = np.zeros(plane.shape, dtype=complex)
    for m1 in range(-6, 7):
        for m2 in range(-6, 7):
            if (2 * np.pi / L) ** 2 * (m1 * m1 + m2 * m2) < k * k:
                vals += (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(
                    2j * np.pi * (m1 * x + m2 * y) / L)
    f = PlaneField(plane, vals, k)
    there = angular_spectrum_propagate(f, -0.75, BACKWARD, pad=1)
    back = angular_spectrum_propagate(there, -7.6, BACKWARD, pad=1)
    e_trip = np.linalg.norm(back.values - vals) / np.linalg.norm(vals)

    # point scatterer at the origin: contrast 4 in one cell of the default grid
    strength = k * k * 4.0 * RunConfig().spacing ** 3
    src = (0.0, 0.0, 0.0)
    g = PlaneField(plane, point_source_plane(k, src, plane, strength), k)
    moved = angular_spectrum_propagate(g, -0.75, BACKWARD)
    want = point_source_plane(k, src, plane.at(-0.75), strength)
    central = (np.abs(x) < 2.5) & (np.abs(y) < 2.5)
    e_point = np.linalg.norm((moved.values - want)[central]) / np.linalg.norm(want[central])
    record(5, e_trip <= 1e-8 and e_point <= 0.05,
           f"round trip {e_trip:.1e} (<= 1e-8); point scatterer on central aperture {e_point:.3f} (<= 0.05)")


def test_criterion_06_noise_exactness(cube_data):
    cfg, clean, noisy, _ = cube_data
    ref = clean.scattered()
    gaps = [np.linalg.norm(noisy.samples[n] - clean.samples[n]) / np.linalg.norm(ref[n])
            for n in range(clean.k.size)]
    dev = max(abs(g - 0.15) for g in gaps)
    record(6, dev <= 1e-12, f"max |gap - 0.15| over {len(gaps)} wavenumbers {dev:.1e} (<= 1e-12)")


def test_criterion_07_homogeneous_end_to_end():
    cfg = RunConfig.for_scenario("homogeneous")
    m = pipeline.simulate(cfg)
    with pytest.warns(RuntimeWarning, match="empty"):
        run = _reconstruct(cfg, m)
    if run.error is not None:
        record(7, False, run.describe())
    dev = float(np.abs(run.result.c_comp - 1.0).max())
    record(7, dev <= 0.02, f"max |c_comp - 1| {dev:.1e} (<= 0.02); {run.describe()}")


def test_criterion_08_cube_complete(cube_complete):
    run = cube_complete
    if run.error is not None:
        record(8, False, f"cube, complete data: {run.describe()}")
    c = run.result.c_comp
    cmax = float(c.max())
    cents = pipeline.component_centroids(c, run.cfg.grid())
    dist = min((np.linalg.norm(np.subtract(p, (0.0, 0.0, 0.3))) for p in cents), default=np.inf)
    record(8, 4.25 <= cmax <= 5.75 and dist <= 0.3,
           f"cube, complete data: c_max {cmax:.3f} (in [4.25, 5.75]), centroid offset {dist:.3f} (<= 0.3); "
           f"{run.describe()}")


def test_criterion_09_cube_backscatter(cube_backscatter):
    run = cube_backscatter
    if run.error is not None:
        record(9, False, f"cube, backscatter: {run.describe()}")
    cmax = float(run.result.c_comp.max())
    record(9, 4.0 <= cmax <= 6.0, f"cube, backscatter: c_max {cmax:.3f} (in [4.0, 6.0]); {run.describe()}")


def test_criterion_10_two_cubes(two_cubes_backscatter):
    run = two_cubes_backscatter
    detected = len(run.region)
    if run.error is not None:
        record(10, False, f"two cubes: {detected} components detected; {run.describe()}")
    res = run.result
    cents = pipeline.component_centroids(res.c_comp, run.cfg.grid())
    targets = [(-0.8, 0.0, 0.2), (0.8, 0.0, 0.2)]
    dists = [min((np.linalg.norm(np.subtract(p, t)) for p in cents), default=np.inf) for t in targets]
    ok = (detected == 2 and len(res.c_max) == 2 and all(4.0 <= c <= 6.0 for c in res.c_max)
          and max(dists) <= 0.3)
    record(10, ok, f"two cubes: {detected} components, c_max {[round(c, 3) for c in res.c_max]} "
                   f"(each in [4.0, 6.0]), centre offsets {[round(d, 3) for d in dists]} (<= 0.3)")


def test_criterion_11_iteration_economy(cube_complete, cube_backscatter, two_cubes_backscatter):
    parts, ok = [], True
    for name, run in (("cube/complete", cube_complete), ("cube/backscatter", cube_backscatter),
                      ("two_cubes/backscatter", two_cubes_backscatter)):
        if run.error is not None:
            ok = False
            parts.append(f"{name} aborted")
            continue
        r = run.result
        good = r.stopping_reason == "converged" and r.outer_iterations <= 5
        ok &= good
        parts.append(f"{name} {r.stopping_reason} after {r.outer_iterations}")
    record(11, ok, "; ".join(parts) + " (converged within 5 outer iterations)")
