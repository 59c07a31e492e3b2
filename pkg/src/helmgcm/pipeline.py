"""Scenario orchestration: configuration, synthetic data, propagation, reconstruction.

A run is described by a :class:`RunConfig`, read from a flat ``key = value``
text file. The three stages mirror the command line:

``simulate``
    truth coefficient -> plane measurements at ``plane_z`` -> noise
``propagate``
    measured scattered field -> plane ``target_z`` -> target localisation
``reconstruct``
    boundary data on the computational box -> frequency marching
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import simulate_measurements, solve_ls
from .gcm import GCMConfig, ReconstructionResult, StageError, field_gradient, run_reconstruction
from .grid import (DEFAULT_DOMAIN, Box, Grid3, build_coefficient, cutoff_function,
                   default_inner_region, make_grid)
from .io import write_vol3
from .measurements import FrequencyGrid, MeasurementSet, PlaneField, PlaneGrid
from .preprocess import (FACES, TargetRegion, add_noise, assemble_boundary_data,
                         complete_boundary_data, locate_targets)
from .propagate import BACKWARD, angular_spectrum_propagate, resample, z_derivative_via_propagation

log = logging.getLogger(__name__)

Inclusion = tuple[tuple[float, float, float, float, float, float], float]

SCENARIOS: dict[str, list[Inclusion]] = {
    "homogeneous": [],
    "cube": [((-0.3, 0.3, -0.3, 0.3, 0.0, 0.6), 5.0)],
    "two_cubes": [((-1.0, -0.6, -0.2, 0.2, 0.0, 0.4), 5.0),
                  ((0.6, 1.0, -0.2, 0.2, 0.0, 0.4), 5.0)],
}

MODES = ("complete", "backscatter")


def format_inclusions(inclusions) -> str:
    return "; ".join(" ".join(repr(float(v)) for v in (*b, c)) for b, c in inclusions)


def parse_inclusions(text: str) -> list[Inclusion]:
    """``"x0 x1 y0 y1 z0 z1 c; ..."``; an empty string means no inclusions."""
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        vals = [float(v) for v in chunk.replace(",", " ").split()]
        if len(vals) != 7:
            raise ValueError(f"an inclusion needs 6 bounds and a value, got {chunk.strip()!r}")
        out.append((tuple(vals[:6]), vals[6]))
    return out


@dataclass
class RunConfig:
    """Everything needed to reproduce a run. Defaults are the reference setup."""

    scenario: str = "cube"
    inclusions: list = field(default_factory=lambda: list(SCENARIOS["cube"]))
    k_bar: float = 6.7
    k_under: float = 6.2
    N: int = 9
    noise: float = 0.15
    seed: int = 0
    mode: str = "complete"
    spacing: float = 0.067
    domain: tuple = DEFAULT_DOMAIN.bounds
    plane_z: float = -7.6
    plane_half_width: float = 5.0
    plane_n: int = 100
    target_z: float = -0.75
    locate_k: float = 6.48
    threshold_ratio: float = 0.7
    dz_epsilon: float = 0.1
    ls_tol: float = 1e-6
    ls_max_iter: int = 500
    elliptic_tol: float = 1e-8
    elliptic_max_iter: int = 2000
    inner_tol: float = 1e-6
    outer_tol: float = 5e-4
    max_inner: int = 3
    smooth: bool = True
    smooth_sigma: float = 0.65
    q_source: str = "outer"
    initial_q: str = "tail"
    out: str = "run"

    def __post_init__(self):
        if not self.k_bar > self.k_under > 1:
            raise ValueError("need k_bar > k_under > 1")
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.domain = tuple(float(v) for v in self.domain)
        self.inclusions = [(tuple(float(v) for v in b), float(c)) for b, c in self.inclusions]

    @classmethod
    def for_scenario(cls, name: str, **changes) -> "RunConfig":
        if name not in SCENARIOS:
            raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
        return cls(scenario=name, inclusions=list(SCENARIOS[name]), **changes)

    # -- text form ---------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors.

        If ``scenario`` is given without ``inclusions`` the scenario's
        inclusions are used.
        """
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            if key in raw:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value
        kwargs = {}
        for key, value in raw.items():
            kind = types[key]
            if key == "inclusions":
                kwargs[key] = parse_inclusions(value)
            elif key == "domain":
                kwargs[key] = tuple(float(v) for v in value.replace(",", " ").split())
            elif kind == "bool":
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"{key}: not a boolean: {value!r}")
                kwargs[key] = value.lower() in ("true", "1", "yes")
            elif kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        if "inclusions" not in kwargs:
            name = kwargs.get("scenario", "cube")
            if name not in SCENARIOS:
                raise ValueError(f"scenario {name!r} has no built-in inclusions; give 'inclusions'")
            kwargs["inclusions"] = list(SCENARIOS[name])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "inclusions":
                v = format_inclusions(v)
            elif f.name == "domain":
                v = " ".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    # -- derived objects ---------------------------------------------------

    def grid(self) -> Grid3:
        return make_grid(Box.from_bounds(self.domain), self.spacing)

    def frequencies(self) -> FrequencyGrid:
        return FrequencyGrid(self.k_bar, self.k_under, self.N)

    def plane(self) -> PlaneGrid:
        return PlaneGrid.centered(self.plane_z, self.plane_half_width, self.plane_n)

    def gcm_config(self) -> GCMConfig:
        return GCMConfig(max_inner=self.max_inner, inner_tol=self.inner_tol, outer_tol=self.outer_tol,
                         smooth_sigma=self.smooth_sigma, smooth=self.smooth, q_source=self.q_source,
                         initial_q=self.initial_q, ls_tol=self.ls_tol, ls_max_iter=self.ls_max_iter,
                         elliptic_tol=self.elliptic_tol, elliptic_max_iter=self.elliptic_max_iter)

    def truth(self, grid: Grid3 | None = None):
        grid = grid or self.grid()
        boxes = [(Box.from_bounds(b), c) for b, c in self.inclusions]
        return build_coefficient(boxes, grid, default_inner_region(grid))


# -- stages ------------------------------------------------------------------


def simulate(cfg: RunConfig, return_fields: bool = False):
    """Noisy plane measurements of the truth; optionally the noiseless volume fields too.

    The noise is scaled to the scattered part of the data.
    """
    coef = cfg.truth()
    out = simulate_measurements(coef, cfg.frequencies(), cfg.plane(), tol=cfg.ls_tol,
                                max_iter=cfg.ls_max_iter, return_fields=return_fields)
    m, fields = out if return_fields else (out, None)
    m = add_noise(m, cfg.noise, cfg.seed, relative_to="scattered")
    return (m, fields) if return_fields else m


def propagate_measurements(m: MeasurementSet, z_target: float) -> MeasurementSet:
    """Move the scattered part of every field to ``z_target``; the incident wave is re-added."""
    scattered = m.scattered()
    moved = []
    for n, k in enumerate(m.k):
        f = angular_spectrum_propagate(PlaneField(m.plane, scattered[n], float(k)), z_target, BACKWARD)
        moved.append(f.values)
    plane = m.plane.at(z_target)
    incident = np.exp(1j * m.k[:, None, None] * z_target)
    return MeasurementSet(plane, m.k, m.h, np.stack(moved) + incident, m.noise_level)


def locate(m: MeasurementSet, cfg: RunConfig) -> TargetRegion:
    """Targets from ``|u_sc|`` at the wavenumber closest to ``cfg.locate_k``."""
    n = int(np.argmin(np.abs(m.k - cfg.locate_k)))
    return locate_targets(PlaneField(m.plane, m.scattered()[n], float(m.k[n])),
                          threshold_ratio=cfg.threshold_ratio, plane=m.plane)


def face_data(m: MeasurementSet, grid: Grid3, epsilon: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Total field on the bottom face nodes for every ``k`` and ``d u / d x3`` there at ``k_0``."""
    face = PlaneGrid.from_grid_face(grid, 0)
    if abs(m.plane.z - face.z) > 1e-9:
        raise ValueError(f"data live on z = {m.plane.z}, the bottom face is at z = {face.z}")
    sc = m.scattered()
    gamma = np.stack([resample(PlaneField(m.plane, sc[n], float(k)), face).values
                      for n, k in enumerate(m.k)])
    k0 = float(m.k[0])
    u0 = np.exp(1j * k0 * face.z)
    gamma = gamma + np.exp(1j * m.k[:, None, None] * face.z)
    d_sc = z_derivative_via_propagation(PlaneField(m.plane, sc[0], k0), epsilon, BACKWARD)
    dz = resample(d_sc, face).values + 1j * k0 * u0
    return gamma, dz


def boundary_data(m: MeasurementSet, cfg: RunConfig, grid: Grid3, mode: str | None = None,
                  fields: np.ndarray | None = None):
    """Boundary data for the reconstruction.

    ``backscatter`` extends the bottom-face data by the incident wave.
    ``complete`` takes the traces on the other five faces from noiseless
    forward solutions of the truth (recomputed when ``fields`` is None).
    """
    mode = mode or cfg.mode
    gamma, dz = face_data(m, grid, cfg.dz_epsilon)
    if mode == "backscatter":
        return complete_boundary_data(gamma, m.k, grid, dz)
    if mode != "complete":
        raise ValueError(f"unknown mode {mode!r}")
    if fields is None:
        beta_hat = cfg.truth(grid).beta_hat
        fields = np.stack([solve_ls(beta_hat, float(k), grid, tol=cfg.ls_tol, max_iter=cfg.ls_max_iter)
                           for k in m.k])
    traces = np.array(fields, dtype=complex, copy=True)
    traces[:, :, :, 0] = gamma
    grad = field_gradient(traces[0], float(m.k[0]), grid) / traces[0]
    # the bottom face: in-plane differences of the data and the propagated normal derivative
    bottom = complete_boundary_data(gamma, m.k, grid, dz)
    grad[:, :, :, 0] = bottom.grad_top[:, :, :, 0]
    return assemble_boundary_data(grid, m.k, traces, grad, {f: "measured" for f in FACES})


def reconstruct(m: MeasurementSet, cfg: RunConfig, mode: str | None = None,
                region: TargetRegion | None = None, fields: np.ndarray | None = None) -> ReconstructionResult:
    """Full reconstruction from data already propagated to the bottom face."""
    grid = cfg.grid()
    try:
        region = region if region is not None else locate(m, cfg)
    except Exception as exc:
        raise StageError("localize", str(exc)) from exc
    try:
        data = boundary_data(m, cfg, grid, mode, fields)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("boundary-data", str(exc)) from exc
    chi = cutoff_function(grid, default_inner_region(grid))
    return run_reconstruction(data, region, chi, cfg.gcm_config())


# -- outputs -----------------------------------------------------------------


def component_centroids(c: np.ndarray, grid: Grid3, level: float = 0.5) -> list[list[float]]:
    """Centroids of the connected components of ``{c - 1 >= level * (max c - 1)}``."""
    from scipy import ndimage

    top = float(c.max())
    if top <= 1.0:
        return []
    labels, count = ndimage.label(c - 1.0 >= level * (top - 1.0))
    x, y, z = grid.mesh(sparse=False)
    out = []
    for j in range(1, count + 1):
        sel = labels == j
        out.append([float(x[sel].mean()), float(y[sel].mean()), float(z[sel].mean())])
    return out


def write_slice_csv(path, c: np.ndarray, grid: Grid3, y: float = 0.0) -> None:
    """``c`` on the node plane closest to ``x2 = y``, one ``x,z,c`` row per node."""
    j = int(np.argmin(np.abs(grid.axis(1) - y)))
    xs, zs = grid.axis(0), grid.axis(2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "z", "c"])
        for a, xv in enumerate(xs):
            for b, zv in enumerate(zs):
                w.writerow([f"{xv:.6f}", f"{zv:.6f}", f"{c[a, j, b]:.8f}"])


def write_result(out_dir, result: ReconstructionResult, cfg: RunConfig, grid: Grid3) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_vol3(out / "c_comp.vol3", grid, result.c_comp)
    write_slice_csv(out / "slice_y0.csv", result.c_comp, grid)
    report = result.report()
    report["scenario"] = cfg.scenario
    report["mode"] = cfg.mode
    report["centroids"] = component_centroids(result.c_comp, grid)
    truth = [c for _, c in cfg.inclusions]
    report["truth_max"] = max(truth) if truth else 1.0
    (out / "report.json").write_text(json.dumps(report, indent=2))
    (out / "config.txt").write_text(cfg.to_text())
    return report


def summarize(report: dict) -> str:
    """Human-readable summary of a ``report.json``."""
    truth = report.get("truth_max")
    lines = [f"scenario: {report.get('scenario', '?')}  mode: {report.get('mode', '?')}",
             f"stopping: {report['stopping_reason']} after {report['outer_iterations']} outer iterations"]
    for j, cm in enumerate(report["c_max"], 1):
        line = f"target {j}: c_max = {cm:.4f}"
        if truth and truth > 1.0:
            line += f"  (relative error vs {truth:g}: {abs(cm - truth) / truth:.1%})"
        lines.append(line)
    if not report["c_max"]:
        lines.append("no targets")
    lines.append(f"{'n':>3} {'i':>2} {'k':>8} {'e':>10} {'bridge':>10} {'c_max':>9}")
    for r in report["iterations"]:
        e = "-" if r["error"] is None else f"{r['error']:.3e}"
        b = "-" if r["bridge_error"] is None else f"{r['bridge_error']:.3e}"
        lines.append(f"{r['n']:>3} {r['i']:>2} {r['k']:>8.4f} {e:>10} {b:>10} {r['c_max']:>9.4f}")
    return "\n".join(lines)

