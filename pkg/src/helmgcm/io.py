"""Binary volume (``.vol3``) and measurement-set (``.mset``) files.

Both formats are a single ASCII header line followed by a little-endian
float64 payload, x-fastest. Floats in headers are written with ``repr`` so
that a read/write cycle is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Grid3
from .measurements import MeasurementSet, PlaneGrid


class FormatError(ValueError):
    pass


def _read_header(raw: bytes, magic: str) -> tuple[list[str], int]:
    end = raw.find(b"\n")
    if end < 0:
        raise FormatError("missing header line")
    tokens = raw[:end].decode("ascii").split()
    if len(tokens) < 2 or tokens[0] != magic:
        raise FormatError(f"not a {magic} file")
    if tokens[1] != "1":
        raise FormatError(f"unsupported {magic} version {tokens[1]}")
    return tokens, end + 1


def write_vol3(path, grid: Grid3, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"volume {values.shape} does not match grid {grid.shape}")
    is_complex = np.iscomplexobj(values)
    header = " ".join(
        ["VOL3", "1", *(str(n) for n in grid.dims), *(repr(float(v)) for v in grid.origin),
         *(repr(float(v)) for v in grid.spacing), "complex" if is_complex else "real"]
    )
    dtype = "<c16" if is_complex else "<f8"
    payload = np.ascontiguousarray(values.ravel(order="F"), dtype=dtype).tobytes()
    Path(path).write_bytes(header.encode("ascii") + b"\n" + payload)


def read_vol3(path) -> tuple[Grid3, np.ndarray]:
    raw = Path(path).read_bytes()
    tokens, start = _read_header(raw, "VOL3")
    if len(tokens) != 12:
        raise FormatError(f"VOL3 header has {len(tokens)} fields, expected 12")
    dims = tuple(int(t) for t in tokens[2:5])
    origin = tuple(float(t) for t in tokens[5:8])
    spacing = tuple(float(t) for t in tokens[8:11])
    kind = tokens[11]
    if kind not in ("complex", "real"):
        raise FormatError(f"unknown VOL3 value kind {kind!r}")
    dtype = "<c16" if kind == "complex" else "<f8"
    count = int(np.prod(dims))
    if len(raw) - start != count * np.dtype(dtype).itemsize:
        raise FormatError(f"VOL3 payload has {len(raw) - start} bytes, expected {count} values")
    data = np.frombuffer(raw, dtype=dtype, offset=start)
    if data.size != count:
        raise FormatError(f"VOL3 payload holds {data.size} values, expected {count}")
    values = data.reshape(dims, order="F").astype(complex if kind == "complex" else float)
    return Grid3(origin, spacing, dims), values


def write_mset(path, m: MeasurementSet) -> None:
    p = m.plane
    header = " ".join(
        ["MSET", "1", str(m.k.size), repr(float(m.h)), *(repr(float(k)) for k in m.k),
         repr(float(p.z)), str(p.nx), str(p.ny), repr(float(p.x0)), repr(float(p.y0)),
         repr(float(p.dx)), repr(float(p.dy))]
    )
    payload = b"".join(
        np.ascontiguousarray(s.ravel(order="F"), dtype="<c16").tobytes() for s in m.samples
    )
    Path(path).write_bytes(header.encode("ascii") + b"\n" + payload)


def read_mset(path) -> MeasurementSet:
    raw = Path(path).read_bytes()
    tokens, start = _read_header(raw, "MSET")
    try:
        nk = int(tokens[2])
        h = float(tokens[3])
        k = np.array([float(t) for t in tokens[4:4 + nk]])
        z, nx, ny, x0, y0, dx, dy = tokens[4 + nk:]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed MSET header: {exc}") from exc
    plane = PlaneGrid(float(z), float(x0), float(y0), float(dx), float(dy), int(nx), int(ny))
    if (len(raw) - start) % 16:
        raise FormatError("MSET payload is not a whole number of complex values")
    data = np.frombuffer(raw, dtype="<c16", offset=start)
    if data.size != nk * plane.nx * plane.ny:
        raise FormatError(f"MSET payload holds {data.size} values, expected {nk * plane.nx * plane.ny}")
    samples = data.reshape((nk, plane.nx * plane.ny)).astype(complex)
    samples = np.stack([s.reshape(plane.shape, order="F") for s in samples])
    return MeasurementSet(plane, k, h, samples)
