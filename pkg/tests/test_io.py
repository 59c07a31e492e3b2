import numpy as np
import pytest

from helmgcm.grid import Box, make_grid
from helmgcm.io import FormatError, read_mset, read_vol3, write_mset, write_vol3
from helmgcm.measurements import FrequencyGrid, MeasurementSet, PlaneGrid


def _mset(rng):
    plane = PlaneGrid.centered(-7.6, 5.0, 6)
    fg = FrequencyGrid(6.7, 6.2, 3)
    samples = rng.standard_normal((4, 6, 6)) + 1j * rng.standard_normal((4, 6, 6))
    return MeasurementSet(plane, fg.k, fg.h, samples)


def test_frequency_grid():
    fg = FrequencyGrid(6.7, 6.2, 9)
    assert fg.k.size == 10
    assert fg.k[0] == 6.7 and fg.k[-1] == pytest.approx(6.2)
    assert fg.h == pytest.approx(0.5 / 9)
    assert np.all(np.diff(fg.k) < 0)


def test_mset_roundtrip_bit_exact(tmp_path, rng):
    m = _mset(rng)
    write_mset(tmp_path / "a.mset", m)
    r = read_mset(tmp_path / "a.mset")
    assert np.array_equal(r.samples, m.samples)
    assert np.array_equal(r.k, m.k)
    assert r.plane == m.plane
    write_mset(tmp_path / "b.mset", r)
    assert (tmp_path / "a.mset").read_bytes() == (tmp_path / "b.mset").read_bytes()


def test_vol3_roundtrip(tmp_path, rng):
    g = make_grid(Box((0, 0, 0), (1, 2, 1)), 0.25)
    v = rng.standard_normal(g.shape)
    write_vol3(tmp_path / "c.vol3", g, v)
    g2, v2 = read_vol3(tmp_path / "c.vol3")
    assert g2.same_as(g) and np.array_equal(v2, v)


def test_truncated_file(tmp_path, rng):
    write_mset(tmp_path / "a.mset", _mset(rng))
    raw = (tmp_path / "a.mset").read_bytes()
    (tmp_path / "t.mset").write_bytes(raw[:-10])
    with pytest.raises(FormatError):
        read_mset(tmp_path / "t.mset")
    (tmp_path / "w.mset").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        read_mset(tmp_path / "w.mset")


def test_plane_points_order():
    p = PlaneGrid.centered(-1.0, 1.0, 4)
    pts = p.points()
    assert pts.shape == (16, 3)
    assert np.allclose(pts[:4, 0], p.x) and np.allclose(pts[:4, 1], p.y[0])
    assert np.allclose(p.x, [-0.75, -0.25, 0.25, 0.75])


def test_truncated_vol3(tmp_path):
    g = make_grid(Box((0, 0, 0), (1, 1, 1)), 0.5)
    write_vol3(tmp_path / "c.vol3", g, np.ones(g.shape))
    raw = (tmp_path / "c.vol3").read_bytes()
    (tmp_path / "t.vol3").write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        read_vol3(tmp_path / "t.vol3")
