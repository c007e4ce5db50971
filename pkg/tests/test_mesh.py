import io
import math

import numpy as np
import pytest

from rodspec.geometry import CellGeometry, CrossSection, RodGeometry, cell_measure
from rodspec.mesh import Tag, mesh_cell, mesh_rod, read_mesh, refine, write_mesh


def test_structured_count(plain):
    m = mesh_cell(plain, 0.0, 1 / 8)
    assert m.n_triangles == 512
    assert m.tag_counts()["HOLE"] == 0
    assert m.area == pytest.approx(1.0, abs=1e-14)
    assert m.euler_characteristic() == 1
    assert np.all(m.signed_areas() > 0)


def test_disk_area_and_topology(disk):
    exact = cell_measure(disk, 0.0, 2048)
    m = mesh_cell(disk, 0.0, 1 / 32)
    assert abs(m.area - exact) <= 5e-3
    assert m.euler_characteristic() == 0
    assert m.min_angle() > 10.0
    hole = m.tagged_vertices(Tag.HOLE)
    F = disk.level(0.0, m.vertices[hole, 0], m.vertices[hole, 1])
    assert np.max(np.abs(F)) < 1e-12
    r = refine(m)
    assert abs(r.area - exact) <= abs(m.area - exact) / 2


def test_refine_structure(plain):
    m = mesh_cell(plain, 0.0, 1 / 8)
    r = refine(m)
    assert r.n_triangles == 2048
    assert len(r.periodic_pairs) == 2 * len(m.periodic_pairs) - 1
    # every pair matches exactly in y2 and lies on opposite faces
    a, b = r.vertices[r.periodic_pairs[:, 0]], r.vertices[r.periodic_pairs[:, 1]]
    np.testing.assert_array_equal(a[:, 1], b[:, 1])
    np.testing.assert_allclose(np.abs(a[:, 0] - b[:, 0]), 1.0)


def test_boundary_tags_unique(disk):
    m = mesh_cell(disk, 0.0, 1 / 16)
    keys = {tuple(sorted(e)) for e in m.boundary_edges}
    assert len(keys) == len(m.boundary_edges)
    assert set(np.unique(m.boundary_tags)) <= {Tag.LATERAL, Tag.HOLE}


def test_rod_area_plain():
    rod = RodGeometry(1)
    m = mesh_rod(CellGeometry("1", hole_present=False), rod, 1 / 16)
    assert m.area == pytest.approx(rod.epsilon, abs=1e-12)
    counts = m.tag_counts()
    assert counts["END_MINUS"] > 0 and counts["END_PLUS"] > 0 and counts["HOLE"] == 0
    assert np.allclose(m.vertices[m.tagged_vertices(Tag.END_MINUS), 0], -0.5)


def test_rod_area_disk(disk):
    rod = RodGeometry(4)
    m = mesh_rod(disk, rod, 1 / 16)
    target = rod.epsilon * (1 - math.pi * 0.09)
    assert abs(m.area - target) <= 0.01 * target
    assert m.euler_characteristic() == 1 - rod.cell_count
    # rod vertices are unique after gluing
    assert len(np.unique(np.round(m.vertices, 12), axis=0)) == m.n_vertices


def test_rod_varying_holes():
    g = CellGeometry("y1^2 + y2^2 - (0.15 + 0.5*x1^2)^2")
    rod = RodGeometry(4)
    m = mesh_rod(g, rod, 1 / 16)
    areas = np.bincount(m.tri_cell, weights=m.signed_areas())
    for j, xc in enumerate(rod.cell_centers):
        expect = rod.epsilon ** 2 * cell_measure(g, xc, 1024)
        assert abs(areas[j] - expect) <= 0.01 * expect


def test_mesh_round_trip(disk):
    m = mesh_cell(disk, 0.0, 1 / 16)
    buf = io.StringIO()
    write_mesh(m, buf)
    buf.seek(0)
    back = read_mesh(buf)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.boundary_tags, m.boundary_tags)
    np.testing.assert_array_equal(back.periodic_pairs, m.periodic_pairs)


def test_resolution_guard(disk):
    tiny = CellGeometry("y1^2 + y2^2 - 0.0004")
    with pytest.raises(Exception):
        mesh_rod(tiny, RodGeometry(2), 1 / 4)
