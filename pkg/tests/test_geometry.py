import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpsvem.geometry import (CutoutRectangle, ElementGeometry, GeometryError,
                             MeshFormatError, PolyMesh, Rectangle, UNIT_SQUARE,
                             check_regularity, generate_mesh, polygon_kernel,
                             polygon_signed_area, read_mesh, write_mesh)

FAMILIES = ("uniform_square", "distorted_square", "voronoi", "nonconvex", "triangular")


def test_uniform_square_counts():
    mesh = generate_mesh("uniform_square", UNIT_SQUARE, 1 / 5)
    assert mesh.n_cells == 25
    assert mesh.n_vertices == 36


def test_uniform_square_tiling():
    mesh = generate_mesh("uniform_square", UNIT_SQUARE, 1 / 5)
    assert abs(mesh.cell_areas().sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("h", [1 / 5, 1 / 10])
def test_tiling_and_orientation_all_families(family, h):
    domain = CutoutRectangle() if family == "triangular" else UNIT_SQUARE
    mesh = generate_mesh(family, domain, h)
    areas = mesh.cell_areas()
    assert np.all(areas > 0.0)
    assert abs(areas.sum() - domain.area) / domain.area <= 1e-10
    assert mesh.h <= 2.0 * h + 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_generator_determinism(family):
    import lpsvem.geometry as g
    domain = CutoutRectangle() if family == "triangular" else UNIT_SQUARE
    m1 = g._GENERATORS[family](domain, 1 / 5, 42)
    m2 = g._GENERATORS[family](domain, 1 / 5, 42)
    assert np.array_equal(m1.vertices, m2.vertices)
    assert all(np.array_equal(a, b) for a, b in zip(m1.cells, m2.cells))


def test_every_edge_shared_by_one_or_two_cells(meshes_h5):
    for mesh in meshes_h5.values():
        counts = (mesh.edge_cells >= 0).sum(axis=1)
        assert set(counts.tolist()) <= {1, 2}
        bnd = mesh.boundary_edge_ids()
        marked = np.concatenate(list(mesh.boundary_markers.values()))
        assert sorted(marked.tolist()) == sorted(bnd.tolist())


def _is_convex(pts):
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) < -1e-9:
            return False
    return True


def test_voronoi_cells_convex_and_regular():
    mesh = generate_mesh("voronoi", UNIT_SQUARE, 1 / 10)
    ratios = []
    for cell in mesh.cells:
        pts = mesh.vertices[cell]
        assert _is_convex(pts)
        d = np.roll(pts, -1, axis=0) - pts
        lens = np.hypot(d[:, 0], d[:, 1])
        diam = max(np.hypot(*(p - q)) for p in pts for q in pts)
        ratios.append(lens.min() / diam)
    assert min(ratios) >= 0.05


def test_regularity_uniform_square():
    mesh = generate_mesh("uniform_square", UNIT_SQUARE, 1 / 5)
    rep = check_regularity(mesh)
    assert abs(rep.gamma_edge - 1 / np.sqrt(2)) <= 1e-12
    assert 0.0 < rep.gamma_star <= 1.0


@pytest.mark.parametrize("family", FAMILIES)
def test_regularity_in_unit_interval(family):
    domain = CutoutRectangle() if family == "triangular" else UNIT_SQUARE
    rep = check_regularity(generate_mesh(family, domain, 1 / 5))
    assert 0.0 < rep.gamma_edge <= 1.0
    assert 0.0 < rep.gamma_star <= 1.0


def test_regular_hexagon_gamma_star():
    ang = np.linspace(0, 2 * np.pi, 7)[:-1]
    pts = np.column_stack([np.cos(ang), np.sin(ang)])
    mesh = PolyMesh(pts, [np.arange(6)], {})
    mesh.boundary_markers = {"all": mesh.boundary_edge_ids()}
    rep = check_regularity(mesh)
    # regular hexagon: inradius / diameter = sqrt(3)/4 = 0.433...
    assert rep.gamma_star > 0.4
    assert abs(rep.gamma_star - np.sqrt(3) / 4) < 1e-6


def test_kernel_of_concave_cell():
    dart = np.array([[0.3, 0.3], [0.7, -0.3], [1.3, 1.3], [-0.3, 0.7]])
    ker = polygon_kernel(dart)
    assert ker is not None
    assert polygon_signed_area(ker) < polygon_signed_area(dart)


@given(n=st.integers(4, 10), r=st.floats(0.2, 1.0), seed=st.integers(0, 100))
@settings(max_examples=25, deadline=None)
def test_element_geometry_invariants(n, r, seed):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    if np.min(np.diff(ang)) < 1e-2:
        return
    rad = r * (1.0 + 0.2 * rng.uniform(-1, 1, size=n))
    pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    geom = ElementGeometry(0, pts)
    tri_area = sum(polygon_signed_area(pts[list(t)]) for t in geom.triangles)
    assert abs(tri_area - geom.area) <= 1e-12 * geom.area
    centro = sum(polygon_signed_area(pts[list(t)]) * pts[list(t)].mean(axis=0)
                 for t in geom.triangles) / geom.area
    assert np.abs(centro - geom.centroid).max() <= 1e-12 * geom.diameter
    assert geom.diameter >= geom.edge_lengths.max() - 1e-14


def test_mesh_io_roundtrip(tmp_path):
    mesh = generate_mesh("voronoi", UNIT_SQUARE, 1 / 5)
    path = tmp_path / "mesh.json"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert all(np.array_equal(a, b) for a, b in zip(back.cells, mesh.cells))
    # a second write is byte-identical
    path2 = tmp_path / "mesh2.json"
    write_mesh(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_mesh_io_single_cell(tmp_path):
    path = tmp_path / "one.json"
    path.write_text(json.dumps({
        "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]],
        "cells": [[0, 1, 2, 3]],
        "boundary": {"wall": [[0, 1], [1, 2], [2, 3], [3, 0]]},
    }))
    mesh = read_mesh(path)
    assert mesh.n_cells == 1 and mesh.n_vertices == 4


def test_mesh_io_bad_vertex_index(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "vertices": [[0, 0], [1, 0], [1, 1]],
        "cells": [[0, 1, 7]],
        "boundary": {},
    }))
    with pytest.raises(MeshFormatError, match="bad vertex index"):
        read_mesh(path)


def test_mesh_io_orientation_error(tmp_path):
    path = tmp_path / "cw.json"
    path.write_text(json.dumps({
        "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]],
        "cells": [[0, 3, 2, 1]],
        "boundary": {"wall": [[0, 1], [1, 2], [2, 3], [3, 0]]},
    }))
    with pytest.raises(MeshFormatError, match="cell 0"):
        read_mesh(path)


def test_mesh_io_malformed(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    with pytest.raises(MeshFormatError, match="line"):
        read_mesh(path)
    path.write_text(json.dumps({"vertices": [[0, 0]]}))
    with pytest.raises(MeshFormatError, match="cells"):
        read_mesh(path)


def test_generate_mesh_rejects_bad_h():
    with pytest.raises(GeometryError):
        generate_mesh("uniform_square", UNIT_SQUARE, 0.0)
    with pytest.raises(GeometryError):
        generate_mesh("uniform_square", UNIT_SQUARE, -1.0)


@pytest.mark.parametrize("family", ["voronoi", "distorted_square", "nonconvex"])
def test_lshape_rejected_for_nontiling_families(family):
    with pytest.raises(GeometryError):
        generate_mesh(family, CutoutRectangle(), 1 / 4)


@pytest.mark.parametrize("family", ["uniform_square", "triangular"])
def test_lshape_supported_families(family):
    dom = CutoutRectangle()
    mesh = generate_mesh(family, dom, 1 / 4)
    assert abs(mesh.cell_areas().sum() - dom.area) / dom.area < 1e-12
    assert {"left", "right", "top", "bottom", "notch_v", "notch_h"} == set(mesh.boundary_markers)


def test_nonconvex_family_has_concave_cells():
    mesh = generate_mesh("nonconvex", UNIT_SQUARE, 1 / 5)
    concave = sum(0 if _is_convex(mesh.vertices[c]) else 1 for c in mesh.cells)
    assert concave > mesh.n_cells // 3


def test_distortion_bounded():
    ref = generate_mesh("uniform_square", UNIT_SQUARE, 1 / 5)
    import lpsvem.geometry as g
    dist = g._GENERATORS["distorted_square"](UNIT_SQUARE, 1 / 5, 42)
    n = round(1.8 * 5)
    s = 1.0 / n
    xs = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    lattice = np.column_stack([X.ravel(), Y.ravel()])
    d = np.hypot(*(dist.vertices - lattice).T)
    assert d.max() <= 0.3 * s + 1e-12
