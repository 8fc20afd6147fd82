import math

import numpy as np
import pytest

from polybiot import mesh as pm


def check_invariants(mesh):
    # divergence-theorem closure per element
    for t, ef in enumerate(mesh.element_faces):
        acc = np.zeros(2)
        scale = 0.0
        for fid, sign in ef:
            f = mesh.faces[fid]
            acc += sign * f.length * f.normal
            scale += f.length
        assert np.linalg.norm(acc) <= 1e-12 * scale
    # face incidence and normal consistency
    for fid, f in enumerate(mesh.faces):
        signs = {t: s for t in range(mesh.n_elements)
                 for ff, s in mesh.element_faces[t] if ff == fid}
        if f.neighbor is None:
            assert list(signs) == [f.owner]
        else:
            assert set(signs) == {f.owner, f.neighbor}
            assert signs[f.owner] == 1 and signs[f.neighbor] == -1
        np.testing.assert_allclose(mesh.normal_out_of(fid, f.owner), f.normal)
    # h_F <= h_T, positive measures
    assert (mesh.areas > 0).all()
    for t, ef in enumerate(mesh.element_faces):
        for fid, _ in ef:
            assert mesh.faces[fid].length <= mesh.diameters[t] * (1 + 1e-12)


def test_cartesian_2x2_counts():
    m = pm.generate_cartesian(2)
    assert m.n_elements == 4
    assert m.n_faces == 12
    assert len(m.interior_faces) == 4
    check_invariants(m)


def test_cartesian_single_cell():
    m = pm.generate_cartesian(1)
    assert m.n_elements == 1
    assert len(m.boundary_faces) == 4
    assert len(m.interior_faces) == 0
    assert math.isclose(m.h, math.sqrt(2.0))


def test_cartesian_benchmark_sizes():
    assert pm.generate_cartesian(32).n_elements == 1024
    assert pm.generate_cartesian(64).n_elements == 4096


def test_triangular_family():
    m = pm.generate_triangular(4)
    assert m.n_elements == 32
    check_invariants(m)
    assert math.isclose(m.areas.sum(), 1.0, rel_tol=1e-12)


def test_hexagonal_counts_match_benchmark_meshes():
    m = pm.generate_hexagonal(32, 34)
    assert m.n_elements == 1072
    m2 = pm.generate_hexagonal(8, 8)
    assert m2.n_elements == 60
    check_invariants(m2)
    assert math.isclose(m2.areas.sum(), 1.0, rel_tol=1e-9)


def test_hexagonal_interior_cells_have_six_faces():
    m = pm.generate_hexagonal(16, 16)
    rep = pm.regularity_report(m)
    assert rep["max_faces_per_element"] == 6
    check_invariants(m)


def test_voronoi_mesh():
    m = pm.generate_voronoi(6, seed=3)
    assert m.n_elements == 36
    check_invariants(m)
    assert math.isclose(m.areas.sum(), 1.0, rel_tol=1e-9)


def test_nonmatching_hanging_nodes():
    m = pm.generate_nonmatching(2)
    check_invariants(m)
    assert math.isclose(m.areas.sum(), 1.0, rel_tol=1e-12)
    # coarse cells adjacent to the refined quadrant carry 5 faces
    n_faces = sorted(len(ef) for ef in m.element_faces)
    assert n_faces[-1] == 5
    assert 5 in n_faces


def test_subtriangulate_square_and_triangle():
    m = pm.generate_cartesian(2)
    sub = pm.subtriangulate(m)
    for t in range(m.n_elements):
        assert len(sub.triangles[t]) == 4
        assert math.isclose(sub.areas(t).sum(), m.areas[t], rel_tol=1e-12)
    mt = pm.generate_triangular(1)
    subt = pm.subtriangulate(mt)
    assert len(subt.triangles[0]) == 1


def test_subtriangulate_regular_hexagon():
    a = 1.0
    pts = np.array([[a * math.cos(k * math.pi / 3), a * math.sin(k * math.pi / 3)]
                    for k in range(6)])
    m = pm.PolyMesh(pts, [[0, 1, 2, 3, 4, 5]])
    sub = pm.subtriangulate(m)
    assert len(sub.triangles[0]) == 6
    assert math.isclose(sub.areas(0).sum(), 3.0 * math.sqrt(3.0) / 2.0,
                        rel_tol=1e-12)


def test_subtriangulate_nonconvex_ear_clip():
    pts = np.array([[0, 0], [2, 0], [2, 2], [1, 0.5], [0, 2]], dtype=float)
    m = pm.PolyMesh(pts, [[0, 1, 2, 3, 4]])
    sub = pm.subtriangulate(m)
    assert math.isclose(sub.areas(0).sum(), m.areas[0], rel_tol=1e-12)


def test_regularity_report():
    m = pm.generate_cartesian(4)
    rep = pm.regularity_report(m)
    assert rep["max_faces_per_element"] == 4
    assert rep["min_inradius_ratio"] > 0.2
    single = pm.generate_cartesian(1)
    assert math.isclose(pm.regularity_report(single)["h"], math.sqrt(2.0))


def test_native_roundtrip_bit_identical(tmp_path):
    m = pm.generate_voronoi(4, seed=1)
    p = tmp_path / "mesh.json"
    pm.save_mesh(m, p)
    m2 = pm.load_mesh(p, "native-json")
    assert (m2.vertices == m.vertices).all()
    assert m2.elements == [list(map(int, e)) for e in m.elements]
    assert [f.vertices for f in m2.faces] == [f.vertices for f in m.faces]
    assert [(f.owner, f.neighbor) for f in m2.faces] == \
           [(f.owner, f.neighbor) for f in m.faces]


def test_fvca5_roundtrip_hexagonal_1072(tmp_path):
    m = pm.generate_hexagonal(32, 34)
    p = tmp_path / "hexa.typ"
    pm.save_fvca5(m, p)
    m2 = pm.load_mesh(p, "fvca5")
    assert m2.n_elements == 1072
    np.testing.assert_allclose(m2.areas.sum(), 1.0, rtol=1e-9)


def test_fvca5_triangle_quadrangle_sections(tmp_path):
    p = tmp_path / "mix.typ"
    p.write_text(
        "vertices\n5\n0 0\n1 0\n1 1\n0 1\n2 0.5\n"
        "quadrangles\n1\n1 2 3 4\n"
        "triangles\n1\n2 5 3\n"
    )
    m = pm.load_mesh(p, "fvca5")
    assert m.n_elements == 2
    check_invariants(m)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(pm.MeshError):
        pm.load_mesh(bad, "native-json")
    with pytest.raises(pm.MeshError):
        # clockwise loop -> inconsistent orientation
        pm.PolyMesh(np.array([[0., 0.], [0., 1.], [1., 1.], [1., 0.]]),
                    [[0, 1, 2, 3]])
    with pytest.raises(pm.MeshError):
        # zero-area polygon
        pm.PolyMesh(np.array([[0., 0.], [1., 0.], [2., 0.]]), [[0, 1, 2]])


def test_element_containing():
    m = pm.generate_cartesian(2)
    assert m.element_containing([0.25, 0.25]) == 0
    assert m.element_containing([0.75, 0.75]) == 3
    with pytest.raises(ValueError):
        m.element_containing([2.0, 2.0])
