import numpy as np
import pytest

from phdg.mesh import build_structured_mesh, face_geometry, write_vtk


def test_smallest_mesh():
    m = build_structured_mesh(1)
    assert (m.n_elements, m.n_vertices, m.n_faces) == (2, 4, 5)
    assert len(m.interior_faces) == 1 and len(m.exterior_faces) == 4


def test_h():
    assert build_structured_mesh(32).h == 0.0625


@pytest.mark.parametrize("n", [1, 2, 3, 8])
def test_counts_and_euler(n):
    m = build_structured_mesh(n)
    V, E, T = m.n_vertices, m.n_faces, m.n_elements
    assert (V, E, T) == ((n + 1) ** 2, 3 * n * n + 2 * n, 2 * n * n)
    assert V - E + T == 1
    assert 3 * T == 2 * len(m.interior_faces) + len(m.exterior_faces)


def test_zero_cells_rejected():
    with pytest.raises(ValueError):
        build_structured_mesh(0)


def test_jacobians_positive_and_equal():
    m = build_structured_mesh(4)
    assert np.all(m.dets > 0)
    np.testing.assert_allclose(m.dets, m.h ** 2)


def test_face_incidence():
    m = build_structured_mesh(3)
    for f in m.faces:
        lo, hi = f.vertex_ids
        assert lo < hi
        if f.is_interior:
            assert f.sign_left == 1 and f.sign_left * f.sign_right == -1
        else:
            mid = 0.5 * (m.coords[lo] + m.coords[hi])
            assert np.isclose(np.abs(mid).max(), 1.0)
    # every element sees exactly three faces and each interior face twice overall
    counts = np.bincount(m.elem_faces.ravel(), minlength=m.n_faces)
    assert np.all(counts[m.interior_faces] == 2) and np.all(counts[m.exterior_faces] == 1)
    # local edge in the element really joins the face's vertices
    for k in range(m.n_elements):
        for e in range(3):
            f = m.face(m.elem_faces[k, e])
            a, b = m.elem_vertices[k, e], m.elem_vertices[k, (e + 1) % 3]
            assert {a, b} == set(f.vertex_ids)
            assert m.elem_signs[k, e] == (1 if a < b else -1)


def test_face_geometry_examples():
    m = build_structured_mesh(2)   # vertices at -1, 0, 1
    def find(p, q):
        ids = [int(np.flatnonzero(np.all(np.isclose(m.coords, x), axis=1))[0]) for x in (p, q)]
        for f in range(m.n_faces):
            if set(m.face_vertices[f]) == set(ids):
                return f
        raise AssertionError("face not found")
    t, mid, length = face_geometry(m, find((0, 0), (1, 0)))
    np.testing.assert_allclose(t, [1, 0])
    assert length == pytest.approx(1.0)
    t, mid, length = face_geometry(m, find((0, 0), (0, -1)))
    np.testing.assert_allclose(t, [0, 1])
    np.testing.assert_allclose(mid, [0, -0.5])
    t, mid, length = face_geometry(m, find((0, 0), (1, 1)))
    assert length == pytest.approx(m.h * np.sqrt(2))


def test_out_of_range_ids():
    m = build_structured_mesh(1)
    with pytest.raises(IndexError):
        face_geometry(m, 5)
    with pytest.raises(IndexError):
        m.element(2)


def test_map_points():
    m = build_structured_mesh(2)
    X = m.map_points(np.array([[0, 0], [1, 0], [0, 1]], float))
    np.testing.assert_allclose(X, m.coords[m.elem_vertices])


def test_vtk_export(tmp_path):
    m = build_structured_mesh(2)
    path = tmp_path / "mesh.vtk"
    write_vtk(m, path, cell_data={"k": np.arange(m.n_elements)})
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert f"CELLS {m.n_elements} {4 * m.n_elements}" in text
    assert "SCALARS k double 1" in text
