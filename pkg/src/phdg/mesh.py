"""Structured triangulation of the square [-1, 1]^2 with oriented faces."""

from dataclasses import dataclass

import numpy as np

from .polyforms import REFERENCE_EDGES


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class Element:
    vertex_ids: tuple
    jacobian: np.ndarray
    jacobian_det: float


@dataclass(frozen=True)
class Face:
    vertex_ids: tuple
    left_element: int
    right_element: int | None
    local_edge_in_left: int
    local_edge_in_right: int | None
    sign_left: int
    sign_right: int | None
    length: float

    @property
    def is_interior(self):
        return self.right_element is not None


class Mesh:
    """Array-backed triangle mesh.

    Element k has counter-clockwise vertices ``elem_vertices[k]``; its local
    edge e runs from local vertex e to local vertex (e+1) % 3.  Faces run from
    the lower to the higher vertex id.  ``face_elements[f] = (left, right)``
    with ``right = -1`` on the boundary, and ``face_signs`` holds +1 where the
    element's counter-clockwise boundary agrees with the face direction.
    """

    def __init__(self, vertices, elem_vertices, h):
        self.coords = np.asarray(vertices, dtype=float)
        self.elem_vertices = np.asarray(elem_vertices, dtype=np.int64)
        self.h = float(h)

        P = self.coords[self.elem_vertices]
        B = np.empty((len(P), 2, 2))
        B[:, :, 0] = P[:, 1] - P[:, 0]
        B[:, :, 1] = P[:, 2] - P[:, 0]
        self.jacobians = B
        self.dets = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        if np.any(self.dets <= 0):
            raise ValueError("mesh contains elements with non-positive orientation")
        self._build_faces()

    def _build_faces(self):
        nel = len(self.elem_vertices)
        nv = len(self.coords)
        a = np.concatenate([self.elem_vertices[:, i] for i, _ in REFERENCE_EDGES])
        b = np.concatenate([self.elem_vertices[:, j] for _, j in REFERENCE_EDGES])
        elem = np.tile(np.arange(nel), 3)
        local = np.repeat(np.arange(3), nel)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        sign = np.where(a < b, 1, -1)

        keys = lo * nv + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("non-manifold edge")
        nf = len(uniq)
        self.face_vertices = np.stack([uniq // nv, uniq % nv], axis=1)

        left = np.full(nf, -1, dtype=np.int64)
        right = np.full(nf, -1, dtype=np.int64)
        loc_l = np.full(nf, -1, dtype=np.int64)
        loc_r = np.full(nf, -1, dtype=np.int64)
        sgn_l = np.zeros(nf, dtype=np.int64)
        sgn_r = np.zeros(nf, dtype=np.int64)
        # positive-sign half edges go left; boundary half edges go left regardless
        order = np.lexsort((-sign, inverse))
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        fi, se = order[first], order[~first]
        left[inverse[fi]] = elem[fi]
        loc_l[inverse[fi]] = local[fi]
        sgn_l[inverse[fi]] = sign[fi]
        right[inverse[se]] = elem[se]
        loc_r[inverse[se]] = local[se]
        sgn_r[inverse[se]] = sign[se]

        self.face_elements = np.stack([left, right], axis=1)
        self.face_local = np.stack([loc_l, loc_r], axis=1)
        self.face_signs = np.stack([sgn_l, sgn_r], axis=1)
        d = self.coords[self.face_vertices[:, 1]] - self.coords[self.face_vertices[:, 0]]
        self.face_lengths = np.hypot(d[:, 0], d[:, 1])

        self.elem_faces = inverse.reshape(3, nel).T.copy()
        self.elem_signs = sign.reshape(3, nel).T.copy()
        # neighbour across each local edge, and that neighbour's local edge index
        nb = np.full((nel, 3), -1, dtype=np.int64)
        nb_local = np.full((nel, 3), -1, dtype=np.int64)
        interior = right >= 0
        for f_e, mine, other in ((0, 0, 1), (1, 1, 0)):
            el = self.face_elements[interior, mine]
            lo_ = self.face_local[interior, mine]
            nb[el, lo_] = self.face_elements[interior, other]
            nb_local[el, lo_] = self.face_local[interior, other]
        self.elem_neighbors = nb
        self.elem_neighbor_local = nb_local

        self.interior_faces = np.flatnonzero(interior)
        self.exterior_faces = np.flatnonzero(~interior)

    @property
    def n_vertices(self):
        return len(self.coords)

    @property
    def n_elements(self):
        return len(self.elem_vertices)

    @property
    def n_faces(self):
        return len(self.face_vertices)

    @property
    def vertices(self):
        return [Point2(float(x), float(y)) for x, y in self.coords]

    def element(self, k) -> Element:
        if not 0 <= k < self.n_elements:
            raise IndexError(f"element id {k} out of range")
        return Element(tuple(int(v) for v in self.elem_vertices[k]), self.jacobians[k].copy(),
                       float(self.dets[k]))

    def face(self, f) -> Face:
        if not 0 <= f < self.n_faces:
            raise IndexError(f"face id {f} out of range")
        (l, r), (ll, lr), (sl, sr) = self.face_elements[f], self.face_local[f], self.face_signs[f]
        interior = r >= 0
        return Face(
            tuple(int(v) for v in self.face_vertices[f]), int(l),
            int(r) if interior else None, int(ll), int(lr) if interior else None,
            int(sl), int(sr) if interior else None, float(self.face_lengths[f]),
        )

    @property
    def elements(self):
        return [self.element(k) for k in range(self.n_elements)]

    @property
    def faces(self):
        return [self.face(f) for f in range(self.n_faces)]

    def map_points(self, ref_points, elements=None):
        """Physical coordinates of reference points, shape (nel, npts, 2)."""
        ref = np.asarray(ref_points, dtype=float)
        if elements is None:
            elements = slice(None)
        x0 = self.coords[self.elem_vertices[elements, 0]]
        return x0[..., None, :] + np.einsum("...ij,pj->...pi", self.jacobians[elements], ref)


def build_structured_mesh(n: int) -> Mesh:
    """Uniform n x n grid on [-1, 1]^2, each cell cut along its (-,-) to (+,+) diagonal."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"need at least one cell per axis, got {n!r}")
    t = np.linspace(-1.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    coords = np.stack([X.ravel(), Y.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (i + (n + 1) * j).ravel()
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    elems = np.empty((2 * n * n, 3), dtype=np.int64)
    elems[0::2] = lower
    elems[1::2] = upper
    return Mesh(coords, elems, 2.0 / n)


def face_geometry(mesh: Mesh, face_id: int):
    """(unit tangent along the face direction, midpoint, length)."""
    if not 0 <= face_id < mesh.n_faces:
        raise IndexError(f"face id {face_id} out of range")
    p0, p1 = mesh.coords[mesh.face_vertices[face_id]]
    length = float(np.hypot(*(p1 - p0)))
    return (p1 - p0) / length, 0.5 * (p0 + p1), length


def write_vtk(mesh: Mesh, path, point_data=None, cell_data=None, title="phdg mesh"):
    """Legacy ASCII VTK unstructured grid."""
    nv, ne = mesh.n_vertices, mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.coords]
    lines.append(f"CELLS {ne} {4 * ne}")
    lines += ["3 %d %d %d" % tuple(v) for v in mesh.elem_vertices]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["5"] * ne
    for header, count, data in (("POINT_DATA", nv, point_data), ("CELL_DATA", ne, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{v[0]:.17g} {v[1]:.17g} 0" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
