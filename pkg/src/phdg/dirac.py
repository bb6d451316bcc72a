"""Matrix-level checks of the power-conserving structure of the element relations.

Element relations (one triangle, boundary ports sampled at edge Gauss nodes in
the element's counter-clockwise orientation, W the edge weights):

    f_p = -A e_q - 1/2 Tp^T W Tq e_q + Tp^T W u_q        A_ij = int psi_j ^ d nu_i
    f_q =  D e_p - 1/2 Tq^T W Tp e_p + Tq^T W u_p        D_ij = int nu_j d psi_i
    y_p = -Tp e_p,   y_q = -Tq e_q

Flows are dual vectors, so e . f is the power of the interior ports, and
e_p.f_p + e_q.f_q + y_q W u_p + u_q W y_p vanishes by integration by parts.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .assembly import (BoundaryData, _exterior_weights, assemble_system, reference_tables)
from .mesh import build_structured_mesh

THETAS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class PortSample:
    e_p: np.ndarray
    e_q: np.ndarray
    u_p: np.ndarray
    u_q: np.ndarray
    f_p: np.ndarray
    f_q: np.ndarray
    y_p: np.ndarray
    y_q: np.ndarray

    def scaled(self, c):
        return PortSample(*(c * getattr(self, k) for k in self.__dataclass_fields__))


class ElementDirac:
    """Relation matrices of the element Dirac structure for polynomial order r.

    The blocks are the same for every affine element because the stress basis
    is pulled back from the reference triangle."""

    def __init__(self, r):
        tab = reference_tables(r)
        self.r = r
        self.n_p, self.n_q = tab.n_p, tab.n_q
        self.ng = len(tab.edge_weights)
        self.A = tab.vol_pq
        self.D = -tab.vol_qp
        self.Tp = tab.trace_p.reshape(-1, self.n_p)
        self.Tq = tab.trace_q.reshape(-1, self.n_q)
        self.W = np.tile(tab.edge_weights, 3)
        self.n_b = len(self.W)

    def sample(self, e_p, e_q, u_p, u_q) -> PortSample:
        e_p, e_q, u_p, u_q = (np.asarray(a, dtype=float) for a in (e_p, e_q, u_p, u_q))
        for name, a, n in (("e_p", e_p, self.n_p), ("e_q", e_q, self.n_q),
                           ("u_p", u_p, self.n_b), ("u_q", u_q, self.n_b)):
            if a.shape != (n,):
                raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
        W, Tp, Tq = self.W, self.Tp, self.Tq
        tp, tq = Tp @ e_p, Tq @ e_q
        f_p = -self.A @ e_q - 0.5 * Tp.T @ (W * tq) + Tp.T @ (W * u_q)
        f_q = self.D @ e_p - 0.5 * Tq.T @ (W * tp) + Tq.T @ (W * u_p)
        return PortSample(e_p, e_q, u_p, u_q, f_p, f_q, -tp, -tq)

    def random_sample(self, rng) -> PortSample:
        return self.sample(rng.standard_normal(self.n_p), rng.standard_normal(self.n_q),
                           rng.standard_normal(self.n_b), rng.standard_normal(self.n_b))

    def edge_slice(self, e):
        return slice(e * self.ng, (e + 1) * self.ng)


def _power_terms(s: PortSample, W):
    return (s.e_p * s.f_p, s.e_q * s.f_q, W * s.y_q * s.u_p, W * s.u_q * s.y_p)


def element_power(sample: PortSample, element: ElementDirac, return_scale=False):
    """<e_p|f_p> + <e_q|f_q> + <y_q|u_p> + <u_q|y_p> for one element."""
    if sample.u_p.shape != (element.n_b,) or sample.e_p.shape != (element.n_p,) \
            or sample.e_q.shape != (element.n_q,):
        raise ValueError("port sample does not match the element dimensions")
    terms = _power_terms(sample, element.W)
    total = float(sum(t.sum() for t in terms))
    if return_scale:
        return total, float(sum(np.abs(t).sum() for t in terms))
    return total


def interconnect(ys_L, y_L, ys_R, y_R, theta):
    """Apply the face interconnection relation; returns (w_L, ws_L, w_R, ws_R).

    y are the velocity traces and ys the stress traces of the left and right
    elements, all sampled in the face direction."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    ys_L, y_L, ys_R, y_R = (np.asarray(a, dtype=float) for a in (ys_L, y_L, ys_R, y_R))
    w_L = (theta - 0.5) * y_L - theta * y_R
    ws_L = (0.5 - theta) * ys_L + (theta - 1.0) * ys_R
    w_R = (1.0 - theta) * y_L + (theta - 0.5) * y_R
    ws_R = theta * ys_L + (0.5 - theta) * ys_R
    return w_L, ws_L, w_R, ws_R


def interconnect_power(ys_L, y_L, ys_R, y_R, theta, weights=None, return_scale=False):
    w_L, ws_L, w_R, ws_R = interconnect(ys_L, y_L, ys_R, y_R, theta)
    W = np.ones_like(np.asarray(y_L, float)) if weights is None else weights
    terms = (W * ys_L * w_L, W * ws_L * y_L, W * ys_R * w_R, W * ws_R * y_R)
    total = float(sum(t.sum() for t in terms))
    if return_scale:
        return total, float(sum(np.abs(t).sum() for t in terms))
    return total


# ---------------------------------------------------------------- composition

@dataclass
class CompositionResult:
    theta: float
    element_residuals: tuple       # element power identity per element
    interior_face_power: float     # both elements' port power on the shared face
    interconnect_power: float
    internal_power: float          # sum of e . f over both elements
    outer_pairing: float           # port power on the outer boundary edges
    scale: float
    flows: np.ndarray              # (f_p of both elements, f_q of both elements)
    state: np.ndarray

    @property
    def balance_residual(self):
        return self.internal_power + self.outer_pairing


def _to_local(samples, sign, q_type):
    out = samples if sign > 0 else samples[::-1]
    return -out if (q_type and sign < 0) else out


def compose_two_elements(theta, rng=None, state=None, outer_inputs=None, bc_mode=None,
                         data: BoundaryData = None, t=0.0, r=1):
    """Compose two element structures through the interconnection on the shared diagonal.

    Outer boundary inputs are random (``outer_inputs='random'``, the default),
    zero (``'zero'``), or derived from an exterior closure (``bc_mode`` with
    ``data``) so that the composed flows can be compared to an assembled system.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    mesh = build_structured_mesh(1)
    ed = ElementDirac(r)
    tab = reference_tables(r)
    nel = 2
    if state is None:
        state = rng.standard_normal(nel * (ed.n_p + ed.n_q))
    state = np.asarray(state, dtype=float)
    ep = state[:nel * ed.n_p].reshape(nel, ed.n_p)
    eq = state[nel * ed.n_p:].reshape(nel, ed.n_q)

    u_p = np.zeros((nel, ed.n_b))
    u_q = np.zeros((nel, ed.n_b))

    f = int(mesh.interior_faces[0])
    (L, R), (eL, eR), (sL, sR) = mesh.face_elements[f], mesh.face_local[f], mesh.face_signs[f]
    V_L = tab.global_trace_p(eL, sL) @ ep[L]
    S_L = tab.global_trace_q(eL, sL) @ eq[L]
    V_R = tab.global_trace_p(eR, sR) @ ep[R]
    S_R = tab.global_trace_q(eR, sR) @ eq[R]
    w_L, ws_L, w_R, ws_R = interconnect(S_L, V_L, S_R, V_R, theta)
    u_p[L, ed.edge_slice(eL)] = _to_local(w_L, sL, False)
    u_q[L, ed.edge_slice(eL)] = _to_local(ws_L, sL, True)
    u_p[R, ed.edge_slice(eR)] = _to_local(-w_R, sR, False)
    u_q[R, ed.edge_slice(eR)] = _to_local(-ws_R, sR, True)
    ic_power = interconnect_power(S_L, V_L, S_R, V_R, theta, tab.edge_weights)

    mode = bc_mode
    if mode is None and outer_inputs is None:
        outer_inputs = "random"
    for g in mesh.exterior_faces:
        k, e, s = mesh.face_elements[g, 0], mesh.face_local[g, 0], mesh.face_signs[g, 0]
        sl = ed.edge_slice(e)
        if mode is not None:
            trv = tab.global_trace_p(e, s) @ ep[k]
            trs = tab.global_trace_q(e, s) @ eq[k]
            own_s, own_v, dat_s, dat_v = _exterior_weights(theta, mode)
            p0, p1 = mesh.coords[mesh.face_vertices[g]]
            pts = p0 + tab.edge_points[:, None] * (p1 - p0)
            if data is None or mode == "trace":
                gv = gs = np.zeros(len(pts))
            else:
                gv = np.broadcast_to(data.velocity(t, pts[:, 0], pts[:, 1]), (len(pts),))
                gs = np.broadcast_to(np.asarray(data.stress(t, pts[:, 0], pts[:, 1]), float),
                                     (len(pts), 2)) @ (p1 - p0)
            vhat = own_v * trv + dat_v * gv
            shat = own_s * trs + dat_s * gs
            u_p[k, sl] = _to_local(0.5 * trv - vhat, s, False)
            u_q[k, sl] = _to_local(0.5 * trs - shat, s, True)
        elif outer_inputs == "random":
            u_p[k, sl] = rng.standard_normal(ed.ng)
            u_q[k, sl] = rng.standard_normal(ed.ng)

    samples = [ed.sample(ep[k], eq[k], u_p[k], u_q[k]) for k in range(nel)]
    residuals = []
    scale = 0.0
    for smp in samples:
        res, sc = element_power(smp, ed, return_scale=True)
        residuals.append(res)
        scale += sc

    def edge_power(smp, e):
        sl = ed.edge_slice(e)
        W = ed.W[sl]
        return float(np.sum(W * (smp.y_q[sl] * smp.u_p[sl] + smp.u_q[sl] * smp.y_p[sl])))

    face_power = edge_power(samples[L], eL) + edge_power(samples[R], eR)
    outer = sum(edge_power(samples[mesh.face_elements[g, 0]], mesh.face_local[g, 0])
                for g in mesh.exterior_faces)
    internal = float(sum(s.e_p @ s.f_p + s.e_q @ s.f_q for s in samples))
    flows = np.concatenate([np.concatenate([s.f_p for s in samples]),
                            np.concatenate([s.f_q for s in samples])])
    return CompositionResult(theta, tuple(residuals), face_power, ic_power, internal, outer,
                             scale, flows, state)


def assembled_flows(theta, state, bc_mode="data", data=None, t=0.0, r=1):
    """-(S x + b(t)) from the assembled system on the same two-element mesh."""
    mesh = build_structured_mesh(1)
    if data is None:
        data = BoundaryData.zero()
    system = assemble_system(mesh, r, theta, bc_mode, data)
    return -system.rhs(t, state), system


# ---------------------------------------------------------------- bilinear form

def port_form(a: PortSample, b: PortSample, W):
    """Symmetrized power pairing of two port tuples."""
    return float(a.e_p @ b.f_p + b.e_p @ a.f_p + a.e_q @ b.f_q + b.e_q @ a.f_q
                 + np.sum(W * (a.y_q * b.u_p + b.y_q * a.u_p + a.u_q * b.y_p + b.u_q * a.y_p)))


def extended_form(a: PortSample, b: PortSample, element: ElementDirac):
    """Pairing of (f_p, f_q, e_p, e_q) tuples with the four trace terms on the boundary."""
    W, Tp, Tq = element.W, element.Tp, element.Tq
    tp_a, tq_a = Tp @ a.e_p, Tq @ a.e_q
    tp_b, tq_b = Tp @ b.e_p, Tq @ b.e_q
    return float(b.e_p @ a.f_p + a.e_p @ b.f_p + b.e_q @ a.f_q + a.e_q @ b.f_q
                 + np.sum(W * (tq_b * tp_a)) + np.sum(W * (tq_a * tp_b))
                 + np.sum(W * (tp_b * tq_a)) + np.sum(W * (tp_a * tq_b)))


def bilinear_symmetry_check(element: ElementDirac, pairs=100, rng=None, swap_boundary=False):
    """Max relative asymmetry of both symmetric forms over random pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(pairs):
        a = element.random_sample(rng)
        b = element.random_sample(rng)
        if swap_boundary:
            a, b = (PortSample(a.e_p, a.e_q, b.u_p, b.u_q, a.f_p, a.f_q, b.y_p, b.y_q),
                    PortSample(b.e_p, b.e_q, a.u_p, a.u_q, b.f_p, b.f_q, a.y_p, a.y_q))
        for form in (lambda x, y: port_form(x, y, element.W),
                     lambda x, y: extended_form(x, y, element)):
            ab, ba = form(a, b), form(b, a)
            scale = max(abs(ab), abs(ba), _sample_norm(a) * _sample_norm(b), 1e-300)
            worst = max(worst, abs(ab - ba) / scale)
    return worst


def _sample_norm(s: PortSample):
    return float(np.sqrt(sum(np.sum(getattr(s, k) ** 2) for k in s.__dataclass_fields__)))


# ---------------------------------------------------------------- dimensions

@dataclass
class DimensionReport:
    r: int
    dim_structure: int
    dim_flow_space: int
    dim_orthogonal: int
    isotropy_residual: float

    @property
    def is_dirac(self):
        return (self.dim_structure == self.dim_flow_space == self.dim_orthogonal
                and self.isotropy_residual <= 1e-12)


@lru_cache(maxsize=None)
def _relation_matrix(r):
    """Columns span the structure: parameters (e_p, e_q, u_p, u_q) mapped to the
    full port tuple ordered (f_p, f_q, y_p, y_q | e_p, e_q, u_q, u_p)."""
    ed = ElementDirac(r)
    n = ed.n_p + ed.n_q + 2 * ed.n_b
    cols = []
    for j in range(n):
        z = np.zeros(n)
        z[j] = 1.0
        s = ed.sample(*np.split(z, np.cumsum([ed.n_p, ed.n_q, ed.n_b])))
        cols.append(np.concatenate([s.f_p, s.f_q, s.y_p, s.y_q, s.e_p, s.e_q, s.u_q, s.u_p]))
    return ed, np.array(cols).T


def _pairing_matrix(ed):
    """Symmetric matrix of the power pairing on (flow | effort) tuples."""
    nf = ed.n_p + ed.n_q + 2 * ed.n_b
    P = np.zeros((nf, nf))       # effort . flow
    P[:ed.n_p, :ed.n_p] = np.eye(ed.n_p)
    o = ed.n_p
    P[o:o + ed.n_q, o:o + ed.n_q] = np.eye(ed.n_q)
    o += ed.n_q
    # efforts u_q pair with flows y_p, u_p with y_q, through the edge weights
    P[o:o + ed.n_b, o:o + ed.n_b] = np.diag(ed.W)
    P[o + ed.n_b:, o + ed.n_b:] = np.diag(ed.W)
    Pi = np.zeros((2 * nf, 2 * nf))
    Pi[nf:, :nf] = P
    Pi[:nf, nf:] = P.T
    return Pi


def dimension_check(r) -> DimensionReport:
    ed, G = _relation_matrix(r)
    Pi = _pairing_matrix(ed)
    dim_flow = ed.n_p + ed.n_q + 2 * ed.n_b
    dim_D = int(np.linalg.matrix_rank(G))
    # orthogonal complement: vectors z with z^T Pi G = 0
    dim_perp = 2 * dim_flow - int(np.linalg.matrix_rank(G.T @ Pi))
    iso = G.T @ Pi @ G
    scale = max(np.abs(G).max() ** 2, 1e-300)
    return DimensionReport(r, dim_D, dim_flow, dim_perp, float(np.abs(iso).max() / scale))


def trace_pairing_rank(r):
    """(rank of velocity traces, rank of stress traces, rank of their boundary pairing)."""
    ed = ElementDirac(r)
    sw = np.sqrt(ed.W)[:, None]

    def basis(T):
        U, s, _ = np.linalg.svd(sw * T, full_matrices=False)
        k = int(np.sum(s > 1e-10 * s[0]))
        return U[:, :k]

    Up, Uq = basis(ed.Tp), basis(ed.Tq)
    pairing = Uq.T @ Up
    return Up.shape[1], Uq.shape[1], int(np.linalg.matrix_rank(pairing, tol=1e-10))


# ---------------------------------------------------------------- suite

def verify(r_values=(0, 1, 2), thetas=THETAS, samples=100, seed=0, tol=1e-12):
    """All structural checks; returns rows (check, r, theta, residual, tolerance, passed)."""
    rng = np.random.default_rng(seed)
    rows = []
    for r in r_values:
        ed = ElementDirac(r)
        worst = 0.0
        for _ in range(samples):
            p, sc = element_power(ed.random_sample(rng), ed, return_scale=True)
            worst = max(worst, abs(p) / sc)
        rows.append(("element power", r, None, worst, tol, worst <= tol))
        for theta in thetas:
            worst = 0.0
            for _ in range(samples):
                ys_L, y_L, ys_R, y_R = rng.standard_normal((4, ed.ng))
                p, sc = interconnect_power(ys_L, y_L, ys_R, y_R, theta, ed.W[:ed.ng],
                                           return_scale=True)
                worst = max(worst, abs(p) / sc)
            rows.append(("interconnection power", r, theta, worst, tol, worst <= tol))
            worst = 0.0
            for _ in range(max(1, samples // 10)):
                c = compose_two_elements(theta, rng, r=r)
                res = max(max(abs(x) for x in c.element_residuals), abs(c.interior_face_power),
                          abs(c.balance_residual)) / c.scale
                worst = max(worst, res)
            rows.append(("two-element composition", r, theta, worst, tol, worst <= tol))
        sym = bilinear_symmetry_check(ed, samples, rng)
        rows.append(("bilinear symmetry", r, None, sym, tol, sym <= tol))
        dim = dimension_check(r)
        rows.append((f"dimension {dim.dim_structure}/{dim.dim_flow_space}/{dim.dim_orthogonal}",
                     r, None, dim.isotropy_residual, tol, dim.is_dirac))
        npr, nqr, pr = trace_pairing_rank(r)
        rows.append((f"trace pairing rank {pr} (traces {npr}, {nqr})", r, None, 0.0, 0.0,
                     pr == min(npr, nqr)))
    return rows
