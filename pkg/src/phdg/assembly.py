"""Semi-discrete system M x' = S x + b(t) for the wave equation in first-order form.

Unknowns are a broken scalar velocity V (degree r) and a broken stress
1-form sigma (degree r+1).  With test functions nu (scalar) and psi (1-form):

    (nu, V')        = sum_K int_K sigma ^ d nu  + sum_F <sigma_hat | tr nu>
    (psi, sigma')   = -sum_K int_K V d psi      + sum_F <tr psi | V_hat>

Face pairings are taken in each element's counter-clockwise orientation.  On
an interior face, with the left element L and right element R,

    V_hat = (1 - theta) V_L + theta V_R,   sigma_hat = theta sigma_L + (1 - theta) sigma_R.

Exterior faces support three closures:

``data``   (default) the boundary data acts as the missing right state,
           V_hat = (1-theta) V + theta g_V, sigma_hat = theta sigma + (1-theta) g_sigma.
           With zero data the operator S is exactly skew-symmetric.
``trace``  V_hat = tr V, sigma_hat = tr sigma; no data enters.
``direct`` V_hat = g_V, sigma_hat = g_sigma.

All face integrals are evaluated on samples at edge Gauss points in the global
face direction (lower to higher vertex id).  Because the stress basis is the
pullback of a reference basis, every coupling block is independent of the
element geometry; only the mass blocks see the Jacobian.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .kernels import BlockOperator, GatherOperator, dedup_blocks, fuse_left
from .mesh import Mesh
from .polyforms import REFERENCE_EDGES, REFERENCE_VERTICES
from .quadrature import edge_rule, triangle_rule
from .spaces import BrokenSpace, make_spaces, orthonormal_scalar_basis, tabulate_scalar

BC_MODES = ("data", "trace", "direct")


@dataclass(frozen=True)
class Constitutive:
    """Positive material coefficients: c_p weights the velocity mass, c_q the stress mass.

    Each is a positive float or a callable c(x, y)."""

    c_p: object = 1.0
    c_q: object = 1.0


@dataclass(frozen=True)
class BoundaryData:
    """velocity(t, x, y) -> array; stress(t, x, y) -> physical 1-form components (..., 2)."""

    velocity: object
    stress: object
    homogeneous: bool = False

    @classmethod
    def zero(cls):
        return cls(lambda t, x, y: np.zeros(np.shape(x)),
                   lambda t, x, y: np.zeros(np.shape(x) + (2,)), True)


@dataclass
class StateVector:
    v: np.ndarray
    s: np.ndarray

    def flat(self):
        return np.concatenate([self.v, self.s])

    @classmethod
    def from_flat(cls, x, n_v):
        return cls(x[:n_v].copy(), x[n_v:].copy())


@dataclass(frozen=True)
class ReferenceTables:
    r: int
    n_p: int
    n_q: int
    edge_points: np.ndarray
    edge_weights: np.ndarray
    trace_p: np.ndarray       # (3, ng, n_p), counter-clockwise parameter
    trace_q: np.ndarray       # (3, ng, n_q), tangential component along the ccw tangent
    vol_pq: np.ndarray        # int sigma_j ^ d nu_i
    vol_qp: np.ndarray        # -int V_j d psi_i

    def global_trace_p(self, e, sign):
        t = self.trace_p[e]
        return t if sign > 0 else t[::-1]

    def global_trace_q(self, e, sign):
        t = self.trace_q[e]
        return t if sign > 0 else -t[::-1]


@lru_cache(maxsize=None)
def reference_tables(r: int) -> ReferenceTables:
    phi_p = orthonormal_scalar_basis(r)
    phi_q = orthonormal_scalar_basis(r + 1)
    nq_s = len(phi_q)
    vol = triangle_rule(2 * r + 4)
    w = vol.weights
    P, dP = tabulate_scalar(phi_p, vol.points)
    Q, dQ = tabulate_scalar(phi_q, vol.points)

    # stress basis: first block has only a dx component, second only dy
    psi = np.zeros((2 * nq_s, len(w), 2))
    psi[:nq_s, :, 0] = Q
    psi[nq_s:, :, 1] = Q
    # d psi density: d(f dx) = -f_y, d(f dy) = f_x
    dpsi = np.concatenate([-dQ[:, :, 1], dQ[:, :, 0]])

    # psi ^ d nu = psi_x nu_y - psi_y nu_x
    wedge = psi[None, :, :, 0] * dP[:, None, :, 1] - psi[None, :, :, 1] * dP[:, None, :, 0]
    vol_pq = wedge @ w
    vol_qp = -np.einsum("kq,jq,q->kj", dpsi, P, w)

    edge = edge_rule(2 * r + 3)
    s = np.asarray(edge.points)
    tp = np.empty((3, len(s), len(phi_p)))
    tq = np.empty((3, len(s), 2 * nq_s))
    for e, (i, j) in enumerate(REFERENCE_EDGES):
        a, b = REFERENCE_VERTICES[i], REFERENCE_VERTICES[j]
        pts = a + s[:, None] * (b - a)
        tan = b - a
        tp[e] = tabulate_scalar(phi_p, pts)[0].T
        qv = tabulate_scalar(phi_q, pts)[0].T
        tq[e, :, :nq_s] = tan[0] * qv
        tq[e, :, nq_s:] = tan[1] * qv

    return ReferenceTables(
        r=r, n_p=len(phi_p), n_q=2 * nq_s,
        edge_points=s, edge_weights=np.asarray(edge.weights),
        trace_p=tp, trace_q=tq, vol_pq=vol_pq, vol_qp=vol_qp,
    )


# ---------------------------------------------------------------- mass

class BlockMass:
    """Block-diagonal mass with Cholesky factors cached per distinct block."""

    def __init__(self, blocks, idx):
        self.blocks = np.asarray(blocks)
        self.idx = np.asarray(idx, dtype=np.int64)
        n = self.blocks.shape[1]
        self.factors = []
        inv = np.empty_like(self.blocks)
        for m, blk in enumerate(self.blocks):
            if not np.all(np.isfinite(blk)):
                raise np.linalg.LinAlgError("non-finite mass block")
            c = scipy.linalg.cho_factor(blk, lower=True)
            self.factors.append(c)
            inv[m] = scipy.linalg.cho_solve(c, np.eye(n))
            inv[m] = 0.5 * (inv[m] + inv[m].T)
        self.inverse_blocks = inv
        self._apply = BlockOperator(self.blocks, self.idx)
        self._solve = BlockOperator(inv, self.idx)

    @property
    def block_size(self):
        return self.blocks.shape[1]

    @property
    def n_elements(self):
        return len(self.idx)

    def matvec(self, x):
        return self._apply(x).ravel()

    def solve(self, x):
        return self._solve(x).ravel()

    def element_block(self, k):
        return self.blocks[self.idx[k]]

    def to_sparse(self):
        return sp.block_diag(list(self.blocks[self.idx]), format="csr")


def _check_coefficient(c, values=None):
    if callable(c):
        if values is not None and not np.all(values > 0):
            raise ValueError("material coefficient must be positive everywhere")
    elif not np.isfinite(c) or c <= 0:
        raise ValueError(f"material coefficient must be positive, got {c!r}")


def assemble_mass(space: BrokenSpace, coefficient=1.0) -> BlockMass:
    """Weighted mass blocks int_K C phi_i phi_j (scalars) or int_K C psi_i . psi_j (1-forms)."""
    mesh = space.mesh
    _check_coefficient(coefficient)
    B = mesh.jacobians
    det = mesh.dets
    if space.form_rank == 1:
        Binv = np.linalg.inv(B)
        G = Binv @ np.swapaxes(Binv, 1, 2)   # metric for reference components

    if not callable(coefficient):
        if space.form_rank == 0:
            ref = _reference_mass(space.poly_degree)
            blocks = (coefficient * det)[:, None, None] * ref[None]
        else:
            mq = _reference_mass(space.poly_degree)
            blocks = (coefficient * det)[:, None, None, None, None] * (
                G[:, :, None, :, None] * mq[None, None, :, None, :])
            n = 2 * mq.shape[0]
            blocks = blocks.reshape(len(det), n, n)
    else:
        rule = triangle_rule(min(2 * space.poly_degree + 6, 20))
        phi, _ = tabulate_scalar(orthonormal_scalar_basis(space.poly_degree), rule.points)
        X = mesh.map_points(rule.points)
        C = np.asarray(coefficient(X[..., 0], X[..., 1]), dtype=float)
        C = np.broadcast_to(C, X.shape[:2])
        _check_coefficient(coefficient, C)
        wc = C * rule.weights * det[:, None]
        ms = np.einsum("kq,iq,jq->kij", wc, phi, phi)
        if space.form_rank == 0:
            blocks = ms
        else:
            ns = phi.shape[0]
            blocks = (G[:, :, None, :, None] * ms[:, None, :, None, :]).reshape(len(det), 2 * ns, 2 * ns)
    blocks = 0.5 * (blocks + np.swapaxes(blocks, 1, 2))
    uniq, idx = dedup_blocks(blocks)
    return BlockMass(uniq, idx)


@lru_cache(maxsize=None)
def _reference_mass(degree):
    rule = triangle_rule(2 * degree + 2)
    phi, _ = tabulate_scalar(orthonormal_scalar_basis(degree), rule.points)
    return (phi * rule.weights) @ phi.T


# ---------------------------------------------------------------- coupling

def _check_theta(theta):
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")


def _check_mode(mode):
    if mode not in BC_MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {BC_MODES}")


def _exterior_weights(theta, mode):
    """(own-trace weight in sigma_hat, own-trace weight in V_hat, data weight in sigma_hat,
    data weight in V_hat)."""
    if mode == "data":
        return theta, 1.0 - theta, 1.0 - theta, theta
    if mode == "trace":
        return 1.0, 1.0, 0.0, 0.0
    return 0.0, 0.0, 1.0, 1.0


def typed_coupling(mesh: Mesh, tables: ReferenceTables, theta, mode="data",
                   parts=("volume", "interior", "boundary")):
    """Typed block operators (K_pq, K_qp) over slots [self, across edge 0, 1, 2]."""
    _check_theta(theta)
    _check_mode(mode)
    W = tables.edge_weights
    nel = mesh.n_elements
    nb = mesh.elem_neighbors
    signs = mesh.elem_signs
    ext_own_s, ext_own_v, _, _ = _exterior_weights(theta, mode)

    # self blocks, keyed by the (interior?, sign) state of each local edge
    state = np.where(nb >= 0, 0, 2) + (signs < 0)
    code = state[:, 0] + 4 * state[:, 1] + 16 * state[:, 2]
    self_codes, self_idx = np.unique(code, return_inverse=True)
    pq_mats, qp_mats = [], []
    for c in self_codes:
        kpq = tables.vol_pq.copy() if "volume" in parts else np.zeros_like(tables.vol_pq)
        kqp = tables.vol_qp.copy() if "volume" in parts else np.zeros_like(tables.vol_qp)
        for e in range(3):
            st = (c >> (2 * e)) & 3
            s = 1 if st % 2 == 0 else -1
            tp = tables.global_trace_p(e, s)
            tq = tables.global_trace_q(e, s)
            if st < 2:
                if "interior" not in parts:
                    continue
                om = theta if s > 0 else 1.0 - theta
                ws, wv = om, 1.0 - om
            else:
                if "boundary" not in parts:
                    continue
                ws, wv = ext_own_s, ext_own_v
            kpq += s * ws * (tp.T * W) @ tq
            kqp += s * wv * (tq.T * W) @ tp
        pq_mats.append(kpq)
        qp_mats.append(kqp)

    idx = np.full((nel, 4), -1, dtype=np.int64)
    src = np.zeros((nel, 4), dtype=np.int64)
    idx[:, 0] = self_idx.ravel()
    src[:, 0] = np.arange(nel)
    if "interior" in parts:
        nbl = mesh.elem_neighbor_local
        for e in range(3):
            has = nb[:, e] >= 0
            key = np.where(has, nbl[:, e] * 2 + (signs[:, e] < 0), -1)
            for kv in np.unique(key[has]):
                e2, neg = divmod(int(kv), 2)
                s = -1 if neg else 1
                om = theta if s > 0 else 1.0 - theta
                tp = tables.global_trace_p(e, s)
                tq = tables.global_trace_q(e, s)
                tp_y = tables.global_trace_p(e2, -s)
                tq_y = tables.global_trace_q(e2, -s)
                pq_mats.append(s * (1.0 - om) * (tp.T * W) @ tq_y)
                qp_mats.append(s * om * (tq.T * W) @ tp_y)
                sel = key == kv
                idx[sel, 1 + e] = len(pq_mats) - 1
            src[has, 1 + e] = nb[has, e]
    return (GatherOperator(np.array(pq_mats), idx, src),
            GatherOperator(np.array(qp_mats), idx, src))


def gather_to_sparse(op: GatherOperator):
    nout, nin = op.shape
    rows, cols, vals = [], [], []
    ii, qq = np.meshgrid(np.arange(nout), np.arange(nin), indexing="ij")
    for m, els, src in op.groups():
        blk = op.mats[m]
        rows.append((els[:, None] * nout + ii.ravel()[None]).ravel())
        cols.append((src[:, None] * nin + qq.ravel()[None]).ravel())
        vals.append(np.broadcast_to(blk.ravel(), (len(els), blk.size)).ravel())
    nel = op.idx.shape[0]
    if not rows:
        return sp.csr_matrix((nel * nout, nel * nin))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nel * nout, nel * nin))
    return A.tocsr()


def assemble_volume_coupling(E_p: BrokenSpace, E_q: BrokenSpace):
    """Sparse (K_pq, K_qp) holding only the element-interior terms."""
    _check_pair(E_p, E_q)
    pq, qp = typed_coupling(E_p.mesh, reference_tables(E_p.poly_degree), 0.5, parts=("volume",))
    return gather_to_sparse(pq), gather_to_sparse(qp)


def assemble_interior_flux(E_p: BrokenSpace, E_q: BrokenSpace, theta):
    """Sparse (K_pq, K_qp) contributions of the interior-face fluxes."""
    _check_pair(E_p, E_q)
    pq, qp = typed_coupling(E_p.mesh, reference_tables(E_p.poly_degree), theta, parts=("interior",))
    return gather_to_sparse(pq), gather_to_sparse(qp)


def _check_pair(E_p, E_q):
    if E_p.mesh is not E_q.mesh or E_p.form_rank != 0 or E_q.form_rank != 1 \
            or E_q.poly_degree != E_p.poly_degree + 1:
        raise ValueError("spaces do not form a matching (scalar r, 1-form r+1) pair on one mesh")


# ---------------------------------------------------------------- boundary

@dataclass
class BoundaryOperator:
    """State-dependent exterior terms plus the data-driven load b(t)."""

    mode: str
    theta: float
    faces: np.ndarray          # exterior face ids
    elements: np.ndarray       # owning element per face
    local_edges: np.ndarray
    signs: np.ndarray
    points: np.ndarray         # (nfo, ng, 2) physical points, global parameter order
    tangents: np.ndarray       # (nfo, 2) edge vectors lo -> hi
    load_p: np.ndarray         # (nfo, n_p, ng) acting on g_sigma samples
    load_q: np.ndarray         # (nfo, n_q, ng) acting on g_V samples
    data: BoundaryData
    n_elements: int
    state_pq: object = None
    state_qp: object = None

    def samples(self, t):
        """Boundary data samples (g_V, g_sigma tangential) at edge nodes, global direction."""
        x, y = self.points[..., 0], self.points[..., 1]
        gv = np.broadcast_to(np.asarray(self.data.velocity(t, x, y), dtype=float), x.shape)
        gs = np.asarray(self.data.stress(t, x, y), dtype=float)
        gs = np.broadcast_to(gs, x.shape + (2,))
        gsig = np.einsum("fgi,fi->fg", gs, self.tangents)
        return gv, gsig

    def face_loads(self, t):
        """Per exterior face load contributions, or (None, None) when no data enters."""
        if self.mode == "trace" or len(self.faces) == 0:
            return None, None
        gv, gsig = self.samples(t)
        return (np.einsum("fig,fg->fi", self.load_p, gsig),
                np.einsum("fig,fg->fi", self.load_q, gv))

    def load(self, t):
        """(b_p, b_q) as (nel, n_p), (nel, n_q) arrays."""
        bp = np.zeros((self.n_elements, self.load_p.shape[1]))
        bq = np.zeros((self.n_elements, self.load_q.shape[1]))
        gp, gq = self.face_loads(t)
        if gp is not None:
            np.add.at(bp, self.elements, gp)
            np.add.at(bq, self.elements, gq)
        return bp, bq


def _boundary_operator(mesh, tables, data, theta, mode):
    _check_theta(theta)
    _check_mode(mode)
    if data is None:
        if mode != "trace":
            raise ValueError(f"boundary mode {mode!r} needs boundary data on every exterior face")
        data = BoundaryData.zero()
    if not (callable(data.velocity) and callable(data.stress)):
        raise ValueError("boundary data must provide callable velocity and stress")
    faces = mesh.exterior_faces
    el = mesh.face_elements[faces, 0]
    loc = mesh.face_local[faces, 0]
    sg = mesh.face_signs[faces, 0]
    p0 = mesh.coords[mesh.face_vertices[faces, 0]]
    p1 = mesh.coords[mesh.face_vertices[faces, 1]]
    tang = p1 - p0
    pts = p0[:, None, :] + tables.edge_points[None, :, None] * tang[:, None, :]
    _, _, ds, dv = _exterior_weights(theta, mode)
    W = tables.edge_weights
    lp = np.empty((len(faces), tables.n_p, len(W)))
    lq = np.empty((len(faces), tables.n_q, len(W)))
    for i, (e, s) in enumerate(zip(loc, sg)):
        lp[i] = s * ds * tables.global_trace_p(e, s).T * W
        lq[i] = s * dv * tables.global_trace_q(e, s).T * W
    return BoundaryOperator(mode, theta, faces, el, loc, sg, pts, tang, lp, lq, data,
                            mesh.n_elements)


def assemble_boundary(E_p: BrokenSpace, E_q: BrokenSpace, data: BoundaryData, theta=0.5,
                      mode="data") -> BoundaryOperator:
    """Exterior-face closure: state-dependent blocks (sparse) and the load b(t)."""
    _check_pair(E_p, E_q)
    tables = reference_tables(E_p.poly_degree)
    bop = _boundary_operator(E_p.mesh, tables, data, theta, mode)
    pq, qp = typed_coupling(E_p.mesh, tables, theta, mode, parts=("boundary",))
    bop.state_pq, bop.state_qp = gather_to_sparse(pq), gather_to_sparse(qp)
    return bop


# ---------------------------------------------------------------- system

@dataclass
class SemiDiscreteSystem:
    E_p: BrokenSpace
    E_q: BrokenSpace
    theta: float
    bc_mode: str
    M_p: BlockMass
    M_q: BlockMass
    G_pq: GatherOperator
    G_qp: GatherOperator
    boundary: BoundaryOperator
    tables: ReferenceTables
    _sparse: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        # inverse mass folded into the coupling blocks for the time-stepping path
        self.F_pq = fuse_left(self.M_p.inverse_blocks, self.M_p.idx, self.G_pq)
        self.F_qp = fuse_left(self.M_q.inverse_blocks, self.M_q.idx, self.G_qp)
        bel = self.boundary.elements
        self._bnd_inv_p = self.M_p.inverse_blocks[self.M_p.idx[bel]]
        self._bnd_inv_q = self.M_q.inverse_blocks[self.M_q.idx[bel]]

    @property
    def mesh(self):
        return self.E_p.mesh

    @property
    def n_v(self):
        return self.E_p.total_dofs

    @property
    def n_s(self):
        return self.E_q.total_dofs

    @property
    def size(self):
        return self.n_v + self.n_s

    @property
    def K_pq(self):
        if "pq" not in self._sparse:
            self._sparse["pq"] = gather_to_sparse(self.G_pq)
        return self._sparse["pq"]

    @property
    def K_qp(self):
        if "qp" not in self._sparse:
            self._sparse["qp"] = gather_to_sparse(self.G_qp)
        return self._sparse["qp"]

    def coupling_matrix(self):
        """S = [[0, K_pq], [K_qp, 0]] including state-dependent exterior terms."""
        return sp.bmat([[None, self.K_pq], [self.K_qp, None]], format="csr")

    def mass_matrix(self):
        return sp.block_diag([self.M_p.to_sparse(), self.M_q.to_sparse()], format="csr")

    def load_vector(self, t):
        bp, bq = self.boundary.load(t)
        return np.concatenate([bp.ravel(), bq.ravel()])

    def split(self, x):
        return x[:self.n_v], x[self.n_v:]

    def rhs(self, t, x):
        """Unscaled right-hand side S x + b(t) as a flat vector."""
        v, s = self.split(x)
        bp, bq = self.boundary.load(t)
        fp = self.G_pq(s) + bp
        fq = self.G_qp(v) + bq
        return np.concatenate([fp.ravel(), fq.ravel()])

    def __call__(self, t, x):
        """Time derivative M^{-1}(S x + b(t)) of a flat state vector."""
        v, s = self.split(x)
        out = np.empty(self.size)
        dv = out[:self.n_v].reshape(self.mesh.n_elements, -1)
        ds = out[self.n_v:].reshape(self.mesh.n_elements, -1)
        self.F_pq(s, out=dv)
        self.F_qp(v, out=ds)
        gp, gq = self.boundary.face_loads(t)
        if gp is not None:
            el = self.boundary.elements
            np.add.at(dv, el, np.einsum("fij,fj->fi", self._bnd_inv_p, gp))
            np.add.at(ds, el, np.einsum("fij,fj->fi", self._bnd_inv_q, gq))
        return out


def assemble_system(mesh: Mesh, r: int, theta=0.5, bc_mode="data", data: BoundaryData = None,
                    constitutive: Constitutive = None) -> SemiDiscreteSystem:
    _check_theta(theta)
    _check_mode(bc_mode)
    constitutive = constitutive or Constitutive()
    E_p, E_q = make_spaces(mesh, r)
    tables = reference_tables(r)
    M_p = assemble_mass(E_p, constitutive.c_p)
    M_q = assemble_mass(E_q, constitutive.c_q)
    G_pq, G_qp = typed_coupling(mesh, tables, theta, bc_mode)
    bop = _boundary_operator(mesh, tables, data, theta, bc_mode)
    return SemiDiscreteSystem(E_p, E_q, float(theta), bc_mode, M_p, M_q, G_pq, G_qp, bop, tables)


def _flat(system, state):
    if isinstance(state, StateVector):
        return state.flat()
    x = np.asarray(state, dtype=float)
    if x.shape != (system.size,):
        raise ValueError(f"state has shape {x.shape}, expected ({system.size},)")
    return x


def residual(system: SemiDiscreteSystem, state, t):
    """Time derivative of the state; returns the same kind (flat array or StateVector)."""
    xdot = system(t, _flat(system, state))
    if isinstance(state, StateVector):
        return StateVector.from_flat(xdot, system.n_v)
    return xdot


def discrete_energy(system: SemiDiscreteSystem, state):
    """E_h = v^T M_p v + s^T M_q s (no factor 1/2)."""
    v, s = system.split(_flat(system, state))
    return float(v @ system.M_p.matvec(v) + s @ system.M_q.matvec(s))


def energy_rate(system: SemiDiscreteSystem, state, t):
    """d E_h / dt = 2 x^T (S x + b(t)) along the semi-discrete flow."""
    x = _flat(system, state)
    return 2.0 * float(x @ system.rhs(t, x))


def boundary_traces(system: SemiDiscreteSystem, state):
    """Interior traces on exterior faces, global direction, evaluated by mapping the
    physical edge nodes back into each owning element: (tr V, tr sigma) of shape (nfo, ng)."""
    v, s = system.split(_flat(system, state))
    mesh = system.mesh
    bop = system.boundary
    el = bop.elements
    B = mesh.jacobians[el]
    x0 = mesh.coords[mesh.elem_vertices[el, 0]]
    ref = np.einsum("fij,fgj->fgi", np.linalg.inv(B), bop.points - x0[:, None, :])
    r = system.E_p.poly_degree
    phi_p = orthonormal_scalar_basis(r)
    phi_q = orthonormal_scalar_basis(r + 1)
    X, Y = ref[..., 0], ref[..., 1]
    P = np.stack([f(X, Y) for f in phi_p], axis=-1)
    Q = np.stack([f(X, Y) for f in phi_q], axis=-1)
    cv = v.reshape(mesh.n_elements, -1)[el]
    cs = s.reshape(mesh.n_elements, -1)[el]
    nqs = len(phi_q)
    trv = np.einsum("fgi,fi->fg", P, cv)
    sref = np.stack([np.einsum("fgi,fi->fg", Q, cs[:, :nqs]),
                     np.einsum("fgi,fi->fg", Q, cs[:, nqs:])], axis=-1)
    sphys = np.einsum("fji,fgj->fgi", np.linalg.inv(B), sref)
    trs = np.einsum("fgi,fi->fg", sphys, bop.tangents)
    return trv, trs


def boundary_ports(system: SemiDiscreteSystem, state, t):
    """(u_p, u_q, y_p, y_q) on exterior faces: u = tr/2 - flux, y = -tr."""
    trv, trs = boundary_traces(system, state)
    bop = system.boundary
    own_s, own_v, dat_s, dat_v = _exterior_weights(system.theta, system.bc_mode)
    if system.bc_mode == "trace":
        gv = np.zeros_like(trv)
        gs = np.zeros_like(trs)
    else:
        gv, gs = bop.samples(t)
    vhat = own_v * trv + dat_v * gv
    shat = own_s * trs + dat_s * gs
    return 0.5 * trv - vhat, 0.5 * trs - shat, -trv, -trs


def boundary_pairing(system: SemiDiscreteSystem, state, t, return_scale=False):
    """sum over exterior faces of <y^q | u^p> + <u^q | y^p>, each in its element's
    boundary orientation, by edge quadrature."""
    up, uq, yp, yq = boundary_ports(system, state, t)
    s = system.boundary.signs[:, None]
    W = system.tables.edge_weights
    a, b = s * yq * up * W, s * uq * yp * W
    total = float(a.sum() + b.sum())
    if return_scale:
        return total, float(np.abs(a).sum() + np.abs(b).sum())
    return total


def dg_operators(system: SemiDiscreteSystem, state, t):
    """The two DG bilinear forms evaluated with the state itself as test function.

    D1 = -(v, K_pq s + b_p) collects the volume and flux terms of the velocity
    equation and D2 = -(s, K_qp v + b_q) those of the stress equation.  Their sum
    equals minus the exterior boundary pairing.
    """
    x = _flat(system, state)
    v, s = system.split(x)
    fp, fq = system.split(system.rhs(t, x))
    return -float(v @ fp), -float(s @ fq)
