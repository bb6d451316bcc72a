"""Per-element block kernels used by the residual evaluation.

Two operations dominate a time step:

* gather: out[k] = sum_j mats[idx[k, j]] @ x[src[k, j]] over the
  element itself and its face neighbours,
* block: out[k] = mats[idx[k]] @ x[k] (per-element inverse mass).

Both are compiled with numba when it is available.  Setting the environment
variable ``PHDG_NO_NUMBA=1`` selects a vectorized numpy path that groups
elements sharing a matrix and uses batched products instead.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_DISABLED = os.environ.get("PHDG_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
HAVE_NUMBA = numba is not None and not NUMBA_DISABLED


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"


def _gather_rows_py(mats, idx, src, x, out):
    # short outputs: dot products along the long input axis
    nel, nslot = idx.shape
    nout, nin = mats.shape[1], mats.shape[2]
    for k in range(nel):
        for i in range(nout):
            out[k, i] = 0.0
        for j in range(nslot):
            m = idx[k, j]
            if m < 0:
                continue
            s = src[k, j]
            for i in range(nout):
                acc = 0.0
                for q in range(nin):
                    acc += mats[m, i, q] * x[s, q]
                out[k, i] += acc


def _gather_cols_py(mats_t, idx, src, x, out):
    # long outputs: axpy over the input entries, mats_t[m] is the transposed block
    nel, nslot = idx.shape
    nin, nout = mats_t.shape[1], mats_t.shape[2]
    acc = np.empty(nout)
    for k in range(nel):
        acc[:] = 0.0
        for j in range(nslot):
            m = idx[k, j]
            if m < 0:
                continue
            s = src[k, j]
            for q in range(nin):
                xv = x[s, q]
                for i in range(nout):
                    acc[i] += mats_t[m, q, i] * xv
        for i in range(nout):
            out[k, i] = acc[i]


def _block_apply_py(mats, idx, x, out):
    nel = idx.shape[0]
    n = mats.shape[1]
    for k in range(nel):
        m = idx[k]
        for i in range(n):
            acc = 0.0
            for q in range(mats.shape[2]):
                acc += mats[m, i, q] * x[k, q]
            out[k, i] = acc


if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True, fastmath=True)
    _gather_rows_nb = _jit(_gather_rows_py)
    _gather_cols_nb = _jit(_gather_cols_py)
    _block_apply_nb = _jit(_block_apply_py)


class GatherOperator:
    """Typed sparse block operator: element k reads x from ``src[k, j]``
    through matrix ``mats[idx[k, j]]`` (``idx < 0`` marks an empty slot)."""

    def __init__(self, mats, idx, src, use_numba=None):
        self.mats = np.ascontiguousarray(mats, dtype=float)
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.use_numba = HAVE_NUMBA if use_numba is None else (use_numba and numba is not None)
        self._groups = None
        self._mats_t = None

    @property
    def shape(self):
        return self.mats.shape[1], self.mats.shape[2]

    def groups(self):
        if self._groups is None:
            groups = []
            for j in range(self.idx.shape[1]):
                col = self.idx[:, j]
                for m in np.unique(col[col >= 0]):
                    els = np.flatnonzero(col == m)
                    groups.append((int(m), els, self.src[els, j]))
            self._groups = groups
        return self._groups

    def __call__(self, x, out=None):
        nel = self.idx.shape[0]
        x = np.ascontiguousarray(x, dtype=float).reshape(-1, self.mats.shape[2])
        if out is None:
            out = np.empty((nel, self.mats.shape[1]))
        if self.use_numba:
            nout, nin = self.mats.shape[1:]
            if nout > nin:
                if self._mats_t is None:
                    self._mats_t = np.ascontiguousarray(np.swapaxes(self.mats, 1, 2))
                _gather_cols_nb(self._mats_t, self.idx, self.src, x, out)
            else:
                _gather_rows_nb(self.mats, self.idx, self.src, x, out)
            return out
        out[:] = 0.0
        for m, els, src in self.groups():
            out[els] += x[src] @ self.mats[m].T
        return out


class BlockOperator:
    """Per-element dense blocks, deduplicated: element k uses ``mats[idx[k]]``."""

    def __init__(self, mats, idx, use_numba=None):
        self.mats = np.ascontiguousarray(mats, dtype=float)
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        self.use_numba = HAVE_NUMBA if use_numba is None else (use_numba and numba is not None)
        self._groups = None

    def groups(self):
        if self._groups is None:
            self._groups = [(int(m), np.flatnonzero(self.idx == m)) for m in np.unique(self.idx)]
        return self._groups

    def __call__(self, x, out=None):
        nel = self.idx.shape[0]
        x = np.ascontiguousarray(x, dtype=float).reshape(nel, self.mats.shape[2])
        if out is None:
            out = np.empty((nel, self.mats.shape[1]))
        if self.use_numba:
            _block_apply_nb(self.mats, self.idx, x, out)
            return out
        if len(self.groups()) == 1:
            np.matmul(x, self.mats[0].T, out=out)
            return out
        for m, els in self.groups():
            out[els] = x[els] @ self.mats[m].T
        return out

    def dense_blocks(self):
        return self.mats[self.idx]


def dedup_blocks(blocks, rtol=1e-13):
    """Collapse nearly identical blocks.  Returns (unique blocks, index per input)."""
    blocks = np.asarray(blocks, dtype=float)
    scale = np.abs(blocks).max(initial=0.0) or 1.0
    quantum = rtol * scale
    keys = np.round(blocks.reshape(len(blocks), -1) / quantum).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return blocks[first], inverse.ravel()


def fuse_left(blocks, block_idx, op: GatherOperator) -> GatherOperator:
    """Operator x -> blocks[block_idx[k]] @ (op x)[k] with the products precomputed
    for every (row block, typed matrix) pair that occurs."""
    nb = len(blocks)
    has = op.idx >= 0
    pair = np.where(has, block_idx[:, None] * len(op.mats) + op.idx, -1)
    uniq, inverse = np.unique(pair[has], return_inverse=True)
    idx = np.full(op.idx.shape, -1, dtype=np.int64)
    idx[has] = inverse.ravel()
    b, m = np.divmod(uniq, len(op.mats))
    assert b.max(initial=0) < nb
    mats = np.einsum("pij,pjk->pik", blocks[b], op.mats[m])
    return GatherOperator(mats, idx, op.src, op.use_numba)
