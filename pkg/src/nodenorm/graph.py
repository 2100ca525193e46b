"""Row-compressed sparse adjacency and the renormalized propagation operator."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, record
from .errors import ShapeError, StructureError, ValidationError


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """CSR matrix of shape (n, n).

    Construction checks that the arrays form a well-formed CSR layout
    (monotone offsets, strictly increasing in-row columns). Symmetry is not
    enforced here; :meth:`check_symmetric` does that for callers that need it.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        for arr in (offsets, cols, vals):
            arr.setflags(write=False)

        if self.n < 0 or offsets.shape != (self.n + 1,):
            raise StructureError(f"row_offsets must have length n+1 = {self.n + 1}")
        if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise StructureError("row_offsets must start at 0 and be non-decreasing")
        if offsets[-1] != cols.size or vals.size != cols.size:
            raise StructureError("row_offsets[n], len(col_indices) and len(values) must agree")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n):
            raise StructureError("column index out of range")
        rows = self.row_ids
        same_row = rows[1:] == rows[:-1]
        if np.any(cols[1:][same_row] <= cols[:-1][same_row]):
            raise StructureError("columns must be strictly increasing within each row")

    @classmethod
    def from_edges(cls, n: int, edges) -> "SparseAdjacency":
        """Symmetric binary adjacency from an undirected edge list.

        Duplicate edges and self-loops are dropped.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise StructureError("edge endpoint out of range")
        edges = edges[edges[:, 0] != edges[:, 1]]
        both = np.concatenate([edges, edges[:, ::-1]])
        return cls.from_coo(n, both[:, 0], both[:, 1], np.ones(len(both)))

    @classmethod
    def from_coo(cls, n: int, rows, cols, values) -> "SparseAdjacency":
        """Build from coordinate triplets; repeated (row, col) pairs keep the first value."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        keep = np.ones(rows.size, dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        rows, cols, values = rows[keep], cols[keep], values[keep]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(n, offsets, cols, values)

    @classmethod
    def from_dense(cls, dense) -> "SparseAdjacency":
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], rows, cols, dense[rows, cols])

    @cached_property
    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_offsets))

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.row_ids, self.col_indices] = self.values
        return out

    @cached_property
    def transpose(self) -> "SparseAdjacency":
        return SparseAdjacency.from_coo(self.n, self.col_indices, self.row_ids, self.values)

    def check_symmetric(self, atol: float = 0.0) -> None:
        t = self.transpose
        if not (np.array_equal(t.row_offsets, self.row_offsets) and np.array_equal(t.col_indices, self.col_indices)):
            raise StructureError("adjacency is not structurally symmetric")
        if np.max(np.abs(t.values - self.values), initial=0.0) > atol:
            raise StructureError("adjacency values are not symmetric")

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.n)
        on_diag = self.row_ids == self.col_indices
        diag[self.row_ids[on_diag]] = self.values[on_diag]
        return diag

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def dot(self, H: np.ndarray) -> np.ndarray:
        """Plain sparse @ dense product (no autodiff)."""
        H = np.asarray(H, dtype=np.float64)
        if H.ndim == 0 or H.shape[0] != self.n:
            raise ShapeError(f"spmm: adjacency has {self.n} rows, H has shape {H.shape}")
        return np.asarray(self._csr @ H)


def renormalize(adj: SparseAdjacency) -> SparseAdjacency:
    """D~^{-1/2} (A + I) D~^{-1/2} for a symmetric binary adjacency.

    An existing diagonal entry counts as the self-loop rather than doubling it.
    """
    if adj.nnz and (np.any(adj.values < 0) or np.any((adj.values != 0) & (adj.values != 1))):
        raise ValidationError("renormalize expects a binary (0/1) adjacency")
    adj.check_symmetric()
    rows = adj.row_ids
    off_diag = (rows != adj.col_indices) & (adj.values != 0)
    r = np.concatenate([rows[off_diag], np.arange(adj.n)])
    c = np.concatenate([adj.col_indices[off_diag], np.arange(adj.n)])
    deg = np.bincount(r, minlength=adj.n).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return SparseAdjacency.from_coo(adj.n, r, c, inv_sqrt[r] * inv_sqrt[c])


def spmm(adj: SparseAdjacency, H):
    """Sparse-dense product; differentiable when ``H`` is a Tensor."""
    if not isinstance(H, Tensor):
        return adj.dot(H)
    out = adj.dot(H.data)
    return record((H,), out, lambda g: (adj.transpose.dot(g),), "spmm")


def power_propagate(adj: SparseAdjacency, H, k: int):
    """Apply ``adj`` k times; k = 0 returns H unchanged."""
    if k < 0:
        raise ValidationError(f"power_propagate needs k >= 0, got {k}")
    for _ in range(k):
        H = spmm(adj, H)
    return H
