"""Directed-edge indexing and the weighted non-backtracking operator B.

Directed edges follow the lexicographic order (min, max, direction): the
undirected edge k = (u, v) with u < v yields id 2k for u -> v and 2k + 1
for v -> u, so the reversal J is ``e ^ 1``.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .model import SpectralData
from .sample import WeightedGraph


class EdgeIndex:
    def __init__(self, n: int, u: np.ndarray, v: np.ndarray):
        self.n = int(n)
        self.m = int(u.size)
        tail = np.empty(2 * self.m, dtype=np.int64)
        head = np.empty(2 * self.m, dtype=np.int64)
        tail[0::2], head[0::2] = u, v
        tail[1::2], head[1::2] = v, u
        self.tail = tail
        self.head = head
        self.rev = np.arange(2 * self.m, dtype=np.int64) ^ 1
        order = np.argsort(tail, kind="stable")
        self.out_ids = order
        self.out_ptr = np.concatenate([[0], np.cumsum(np.bincount(tail, minlength=self.n))])

    @property
    def size(self) -> int:
        return 2 * self.m

    def out_edges(self, vertex: int) -> np.ndarray:
        return self.out_ids[self.out_ptr[vertex]:self.out_ptr[vertex + 1]]

    def in_edges(self, vertex: int) -> np.ndarray:
        return self.rev[self.out_edges(vertex)]

    def endpoints(self, e: int) -> tuple:
        return int(self.tail[e]), int(self.head[e])


def _check_len(x, size):
    if x.shape[0] != size:
        raise ValueError(f"edge vector has length {x.shape[0]}, expected {size}")


def _swap_pairs(x: np.ndarray) -> np.ndarray:
    """J x without fancy indexing: swap entries 2k and 2k+1."""
    return x.reshape((-1, 2) + x.shape[1:])[:, ::-1].reshape(x.shape)


def _aggregate(index: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    if np.iscomplexobj(x):
        return (np.bincount(index, weights=x.real, minlength=n)
                + 1j * np.bincount(index, weights=x.imag, minlength=n))
    return np.bincount(index, weights=x, minlength=n)


class NBOperator:
    """B_ef = W_f 1{e_2 = f_1} 1{e_1 != f_2} on directed edges of a weighted graph."""

    def __init__(self, index: EdgeIndex, weights: np.ndarray):
        self.index = index
        self.W = np.asarray(weights, dtype=float)
        if self.W.shape != (index.size,) or not np.array_equal(self.W, _swap_pairs(self.W)):
            raise ValueError("weights must be symmetric under edge reversal")
        self.shape = (index.size, index.size)
        self.dtype = np.dtype(float)

    @classmethod
    def from_graph(cls, graph: WeightedGraph) -> "NBOperator":
        index = EdgeIndex(graph.n, graph.u, graph.v)
        return cls(index, np.repeat(graph.w, 2))

    @property
    def n(self) -> int:
        return self.index.n

    # -- kernels -----------------------------------------------------------
    def matvec(self, x: np.ndarray) -> np.ndarray:
        """(Bx)_e = y_{e2} - W_e x_{J e} with y_v = sum_{f1 = v} W_f x_f."""
        x = np.asarray(x)
        _check_len(x, self.shape[0])
        if x.ndim == 2:
            return np.column_stack([self.matvec(x[:, j]) for j in range(x.shape[1])])
        wx = self.W * x
        y = _aggregate(self.index.tail, wx, self.n)
        return y[self.index.head] - _swap_pairs(wx)

    def rmatvec(self, z: np.ndarray) -> np.ndarray:
        """Adjoint (transpose) product: (B* z)_f = W_f (s_{f1} - z_{J f}), s_v = sum_{e2 = v} z_e."""
        z = np.asarray(z)
        _check_len(z, self.shape[0])
        if z.ndim == 2:
            return np.column_stack([self.rmatvec(z[:, j]) for j in range(z.shape[1])])
        s = _aggregate(self.index.head, z, self.n)
        return self.W * (s[self.index.tail] - _swap_pairs(z))

    adjoint_matvec = rmatvec

    def power(self, x: np.ndarray, t: int, adjoint: bool = False) -> np.ndarray:
        step = self.rmatvec if adjoint else self.matvec
        for _ in range(t):
            x = step(x)
        return x

    # -- structural operators ---------------------------------------------
    def J(self, x: np.ndarray) -> np.ndarray:
        return _swap_pairs(np.asarray(x))

    def D_W(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return self.W * x if x.ndim == 1 else self.W[:, None] * x

    def T(self, phi: np.ndarray) -> np.ndarray:
        """Lift a vertex function to edges through the terminal vertex: (T phi)(e) = phi(e2)."""
        return np.asarray(phi)[self.index.head]

    def S(self, phi: np.ndarray) -> np.ndarray:
        return np.asarray(phi)[self.index.tail]

    def S_adjoint(self, x: np.ndarray) -> np.ndarray:
        """(S* x)_i = sum over edges leaving i of x_e."""
        return _aggregate(self.index.tail, np.asarray(x), self.n)

    def T_adjoint(self, x: np.ndarray) -> np.ndarray:
        return _aggregate(self.index.head, np.asarray(x), self.n)

    def vertex_lift(self, x: np.ndarray) -> np.ndarray:
        """y = S* D_W x, the change of variable carrying B-eigenvectors to vertices."""
        return self.S_adjoint(self.W * np.asarray(x))

    # -- materialization -----------------------------------------------------
    def to_sparse(self) -> sp.csr_matrix:
        idx = self.index
        deg = np.diff(idx.out_ptr)
        counts = deg[idx.head]
        rows = np.repeat(np.arange(idx.size), counts)
        starts = np.repeat(idx.out_ptr[idx.head], counts)
        offsets = np.arange(rows.size) - np.repeat(np.cumsum(counts) - counts, counts)
        cols = idx.out_ids[starts + offsets]
        keep = cols != idx.rev[rows]
        rows, cols = rows[keep], cols[keep]
        return sp.csr_matrix((self.W[cols], (rows, cols)), shape=self.shape)

    def dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=float)


def build(graph: WeightedGraph) -> NBOperator:
    return NBOperator.from_graph(graph)


def matvec(op: NBOperator, x: np.ndarray) -> np.ndarray:
    return op.matvec(x)


def adjoint_matvec(op: NBOperator, x: np.ndarray) -> np.ndarray:
    return op.rmatvec(x)


def check_parity_time(op: NBOperator, t: int, x: np.ndarray, *, relative_to: str = "x") -> float:
    """Residual of J D_W B^t x = (B*)^t D_W J x.

    ``relative_to="x"`` divides by ||x||; ``"output"`` divides by ||J D_W B^t x||,
    which removes the growth of B^t from the comparison.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x = np.asarray(x)
    left = op.J(op.D_W(op.power(x, t)))
    right = op.power(op.D_W(op.J(x)), t, adjoint=True)
    diff = np.linalg.norm(left - right)
    if relative_to == "output":
        scale = np.linalg.norm(left)
    else:
        scale = np.linalg.norm(x)
    return float(diff / scale) if scale > 0 else float(diff)


def chi_vectors(op: NBOperator, sd: SpectralData, count: int | None = None) -> np.ndarray:
    """Columns chi_i = T phi_i."""
    r = sd.r0 if count is None else count
    return op.T(sd.phi[:, :r])


def candidate_vectors(op: NBOperator, sd: SpectralData, ell: int):
    """u_i = B^ell chi_i / mu_i^ell and v_i = (B*)^ell D_W J chi_i / mu_i^(ell+1), i < r0."""
    if sd.r0 < 1:
        raise ValueError("no informative eigenvalue (r0 = 0)")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    U = np.empty((op.shape[0], sd.r0))
    V = np.empty((op.shape[0], sd.r0))
    for i in range(sd.r0):
        chi = op.T(sd.phi[:, i])
        mu = sd.mu[i]
        U[:, i] = op.power(chi, ell) / mu ** ell
        V[:, i] = op.power(op.D_W(op.J(chi)), ell, adjoint=True) / mu ** (ell + 1)
    return U, V


def choose_ell(n: int, d: float, Ltilde: float, eps: float = 0.01) -> int:
    """floor((1 - eps)/4 * log n / log(d^5 (1 v Ltilde)^2)), at least 1."""
    if n < 3 or d <= 1:
        raise ValueError("need n >= 3 and d > 1")
    val = (1 - eps) / 4 * math.log(n) / math.log(d ** 5 * max(1.0, Ltilde) ** 2)
    return max(1, int(math.floor(val)))
