"""Eigensolvers and spectral identities for the non-backtracking operator."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._rng import stream
from .nbop import NBOperator
from .sample import WeightedGraph

DENSE_MAX = 4000


@dataclass(frozen=True, eq=False)
class SpectralReport:
    """Eigenvalues of B sorted by decreasing modulus, with residuals.

    ``eigenvectors`` holds one column per eigenvalue (unit norm) or is None.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residuals: np.ndarray
    converged: np.ndarray
    method: str
    is_outlier: np.ndarray | None = None
    threshold: float | None = None
    iterations: int = 0
    matvecs: int = 0

    @property
    def bulk_radius_hat(self) -> float | None:
        """Largest modulus among reported non-outliers (None if all are outliers or unsplit)."""
        if self.is_outlier is None:
            return None
        bulk = np.abs(self.eigenvalues[~self.is_outlier])
        return float(bulk.max()) if bulk.size else None

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def __len__(self):
        return int(self.eigenvalues.size)

    def subset(self, idx) -> "SpectralReport":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self, eigenvalues=self.eigenvalues[idx],
            eigenvectors=None if self.eigenvectors is None else self.eigenvectors[:, idx],
            residuals=self.residuals[idx], converged=self.converged[idx],
            is_outlier=None if self.is_outlier is None else self.is_outlier[idx])


def modulus_order(vals: np.ndarray) -> np.ndarray:
    """Indices sorting by decreasing modulus; ties (to 1e-12 relative) by angle."""
    vals = np.asarray(vals, dtype=complex)
    mod = np.abs(vals)
    scale = mod.max() if mod.size else 1.0
    key_mod = np.round(mod / max(scale, 1e-300), 12)
    ang = np.angle(vals)
    # positive imaginary part first inside a conjugate pair
    ang = np.where(np.abs(vals.imag) <= 1e-12 * max(scale, 1e-300), 0.0, ang)
    return np.lexsort((-np.sign(ang), np.abs(ang), -key_mod))


def eigen_residuals(op: NBOperator, vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    if vecs.shape[1] == 0:
        return np.zeros(0)
    if vecs.shape[1] > 8:
        bx = op.to_sparse() @ vecs
    else:
        bx = op.matvec(vecs)
    num = np.linalg.norm(bx - vecs * vals[None, :], axis=0)
    den = np.linalg.norm(vecs, axis=0)
    return num / np.where(den > 0, den, 1.0)


def dense_spectrum(op: NBOperator, *, vectors: bool = True, tol: float = 1e-8) -> SpectralReport:
    """Full spectrum of the materialized 2m x 2m matrix (LAPACK backend)."""
    N = op.shape[0]
    if N > DENSE_MAX:
        raise ValueError(f"2m = {N} exceeds the dense limit {DENSE_MAX}")
    if N == 0:
        empty = np.zeros(0)
        return SpectralReport(empty.astype(complex), np.zeros((0, 0), complex) if vectors else None,
                              empty, empty.astype(bool), "dense")
    vals, vecs = scipy.linalg.eig(op.dense())
    order = modulus_order(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = eigen_residuals(op, vals, vecs)
    return SpectralReport(vals, vecs if vectors else None, res, res <= tol, "dense",
                          iterations=1)


# ---------------------------------------------------------------------------
# restarted Arnoldi (Krylov-Schur form)


def _orthogonalize(V: np.ndarray, w: np.ndarray, always_twice: bool = False):
    """Project w off the orthonormal columns of V.

    Classical Gram-Schmidt with one reorthogonalization pass, applied when the
    first pass removed more than 1 - 1/sqrt(2) of the norm (DGKS criterion).
    """
    before = np.linalg.norm(w)
    h = V.T.conj() @ w
    w = w - V @ h
    if always_twice or np.linalg.norm(w) < 0.7071 * before:
        h2 = V.T.conj() @ w
        w = w - V @ h2
        h = h + h2
    return h, w


def _schur_select(H: np.ndarray, keep: int, real: bool):
    """Schur form with eigenvalues of the ``keep`` largest moduli moved to the front."""
    vals = np.linalg.eigvals(H)
    mods = np.sort(np.abs(vals))[::-1]
    m = H.shape[0]
    while True:
        thr = mods[keep - 1] * (1 - 1e-12)
        if real:
            T, Z, sdim = scipy.linalg.schur(H, output="real", sort=lambda x, y: math.hypot(x, y) >= thr)
        else:
            T, Z, sdim = scipy.linalg.schur(H, output="complex", sort=lambda z: abs(z) >= thr)
        if sdim < m or keep <= 1:
            return T, Z, min(sdim, m - 1)
        keep -= 1


def arnoldi_topk(op, k: int, *, max_iter: int = 200, restart_dim: int | None = None,
                 tol: float = 1e-8, seed: int = 0, v0: np.ndarray | None = None,
                 threshold: float | None = None) -> SpectralReport:
    """k eigenpairs of largest modulus by restarted Arnoldi.

    Krylov dimension defaults to max(4k, 40).  Restarts use the Krylov-Schur
    form: the Schur vectors of the wanted Ritz values are kept, which is
    equivalent to implicit restarting.  Converged Schur directions are locked
    by zeroing their residual coupling.  Each returned pair carries its true
    residual ||Bx - lambda x|| / ||x||; pairs above ``tol`` are flagged.

    With ``threshold`` set, iteration also stops once every wanted Ritz value
    above it has converged and some wanted Ritz value lies below it; the
    bulk pairs then come back unconverged.
    """
    N = op.shape[0]
    m = restart_dim if restart_dim is not None else max(4 * k, 40)
    m = min(m, N)
    if not (0 < k < m <= N):
        raise ValueError(f"need 0 < k < restart_dim <= 2m (k={k}, restart_dim={m}, 2m={N})")
    real = np.dtype(getattr(op, "dtype", float)).kind == "f" and (v0 is None or not np.iscomplexobj(v0))
    dtype = float if real else complex
    rng = stream(seed, "arnoldi")
    V = np.zeros((N, m + 1), dtype=dtype, order="F")
    H = np.zeros((m + 1, m), dtype=dtype)
    start = rng.standard_normal(N) if v0 is None else np.asarray(v0, dtype=dtype)
    V[:, 0] = start / np.linalg.norm(start)
    p = 0
    matvecs = 0
    it = 0
    keep = min(m - 1, k + (m - k) // 2)
    for it in range(1, max_iter + 1):
        for j in range(p, m):
            w = op.matvec(V[:, j])
            matvecs += 1
            wnorm = np.linalg.norm(w)
            h, w = _orthogonalize(V[:, :j + 1], w)
            H[:j + 1, j] = h
            beta = np.linalg.norm(w)
            if beta > 1e-12 * max(wnorm, 1e-300):
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta
                continue
            # invariant subspace found: continue with a fresh direction
            H[j + 1, j] = 0.0
            if j + 1 >= N:
                V[:, j + 1] = 0.0
                continue
            for _ in range(3):
                fresh = rng.standard_normal(N).astype(dtype)
                _, fresh = _orthogonalize(V[:, :j + 1], fresh, always_twice=True)
                fn = np.linalg.norm(fresh)
                if fn > 1e-8:
                    break
            V[:, j + 1] = fresh / fn
        Hm = H[:m, :m]
        resrow = H[m, :m]
        ritz, Y = np.linalg.eig(Hm)
        order = modulus_order(ritz)
        ritz, Y = ritz[order], Y[:, order]
        est = np.abs(resrow @ Y)
        kk = k + 1 if (k < m and abs(ritz[k - 1].imag) > 0 and ritz[k - 1].imag > 0) else k
        kk = min(kk, m)
        if np.all(est[:kk] <= tol) or it == max_iter:
            break
        if threshold is not None and abs(ritz[kk - 1]) <= threshold:
            above = np.abs(ritz[:kk]) > threshold
            if np.all(est[:kk][above] <= tol):
                break
        T, Z, p = _schur_select(Hm, keep, real)
        V[:, :p] = V[:, :m] @ Z[:, :p]
        V[:, p] = V[:, m]
        b = resrow @ Z[:, :p]
        b[np.abs(b) < 0.1 * tol] = 0.0  # lock converged directions
        H[:] = 0.0
        H[:p, :p] = T[:p, :p]
        H[p, :p] = b
    X = V[:, :m] @ Y[:, :kk]
    X = X / np.linalg.norm(X, axis=0)[None, :]
    vals = ritz[:kk]
    res = eigen_residuals(op, vals, X)
    return SpectralReport(vals.astype(complex), X.astype(complex), res, res <= tol, "arnoldi",
                          iterations=it, matvecs=matvecs)


# ---------------------------------------------------------------------------
# outliers and bulk


def default_threshold(sd, margin: float = 0.1) -> float:
    """(1 + margin) * max(sqrt(rho), L)."""
    return (1.0 + margin) * sd.threshold


def split_outliers(report: SpectralReport, threshold: float):
    """Return (outliers, bulk) sub-reports; outliers have |lambda| > threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    mask = np.abs(report.eigenvalues) > threshold
    annotated = replace(report, is_outlier=mask, threshold=float(threshold))
    return annotated.subset(np.flatnonzero(mask)), annotated.subset(np.flatnonzero(~mask))


def annotate(report: SpectralReport, threshold: float) -> SpectralReport:
    mask = np.abs(report.eigenvalues) > threshold
    return replace(report, is_outlier=mask, threshold=float(threshold))


def left_eigenvectors(op: NBOperator, X: np.ndarray) -> np.ndarray:
    """Left eigenvectors from right ones via parity-time symmetry: B^T (D_W J x) = lambda D_W J x."""
    return op.D_W(op.J(X))


def bulk_radius_estimate(op: NBOperator, outliers: SpectralReport, *, n_iter: int = 300,
                         seed: int = 0) -> float:
    """Spectral radius of B restricted to the complement of the outlier eigenspace.

    Power iteration on B(I - Pi), where Pi is the oblique spectral projector
    built from the right outlier eigenvectors and their parity-time left
    partners.  Returns the geometric-mean growth rate over the second half
    of the iterations.
    """
    Xr = outliers.eigenvectors if outliers.eigenvectors is not None else np.zeros((op.shape[0], 0))
    Yl = left_eigenvectors(op, Xr)
    G = Yl.T @ Xr
    rng = stream(seed, "bulk-power")
    z = rng.standard_normal(op.shape[0]).astype(complex)

    def deflate(vec):
        if Xr.shape[1] == 0:
            return vec
        return vec - Xr @ np.linalg.solve(G, Yl.T @ vec)

    z = deflate(z)
    z /= np.linalg.norm(z)
    logs = []
    for _ in range(n_iter):
        z = deflate(op.matvec(z))
        nrm = np.linalg.norm(z)
        if nrm == 0:
            return 0.0
        logs.append(math.log(nrm))
        z /= nrm
    tail = logs[len(logs) // 2:]
    return float(math.exp(np.mean(tail)))


# ---------------------------------------------------------------------------
# Ihara-Bass


def _edge_data(graph):
    if isinstance(graph, NBOperator):
        idx = graph.index
        return idx.n, idx.tail[0::2], idx.head[0::2], graph.W[0::2], graph
    return graph.n, graph.u, graph.v, graph.w, NBOperator.from_graph(graph)


def deformed_laplacian(graph, lam: complex) -> sp.csr_matrix:
    """Delta(lambda) = I - A~(lambda) + D~(lambda) for a weighted graph."""
    n, u, v, w, _ = _edge_data(graph)
    lam = complex(lam)
    den = lam * lam - w * w
    a = lam * w / den
    dd = w * w / den
    A = sp.coo_matrix((np.concatenate([a, a]), (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(n, n)).tocsr()
    D = np.bincount(u, weights=dd.real, minlength=n) + np.bincount(v, weights=dd.real, minlength=n)
    D = D + 1j * (np.bincount(u, weights=dd.imag, minlength=n) + np.bincount(v, weights=dd.imag, minlength=n))
    return (sp.identity(n, dtype=complex, format="csr") - A + sp.diags(D)).tocsr()


def ihara_bass_residual(graph, lam: complex, x: np.ndarray) -> float:
    """||Delta(lambda) y|| / ||y|| with y = S* D_W x."""
    n, u, v, w, op = _edge_data(graph)
    lam = complex(lam)
    L = float(np.abs(w).max()) if w.size else 0.0
    if w.size and np.min(np.abs(lam * lam - w * w)) <= 1e-8 * L * L:
        raise ValueError("lambda is too close to a pole (lambda^2 = W_ij^2)")
    y = op.vertex_lift(np.asarray(x, dtype=complex))
    ny = np.linalg.norm(y)
    if ny <= 1e-12 * max(L, 1e-300) * np.linalg.norm(x):
        raise ValueError("y = S* D_W x vanishes")
    return float(np.linalg.norm(deformed_laplacian(graph, lam) @ y) / ny)


def edge_vector_from_vertex(graph, lam: complex, y: np.ndarray) -> np.ndarray:
    """Reconstruct the B-eigenvector from a kernel vector y of Delta(lambda)."""
    _, _, _, _, op = _edge_data(graph)
    idx = op.index
    y = np.asarray(y, dtype=complex)
    W = op.W
    return (lam * y[idx.head] - W * y[idx.tail]) / (lam * lam - W * W)


def unweighted_quadratic_spectrum(graph: WeightedGraph) -> np.ndarray:
    """spec(B) for an unweighted graph via the 2n x 2n linearization.

    det(I - uB) (1 - u^2)^(n - m) = det(I - uA + u^2 (D - I)), so the
    linearization misses m - n copies of +-1 when m >= n, and carries n - m
    surplus copies of each when m < n (forests); those are removed.
    """
    n, m = graph.n, graph.m
    if not graph.is_unweighted:
        raise ValueError("unweighted_quadratic_spectrum needs all weights equal to 1")
    A = graph.adjacency(weighted=False).toarray()
    D = np.diag(graph.degrees().astype(float))
    lin = np.block([[A, -(D - np.eye(n))], [np.eye(n), np.zeros((n, n))]])
    vals = np.linalg.eigvals(lin).astype(complex)
    if m >= n:
        extra = np.concatenate([np.ones(m - n), -np.ones(m - n)])
        allv = np.concatenate([vals, extra])
    else:
        keep = np.ones(vals.size, bool)
        for target in (1.0, -1.0):
            dist = np.where(keep, np.abs(vals - target), np.inf)
            drop = np.argsort(dist, kind="stable")[: n - m]
            if dist[drop].max() > 1e-6:
                raise ValueError("linearization lacks the surplus +-1 eigenvalues")
            keep[drop] = False
        allv = vals[keep]
    return allv[modulus_order(allv)]


def adjacency_spectrum(graph: WeightedGraph, k: int = 1):
    """Top-k (algebraic) eigenpairs of the weighted adjacency matrix."""
    A = graph.adjacency()
    if graph.n <= 3000:
        w, vecs = np.linalg.eigh(A.toarray())
        return w[::-1][:k], vecs[:, ::-1][:, :k]
    from scipy.sparse.linalg import eigsh
    w, vecs = eigsh(A, k=k, which="LA")
    order = np.argsort(-w)
    return w[order], vecs[:, order]
