"""Community detection and matrix completion from non-backtracking outliers."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from .eigs import SpectralReport, arnoldi_topk, split_outliers
from .model import WeightLaw
from .nbop import NBOperator
from .sample import WeightedGraph
from .theory import optimal_label_weight

EXACT_PERMUTATION_MAX_K = 6


class NoOutliersFound(RuntimeError):
    pass


@dataclass(frozen=True)
class Assignment:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError("community ids must lie in [0, k)")


@dataclass
class OptimalWeight:
    labels: np.ndarray
    w: np.ndarray
    beta: float

    @property
    def detectable(self) -> bool:
        return self.beta > 1

    def table(self) -> dict:
        return {float(lab): float(val) for lab, val in zip(self.labels, self.w)}


def optimal_weight(a: float, b: float, law_in: WeightLaw, law_out: WeightLaw) -> OptimalWeight:
    """Per-label w = (a f - b g)/(a f + b g), densities taken w.r.t. m = P + Q, and beta."""
    labels, w, beta = optimal_label_weight(a, b, law_in, law_out)
    return OptimalWeight(labels=labels, w=w, beta=beta)


# ---------------------------------------------------------------------------
# embedding and clustering


def _operator(graph_or_op) -> NBOperator:
    return graph_or_op if isinstance(graph_or_op, NBOperator) else NBOperator.from_graph(graph_or_op)


def _real_columns(vals: np.ndarray, vecs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """One representative per conjugate pair, split into (re, im) columns."""
    cols = []
    scale = max(np.abs(vals).max(initial=0.0), 1e-300)
    for lam, x in zip(vals, vecs.T):
        if abs(lam.imag) <= tol * scale:
            # a real eigenvector may carry an arbitrary complex phase
            k = int(np.argmax(np.abs(x)))
            phase = x[k] / abs(x[k]) if abs(x[k]) > 0 else 1.0
            cols.append((x / phase).real)
        elif lam.imag > 0:
            cols.extend([x.real, x.imag])
    return np.column_stack(cols) if cols else np.zeros((vecs.shape[0], 0))


def embed(report: SpectralReport, graph_or_op, k: int, *, lift: str = "SDW") -> np.ndarray:
    """Vertex embedding from the top outlier eigenvectors, rows length-normalized.

    ``lift="SDW"`` uses y = S* D_W x; ``lift="T"`` aggregates over incoming edges (T* x).
    """
    op = _operator(graph_or_op)
    if report.eigenvectors is None:
        raise ValueError("report carries no eigenvectors")
    mask = report.is_outlier if report.is_outlier is not None else np.ones(len(report), bool)
    idx = np.flatnonzero(mask)[:k]
    if idx.size < k - 1 or idx.size == 0:
        raise NoOutliersFound(f"need at least {max(k - 1, 1)} outlier eigenvectors, found {idx.size}")
    edge_cols = _real_columns(report.eigenvalues[idx], report.eigenvectors[:, idx])
    if lift == "SDW":
        Y = np.column_stack([op.vertex_lift(c) for c in edge_cols.T])
    elif lift == "T":
        Y = np.column_stack([op.T_adjoint(c) for c in edge_cols.T])
    else:
        raise ValueError("lift must be 'SDW' or 'T'")
    norms = np.linalg.norm(Y, axis=1)
    return np.divide(Y, norms[:, None], out=np.zeros_like(Y), where=norms[:, None] > 0)


def _repair_empty(labels: np.ndarray, X: np.ndarray, k: int) -> np.ndarray:
    """Split the largest cluster along its farthest point if some cluster is empty."""
    labels = labels.copy()
    for c in range(k):
        if np.any(labels == c):
            continue
        big = np.bincount(labels, minlength=k).argmax()
        members = np.flatnonzero(labels == big)
        center = X[members].mean(axis=0)
        far = members[np.argmax(np.linalg.norm(X[members] - center, axis=1))]
        near = np.linalg.norm(X[members] - X[far], axis=1) < np.linalg.norm(X[members] - center, axis=1)
        labels[members[near]] = c
    return labels


def kmeans(X: np.ndarray, k: int, *, n_init: int = 20, seed: int = 0) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; best inertia over ``n_init`` restarts."""
    if X.shape[0] < k:
        raise ValueError("fewer points than clusters")
    km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, random_state=seed % (2 ** 32))
    labels = km.fit_predict(X).astype(np.int64)
    return _repair_empty(labels, X, k)


def embed_and_cluster(report: SpectralReport, graph_or_op, k: int, *, lift: str = "SDW",
                      n_init: int = 20, seed: int = 0) -> Assignment:
    if k < 2:
        raise ValueError("k must be >= 2")
    X = embed(report, graph_or_op, k, lift=lift)
    return Assignment(labels=kmeans(X, k, n_init=n_init, seed=seed), k=k)


def overlap(assignment, truth, k: int | None = None, *, return_method: bool = False):
    """Chance-corrected agreement maximised over label permutations.

    (max_pi fraction correct - 1/k) / (1 - 1/k).  Exact permutation search
    for k <= 6; above that an optimal assignment solve on the confusion
    matrix (same optimum, flagged as "matching").
    """
    est = np.asarray(assignment.labels if isinstance(assignment, Assignment) else assignment, dtype=np.int64)
    tru = np.asarray(truth.labels if isinstance(truth, Assignment) else truth, dtype=np.int64)
    if est.shape != tru.shape:
        raise ValueError("assignment and truth must have the same length")
    if k is None:
        k = int(max(est.max(initial=0), tru.max(initial=0)) + 1)
    k = max(k, 2)
    n = est.size
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (est, tru), 1)
    if k <= EXACT_PERMUTATION_MAX_K:
        best = max(sum(conf[i, perm[i]] for i in range(k)) for perm in itertools.permutations(range(k)))
        method = "exact"
    else:
        rows, cols = linear_sum_assignment(-conf)
        best = int(conf[rows, cols].sum())
        method = "matching"
    value = (best / n - 1.0 / k) / (1.0 - 1.0 / k) if n else 0.0
    return (value, method) if return_method else value


# ---------------------------------------------------------------------------
# matrix completion


@dataclass
class CompletionEstimate:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    threshold: float
    rho_hat: float
    L_hat: float
    report: SpectralReport

    def to_dict(self) -> dict:
        return {"eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
                "residuals": self.residuals.tolist(), "threshold": self.threshold,
                "rho_hat": self.rho_hat, "L_hat": self.L_hat}


def revealed_rho(graph: WeightedGraph, n_iter: int = 500, seed: int = 0) -> float:
    """Perron root of the revealed second-moment proxy (entries W_ij^2 on revealed pairs)."""
    if graph.m == 0:
        return 0.0
    K = sp.coo_matrix((np.concatenate([graph.w ** 2] * 2),
                       (np.concatenate([graph.u, graph.v]), np.concatenate([graph.v, graph.u]))),
                      shape=(graph.n, graph.n)).tocsr()
    x = np.ones(graph.n) / math.sqrt(graph.n)
    lam = 0.0
    for _ in range(n_iter):
        y = K @ x
        new = float(np.linalg.norm(y))  # ||K x|| with ||x|| = 1; unaffected by a -rho partner
        if new == 0:
            return 0.0
        x = y / new
        done = abs(new - lam) <= 1e-12 * new
        lam = new
        if done:
            break
    return float(lam)


def complete_matrix(graph: WeightedGraph, r_expected: int, *, margin: float = 0.1, tol: float = 1e-8,
                    max_iter: int = 300, seed: int = 0) -> CompletionEstimate:
    """Eigenpairs of M from the outliers of B on the revealed, rescaled graph.

    The outlier threshold is (1 + margin) max(sqrt(rho_hat), L_hat) with
    rho_hat the Perron root of the revealed W^2 matrix and L_hat = max |w|.
    Outlier eigenvectors are lifted to vertices by S* D_W and normalized.
    """
    op = NBOperator.from_graph(graph)
    rho_hat = revealed_rho(graph, seed=seed)
    L_hat = float(np.abs(graph.w).max()) if graph.m else 0.0
    threshold = (1.0 + margin) * max(math.sqrt(rho_hat), L_hat)
    if graph.m == 0 or threshold == 0:
        raise NoOutliersFound("no revealed entries")
    k = max(r_expected + 2, 4)
    report = arnoldi_topk(op, k, tol=tol, max_iter=max_iter, seed=seed, threshold=threshold)
    outliers, _ = split_outliers(report, threshold)
    if len(outliers) == 0:
        raise NoOutliersFound(f"no eigenvalue above threshold {threshold:.4g}")
    vals = outliers.eigenvalues
    vecs = []
    for lam, x in zip(vals, outliers.eigenvectors.T):
        j = int(np.argmax(np.abs(x)))
        x = x * (abs(x[j]) / x[j]) if abs(x[j]) > 0 else x
        y = op.vertex_lift(x)
        y = y.real if np.abs(y.imag).max(initial=0.0) <= 1e-8 * np.abs(y).max(initial=1.0) else y
        y = y / np.linalg.norm(y)
        if np.real(y.sum()) < 0:
            y = -y
        vecs.append(y)
    return CompletionEstimate(eigenvalues=vals, eigenvectors=np.column_stack(vecs),
                              residuals=outliers.residuals, threshold=float(threshold),
                              rho_hat=rho_hat, L_hat=L_hat, report=outliers)
