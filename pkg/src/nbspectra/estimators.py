"""Estimator-style wrappers (fit / predict) over the spectral pipelines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .detect import complete_matrix, embed_and_cluster
from .eigs import DENSE_MAX, annotate, arnoldi_topk, dense_spectrum
from .nbop import NBOperator
from .sample import WeightedGraph


def _check_graph(graph) -> WeightedGraph:
    if not isinstance(graph, WeightedGraph):
        raise TypeError(f"expected a WeightedGraph, got {type(graph).__name__}")
    if graph.m == 0:
        raise ValueError("graph has no edges")
    return graph


class NonBacktrackingSpectrum(BaseEstimator):
    """Leading eigenvalues of B; ``threshold`` splits outliers from the bulk.

    method: "arnoldi", "dense" or "auto" (dense when 2m is small).
    """

    def __init__(self, n_eigs: int = 6, method: str = "auto", threshold: float | None = None,
                 tol: float = 1e-8, max_iter: int = 200, seed: int = 0):
        self.n_eigs = n_eigs
        self.method = method
        self.threshold = threshold
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, graph, y=None):
        graph = _check_graph(graph)
        op = NBOperator.from_graph(graph)
        method = self.method
        if method == "auto":
            method = "dense" if op.shape[0] <= min(DENSE_MAX, 1000) else "arnoldi"
        if method == "dense":
            report = dense_spectrum(op, tol=self.tol)
            report = report.subset(np.arange(min(self.n_eigs, len(report))))
        elif method == "arnoldi":
            report = arnoldi_topk(op, self.n_eigs, tol=self.tol, max_iter=self.max_iter, seed=self.seed,
                                  threshold=self.threshold)
        else:
            raise ValueError(f"unknown method {method!r}")
        if self.threshold is not None:
            report = annotate(report, self.threshold)
        self.operator_ = op
        self.report_ = report
        self.eigenvalues_ = report.eigenvalues
        return self


class NonBacktrackingClustering(ClusterMixin, BaseEstimator):
    """k-means on vertex-lifted outlier eigenvectors of B."""

    def __init__(self, n_clusters: int = 2, threshold: float | None = None, n_eigs: int | None = None,
                 lift: str = "SDW", n_init: int = 20, tol: float = 1e-8, seed: int = 0):
        self.n_clusters = n_clusters
        self.threshold = threshold
        self.n_eigs = n_eigs
        self.lift = lift
        self.n_init = n_init
        self.tol = tol
        self.seed = seed

    def fit(self, graph, y=None):
        graph = _check_graph(graph)
        k = self.n_eigs or self.n_clusters + 2
        spec = NonBacktrackingSpectrum(n_eigs=k, method="arnoldi", threshold=self.threshold, tol=self.tol,
                                      seed=self.seed).fit(graph)
        report = spec.report_
        if self.threshold is not None:
            report = annotate(report, self.threshold)
        assignment = embed_and_cluster(report, spec.operator_, self.n_clusters, lift=self.lift,
                                       n_init=self.n_init, seed=self.seed)
        self.report_ = report
        self.labels_ = assignment.labels
        return self


class NonBacktrackingCompletion(BaseEstimator):
    """Eigenpairs of a partially revealed symmetric matrix from the outliers of B."""

    def __init__(self, rank: int = 1, margin: float = 0.1, tol: float = 1e-8, seed: int = 0):
        self.rank = rank
        self.margin = margin
        self.tol = tol
        self.seed = seed

    def fit(self, graph, y=None):
        graph = _check_graph(graph)
        est = complete_matrix(graph, self.rank, margin=self.margin, tol=self.tol, seed=self.seed)
        self.estimate_ = est
        self.eigenvalues_ = est.eigenvalues
        self.eigenvectors_ = est.eigenvectors
        return self

    def predict(self, pairs) -> np.ndarray:
        """Estimated entries M_ij = sum_k lambda_k y_k(i) y_k(j) for an array of (i, j)."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        lam = self.eigenvalues_.real[: self.rank]
        Y = self.eigenvectors_[:, : self.rank].real
        return np.einsum("k,pk,pk->p", lam, Y[pairs[:, 0]], Y[pairs[:, 1]])
