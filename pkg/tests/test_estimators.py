import math

import numpy as np
import pytest
from sklearn.base import clone

from conftest import complete, triangle
from nbspectra.detect import overlap
from nbspectra.estimators import NonBacktrackingClustering, NonBacktrackingCompletion, NonBacktrackingSpectrum
from nbspectra.sample import WeightedGraph, delocalized_low_rank, make_sbm, reveal_mask, sample_graph


def test_spectrum_dense_auto():
    est = NonBacktrackingSpectrum(n_eigs=1).fit(complete(4))
    assert est.report_.method == "dense"
    assert est.eigenvalues_[0] == pytest.approx(2.0)


def test_spectrum_threshold_annotates():
    est = NonBacktrackingSpectrum(n_eigs=6, threshold=0.5).fit(triangle())
    assert est.report_.is_outlier.all()


def test_params_and_clone():
    est = NonBacktrackingClustering(n_clusters=3, seed=7)
    assert est.get_params()["n_clusters"] == 3
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_input_checks():
    with pytest.raises(TypeError):
        NonBacktrackingSpectrum().fit(np.eye(3))
    with pytest.raises(ValueError):
        NonBacktrackingSpectrum().fit(WeightedGraph.from_edges(3, np.zeros((0, 2), int)))
    with pytest.raises(ValueError):
        NonBacktrackingSpectrum(method="qr").fit(triangle())


def test_clustering_sbm():
    model, theta = make_sbm(1500, [0.5, 0.5], [[16, 4], [4, 16]], 1.0)
    g = sample_graph(model, 0)
    labels = NonBacktrackingClustering(n_clusters=2, threshold=1.2 * math.sqrt(10)).fit_predict(g)
    assert overlap(labels, theta) >= 0.5


def test_completion_predict():
    M, _ = delocalized_low_rank(800, [1.0])
    est = NonBacktrackingCompletion(rank=1).fit(reveal_mask(M, 30.0, 1))
    pairs = np.array([[0, 1], [5, 9], [100, 700]])
    np.testing.assert_allclose(est.predict(pairs), M[pairs[:, 0], pairs[:, 1]], rtol=0.2)
