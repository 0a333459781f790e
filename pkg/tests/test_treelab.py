import math

import numpy as np
import pytest

from conftest import complete, er, path, triangle
from nbspectra.model import WeightLaw, as_dense, model_spectral_data
from nbspectra.sample import LabeledTree, make_sbm, sample_graph, sample_gw_forest
from nbspectra.treelab import (MCEstimate, eval_edge_operator, eval_functional, exact_poissonization_tv,
                               functional_spec, mc_increment_variance, mc_poisson_identities,
                               mc_tree_identities, neighborhood_stats)


def chain(weights, marks):
    k = len(weights)
    return LabeledTree(parent=np.arange(-1, k), depth=np.arange(k + 1), mark=np.asarray(marks),
                       weight=np.concatenate([[0.0], weights]), tree_id=np.zeros(k + 1, dtype=np.int64))


class TestFunctional:
    def test_t0(self):
        tree = chain([2.0, 3.0], [4, 1, 2])
        phi = np.arange(5.0) + 1
        assert eval_functional(tree, phi, 0) == phi[4]

    def test_chain(self):
        tree = chain([2.0, -3.0, 0.5], [0, 1, 2, 3])
        phi = np.array([1.0, 2.0, 3.0, 7.0])
        assert eval_functional(tree, phi, 3) == pytest.approx(2.0 * -3.0 * 0.5 * 7.0)

    def test_branching_by_hand(self):
        # root 0 with children 1 (w=2) and 2 (w=-1); node 1 has child 3 (w=4)
        tree = LabeledTree(parent=np.array([-1, 0, 0, 1]), depth=np.array([0, 1, 1, 2]),
                           mark=np.array([0, 1, 2, 0]), weight=np.array([0.0, 2.0, -1.0, 4.0]),
                           tree_id=np.zeros(4, dtype=np.int64))
        phi = np.array([0.5, 1.0, 3.0])
        assert eval_functional(tree, phi, 1) == pytest.approx(2.0 * 1.0 - 1.0 * 3.0)
        assert eval_functional(tree, phi, 2) == pytest.approx(8.0 * 0.5)
        # cutting root edge to child 1 leaves -1 * phi[2]; cutting child 2 leaves 2 * phi[1]
        w = np.array([1.0, 10.0, 100.0])
        assert eval_edge_operator(tree, w, functional_spec(phi, 1)) == pytest.approx(10.0 * -3.0 + 100.0 * 2.0)

    def test_linearity(self):
        model, _ = make_sbm(30, [0.5, 0.5], [[1.5, 0.5], [0.5, 1.5]], 3.0, laws=[WeightLaw.uniform(-1, 2)])
        forest = sample_gw_forest(model, 0, 3, 200, 1)
        rng = np.random.default_rng(0)
        phi, psi = rng.normal(size=(2, 30))
        lhs = eval_functional(forest, 2.0 * phi - 0.5 * psi, 3)
        np.testing.assert_allclose(lhs, 2.0 * eval_functional(forest, phi, 3) - 0.5 * eval_functional(forest, psi, 3),
                                   atol=1e-12)

    def test_leaf_root_edge_operator(self):
        tree = chain([], [2])
        assert eval_edge_operator(tree, np.ones(3), functional_spec(np.ones(3), 1)) == 0.0


class TestTreeMC:
    def test_mean_identity(self):
        model, _ = make_sbm(40, [0.5, 0.5], [[1.6, 0.4], [0.4, 1.6]], 3.0)
        for t in range(4):
            ests = mc_tree_identities(model, 0, t, 20_000, 10 + t)
            for e in ests:
                assert abs(e.z) <= 4, e.to_dict()

    def test_increment_er(self):
        model = er(30, 3.0)
        sd = model_spectral_data(model)
        est = mc_increment_variance(model, 0, 0, 0, 20_000, 3)
        target = float((as_dense(sd.K) @ sd.phi[:, 0] ** 2)[0])
        assert est.target == pytest.approx(target)
        assert abs(est.z) <= 4

    def test_zero_variance_guard(self):
        est = MCEstimate("x", 1.0, 0.0, 10, 1.0)
        assert est.z == 0.0

    def test_clt_band(self):
        model = er(20, 2.0)
        zs = [mc_increment_variance(model, 0, 0, 1, 2000, 100 + k).z for k in range(50)]
        assert sum(abs(z) <= 4 for z in zs) >= 49


class TestPoisson:
    def test_constant(self):
        ests = mc_poisson_identities(2.0, WeightLaw.constant(3.0), None, WeightLaw.constant(1.0), 20_000, 0)
        assert ests[0].target == pytest.approx(6.0)
        assert abs(ests[0].mean - 6.0) <= 4 * ests[0].stderr

    def test_x_equals_y(self):
        law = WeightLaw.uniform(-1, 2)
        ests = mc_poisson_identities(3.0, law, None, WeightLaw.discrete([1, 3], [0.5, 0.5]), 100_000, 1)
        second = ests[1]
        assert second.target == pytest.approx(3.0 * law.m2 + (3.0 * law.m1) ** 2)
        assert all(abs(e.z) <= 4 for e in ests)

    def test_distinct_y(self):
        ests = mc_poisson_identities(2.5, WeightLaw.constant(1.0), WeightLaw.uniform(0, 1),
                                     WeightLaw.rademacher(), 100_000, 2)
        assert len(ests) == 4
        assert all(abs(e.z) <= 4 for e in ests)


class TestTV:
    def test_single_atom(self):
        p = 0.3
        # P1 = Bernoulli(0.3) on subsets of {1}; P2 puts e^{-p} p^|S| on simple sets, rest on multisets
        by_hand = 0.5 * (abs(0.7 - math.exp(-p)) + abs(0.3 - math.exp(-p) * p)) + 0.5 * (1 - math.exp(-p) * (1 + p))
        tv, bound = exact_poissonization_tv([p])
        assert tv == pytest.approx(by_hand, abs=1e-15)
        assert tv == pytest.approx(0.0778, abs=1e-4)
        assert bound == pytest.approx(0.09 + (math.exp(0.18) - 1) / 2)

    def test_zeros(self):
        assert exact_poissonization_tv([0.0] * 5)[0] == pytest.approx(0.0, abs=1e-15)

    def test_random_lists(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = rng.uniform(0, 0.5, int(rng.integers(1, 13)))
            tv, bound = exact_poissonization_tv(p)
            assert 0 <= tv <= bound

    def test_monotone_in_atoms(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            p = list(rng.uniform(0, 0.5, int(rng.integers(1, 9))))
            tv = exact_poissonization_tv(p)[0]
            assert exact_poissonization_tv(p + [float(rng.uniform(0.01, 0.5))])[0] >= tv - 1e-14

    def test_limits(self):
        with pytest.raises(ValueError):
            exact_poissonization_tv([0.1] * 21)
        with pytest.raises(ValueError):
            exact_poissonization_tv([0.6])


class TestNeighborhood:
    def test_tree(self):
        st = neighborhood_stats(path(6), 3)
        assert st.tangle_free and st.cycles.max() == 0

    def test_triangle(self):
        st = neighborhood_stats(triangle(), 1)
        assert np.all(st.cycles == 1) and st.tangle_free

    def test_k4_not_tangle_free(self):
        st = neighborhood_stats(complete(4), 1)
        assert np.all(st.cycles == 3) and not st.tangle_free

    def test_sizes(self):
        st = neighborhood_stats(path(5), 2)
        assert st.sizes[0].tolist() == [1, 2, 3]
        assert st.sizes[2].tolist() == [1, 3, 5]

    def test_cyclic_fraction_scaling(self):
        # fraction of balls containing a cycle ~ c d^(2 ell) / n: slope -1 in n
        ns = [2000, 4000, 8000]
        fr = [np.mean([neighborhood_stats(sample_graph(er(n, 3.0), s), 2).cyclic_fraction for s in range(10)])
              for n in ns]
        slope = np.polyfit(np.log(ns), np.log(fr), 1)[0]
        assert -1.3 <= slope <= -0.7
