import dataclasses
import math

import numpy as np
import pytest

from conftest import dense_model, er, random_weighted_graph
from nbspectra.model import WeightLaw, as_dense, model_spectral_data
from nbspectra.nbop import build
from nbspectra.sample import WeightedGraph, make_sbm, sample_graph
from nbspectra.theory import (C0_bound, degree_concentration, gamma_limit, gamma_matrices, kt_scalar,
                              labeled_tau_beta, optimal_label_weight, predict_B_spectrum, predict_bbp,
                              predict_sbm_overlap, pseudo_eigen_diagnostics)


def sbm_16_4(n=400, law=None):
    return make_sbm(n, [0.5, 0.5], [[1.6, 0.4], [0.4, 1.6]], 10.0, laws=[law or WeightLaw.constant(1.0)])


def random_admissible_model(rng, n=60):
    k = int(rng.integers(2, 4))
    M0 = rng.uniform(0.2, 2.0, (k, k))
    M0 = (M0 + M0.T) / 2 + np.diag(rng.uniform(0.5, 2.0, k))
    law = [WeightLaw.uniform(0.2, 1.5), WeightLaw.discrete([1.0, -0.5], [0.8, 0.2]), WeightLaw.constant(1.0)][
        int(rng.integers(0, 3))]
    pi = rng.dirichlet(np.full(k, 4.0))
    model, _ = make_sbm(n, pi, M0, float(rng.uniform(4, 15)), laws=[law])
    return model


class TestGamma:
    def test_t0_is_alpha_identity(self):
        model, _ = sbm_16_4()
        GU, _ = gamma_matrices(model_spectral_data(model), t=0)
        np.testing.assert_allclose(GU, 10.0 * np.eye(2), atol=1e-10)

    def test_er_gamma_v(self):
        sd = model_spectral_data(er(100, 4.0))
        _, GV = gamma_matrices(sd, t=1)
        assert GV[0, 0] == pytest.approx(0.3125, abs=1e-10)

    def test_gamma_v_t0_closed_form(self):
        model = random_admissible_model(np.random.default_rng(0))
        sd = model_spectral_data(model)
        _, GV = gamma_matrices(sd, t=0)
        Phi = sd.phi[:, : sd.r0]
        Dinv = np.diag(1 / sd.mu[: sd.r0])
        np.testing.assert_allclose(GV, Dinv @ Phi.T @ np.diag(sd.K1) @ Phi @ Dinv, atol=1e-12)

    def test_er_gamma_limit(self):
        assert gamma_limit(model_spectral_data(er(100, 4.0)), i=0) == pytest.approx(16 / 3, abs=1e-10)

    def test_limit_consistency(self):
        model, _ = sbm_16_4()
        sd = model_spectral_data(model)
        for i in range(sd.r0):
            q = sd.rho / sd.mu[i] ** 2
            GU, _ = gamma_matrices(sd, t=20)
            P1 = sd.P1
            scale = np.linalg.norm(P1) * np.linalg.norm(sd.phi[:, i] ** 2)
            assert abs(GU[i, i] - gamma_limit(sd, i=i)) <= scale * q ** 21 / (1 - q) + 1e-12

    def test_zero_K_limit(self):
        sd = model_spectral_data(er(50, 4.0))
        sd0 = dataclasses.replace(sd, K=np.zeros((50, 50)), rho=0.0)
        assert gamma_limit(sd0, i=0) == pytest.approx(float(sd.P1 @ sd.phi[:, 0] ** 2))

    def test_divergent(self):
        sd = model_spectral_data(er(50, 4.0))
        with pytest.raises(ValueError):
            gamma_limit(dataclasses.replace(sd, rho=17.0), i=0)

    def test_spd_and_monotone(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sd = model_spectral_data(random_admissible_model(rng))
            prev = None
            for t in range(6):
                GU, GV = gamma_matrices(sd, t=t)
                assert np.allclose(GU, GU.T) and np.allclose(GV, GV.T)
                assert np.linalg.eigvalsh(GU).min() > 0 and np.linalg.eigvalsh(GV).min() > 0
                if prev is not None:
                    assert np.all(np.diag(GU) >= np.diag(prev) - 1e-12)
                prev = GU


class TestPredictions:
    def test_er16(self):
        sd = model_spectral_data(er(1000, 16.0))
        pred = predict_B_spectrum(sd, 1000)
        assert pred.bulk_radius == pytest.approx(4.0)
        assert pred.outliers == [pytest.approx(16.0)]

    def test_overlap_lower_bound(self):
        # unit-weight ER: Ltilde = 1/d0, so the radicand is 1 - 1/d0
        pred = predict_B_spectrum(model_spectral_data(er(1000, 4.0)), 1000)
        assert pred.overlap_lower == [pytest.approx(math.sqrt(0.75))] and pred.overlap_vacuous == [False]
        # SBM 16/4: the r d^2 slack makes the second radicand 1 - 2*256*0.01*10/36 < 0
        model, _ = sbm_16_4(1000)
        pred = predict_B_spectrum(model_spectral_data(model), 1000)
        assert pred.overlap_vacuous[1] and pred.overlap_lower[1] == 0.0

    def test_sbm(self):
        model, _ = sbm_16_4(4000)
        pred = predict_B_spectrum(model_spectral_data(model), 4000, sbm_alpha=10.0)
        np.testing.assert_allclose(pred.outliers, [10.0, 6.0])
        assert pred.bulk_radius == pytest.approx(math.sqrt(10))
        assert pred.sbm_overlap[1] == pytest.approx(0.84984, abs=1e-5)
        assert pred.ell >= 1 and pred.C0 == C0_bound(model_spectral_data(model), 4000)
        d = pred.to_dict()
        assert d["c_constant"] == 1.0 and not d["C0_supplied"]

    def test_supplied_C0_inflates_bulk(self):
        sd = model_spectral_data(er(1000, 16.0))
        pred = predict_B_spectrum(sd, 1000, C0=8.0)
        assert pred.bulk_radius_inflated == pytest.approx(8.0 ** (1 / pred.ell) * 4.0)

    def test_no_informative(self):
        sd = model_spectral_data(dense_model(np.full((20, 20), 0.2), WeightLaw.rademacher()), strict=False)
        with pytest.raises(ValueError):
            predict_B_spectrum(sd, 20)

    def test_bbp_er50(self):
        nu, ov, flag = predict_bbp(model_spectral_data(er(2000, 50.0)), 0)
        assert nu == pytest.approx(51.0)
        assert ov == pytest.approx(math.sqrt(1 - 1 / 50))
        assert flag

    def test_bbp_forms(self):
        sd = model_spectral_data(er(100, 4.0))
        half = dataclasses.replace(sd, rho=8.0)
        assert predict_bbp(half, 0)[1] == pytest.approx(1 / math.sqrt(2))
        for mu in (5.0, 50.0, 5e4):
            s = dataclasses.replace(sd, mu=np.array([mu]))
            nu, ov, _ = predict_bbp(s, 0)
            assert nu >= 2 * math.sqrt(s.rho)
        assert nu / 5e4 == pytest.approx(1.0, abs=1e-8) and ov == pytest.approx(1.0, abs=1e-8)
        at = dataclasses.replace(sd, mu=np.array([2.0000001]))
        assert predict_bbp(at, 0)[0] == pytest.approx(4.0, rel=1e-6)
        with pytest.raises(ValueError):
            predict_bbp(dataclasses.replace(sd, mu=np.array([1.5])), 0)

    def test_sbm_overlap(self):
        assert predict_sbm_overlap(10, 0.6) == pytest.approx(math.sqrt(1 - 1 / 3.6))
        assert predict_sbm_overlap(1 + 1e-12, 1.0) == pytest.approx(0.0, abs=1e-5)
        assert predict_sbm_overlap(1e12, 1.0) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            predict_sbm_overlap(2.0, 0.5)


class TestLabeled:
    def test_single_label(self):
        one = WeightLaw.constant(1.0)
        rep = labeled_tau_beta(16, 4, one, one, lambda x: 1.0)
        assert rep.beta == pytest.approx(3.6)
        assert rep.beta_feasible
        labels, w, beta = optimal_label_weight(16, 4, one, one)
        np.testing.assert_allclose(w, [0.6])
        assert beta == pytest.approx(3.6)

    def test_tau_formula(self):
        law_in = WeightLaw.discrete([1.0, -1.0], [0.8, 0.2])
        law_out = WeightLaw.discrete([1.0, -1.0], [0.3, 0.7])
        a, b = 6.0, 2.0
        rep = labeled_tau_beta(a, b, law_in, law_out, lambda x: x)
        first = a * 0.6 - b * (-0.4)
        second = a + b
        assert rep.tau == pytest.approx(2 * max(second, 1.0) / first ** 2)

    def test_censored_proportional(self):
        eps = 0.2
        law_in = WeightLaw.discrete([1.0, -1.0], [1 - eps, eps])
        law_out = WeightLaw.discrete([1.0, -1.0], [eps, 1 - eps])
        labels, w, _ = optimal_label_weight(5.0, 5.0, law_in, law_out)
        np.testing.assert_allclose(w / labels, (1 - 2 * eps))

    def test_degenerate(self):
        one = WeightLaw.constant(1.0)
        with pytest.raises(ValueError):
            labeled_tau_beta(3.0, 3.0, one, one, lambda x: 1.0)


class TestKt:
    def test_t0(self):
        sd = model_spectral_data(er(100, 4.0))
        phi = np.random.default_rng(0).normal(size=100)
        phi /= np.linalg.norm(phi)
        v = kt_scalar(sd, phi, phi, 0)
        assert v.value == pytest.approx(1.0) and v.bound >= 1.0 - 1e-12

    def test_er_rank_one(self):
        sd = model_spectral_data(er(100, 4.0))
        phi = np.ones(100) / 10
        for t in range(6):
            assert kt_scalar(sd, phi, phi, t).value == pytest.approx(4.0 ** t, rel=1e-12)

    def test_sweep(self):
        model, _ = sbm_16_4(200, WeightLaw.uniform(0.5, 1.5))
        sd = model_spectral_data(model)
        rng = np.random.default_rng(3)
        for _ in range(100):
            a, b = rng.normal(size=(2, 200))
            res = kt_scalar(sd, a / np.linalg.norm(a), b / np.linalg.norm(b), 5)
            assert res.value <= res.bound
            assert res.psi == pytest.approx(sd.d * sd.L ** 2 / sd.rho)


class TestDiagnostics:
    def test_dense_oracle(self):
        model, theta = sbm_16_4(60, WeightLaw.uniform(0.5, 1.5))
        sd = model_spectral_data(model)
        g = sample_graph(model, 2)
        op = build(g)
        B = op.dense()
        J = np.eye(op.shape[0])[op.index.rev]
        D = np.diag(op.W)
        t = 3
        Bt = np.linalg.matrix_power(B, t)
        chi = op.T(sd.phi[:, :2])
        rows = pseudo_eigen_diagnostics(op, sd, t)
        table = {(r["quantity"], r["i"], r["j"]): r for r in rows}
        for i in range(2):
            for j in range(2):
                ref = {
                    "chi_inner": chi[:, j] @ Bt @ chi[:, i],
                    "u_v_inner": (D @ J @ chi[:, j]) @ Bt @ chi[:, i],
                    "u_gram": (Bt @ chi[:, i]) @ (Bt @ chi[:, j]),
                    "v_gram": (Bt.T @ D @ J @ chi[:, i]) @ (Bt.T @ D @ J @ chi[:, j]),
                }
                for q, val in ref.items():
                    assert table[(q, i, j)]["lhs"] == pytest.approx(val, rel=1e-12, abs=1e-12)
            inc = (B @ Bt - sd.mu[i] * Bt) @ chi[:, i]
            assert table[("increment", i, i)]["lhs"] == pytest.approx(inc @ inc, rel=1e-12)

    def test_rhs_forms(self):
        model, _ = sbm_16_4(100)
        sd = model_spectral_data(model)
        op = build(sample_graph(model, 0))
        rows = pseudo_eigen_diagnostics(op, sd, 2)
        GU, GV = gamma_matrices(sd, t=2)
        for r in rows:
            i, j = r["i"], r["j"]
            if r["quantity"] == "u_gram":
                assert r["rhs"] == pytest.approx((sd.mu[i] * sd.mu[j]) ** 2 * GU[i, j])
            if r["quantity"] == "u_v_inner":
                assert r["rhs"] == pytest.approx(sd.mu[i] ** 3 * (i == j))

    def test_centered_model_has_empty_table(self):
        model = dense_model(np.full((30, 30), 0.2), WeightLaw.rademacher())
        sd = model_spectral_data(model, strict=False)
        assert pseudo_eigen_diagnostics(build(sample_graph(model, 0)), sd, 2) == []


def test_degree_concentration():
    g = WeightedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)], [1.0, 1.0, 1.0])
    assert degree_concentration(g, 2.0) == 0.0
    g = random_weighted_graph(100, 5.0, 0)
    assert degree_concentration(g, 5.0) > 0
