"""Acceptance suite: one PASS/FAIL line per criterion, echoed in the pytest summary."""
import cmath
import math
import time

import numpy as np
import pytest

import conftest
from conftest import WEIGHT_LAWS, complete, er, path, random_weighted_graph, triangle
from nbspectra.detect import complete_matrix
from nbspectra.eigs import (adjacency_spectrum, arnoldi_topk, bulk_radius_estimate, dense_spectrum,
                            ihara_bass_residual, unweighted_quadratic_spectrum)
from nbspectra.model import WeightLaw, model_spectral_data
from nbspectra.nbop import build, check_parity_time
from nbspectra.perf import arnoldi_bench, matvec_ladder
from nbspectra.perturb import certificate_sweep
from nbspectra.sample import delocalized_low_rank, make_sbm, reveal_mask, sample_graph
from nbspectra.theory import (gamma_limit, gamma_matrices, predict_bbp, predict_sbm_overlap,
                              pseudo_eigen_diagnostics)
from nbspectra.treelab import exact_poissonization_tv, mc_poisson_identities, mc_tree_identities
from test_theory import random_admissible_model


class Criterion:
    """Times a block, then records and asserts the verdict."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit = number, title, limit_s
        self.details = []
        self.ok = True

    def check(self, ok: bool, detail: str):
        self.ok &= bool(ok)
        self.details.append(("" if ok else "FAILED ") + detail)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.ok = False
            self.details.append(f"raised {exc_type.__name__}: {exc}")
        in_time = elapsed < self.limit
        verdict = "PASS" if (self.ok and in_time) else "FAIL"
        line = (f"[{self.number}] {verdict} {self.title}: " + "; ".join(self.details)
                + f" ({elapsed:.1f}s, limit {self.limit:g}s)")
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert self.ok, line
            assert in_time, line
        return False


def _modulus_gap(a, b) -> float:
    a, b = np.sort(np.abs(a)), np.sort(np.abs(b))
    return float(np.abs(a - b).max()) if a.size == b.size else math.inf


OMEGA = cmath.exp(2j * math.pi / 3)


def test_01_exact_small_spectra():
    expected = {
        "triangle": (triangle(), [1, 1, OMEGA, OMEGA, OMEGA.conjugate(), OMEGA.conjugate()]),
        "path": (path(3), [0, 0, 0, 0]),
        "K4": (complete(4), [2, 1, 1, 1, -1, -1] + [(-1 + 1j * math.sqrt(7)) / 2] * 3
               + [(-1 - 1j * math.sqrt(7)) / 2] * 3),
    }
    with Criterion(1, "exact small spectra, three routes", 1.0) as c:
        for name, (g, target) in expected.items():
            op = build(g)
            dense = dense_spectrum(op).eigenvalues
            quad = unweighted_quadratic_spectrum(g)
            k = min(3, op.shape[0] - 1)
            arn = arnoldi_topk(op, k, restart_dim=op.shape[0]).eigenvalues[:k]
            gaps = [_modulus_gap(dense, target), _modulus_gap(quad, target),
                    float(np.abs(np.abs(arn) - np.sort(np.abs(target))[::-1][:k]).max())]
            c.check(max(gaps) <= 1e-6, f"{name} max gap {max(gaps):.1e}")


def test_02_parity_time():
    with Criterion(2, "parity-time identity", 5.0) as c:
        worst = 0.0
        for law_id, law in enumerate(WEIGHT_LAWS):
            op = build(random_weighted_graph(200, 4.0, 50 + law_id, law))
            x = np.random.default_rng(law_id).normal(size=op.shape[0])
            for t in range(6):
                worst = max(worst, check_parity_time(op, t, x, relative_to="output"))
        c.check(worst <= 1e-12, f"max relative residual {worst:.1e} over 5 laws, t<=5")
        # independent route: the transpose of B assembled entrywise from its definition
        op = build(random_weighted_graph(200, 4.0, 50, WEIGHT_LAWS[3]))
        idx = op.index
        B = np.where((idx.head[:, None] == idx.tail[None, :]) & (idx.tail[:, None] != idx.head[None, :]),
                     op.W[None, :], 0.0)
        x = np.random.default_rng(0).normal(size=op.shape[0])
        dense_worst = 0.0
        for t in range(6):
            left = op.J(op.D_W(op.power(x, t)))
            right = np.linalg.matrix_power(B.T, t) @ (op.W * x[idx.rev])
            dense_worst = max(dense_worst, np.linalg.norm(left - right) / np.linalg.norm(left))
        c.check(dense_worst <= 1e-12, f"dense-transpose route {dense_worst:.1e}")


def test_03_ihara_bass():
    with Criterion(3, "Ihara-Bass eigenpair reduction", 30.0) as c:
        worst, pairs, graphs = 0.0, 0, 0
        rng = np.random.default_rng(3)
        while graphs < 30:
            law = WEIGHT_LAWS[graphs % len(WEIGHT_LAWS)]
            g = random_weighted_graph(int(rng.integers(40, 120)), float(rng.uniform(2.5, 6.0)), 300 + graphs, law)
            if not 0 < 2 * g.m <= 1000:
                continue
            graphs += 1
            rep = dense_spectrum(build(g))
            w2 = np.unique(g.w ** 2)
            for lam, x in zip(rep.eigenvalues, rep.eigenvectors.T):
                if abs(lam) <= 0.1 or np.min(np.abs(lam * lam - w2)) <= 1e-8 * max(1.0, w2.max()):
                    continue
                worst = max(worst, ihara_bass_residual(g, lam, x))
                pairs += 1
        c.check(worst <= 1e-8, f"max ||Delta y||/||y|| {worst:.1e} over {pairs} pairs on {graphs} graphs")


def test_04_sbm_outliers():
    model, _ = make_sbm(4000, [0.5, 0.5], [[16, 4], [4, 16]], 1.0)
    sd = model_spectral_data(model)
    bulk_limit = 1.2 * math.sqrt(10)
    predicted_overlap = predict_sbm_overlap(10.0, 6.0 / 10.0)
    with Criterion(4, "SBM n=4000 a=16 b=4 outliers", 180.0) as c:
        c.check(abs(sd.mu[0] - 10) < 1e-9 and abs(sd.mu[1] - 6) < 1e-9 and abs(sd.rho - 10) < 1e-9,
                f"model mu=({sd.mu[0]:.4g}, {sd.mu[1]:.4g}) rho={sd.rho:.4g}")
        c.check(abs(predicted_overlap - 0.8498) < 1e-4, f"predicted overlap {predicted_overlap:.4f}")
        l1, l2, rest, ovs = [], [], [], []
        for seed in range(5):
            g = sample_graph(model, seed)
            op = build(g)
            rep = arnoldi_topk(op, 4, seed=seed)
            lam = rep.eigenvalues
            l1.append(lam[0].real)
            l2.append(lam[1].real)
            rest.append(max(float(np.abs(lam[2:]).max()), bulk_radius_estimate(op, rep.subset([0, 1]), seed=seed)))
            chi = op.T(sd.phi[:, 1])
            xi = rep.eigenvectors[:, 1]
            ovs.append(abs(np.vdot(xi, chi)) / (np.linalg.norm(xi) * np.linalg.norm(chi)))
        l1, l2 = np.array(l1), np.array(l2)
        c.check(np.all(np.abs(l1 - 10) <= 0.5), f"lambda1 in [{l1.min():.3f}, {l1.max():.3f}]")
        c.check(np.all(np.abs(l2 - 6) <= 0.6), f"lambda2 in [{l2.min():.3f}, {l2.max():.3f}]")
        c.check(max(rest) <= bulk_limit, f"max remaining |lambda| {max(rest):.3f} <= {bulk_limit:.3f}")
        c.check(min(ovs) >= 0.75, f"min |<xi2, T phi2>| {min(ovs):.3f} (predicted {predicted_overlap:.4f})")


def test_05_bbp():
    model = er(2000, 50.0)
    sd = model_spectral_data(model)
    nu, ov_pred, _ = predict_bbp(sd, 0)
    with Criterion(5, "ER n=2000 d0=50 adjacency BBP", 120.0) as c:
        c.check(abs(nu - 51) < 0.05 and abs(ov_pred - math.sqrt(1 - 1 / 50)) < 1e-3,
                f"theory nu1={nu:.4f}, overlap={ov_pred:.5f}")
        gaps, ov_dev = [], []
        ones = np.ones(2000) / math.sqrt(2000)
        for seed in range(5):
            vals, vecs = adjacency_spectrum(sample_graph(model, seed), 1)
            gaps.append(abs(vals[0] - 51) / 51)
            ov_dev.append(abs(abs(vecs[:, 0] @ ones) - math.sqrt(1 - 1 / 50)))
        c.check(max(gaps) <= 0.02, f"max |lambda1 - 51|/51 = {max(gaps):.4f}")
        c.check(max(ov_dev) <= 0.05, f"max overlap deviation {max(ov_dev):.4f}")


def test_06_completion():
    with Criterion(6, "rank-2 matrix completion n=2000 d=40", 180.0) as c:
        gaps, ovs = [], []
        for seed in range(5):
            M, phi = delocalized_low_rank(2000, [1.0, 0.5], seed=seed)
            est = complete_matrix(reveal_mask(M, 40.0, seed), 2, seed=seed)
            vals = est.eigenvalues.real
            ok = vals.size >= 2
            c.check(ok, f"seed {seed}: {vals.size} outliers")
            if ok:
                gaps.append(max(abs(vals[0] - 1.0), abs(vals[1] - 0.5) / 0.5))
                ovs.append(abs(est.eigenvectors[:, 0] @ phi[:, 0]))
        c.check(gaps and max(gaps) <= 0.1, f"max relative gap {max(gaps, default=math.nan):.4f}")
        c.check(ovs and min(ovs) >= 0.8, f"min phi1 overlap {min(ovs, default=math.nan):.4f}")


def test_07_certificates():
    with Criterion(7, "perturbation certificates, 500 trials", 60.0) as c:
        res = certificate_sweep(500, seed=0)
        c.check(res["total_violations"] == 0,
                f"violations {res['violations']}, {res['valid_sigma']} valid sigma certificates")


def test_08_tree_and_poisson():
    models = {
        "er": make_sbm(30, [1.0], [[1.0]], 2.0)[0],
        "sbm2": make_sbm(40, [0.5, 0.5], [[1.6, 0.4], [0.4, 1.6]], 2.5)[0],
        "sbm3-weighted": make_sbm(36, [0.3, 0.3, 0.4], [[1.5, 0.3, 0.2], [0.3, 1.2, 0.5], [0.2, 0.5, 1.0]], 2.0,
                                  laws=[WeightLaw.uniform(-0.5, 1.5)])[0],
    }
    with Criterion(8, "tree and compound-Poisson identities", 120.0) as c:
        zs = []
        for k, model in enumerate(models.values()):
            for t in range(5):
                zs += [e.z for e in mc_tree_identities(model, 0, t, 20_000, 1000 * k + t)]
        c.check(max(map(abs, zs)) <= 4, f"tree max |z| {max(map(abs, zs)):.2f} over {len(zs)} estimates")
        pz = []
        for k, (lx, ly, lz) in enumerate([(WeightLaw.constant(3.0), None, WeightLaw.constant(1.0)),
                                          (WeightLaw.uniform(-1, 2), None, WeightLaw.rademacher()),
                                          (WeightLaw.constant(1.0), WeightLaw.uniform(0, 1),
                                           WeightLaw.discrete([1, 3], [0.5, 0.5]))]):
            pz += [e.z for e in mc_poisson_identities(2.0 + k, lx, ly, lz, 100_000, 50 + k)]
        c.check(max(map(abs, pz)) <= 4, f"Poisson max |z| {max(map(abs, pz)):.2f} over {len(pz)} estimates")


def test_09_poissonization_tv():
    with Criterion(9, "exact Poissonization TV", 30.0) as c:
        tv, _ = exact_poissonization_tv([0.3])
        c.check(abs(tv - 0.0778) <= 1e-4, f"TV(0.3) = {tv:.7f}")
        rng = np.random.default_rng(9)
        bad = 0
        for _ in range(100):
            tv, bound = exact_poissonization_tv(rng.uniform(0, 0.5, int(rng.integers(1, 13))))
            bad += tv > bound
        c.check(bad == 0, f"{bad} bound violations in 100 lists")


def test_10_gamma_structure():
    with Criterion(10, "Gamma/gamma structure", 30.0) as c:
        rng = np.random.default_rng(10)
        spd, mono, tail = True, True, True
        for _ in range(20):
            sd = model_spectral_data(random_admissible_model(rng))
            prev = None
            for t in range(8):
                GU, GV = gamma_matrices(sd, t=t)
                spd &= np.linalg.eigvalsh(GU).min() > 0 and np.linalg.eigvalsh(GV).min() > 0
                if prev is not None:
                    mono &= bool(np.all(np.diag(GU) >= np.diag(prev) - 1e-12))
                prev = GU
            for i in range(sd.r0):
                # tail <P1, K^s phi^ii>/mu^(2s) summed past t=7 is at most C q^8/(1-q)
                q = sd.rho / sd.mu[i] ** 2
                scale = np.linalg.norm(sd.P1) * np.linalg.norm(sd.phi[:, i] ** 2)
                tail &= gamma_limit(sd, i=i) - prev[i, i] <= scale * q ** 8 / (1 - q) + 1e-12
        c.check(spd and mono and tail, f"SPD {spd}, monotone {mono}, geometric tail {tail} on 20 models")
        sd = model_spectral_data(er(100, 4.0))
        gv = gamma_matrices(sd, t=1)[1][0, 0]
        g1 = gamma_limit(sd, i=0)
        c.check(abs(gv - 0.3125) <= 1e-10 and abs(g1 - 16 / 3) <= 1e-10,
                f"ER d0=4: Gamma_V^(1)_11 = {gv:.12f}, gamma_1 = {g1:.12f}")


def test_11_pseudo_eigen_scaling():
    ns = [500, 2000, 8000]
    with Criterion(11, "chi inner-product gap scaling", 300.0) as c:
        gaps = []
        for n in ns:
            model, _ = make_sbm(n, [0.5, 0.5], [[1.6, 0.4], [0.4, 1.6]], 10.0)
            sd = model_spectral_data(model)
            per_seed = []
            for seed in range(10):
                rows = pseudo_eigen_diagnostics(build(sample_graph(model, seed)), sd, 0)
                per_seed += [r["gap"] ** 2 for r in rows if r["quantity"] == "chi_inner"]
            gaps.append(math.sqrt(np.mean(per_seed)))
        slope = float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])
        c.check(abs(slope + 0.5) <= 0.2, f"slope {slope:.3f}, rms gaps {[round(g, 4) for g in gaps]}")


@pytest.mark.slow
def test_12_performance():
    with Criterion(12, "matvec scaling and Arnoldi n=1e5", 600.0) as c:
        rows = matvec_ladder((10_000, 20_000, 40_000))
        ratios = [r["normalized_ratio"] for r in rows[1:]]
        raw = [r["time_ratio"] for r in rows[1:]]
        c.check(max(ratios) <= 1.5, f"per-edge time ratios {[round(x, 3) for x in ratios]} "
                                    f"(raw doubling ratios {[round(x, 2) for x in raw]})")
        bench = arnoldi_bench(100_000, 5.0, 2, seed=0)
        c.check(bench["seconds"] < 60 and bench["converged"],
                f"Arnoldi top-2 {bench['seconds']:.1f}s, converged {bench['converged']}, "
                f"{bench['matvecs']} matvecs")
