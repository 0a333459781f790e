"""Deterministic predictions: Gamma matrices, outlier locations, overlaps, BBP values, diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import BlockMatrix, SpectralData, WeightLaw, as_dense, matvec
from .nbop import NBOperator, choose_ell
from .sample import label_space, _as_weight_function


def _require_r0(sd: SpectralData):
    if sd.r0 < 1:
        raise ValueError("no informative eigenvalue (r0 = 0)")


def _pair_series(sd: SpectralData, weight_vec: np.ndarray, t: int, extra_power: int) -> np.ndarray:
    """sum_{s<=t} <weight_vec, K^s (phi_i o phi_j)> / (mu_i mu_j)^(s + extra_power)."""
    r0 = sd.r0
    out = np.zeros((r0, r0))
    for i in range(r0):
        for j in range(i, r0):
            vec = sd.phi[:, i] * sd.phi[:, j]
            prod = sd.mu[i] * sd.mu[j]
            total = 0.0
            for s in range(t + 1):
                total += float(weight_vec @ vec) / prod ** (s + extra_power)
                if s < t:
                    vec = matvec(sd.K, vec)
            out[i, j] = out[j, i] = total
    return out


def _degrees(sd: SpectralData, model=None) -> np.ndarray:
    if sd.P1 is not None:
        return sd.P1
    if model is None:
        raise ValueError("degree vector P1 unavailable: pass the model")
    return model.degrees()


def gamma_matrices(sd: SpectralData, model=None, t: int = 0):
    """(Gamma_U^(t), Gamma_V^(t)) on the informative eigenvectors.

    Gamma_U_ij = sum_s <P1, K^s phi^{ij}> / (mu_i mu_j)^s and
    Gamma_V_ij = sum_s <K1, K^s phi^{ij}> / (mu_i mu_j)^(s+1) for s = 0..t.
    """
    _require_r0(sd)
    if t < 0:
        raise ValueError("t must be >= 0")
    P1 = _degrees(sd, model)
    return _pair_series(sd, P1, t, 0), _pair_series(sd, sd.K1, t, 1)


def gamma_limit(sd: SpectralData, model=None, i: int = 0) -> float:
    """gamma_i = <P1, (I - K / mu_i^2)^{-1} phi^{ii}> via a linear solve."""
    _require_r0(sd)
    mu2 = sd.mu[i] ** 2
    if sd.rho >= mu2:
        raise ValueError("rho >= mu_i^2: the series defining gamma_i diverges")
    P1 = _degrees(sd, model)
    rhs = sd.phi[:, i] ** 2
    if isinstance(sd.K, BlockMatrix):
        y = sd.K.solve_shifted(1.0 / mu2, rhs)
    else:
        K = as_dense(sd.K)
        y = np.linalg.solve(np.eye(K.shape[0]) - K / mu2, rhs)
    return float(P1 @ y)


# ---------------------------------------------------------------------------
# Predictions


@dataclass
class Prediction:
    n: int
    ell: int
    r0: int
    outliers: list
    bulk_radius: float
    tau: float
    sigma: float
    C0: float
    c_constant: float
    C0_supplied: bool
    bulk_radius_inflated: float | None
    overlap_lower: list
    overlap_vacuous: list
    bbp: list = field(default_factory=list)
    sbm_overlap: list | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n, "ell": self.ell, "r0": self.r0,
            "outliers": [float(x) for x in self.outliers],
            "bulk_radius": self.bulk_radius, "tau": self.tau,
            "sigma": self.sigma, "C0": self.C0, "c_constant": self.c_constant,
            "C0_supplied": self.C0_supplied,
            "bulk_radius_inflated": self.bulk_radius_inflated,
            "overlap_lower": self.overlap_lower, "overlap_vacuous": self.overlap_vacuous,
            "bbp": self.bbp, "sbm_overlap": self.sbm_overlap,
        }


def C0_bound(sd: SpectralData, n: int, c: float = 1.0) -> float:
    """c (r b d Ltilde log n / (1 - tau))^25 with the unnamed constant c (default 1)."""
    if sd.tau is None or sd.tau >= 1:
        return math.inf
    d = sd.d if sd.d is not None else 1.0
    base = sd.r * sd.b * d * sd.Ltilde * math.log(n) / (1 - sd.tau)
    try:
        return c * base ** 25
    except OverflowError:
        return math.inf


def predict_bbp(sd: SpectralData, i: int):
    """(nu_i, overlap, mu_i^2 >= 2 L^2 flag) with nu_i = mu_i + rho/mu_i."""
    mu = float(sd.mu[i])
    if mu * mu <= sd.rho:
        raise ValueError("mu_i^2 <= rho: below the BBP threshold")
    nu = mu + sd.rho / mu
    overlap = math.sqrt(1.0 - sd.rho / (mu * mu))
    return nu, overlap, bool(mu * mu >= 2 * sd.L ** 2)


def predict_sbm_overlap(alpha: float, mu_ratio: float) -> float:
    """sqrt(1 - 1/(alpha mu^2)); requires alpha mu^2 > 1 (Kesten-Stigum)."""
    x = alpha * mu_ratio * mu_ratio
    if x <= 1:
        raise ValueError("alpha mu^2 <= 1: at or below the Kesten-Stigum threshold")
    return math.sqrt(1.0 - 1.0 / x)


def predict_B_spectrum(sd: SpectralData, n: int, C0: float | None = None, *,
                       c: float = 1.0, sbm_alpha: float | None = None) -> Prediction:
    """Outliers mu_i (i <= r0), bulk radius sqrt(rho) v L, sigma and overlap forms."""
    _require_r0(sd)
    d = sd.d if sd.d is not None else n * 1.0
    ell = choose_ell(n, d, sd.Ltilde) if d > 1 else 1
    C0_val = C0 if C0 is not None else C0_bound(sd, n, c)
    mu1 = abs(sd.mu[0])
    try:
        sigma = C0_val * mu1 * sd.tau ** (ell / 2)
    except OverflowError:
        sigma = math.inf
    lower, vacuous, bbp, sbm = [], [], [], []
    for i in range(sd.r0):
        mu = float(sd.mu[i])
        rad = 1.0 - sd.r * d * d * sd.Ltilde ** 2 * sd.rho / (mu * mu)
        lower.append(math.sqrt(rad) if rad > 0 else 0.0)
        vacuous.append(rad <= 0)
        if mu * mu > sd.rho:
            nu, ov, flag = predict_bbp(sd, i)
            bbp.append({"nu": nu, "overlap": ov, "mu2_ge_2L2": flag})
        else:
            bbp.append(None)
        if sbm_alpha is not None:
            ratio = mu / sbm_alpha
            sbm.append(predict_sbm_overlap(sbm_alpha, ratio) if sbm_alpha * ratio ** 2 > 1 else None)
    inflated = C0 ** (1.0 / ell) * sd.threshold if C0 is not None else None
    return Prediction(n=n, ell=ell, r0=sd.r0, outliers=[float(m) for m in sd.mu[:sd.r0]],
                      bulk_radius=sd.threshold, tau=float(sd.tau), sigma=float(sigma),
                      C0=float(C0_val), c_constant=c, C0_supplied=C0 is not None,
                      bulk_radius_inflated=inflated, overlap_lower=lower,
                      overlap_vacuous=vacuous, bbp=bbp,
                      sbm_overlap=sbm if sbm_alpha is not None else None)


def degree_concentration(graph, rho: float) -> float:
    """Measured epsilon = max_i |sum_j W_ij^2 - rho| / rho."""
    w2 = graph.w ** 2
    s = np.bincount(graph.u, weights=w2, minlength=graph.n) + np.bincount(graph.v, weights=w2, minlength=graph.n)
    return float(np.max(np.abs(s - rho)) / rho)


# ---------------------------------------------------------------------------
# labelled SBM


@dataclass
class LabelWeightReport:
    tau: float
    beta: float
    tau_feasible: bool
    beta_feasible: bool
    snr: float


def _label_moments(a, b, law_in: WeightLaw, law_out: WeightLaw, w):
    labels, p, q = label_space(law_in, law_out)
    wt = _as_weight_function(w, labels)
    return labels, p, q, wt


def label_beta(a: float, b: float, p: np.ndarray, q: np.ndarray) -> float:
    """1/2 sum over labels of (a p - b q)^2 / (a p + b q) (density form w.r.t. m = P + Q)."""
    num = a * p - b * q
    den = a * p + b * q
    mask = den > 0
    return float(0.5 * np.sum(num[mask] ** 2 / den[mask]))


def weight_snr(a: float, b: float, p, q, wt) -> float:
    """mu_2^2 / rho for the two-community model with weight table wt."""
    m1 = a * np.dot(p, wt) - b * np.dot(q, wt)
    m2 = a * np.dot(p, wt ** 2) + b * np.dot(q, wt ** 2)
    return float(m1 ** 2 / (2.0 * m2)) if m2 > 0 else 0.0


def labeled_tau_beta(a: float, b: float, law_in: WeightLaw, law_out: WeightLaw, w) -> LabelWeightReport:
    """tau = 2((a E_P w^2 + b E_Q w^2) v L) / (a E_P w - b E_Q w)^2 and the optimal-weight beta."""
    labels, p, q, wt = _label_moments(a, b, law_in, law_out, w)
    first = a * np.dot(p, wt) - b * np.dot(q, wt)
    if abs(first) < 1e-14:
        raise ValueError("degenerate weights: a E_P[w] = b E_Q[w]")
    second = a * np.dot(p, wt ** 2) + b * np.dot(q, wt ** 2)
    support = (p > 0) | (q > 0)
    L = float(np.abs(wt[support]).max())
    tau = 2.0 * max(second, L) / first ** 2
    beta = label_beta(a, b, p, q)
    return LabelWeightReport(tau=float(tau), beta=beta, tau_feasible=tau < 1,
                             beta_feasible=beta > 1, snr=weight_snr(a, b, p, q, wt))


def optimal_label_weight(a: float, b: float, law_in: WeightLaw, law_out: WeightLaw):
    """w(l) = (a f - b g)/(a f + b g) on the label space, with beta."""
    labels, p, q = label_space(law_in, law_out)
    den = a * p + b * q
    mass = p + q
    if np.any((den == 0) & (mass > 0)):
        raise ValueError("a f + b g vanishes on a label with positive mass")
    w = np.where(den > 0, (a * p - b * q) / np.where(den > 0, den, 1.0), 0.0)
    return labels, w, label_beta(a, b, p, q)


# ---------------------------------------------------------------------------
# Local lemma and scalar-product diagnostics


@dataclass
class KtScalar:
    value: float
    bound: float
    psi: float


def kt_scalar(sd: SpectralData, phi: np.ndarray, phi2: np.ndarray, t: int) -> KtScalar:
    """<1, K^t (phi o phi2)> and the bound r d^2 Ltilde^2 rho^t (unnormalized units)."""
    vec = np.asarray(phi, dtype=float) * np.asarray(phi2, dtype=float)
    for _ in range(t):
        vec = matvec(sd.K, vec)
    d = sd.d if sd.d is not None else float("nan")
    bound = sd.r * d * d * sd.Ltilde ** 2 * sd.rho ** t
    psi = d * sd.L ** 2 / sd.rho if sd.rho > 0 else math.inf
    return KtScalar(value=float(vec.sum()), bound=float(bound), psi=float(psi))


def pseudo_eigen_diagnostics(op: NBOperator, sd: SpectralData, t: int) -> list:
    """Empirical graph-side scalar products next to their tree-side predictions.

    Rows are dicts with keys quantity, i, j, lhs, rhs, gap.  The v-side Gram
    is compared with (mu_i mu_j)^(t+1) Gamma_V^(t).  A model without
    informative eigenvalues (r0 = 0) gives an empty table.
    """
    if sd.r0 < 1:
        return []
    r0 = sd.r0
    P1 = _degrees(sd)
    chi = op.T(sd.phi[:, :r0])
    chicheck = op.J(chi)
    BT = op.power(chi, t)
    BT1 = op.matvec(BT)
    BstarV = op.power(op.D_W(chicheck), t, adjoint=True)
    GU, GV = gamma_matrices(sd, t=t)
    rows = []

    def add(name, i, j, lhs, rhs):
        rows.append({"quantity": name, "i": i, "j": j, "lhs": float(lhs), "rhs": float(rhs),
                     "gap": float(abs(lhs - rhs))})

    d = sd.d if sd.d is not None else float("nan")
    for i in range(r0):
        mi = sd.mu[i]
        for j in range(r0):
            mj = sd.mu[j]
            add("chi_inner", i, j, BT[:, i] @ chi[:, j], mi ** t * (sd.phi[:, i] * P1) @ sd.phi[:, j])
            add("u_v_inner", i, j, BT[:, i] @ op.D_W(chicheck[:, j]), mi ** (t + 1) * (i == j))
            add("u_gram", i, j, BT[:, i] @ BT[:, j], (mi * mj) ** t * GU[i, j])
            add("v_gram", i, j, BstarV[:, i] @ BstarV[:, j], (mi * mj) ** (t + 1) * GV[i, j])
        inc = BT1[:, i] - mi * BT[:, i]
        vec = sd.phi[:, i] ** 2
        for _ in range(t + 1):
            vec = matvec(sd.K, vec)
        add("increment", i, i, inc @ inc, float(P1 @ vec))
        rows[-1]["budget"] = float(sd.r * d ** 3 * sd.L ** 2 * sd.rho ** (t + 1))
    return rows
