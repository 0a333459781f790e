"""Perturbation certificates for near-diagonalizable matrices with explicit constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

VALID = "VALID"
INAPPLICABLE = "INAPPLICABLE"


def spectral_norm(A: np.ndarray) -> float:
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def _clusters(centers: np.ndarray, radius: float) -> np.ndarray:
    """Label connected components of the union of closed disks B(c_i, radius)."""
    c = np.asarray(centers, dtype=complex)
    adj = np.abs(c[:, None] - c[None, :]) <= 2 * radius
    _, labels = connected_components(adj.astype(np.int8), directed=False)
    return labels


# ---------------------------------------------------------------------------
# Bauer-Fike


@dataclass
class DiskCertificate:
    centers: np.ndarray
    radius: float
    cluster: np.ndarray
    counts: dict
    kappa: float

    def contains(self, z: complex, slack: float = 1e-9) -> bool:
        return bool(np.any(np.abs(self.centers - z) <= self.radius * (1 + slack) + slack))

    def verify(self, eigenvalues: np.ndarray, slack: float = 1e-9) -> dict:
        """Check containment and the per-cluster eigenvalue counts."""
        eigenvalues = np.asarray(eigenvalues, dtype=complex)
        outside = [z for z in eigenvalues if not self.contains(z, slack)]
        observed = {}
        for z in eigenvalues:
            dist = np.abs(self.centers - z)
            owner = int(self.cluster[np.argmin(dist)])
            observed[owner] = observed.get(owner, 0) + 1
        count_ok = all(observed.get(k, 0) == v for k, v in self.counts.items())
        return {"outside": len(outside), "counts_match": count_ok, "observed": observed,
                "ok": not outside and count_ok}


def bauer_fike_disks(Vmat, Lambda, E) -> DiskCertificate:
    """Disks B(lambda_i, ||E|| kappa(V)) for D + E with D = V diag(Lambda) V^{-1}.

    Columns of ``Vmat`` are eigenvectors of D.  Every eigenvalue of D + E lies
    in the union, and each connected cluster of disks holds exactly as many
    eigenvalues as it has centers.
    """
    Vmat = np.asarray(Vmat)
    s = np.linalg.svd(Vmat, compute_uv=False)
    if s.size == 0 or s[-1] <= s[0] * 1e-14:
        raise ValueError("V is singular to working precision")
    kappa = float(s[0] / s[-1])
    radius = spectral_norm(E) * kappa
    centers = np.asarray(Lambda, dtype=complex).reshape(-1)
    labels = _clusters(centers, radius)
    counts = {int(k): int(np.sum(labels == k)) for k in np.unique(labels)}
    return DiskCertificate(centers=centers, radius=radius, cluster=labels, counts=counts, kappa=kappa)


# ---------------------------------------------------------------------------
# biorthogonalization and the Pi lemma


def biorthogonalize(U: np.ndarray, V: np.ndarray, *, tol: float = 1e-12) -> np.ndarray:
    """Ubar with Ubar* V = I: u_i minus its projection on span(v_j, j != i), rescaled."""
    U = np.asarray(U)
    V = np.asarray(V)
    if U.shape != V.shape:
        raise ValueError("U and V must have the same shape")
    n, r = U.shape
    dtype = np.result_type(U, V, float)
    out = np.empty((n, r), dtype=dtype)
    for i in range(r):
        others = np.delete(V, i, axis=1)
        u = U[:, i].astype(dtype)
        if others.shape[1]:
            Qb, _ = np.linalg.qr(others)
            u = u - Qb @ (Qb.conj().T @ u)
        ip = np.vdot(u, V[:, i])  # <u~_i, v_i> = u~_i^* v_i
        if abs(ip) <= tol * max(np.linalg.norm(u) * np.linalg.norm(V[:, i]), 1e-300):
            raise ValueError(f"degenerate projection: <u~_{i}, v_{i}> vanishes")
        out[:, i] = u / np.conj(ip)
    return out


def measure_pair(U: np.ndarray, V: np.ndarray):
    """alpha, beta (each at least 1) and delta = max |U*V - I| entries."""
    r = U.shape[1]
    GU = U.conj().T @ U
    GV = V.conj().T @ V
    alpha = max(1.0, spectral_norm(GU), spectral_norm(GV))
    beta = max(1.0, spectral_norm(np.linalg.inv(GU)), spectral_norm(np.linalg.inv(GV)))
    delta = float(np.abs(U.conj().T @ V - np.eye(r)).max())
    return alpha, beta, delta


def biorthogonal_drift_bound(U: np.ndarray, V: np.ndarray) -> float:
    """5 r^2 alpha^{3/2} beta delta, the bound on ||Ubar - U||."""
    alpha, beta, delta = measure_pair(U, V)
    return 5 * U.shape[1] ** 2 * alpha ** 1.5 * beta * delta


@dataclass
class PiCheck:
    norm_Pi: float
    norm_Pi_inv: float
    verified: bool
    inverse_residual: float
    bound_Pi: float
    bound_Pi_inv: float
    norms_at_least_one: bool


def pi_condition_bound(X: np.ndarray, Xprime: np.ndarray, *, tol: float = 1e-10) -> PiCheck:
    """Pi = (X, Y) with Y an orthonormal basis of ker(X'*); checks the explicit inverse and norm bounds.

    Requires X'* X = I_r.  The inverse is Pi^{-1} = [X'* ; -Y* X X'* + Y*].
    """
    X = np.asarray(X)
    Xp = np.asarray(Xprime)
    n, r = X.shape
    if Xp.shape != (n, r):
        raise ValueError("X and X' must have the same shape")
    if np.linalg.matrix_rank(X) < r or np.linalg.matrix_rank(Xp) < r:
        raise ValueError("X and X' must have full column rank")
    if np.abs(Xp.conj().T @ X - np.eye(r)).max() > tol:
        raise ValueError("X'* X must equal the identity")
    Y = scipy.linalg.null_space(Xp.conj().T)
    Pi = np.hstack([X, Y])
    Xps = Xp.conj().T
    Ys = Y.conj().T
    Pinv = np.vstack([Xps, -Ys @ X @ Xps + Ys])
    resid = float(np.abs(Pinv @ Pi - np.eye(n)).max())
    nx, nxp = spectral_norm(X), spectral_norm(Xp)
    nPi, nPinv = spectral_norm(Pi), spectral_norm(Pinv)
    bPi = math.sqrt(2) * nx
    bPinv = math.sqrt(2) * (1 + nx * nxp)
    at_least_one = nx >= 1 - 1e-12 and nxp >= 1 - 1e-12
    ok = resid <= tol and nPinv <= bPinv * (1 + 1e-12) and (not at_least_one or nPi <= bPi * (1 + 1e-12))
    return PiCheck(norm_Pi=nPi, norm_Pi_inv=nPinv, verified=bool(ok), inverse_residual=resid,
                   bound_Pi=bPi, bound_Pi_inv=bPinv, norms_at_least_one=at_least_one)


# ---------------------------------------------------------------------------
# sigma certificate


def sigma_bound(r: int, alpha: float, beta: float, delta: float, epsilon: float) -> float:
    """84 r^2 alpha^{7/2} beta (epsilon + 5 r alpha^2 beta delta)."""
    return 84.0 * r * r * alpha ** 3.5 * beta * (epsilon + 5.0 * r * alpha ** 2 * beta * delta)


@dataclass
class SigmaCertificate:
    r: int
    alpha: float
    beta: float
    delta: float
    epsilon: float
    sigma: float
    status: str
    theta: np.ndarray
    eigenvalue_bound: float
    separated: np.ndarray
    eigenvector_bounds: list
    verification: dict | None = field(default=None)

    @property
    def valid(self) -> bool:
        return self.status == VALID


def _match_modulus(lams: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Greedy modulus-sorted matching (ties by angle); returns lambda matched to each theta."""
    from .eigs import modulus_order

    lam_sorted = lams[modulus_order(lams)][: theta.size]
    th_order = modulus_order(theta)
    out = np.empty(theta.size, dtype=complex)
    out[th_order] = lam_sorted
    return out


def certify_near_diagonalizable(A: np.ndarray, U: np.ndarray, Sigma, V: np.ndarray, *,
                                verify: bool = True) -> SigmaCertificate:
    """Certificate for A close to U Sigma V* with U*V close to I.

    alpha, beta, delta and epsilon are measured; sigma follows the explicit
    formula.  When |theta_r| <= 2 sigma the certificate is INAPPLICABLE.
    With ``verify`` the dense spectrum of A is checked against every claim.
    """
    A = np.asarray(A)
    U = np.asarray(U)
    V = np.asarray(V)
    theta = np.asarray(np.diag(Sigma) if np.ndim(Sigma) == 2 else Sigma, dtype=complex)
    r = theta.size
    alpha, beta, delta = measure_pair(U, V)
    eps = spectral_norm(A - U @ np.diag(theta) @ V.conj().T)
    sigma = sigma_bound(r, alpha, beta, delta, eps)
    th_min = np.abs(theta).min()
    status = VALID if th_min > 2 * sigma else INAPPLICABLE
    # separation distances include the zero eigenvalues of the unperturbed part
    sep = np.empty(r)
    for i in range(r):
        others = np.abs(np.delete(theta, i) - theta[i])
        sep[i] = min(others.min() if others.size else math.inf, abs(theta[i]))
    separated = sep > 2 * sigma
    vec_bounds = [3 * sigma / (sep[i] - sigma) if separated[i] else None for i in range(r)]
    cert = SigmaCertificate(r=r, alpha=alpha, beta=beta, delta=delta, epsilon=eps, sigma=sigma,
                            status=status, theta=theta, eigenvalue_bound=r * sigma,
                            separated=separated, eigenvector_bounds=vec_bounds)
    if verify and status == VALID:
        cert.verification = verify_sigma_certificate(cert, A, U)
    return cert


def verify_sigma_certificate(cert: SigmaCertificate, A: np.ndarray, U: np.ndarray) -> dict:
    """Compare every claim of a VALID certificate against the dense spectrum of A."""
    lams, vecs = np.linalg.eig(A)
    sigma = cert.sigma
    theta = cert.theta
    near = np.min(np.abs(lams[:, None] - theta[None, :]), axis=1) <= sigma * (1 + 1e-9) + 1e-12
    small = np.abs(lams) <= sigma * (1 + 1e-9) + 1e-12
    stray = int(np.sum(~(near | small)))
    # cluster counts: each connected cluster of theta-disks holds as many eigenvalues as centers,
    # counting only eigenvalues that are not in the disk around zero
    labels = _clusters(theta, sigma)
    count_ok = True
    for k in np.unique(labels):
        members = theta[labels == k]
        inside = np.min(np.abs(lams[:, None] - members[None, :]), axis=1) <= sigma * (1 + 1e-9) + 1e-12
        if np.any(np.abs(members) > 3 * sigma * len(members)):  # cluster away from the zero disk
            count_ok &= int(inside.sum()) == len(members)
    matched = _match_modulus(lams, theta)
    eig_err = np.abs(matched - theta)
    eig_ok = bool(np.all(eig_err <= cert.eigenvalue_bound * (1 + 1e-9)))
    if not eig_ok:
        # any bijection consistent with clusters is admissible
        cost = np.abs(lams[:, None] - theta[None, :])
        rows, cols = linear_sum_assignment(cost)
        eig_err = np.zeros(theta.size)
        eig_err[cols] = cost[rows, cols]
        eig_ok = bool(np.all(eig_err <= cert.eigenvalue_bound * (1 + 1e-9)))
    vec_ok = True
    vec_err = [None] * theta.size
    for i, bound in enumerate(cert.eigenvector_bounds):
        if bound is None:
            continue
        j = int(np.argmin(np.abs(lams - theta[i])))
        xi = vecs[:, j] / np.linalg.norm(vecs[:, j])
        uh = U[:, i] / np.linalg.norm(U[:, i])
        ip = np.vdot(xi, uh)
        phase = ip / abs(ip) if abs(ip) > 0 else 1.0
        # direct distance; sqrt(2 - 2|<xi, u>|) loses half the digits near 1
        err = float(np.linalg.norm(xi * phase - uh))
        vec_err[i] = err
        vec_ok &= err <= bound * (1 + 1e-9) + 1e-12
    return {"stray": stray, "cluster_counts": bool(count_ok), "eigenvalues": eig_ok,
            "eigenvector": bool(vec_ok), "max_eig_error": float(eig_err.max()),
            "eigvec_errors": vec_err,
            "ok": stray == 0 and bool(count_ok) and eig_ok and bool(vec_ok)}


# ---------------------------------------------------------------------------
# phase resolution from coprime powers


@dataclass
class PhaseEstimate:
    estimates: np.ndarray
    bound: float
    sigma0: float
    signs: np.ndarray


def resolve_phase(lams_ell, lams_ellp, theta, ell: int, ellp: int, *,
                  sigma0: float | None = None, consistency: float = 0.5) -> PhaseEstimate:
    """Recover eigenvalues from noisy ell-th and ell'-th powers (gcd(ell, ell') = 1).

    The ell-th power fixes the argument up to multiples of 2 pi / ell; among
    those candidates the one whose ell'-th power best matches the second
    estimate is chosen.  Returns the complex estimates, the resolved signs
    and the bound 4 sigma0 / (ell |theta_r|^ell).
    """
    if math.gcd(int(ell), int(ellp)) != 1:
        raise ValueError("ell and ell' must be relatively prime")
    z = np.asarray(lams_ell, dtype=complex)
    zp = np.asarray(lams_ellp, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    if not (z.size == zp.size == theta.size):
        raise ValueError("inputs must have equal length")
    if sigma0 is None:
        sigma0 = float(max(np.abs(z - theta ** ell).max(), np.abs(zp - theta ** ellp).max()))
    th_r = np.abs(theta).min()
    if sigma0 >= ell * th_r ** ell:
        raise ValueError("sigma0 >= ell |theta_r|^ell: powers too noisy to resolve")
    est = np.empty(theta.size, dtype=complex)
    signs = np.empty(theta.size)
    for i in range(theta.size):
        mod = abs(z[i]) ** (1.0 / ell)
        base = np.angle(z[i])
        cands = (base + 2 * math.pi * np.arange(ell)) / ell
        target = np.angle(zp[i])
        mis = np.abs(np.angle(np.exp(1j * (ellp * cands - target))))
        k = int(np.argmin(mis))
        if mis[k] > consistency * math.pi:
            raise ValueError("inconsistent phase data: no candidate matches the second power")
        omega = np.angle(np.exp(1j * cands[k]))
        # a real eigenvalue sits at omega near 0 (positive) or pi (negative)
        sign = 1.0 if abs(omega) < math.pi / 2 else -1.0
        est[i] = mod * np.exp(1j * omega)
        signs[i] = sign
    return PhaseEstimate(estimates=est, bound=4 * sigma0 / (ell * th_r ** ell), sigma0=sigma0, signs=signs)


# ---------------------------------------------------------------------------
# randomized soundness sweep


def certificate_sweep(trials: int, seed: int = 0) -> dict:
    """Randomized instances of every certificate, each checked against dense spectra.

    Returns violation counts per certificate kind plus the number of
    sigma certificates that were VALID (INAPPLICABLE ones claim nothing).
    """
    from ._rng import stream

    counts = {"disk": 0, "biorth": 0, "pi": 0, "sigma": 0, "phase": 0}
    valid_sigma = 0
    for trial in range(trials):
        rng = stream(seed, "certify", trial)
        # Bauer-Fike
        n = 8
        Vm = rng.standard_normal((n, n)) + np.eye(n) * 2
        lam = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        D = Vm @ np.diag(lam) @ np.linalg.inv(Vm)
        E = 10 ** rng.uniform(-4, -1) * rng.standard_normal((n, n))
        cert = bauer_fike_disks(Vm, lam, E)
        counts["disk"] += 0 if cert.verify(np.linalg.eigvals(D + E))["ok"] else 1
        # biorthogonalization and the Pi lemma
        N, r = 20, 3
        U = np.linalg.qr(rng.standard_normal((N, r)))[0]
        V = U + 0.05 * rng.standard_normal((N, r))
        Ub = biorthogonalize(U, V)
        drift_ok = spectral_norm(Ub - U) <= biorthogonal_drift_bound(U, V) * (1 + 1e-9)
        counts["biorth"] += 0 if (np.abs(Ub.conj().T @ V - np.eye(r)).max() <= 1e-10 and drift_ok) else 1
        pc = pi_condition_bound(V, Ub)
        counts["pi"] += 0 if pc.verified else 1
        # sigma certificate on a planted near-diagonalizable matrix
        theta = np.sort(rng.uniform(0.5, 1.5, 2))[::-1] * rng.choice([-1, 1], 2)
        Uo = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        A = Uo @ np.diag(theta) @ Uo.T + 10 ** rng.uniform(-6, -3) * rng.standard_normal((6, 6))
        sc = certify_near_diagonalizable(A, Uo, theta, Uo)
        if sc.valid:
            valid_sigma += 1
            counts["sigma"] += 0 if sc.verification["ok"] else 1
        # coprime-power phase resolution
        th = rng.uniform(0.5, 1.0, 3) * rng.choice([-1, 1], 3)
        ell, ellp = 3, 4
        s0 = 10 ** rng.uniform(-5, -2)
        z = th ** ell + s0 * np.exp(2j * np.pi * rng.random(3)) * rng.random(3)
        zp = th ** ellp + s0 * np.exp(2j * np.pi * rng.random(3)) * rng.random(3)
        try:
            est = resolve_phase(z, zp, th, ell, ellp, sigma0=s0)
            counts["phase"] += int(np.any(np.abs(est.estimates - th) > est.bound))
        except ValueError:
            pass  # too noisy for the bound to apply: no claim made
    return {"trials": trials, "violations": counts, "valid_sigma": valid_sigma,
            "total_violations": int(sum(counts.values()))}
