"""Deterministic model side: edge probabilities, weight laws, Q, K and their spectra."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

RANK_RTOL = 1e-10
K1_WARN = 1e-6


class NoInformativeEigenvalue(ValueError):
    """Raised when no eigenvalue of Q exceeds max(sqrt(rho), L)."""


# ---------------------------------------------------------------------------
# weight laws


@dataclass(frozen=True)
class WeightLaw:
    """Bounded weight distribution with closed-form moments.

    ``kind`` is one of ``"constant"``, ``"discrete"`` or ``"uniform"``.
    """

    kind: str
    values: tuple = ()
    probs: tuple = ()
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if len(self.values) != 1:
                raise ValueError("constant law needs exactly one value")
        elif self.kind == "discrete":
            if len(self.values) == 0 or len(self.values) != len(self.probs):
                raise ValueError("discrete law needs matching values and probs")
            p = np.asarray(self.probs, dtype=float)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("discrete probabilities must be >= 0 and sum to 1")
        elif self.kind == "uniform":
            if not self.lo <= self.hi:
                raise ValueError("uniform law needs lo <= hi")
        else:
            raise ValueError(f"unknown weight law kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float = 1.0) -> "WeightLaw":
        return cls("constant", values=(float(value),))

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> "WeightLaw":
        return cls("discrete", values=tuple(float(v) for v in values),
                   probs=tuple(float(p) for p in probs))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "WeightLaw":
        return cls("uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def rademacher(cls) -> "WeightLaw":
        return cls.discrete((-1.0, 1.0), (0.5, 0.5))

    @property
    def L(self) -> float:
        if self.kind == "uniform":
            return max(abs(self.lo), abs(self.hi))
        return float(max(abs(v) for v in self.values))

    @property
    def m1(self) -> float:
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "discrete":
            return float(np.dot(self.values, self.probs))
        return 0.5 * (self.lo + self.hi)

    @property
    def m2(self) -> float:
        if self.kind == "constant":
            return self.values[0] ** 2
        if self.kind == "discrete":
            return float(np.dot(np.square(self.values), self.probs))
        lo, hi = self.lo, self.hi
        return (lo * lo + lo * hi + hi * hi) / 3.0

    def scaled(self, c: float) -> "WeightLaw":
        c = float(c)
        if self.kind == "uniform":
            a, b = sorted((c * self.lo, c * self.hi))
            return WeightLaw.uniform(a, b)
        if self.kind == "constant":
            return WeightLaw.constant(c * self.values[0])
        return WeightLaw.discrete([c * v for v in self.values], self.probs)

    def from_uniform(self, u: np.ndarray):
        """Inverse-CDF transform of uniforms; returns (values, atom indices or None)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, self.values[0]), None
        if self.kind == "discrete":
            cdf = np.cumsum(self.probs)
            atoms = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.values) - 1)
            return np.asarray(self.values)[atoms], atoms
        return self.lo + (self.hi - self.lo) * u, None

    def sample(self, rng: np.random.Generator, size: int):
        """Draw ``size`` values; returns (values, atom indices or None)."""
        return self.from_uniform(rng.random(size))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.values[0]}
        if self.kind == "discrete":
            return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, spec: dict) -> "WeightLaw":
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(spec.get("value", 1.0))
        if kind == "discrete":
            return cls.discrete(spec["values"], spec["probs"])
        if kind == "uniform":
            return cls.uniform(spec["lo"], spec["hi"])
        raise ValueError(f"unknown weight law kind {kind!r}")


# ---------------------------------------------------------------------------
# block-structured symmetric matrices


class BlockMatrix:
    """Symmetric n x n matrix with entries ``values[theta[i], theta[j]]``.

    Diagonal entries are included, matching the dense convention.
    """

    def __init__(self, theta: np.ndarray, values: np.ndarray):
        self.theta = np.asarray(theta, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        self.k = self.values.shape[0]
        self.counts = np.bincount(self.theta, minlength=self.k).astype(float)
        self.shape = (self.theta.size, self.theta.size)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 1:
            sums = np.bincount(self.theta, weights=x.real, minlength=self.k)
            if np.iscomplexobj(x):
                sums = sums + 1j * np.bincount(self.theta, weights=x.imag, minlength=self.k)
            return (self.values @ sums)[self.theta]
        return np.column_stack([self.matvec(x[:, j]) for j in range(x.shape[1])])

    def __matmul__(self, x):
        return self.matvec(x)

    def toarray(self) -> np.ndarray:
        return self.values[np.ix_(self.theta, self.theta)]

    def row_sums(self) -> np.ndarray:
        return (self.values @ self.counts)[self.theta]

    def max_entry(self) -> float:
        used = self.counts > 0
        return float(self.values[np.ix_(used, used)].max())

    def min_entry(self) -> float:
        used = self.counts > 0
        return float(self.values[np.ix_(used, used)].min())

    def scaled(self, c: float) -> "BlockMatrix":
        return BlockMatrix(self.theta, c * self.values)

    def reduced(self) -> np.ndarray:
        """Symmetric k x k matrix N^{1/2} values N^{1/2} sharing the nonzero spectrum."""
        s = np.sqrt(self.counts)
        return s[:, None] * self.values * s[None, :]

    def eigh(self):
        """Nonzero-spectrum eigenpairs lifted to R^n (orthonormal columns)."""
        red = self.reduced()
        w, psi = np.linalg.eigh(red)
        used = self.counts > 0
        lift = np.zeros((self.k, self.k))
        lift[used] = psi[used] / np.sqrt(self.counts[used])[:, None]
        return w, lift[self.theta]

    def solve_shifted(self, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - c * self) y = rhs by reduction to k x k."""
        # y = rhs + c * Theta z with z = values (Theta^T y)
        h = np.bincount(self.theta, weights=rhs, minlength=self.k)
        a = np.eye(self.k) - c * self.values * self.counts[None, :]
        z = np.linalg.solve(a, self.values @ h)
        return rhs + c * z[self.theta]


def as_dense(mat) -> np.ndarray:
    return mat.toarray() if isinstance(mat, BlockMatrix) else np.asarray(mat)


def matvec(mat, x):
    return mat.matvec(x) if isinstance(mat, BlockMatrix) else mat @ x


# ---------------------------------------------------------------------------
# graph models


class GraphModel:
    """Edge-probability structure P with a weight law for every vertex pair.

    Two storage forms are supported.  Block form takes ``theta`` (vertex
    blocks), ``block_P`` (k x k probabilities) and optionally ``law_index``
    as a k x k integer table into ``laws``.  Dense form takes ``P`` (n x n),
    optional ``law_index`` (n x n) and optional ``weight_scale`` (n x n):
    the weight on pair (i, j) is ``weight_scale[i, j]`` times a draw from
    ``laws[law_index[i, j]]``.
    """

    def __init__(self, n: int, *, P=None, theta=None, block_P=None,
                 laws: Sequence[WeightLaw] = (WeightLaw.constant(1.0),),
                 law_index=None, weight_scale=None, d: float | None = None):
        self.n = int(n)
        self.laws = tuple(laws)
        if len(self.laws) == 0:
            raise ValueError("at least one weight law is required")
        if (P is None) == (block_P is None):
            raise ValueError("give exactly one of P (dense) or theta/block_P (block form)")
        if block_P is not None:
            self.theta = np.asarray(theta, dtype=np.int64)
            self.block_P = np.array(block_P, dtype=float)
            k = self.block_P.shape[0]
            if self.theta.shape != (self.n,) or self.block_P.shape != (k, k):
                raise ValueError("theta must have length n and block_P must be k x k")
            if self.theta.min() < 0 or self.theta.max() >= k:
                raise ValueError("theta entries must lie in [0, k)")
            self.P = None
            self.law_index = (np.zeros((k, k), dtype=np.int64) if law_index is None
                              else np.array(law_index, dtype=np.int64))
            self.weight_scale = None
            if weight_scale is not None:
                raise ValueError("weight_scale is only supported in dense form")
            probs = self.block_P
        else:
            self.theta = None
            self.block_P = None
            self.P = np.array(P, dtype=float)
            if self.P.shape != (self.n, self.n):
                raise ValueError("P must be n x n")
            self.law_index = (None if law_index is None
                              else np.array(law_index, dtype=np.int64))
            self.weight_scale = None if weight_scale is None else np.array(weight_scale, dtype=float)
            probs = self.P
        if not np.allclose(probs, probs.T, atol=1e-14, rtol=0):
            raise ValueError("P must be symmetric")
        if probs.min() < 0 or probs.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.law_index is not None:
            if not np.array_equal(self.law_index, self.law_index.T):
                raise ValueError("weight assignment must be symmetric")
            if self.law_index.min() < 0 or self.law_index.max() >= len(self.laws):
                raise ValueError("law_index refers to a missing law")
        if self.weight_scale is not None:
            if self.weight_scale.shape != (self.n, self.n) or not np.allclose(
                    self.weight_scale, self.weight_scale.T, atol=0, rtol=0):
                raise ValueError("weight_scale must be a symmetric n x n matrix")
        self.d = float(self.n * self.max_probability()) if d is None else float(d)
        self.meta: dict = {}

    # -- structure ---------------------------------------------------------
    @property
    def is_block(self) -> bool:
        return self.block_P is not None

    def max_probability(self) -> float:
        if self.is_block:
            used = np.bincount(self.theta, minlength=self.block_P.shape[0]) > 0
            return float(self.block_P[np.ix_(used, used)].max())
        return float(self.P.max())

    def dense_P(self) -> np.ndarray:
        if self.is_block:
            return self.block_P[np.ix_(self.theta, self.theta)]
        return self.P

    def probability_matrix(self):
        if self.is_block:
            return BlockMatrix(self.theta, self.block_P)
        return self.P

    def degrees(self) -> np.ndarray:
        """d_i = sum_j P_ij (diagonal included)."""
        if self.is_block:
            return BlockMatrix(self.theta, self.block_P).row_sums()
        return self.P.sum(axis=1)

    def pair_probability(self, i, j) -> np.ndarray:
        if self.is_block:
            return self.block_P[self.theta[i], self.theta[j]]
        return self.P[i, j]

    def pair_law(self, i, j) -> np.ndarray:
        i = np.asarray(i)
        if self.is_block:
            return self.law_index[self.theta[i], self.theta[j]]
        if self.law_index is None:
            return np.zeros(i.shape, dtype=np.int64)
        return self.law_index[i, j]

    def pair_scale(self, i, j) -> np.ndarray:
        if self.weight_scale is None:
            return np.ones(np.shape(i))
        return self.weight_scale[i, j]

    def law_moments(self):
        m1 = np.array([law.m1 for law in self.laws])
        m2 = np.array([law.m2 for law in self.laws])
        return m1, m2

    @property
    def L(self) -> float:
        """Almost-sure bound on |W_ij| over pairs with positive probability."""
        bounds = np.array([law.L for law in self.laws])
        if self.is_block:
            used = np.bincount(self.theta, minlength=self.block_P.shape[0]) > 0
            mask = (self.block_P > 0) & np.outer(used, used)
            return float(bounds[self.law_index][mask].max()) if mask.any() else 0.0
        mask = self.P > 0
        if not mask.any():
            return 0.0
        per_pair = bounds[self.law_index] if self.law_index is not None else np.full(self.P.shape, bounds[0])
        if self.weight_scale is not None:
            per_pair = per_pair * np.abs(self.weight_scale)
        return float(per_pair[mask].max())

    def scaled(self, c: float) -> "GraphModel":
        """Same P with every weight multiplied by c."""
        laws = [law.scaled(c) for law in self.laws]
        if self.is_block:
            return GraphModel(self.n, theta=self.theta, block_P=self.block_P, laws=laws,
                              law_index=self.law_index, d=self.d)
        return GraphModel(self.n, P=self.P, laws=laws, law_index=self.law_index,
                          weight_scale=self.weight_scale, d=self.d)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for arr in (self.theta, self.block_P, self.P, self.law_index, self.weight_scale):
            h.update(b"|")
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        for law in self.laws:
            h.update(repr(law.to_dict()).encode())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# spectral data


@dataclass(frozen=True, eq=False)
class SpectralData:
    mu: np.ndarray
    phi: np.ndarray
    r: int
    rho: float
    s: int
    r0: int
    tau: float | None
    L: float
    Ltilde: float
    b: float
    n: int
    Q: object = field(repr=False)
    K: object = field(repr=False)
    P1: np.ndarray | None = field(default=None, repr=False)
    K1: np.ndarray | None = field(default=None, repr=False)
    d: float | None = None

    @property
    def threshold(self) -> float:
        """max(sqrt(rho), L), the bulk edge."""
        return max(math.sqrt(self.rho), self.L)


def expectation_matrices(model: GraphModel):
    """Return (Q, K) with Q = P o E[W] and K = P o E[W o W]."""
    m1, m2 = model.law_moments()
    if model.is_block:
        q = model.block_P * m1[model.law_index]
        k = model.block_P * m2[model.law_index]
        return BlockMatrix(model.theta, q), BlockMatrix(model.theta, k)
    idx = model.law_index
    first = m1[0] if idx is None else m1[idx]
    second = m2[0] if idx is None else m2[idx]
    Q = model.P * first
    K = model.P * second
    if model.weight_scale is not None:
        Q = Q * model.weight_scale
        K = K * model.weight_scale ** 2
    return Q, K


def _sym_eigh(mat):
    if isinstance(mat, BlockMatrix):
        return mat.eigh()
    return np.linalg.eigh(np.asarray(mat, dtype=float))


def perron_radius(K) -> float:
    """Spectral radius of an entrywise nonnegative symmetric matrix."""
    if isinstance(K, BlockMatrix):
        w = np.linalg.eigvalsh(K.reduced())
        return float(max(abs(w.max()), abs(w.min()))) if w.size else 0.0
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n > 3000:
        w = scipy.sparse.linalg.eigsh(K, k=1, which="LA", return_eigenvectors=False)
        return float(w[0])
    w = np.linalg.eigvalsh(K)
    return float(max(abs(w.max()), abs(w.min())))


def spectral_data(Q, K, L: float, *, P1=None, d: float | None = None,
                  strict: bool = True) -> SpectralData:
    """Eigen-decompose Q and K and derive r, rho, r0, tau, Ltilde, b.

    With ``strict`` a model whose Q has no eigenvalue above max(sqrt(rho), L)
    raises ``NoInformativeEigenvalue``.
    """
    n = Q.shape[0]
    w, vecs = _sym_eigh(Q)
    order = np.argsort(-np.abs(w), kind="stable")
    w, vecs = w[order], vecs[:, order]
    top = abs(w[0]) if w.size else 0.0
    r = int(np.sum(np.abs(w) > RANK_RTOL * top)) if top > 0 else 0
    mu = w[:r].copy()
    phi = vecs[:, :r].copy()

    rho = perron_radius(K)
    if isinstance(K, BlockMatrix):
        kw = np.linalg.eigvalsh(K.reduced())
    else:
        kw = np.linalg.eigvalsh(np.asarray(K)) if n <= 3000 else None
    if kw is None:
        s = -1  # not computed at this size
    else:
        s = int(np.sum(np.abs(kw) > RANK_RTOL * rho)) if rho > 0 else 0

    threshold = max(math.sqrt(rho), L)
    r0 = int(np.sum(np.abs(mu) > threshold))
    if r0 == 0 and strict:
        raise NoInformativeEigenvalue(
            f"no eigenvalue of Q exceeds max(sqrt(rho), L) = {threshold:.6g}")
    tau = threshold / abs(mu[r0 - 1]) if r0 > 0 else None
    Ltilde = L / top if top > 0 else math.inf
    b = float(math.sqrt(n) * np.abs(phi).max()) if r > 0 else 0.0
    ones = np.ones(n)
    K1 = matvec(K, ones)
    return SpectralData(mu=mu, phi=phi, r=r, rho=rho, s=s, r0=r0, tau=tau, L=float(L),
                        Ltilde=Ltilde, b=b, n=n, Q=Q, K=K,
                        P1=None if P1 is None else np.asarray(P1, dtype=float),
                        K1=K1, d=d)


def model_spectral_data(model: GraphModel, *, strict: bool = True) -> SpectralData:
    Q, K = expectation_matrices(model)
    return spectral_data(Q, K, model.L, P1=model.degrees(), d=model.d, strict=strict)


@dataclass
class ClassReport:
    measured: dict
    conditions: dict
    warnings: list

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())


def class_check(model: GraphModel, sd: SpectralData, *, r: int | None = None,
                b: float | None = None, tau: float | None = None) -> ClassReport:
    """Measure the admissibility-class parameters and flag each condition.

    ``r``, ``b`` and ``tau`` are optional targets; when omitted the measured
    values are used, so only sparsity and the threshold gap can fail.
    """
    degrees = model.degrees()
    K1 = sd.K1 if sd.K1 is not None else matvec(expectation_matrices(model)[1], np.ones(model.n))
    r_target = sd.r if r is None else r
    measured = {
        "r": sd.r, "s": sd.s, "d": model.d, "max_P_times_n": model.n * model.max_probability(),
        "b": sd.b, "tau": sd.tau, "L": model.L, "rho": sd.rho, "r0": sd.r0,
        "min_degree": float(degrees.min()), "min_K1": float(K1.min()),
    }
    conditions = {
        "rank": sd.r <= r_target and (sd.s < 0 or sd.s <= r_target ** 2),
        "delocalized": b is None or sd.b <= b + 1e-12,
        "sparse": model.max_probability() <= model.d / model.n * (1 + 1e-12),
        "independent": True,
        "bounded": all(law.L <= model.L + 1e-15 for law in model.laws) or model.weight_scale is not None,
        "threshold": sd.tau is not None and sd.tau < 1 and (tau is None or sd.tau < tau),
    }
    warnings = []
    if degrees.min() < 1:
        warnings.append(f"min degree {degrees.min():.4g} < 1")
    if K1.min() < K1_WARN:
        warnings.append(f"min [K1]_x = {K1.min():.3g} below {K1_WARN}")
    return ClassReport(measured=measured, conditions=conditions, warnings=warnings)


def kpower_apply(K, x: np.ndarray, t: int) -> np.ndarray:
    """K^t x by repeated matvec."""
    y = np.asarray(x, dtype=float)
    for _ in range(t):
        y = matvec(K, y)
    return y
