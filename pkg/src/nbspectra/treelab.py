"""Monte-Carlo and exact checks of tree functionals, Poisson identities and local graph structure."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ._rng import stream
from .model import GraphModel, SpectralData, WeightLaw, matvec, model_spectral_data
from .sample import LabeledTree, WeightedGraph, _ChildSampler, sample_gw_forest

TV_MAX_ATOMS = 20


@dataclass
class MCEstimate:
    name: str
    mean: float
    stderr: float
    n: int
    target: float

    @property
    def z(self) -> float:
        diff = self.mean - self.target
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(self.target)) else math.inf

    def to_dict(self) -> dict:
        out = asdict(self)
        out["z"] = self.z
        return out


def _estimate(name: str, samples: np.ndarray, target: float) -> MCEstimate:
    samples = np.asarray(samples, dtype=float)
    N = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    if N > 1 and np.ptp(samples) <= 1e-12 * max(1.0, abs(float(samples.mean()))):
        se = 0.0  # deterministic up to rounding
    return MCEstimate(name=name, mean=float(samples.mean()), stderr=se, n=N, target=float(target))


# ---------------------------------------------------------------------------
# functionals on (forests of) labelled trees


def _levels(tree: LabeledTree):
    """Slices of the breadth-first node array, one per depth."""
    bounds = np.flatnonzero(np.diff(tree.depth)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [tree.size]])
    return [slice(int(a), int(b)) for a, b in zip(starts, stops)]


def path_products(tree: LabeledTree) -> np.ndarray:
    """Product of edge weights on the path from the root to every node."""
    out = np.ones(tree.size)
    for sl in _levels(tree)[1:]:
        out[sl] = out[tree.parent[sl]] * tree.weight[sl]
    return out


def _first_ancestor(tree: LabeledTree) -> np.ndarray:
    """Index of the depth-1 ancestor of every node (-1 for roots)."""
    anc = np.full(tree.size, -1, dtype=np.int64)
    levels = _levels(tree)
    if len(levels) > 1:
        sl = levels[1]
        anc[sl] = np.arange(sl.start, sl.stop)
        for sl in levels[2:]:
            anc[sl] = anc[tree.parent[sl]]
    return anc


def eval_functional(tree: LabeledTree, phi, t: int, *, _pp=None) -> np.ndarray | float:
    """f_{phi,t}: sum over depth-t nodes of the root path weight times phi at the mark.

    Returns one value per tree of the forest (a float for a single tree).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    phi = np.asarray(phi, dtype=float)
    pp = path_products(tree) if _pp is None else _pp
    sel = tree.depth == t
    vals = np.bincount(tree.tree_id[sel], weights=pp[sel] * phi[tree.mark[sel]], minlength=tree.n_trees)
    return float(vals[0]) if tree.n_trees == 1 else vals


class _RemovedEdge:
    """Evaluates f_{phi,t} on the tree with one root edge removed, for every root child."""

    def __init__(self, tree: LabeledTree):
        self.tree = tree
        self.pp = path_products(tree)
        self.anc = _first_ancestor(tree)
        self.children = np.flatnonzero(tree.depth == 1)
        self._cache = {}

    def __call__(self, phi, t: int) -> np.ndarray:
        key = (id(phi), t)
        if key in self._cache:
            return self._cache[key]
        tree = self.tree
        phi = np.asarray(phi, dtype=float)
        full = eval_functional(tree, phi, t, _pp=self.pp)
        full = np.atleast_1d(full)[tree.tree_id[self.children]]
        if t == 0:
            out = full
        else:
            sel = tree.depth == t
            contrib = np.bincount(self.anc[sel], weights=self.pp[sel] * phi[tree.mark[sel]],
                                  minlength=tree.size)[self.children]
            out = full - contrib
        self._cache[key] = out
        return out


def functional_spec(phi, t: int) -> Callable:
    return lambda ev: ev(phi, t)


def product_spec(phi, psi, t: int) -> Callable:
    return lambda ev: ev(phi, t) * ev(psi, t)


def increment_spec(phi, mu: float, t: int) -> Callable:
    return lambda ev: (ev(phi, t + 1) - mu * ev(phi, t)) ** 2


def eval_edge_operator(tree: LabeledTree, wvec, f_spec: Callable) -> np.ndarray | float:
    """sum over root children j of w(mark_j) f(tree minus edge (o, j), o), per tree.

    ``f_spec`` receives an evaluator ``ev(phi, t)`` giving f_{phi,t} on each
    edge-removed tree (one entry per root child) and returns the values of f.
    """
    ev = _RemovedEdge(tree)
    wvec = np.asarray(wvec, dtype=float)
    vals = wvec[tree.mark[ev.children]] * np.asarray(f_spec(ev), dtype=float)
    out = np.bincount(tree.tree_id[ev.children], weights=vals, minlength=tree.n_trees)
    return float(out[0]) if tree.n_trees == 1 else out


# ---------------------------------------------------------------------------
# Monte-Carlo estimators


def _chunk_seed(seed: int, tag: str, c: int) -> int:
    return int(stream(seed, tag, c).integers(0, 2 ** 63))


def _forests(model: GraphModel, root: int, depth: int, N: int, seed: int, chunk: int = 2000):
    sampler = _ChildSampler(model)
    done = 0
    c = 0
    while done < N:
        size = min(chunk, N - done)
        yield sample_gw_forest(model, root, depth, size, _chunk_seed(seed, "mc", c), sampler=sampler)
        done += size
        c += 1


def _kpow(sd: SpectralData, vec: np.ndarray, t: int) -> np.ndarray:
    for _ in range(t):
        vec = matvec(sd.K, vec)
    return vec


def second_moment_target(sd: SpectralData, x: int, i: int, j: int, t: int) -> float:
    """(mu_i mu_j)^t sum_s [K^s phi^{ij}](x) / (mu_i mu_j)^s."""
    prod = sd.mu[i] * sd.mu[j]
    vec = sd.phi[:, i] * sd.phi[:, j]
    total = 0.0
    for s in range(t + 1):
        total += vec[x] * prod ** (t - s)
        vec = matvec(sd.K, vec)
    return float(total)


def mc_tree_identities(model: GraphModel, x: int, t: int, N: int, seed: int, *,
                       i: int = 0, j: int | None = None, w=None,
                       sd: SpectralData | None = None) -> list:
    """MC estimates of the tree moment identities at mark x and their edge-operator versions."""
    sd = sd or model_spectral_data(model, strict=False)
    j = i if j is None else j
    phi_i, phi_j = sd.phi[:, i], sd.phi[:, j]
    mu_i = float(sd.mu[i])
    wvec = np.ones(model.n) if w is None else np.asarray(w, dtype=float)
    Pw = float(matvec(model.probability_matrix(), wvec)[x])
    cols = {k: [] for k in ("mean", "corr", "incr", "e_mean", "e_corr", "e_incr")}
    for forest in _forests(model, x, t + 1, N, seed):
        pp = path_products(forest)
        ft_i = eval_functional(forest, phi_i, t, _pp=pp)
        ft_j = eval_functional(forest, phi_j, t, _pp=pp)
        ft1 = eval_functional(forest, phi_i, t + 1, _pp=pp)
        cols["mean"].append(ft_i)
        cols["corr"].append(ft_i * ft_j)
        cols["incr"].append((ft1 - mu_i * ft_i) ** 2)
        cols["e_mean"].append(eval_edge_operator(forest, wvec, functional_spec(phi_i, t)))
        cols["e_corr"].append(eval_edge_operator(forest, wvec, product_spec(phi_i, phi_j, t)))
        cols["e_incr"].append(eval_edge_operator(forest, wvec, increment_spec(phi_i, mu_i, t)))
    data = {k: np.concatenate([np.atleast_1d(v) for v in vals]) for k, vals in cols.items()}
    mean_t = mu_i ** t * phi_i[x]
    corr_t = second_moment_target(sd, x, i, j, t)
    incr_t = float(_kpow(sd, phi_i * phi_i, t + 1)[x])
    return [
        _estimate(f"E f_t (t={t})", data["mean"], mean_t),
        _estimate(f"E f_t f'_t (t={t})", data["corr"], corr_t),
        _estimate(f"E (f_t+1 - mu f_t)^2 (t={t})", data["incr"], incr_t),
        _estimate(f"E d_w f_t (t={t})", data["e_mean"], Pw * mean_t),
        _estimate(f"E d_w f_t f'_t (t={t})", data["e_corr"], Pw * corr_t),
        _estimate(f"E d_w (f_t+1 - mu f_t)^2 (t={t})", data["e_incr"], Pw * incr_t),
    ]


def mc_functional_mean(model, x, i, t, N, seed, sd=None) -> MCEstimate:
    return mc_tree_identities(model, x, t, N, seed, i=i, sd=sd)[0]


def mc_increment_variance(model: GraphModel, x: int, i: int, t: int, N: int, seed: int,
                          sd: SpectralData | None = None) -> MCEstimate:
    """E (f_{phi_i,t+1} - mu_i f_{phi_i,t})^2 against [K^{t+1} phi^{ii}](x)."""
    sd = sd or model_spectral_data(model, strict=False)
    phi = sd.phi[:, i]
    mu = float(sd.mu[i])
    vals = []
    for forest in _forests(model, x, t + 1, N, seed):
        pp = path_products(forest)
        vals.append((eval_functional(forest, phi, t + 1, _pp=pp) - mu * eval_functional(forest, phi, t, _pp=pp)) ** 2)
    target = float(_kpow(sd, phi * phi, t + 1)[x])
    return _estimate(f"increment t={t}", np.concatenate(vals), target)


def mc_poisson_identities(d: float, law_x: WeightLaw, law_y: WeightLaw | None, law_z: WeightLaw,
                          N: int, seed: int, *, chunk: int = 50_000) -> list:
    """Four compound-Poisson identities with A = sum X_i, B = sum Y_i, N ~ Poi(d).

    ``law_y=None`` sets Y_i = X_i.  Targets: E A = d E X;
    E AB = d E XY + d^2 E X E Y; E sum_i Z_i sum_{j != i} X_j = d E A E Z;
    E sum_i Z_i (sum_{j != i} X_j)(sum_{k != i} Y_k) = d E AB E Z.
    """
    cols = [[], [], [], []]
    done, c = 0, 0
    while done < N:
        size = min(chunk, N - done)
        rng = stream(seed, "poisson", c)
        counts = rng.poisson(d, size)
        g = np.repeat(np.arange(size), counts)
        tot = int(counts.sum())
        X = law_x.sample(rng, tot)[0]
        Y = X if law_y is None else law_y.sample(rng, tot)[0]
        Z = law_z.sample(rng, tot)[0]

        def agg(vals):
            return np.bincount(g, weights=vals, minlength=size)

        A, B, SZ = agg(X), agg(Y), agg(Z)
        SZX, SZY, SZXY = agg(Z * X), agg(Z * Y), agg(Z * X * Y)
        cols[0].append(A)
        cols[1].append(A * B)
        cols[2].append(SZ * A - SZX)
        cols[3].append(A * B * SZ - A * SZY - B * SZX + SZXY)
        done += size
        c += 1
    ex, ez = law_x.m1, law_z.m1
    ey = ex if law_y is None else law_y.m1
    exy = law_x.m2 if law_y is None else ex * ey
    eab = d * exy + d * d * ex * ey
    targets = [d * ex, eab, d * (d * ex) * ez, d * eab * ez]
    names = ["E A", "E AB", "E sum Z_i A_-i", "E sum Z_i A_-i B_-i"]
    return [_estimate(nm, np.concatenate(col), tg) for nm, col, tg in zip(names, cols, targets)]


# ---------------------------------------------------------------------------
# exact Poissonization total variation


def exact_poissonization_tv(p) -> tuple:
    """(TV, bound) between independent Bernoulli(p_i) picks and Poissonized sampling.

    TV = 1/2 sum_S |P1(S) - P2(S)| + 1/2 (1 - e^{-lambda} prod (1 + p_i)) by
    enumeration of all subsets; bound = alpha + (e^{2 alpha} - 1)/2 with
    alpha = sum p_i^2.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size > TV_MAX_ATOMS:
        raise ValueError(f"at most {TV_MAX_ATOMS} atoms supported by exact enumeration")
    if np.any(p < 0) or np.any(p > 0.5):
        raise ValueError("p_i must lie in [0, 1/2]")
    lam = float(p.sum())
    alpha = float(np.sum(p * p))
    n = p.size
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool) if n else np.zeros((1, 0), bool)
    with np.errstate(divide="ignore"):
        logp, log1mp = np.log(p), np.log1p(-p)
    inside = np.where(bits, logp, 0.0).sum(axis=1)
    P1 = np.exp(inside + np.where(bits, 0.0, log1mp).sum(axis=1))
    P2 = np.exp(-lam + inside)
    escape = 1.0 - math.exp(-lam) * float(np.prod(1.0 + p))
    tv = 0.5 * float(np.abs(P1 - P2).sum()) + 0.5 * escape
    return tv, alpha + (math.exp(2 * alpha) - 1) / 2


# ---------------------------------------------------------------------------
# local graph structure


@dataclass
class NeighborhoodStats:
    ell: int
    sizes: np.ndarray
    edges: np.ndarray
    cycles: np.ndarray
    tangle_free: bool

    @property
    def cyclic_fraction(self) -> float:
        return float(np.mean(self.cycles > 0)) if self.cycles.size else 0.0

    def to_dict(self) -> dict:
        return {"ell": self.ell, "max_size": int(self.sizes[:, -1].max(initial=0)),
                "mean_sizes": self.sizes.mean(axis=0).tolist(),
                "max_cycles": int(self.cycles.max(initial=0)),
                "cyclic_fraction": self.cyclic_fraction, "tangle_free": self.tangle_free}


def neighborhood_stats(graph: WeightedGraph, ell: int) -> NeighborhoodStats:
    """Ball sizes per radius, cycle excess of every radius-ell ball, tangle-freeness.

    The ball is the subgraph induced by vertices within distance ell; it is
    connected, so its cycle count is |edges| - |vertices| + 1.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    n = graph.n
    A = graph.adjacency(weighted=False).astype(bool).tocsr()
    R = sp.identity(n, dtype=bool, format="csr")
    sizes = np.empty((n, ell + 1), dtype=np.int64)
    sizes[:, 0] = 1
    for t in range(1, ell + 1):
        R = (R + R @ A).tocsr()
        sizes[:, t] = np.diff(R.indptr)
    Ri = R.astype(np.int64)
    inner = (Ri @ A.astype(np.int64)).multiply(Ri)
    edges = np.asarray(inner.sum(axis=1)).ravel() // 2
    cycles = edges - sizes[:, -1] + 1
    return NeighborhoodStats(ell=ell, sizes=sizes, edges=edges, cycles=cycles,
                             tangle_free=bool(np.all(cycles <= 1)))
