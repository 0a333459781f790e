"""Samplers: inhomogeneous weighted graphs, SBM instances, reveal masks, Galton-Watson trees."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ._rng import stream
from .model import GraphModel, WeightLaw


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Simple undirected weighted graph.

    Edges are stored once with ``u < v`` and sorted lexicographically.
    ``atoms`` optionally records which atom of a discrete law produced
    each weight (used to carry edge labels).
    """

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    atoms: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n: int, edges, weights=None, *, atoms=None) -> "WeightedGraph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        a, b = edges[:, 0], edges[:, 1]
        if edges.size and (a.min() < 0 or b.min() < 0 or max(a.max(), b.max()) >= n):
            raise ValueError("vertex id out of range")
        if np.any(a == b):
            raise ValueError("self-loops are not allowed")
        u, v = np.minimum(a, b), np.maximum(a, b)
        w = np.ones(u.size) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if w.size != u.size:
            raise ValueError("one weight per edge required")
        order = np.lexsort((v, u))
        u, v, w = u[order], v[order], w[order]
        if u.size > 1 and np.any((u[1:] == u[:-1]) & (v[1:] == v[:-1])):
            raise ValueError("duplicate undirected edge")
        if atoms is not None:
            atoms = np.asarray(atoms, dtype=np.int64)[order]
        return cls(int(n), u, v, w, atoms)

    @property
    def m(self) -> int:
        return int(self.u.size)

    @property
    def edges(self) -> list:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    def degrees(self) -> np.ndarray:
        return (np.bincount(self.u, minlength=self.n) + np.bincount(self.v, minlength=self.n)).astype(np.int64)

    def adjacency(self, weighted: bool = True) -> sp.csr_matrix:
        vals = self.w if weighted else np.ones(self.m)
        a = sp.coo_matrix((np.concatenate([vals, vals]),
                           (np.concatenate([self.u, self.v]), np.concatenate([self.v, self.u]))),
                          shape=(self.n, self.n))
        return a.tocsr()

    def incidence_lists(self) -> list:
        adj = self.adjacency()
        return [adj.indices[adj.indptr[i]:adj.indptr[i + 1]].tolist() for i in range(self.n)]

    @property
    def is_unweighted(self) -> bool:
        return bool(np.all(self.w == 1.0))


@dataclass(frozen=True, eq=False)
class CommunityInstance:
    graph: WeightedGraph
    theta: np.ndarray
    labels: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class LabeledTree:
    """Rooted labelled tree, or a forest of them when ``n_trees > 1``.

    Nodes are stored breadth-first; roots have ``parent == -1`` and weight 0.
    """

    parent: np.ndarray
    depth: np.ndarray
    mark: np.ndarray
    weight: np.ndarray
    tree_id: np.ndarray
    n_trees: int = 1

    @property
    def size(self) -> int:
        return int(self.parent.size)


# ---------------------------------------------------------------------------
# graphs


def _random_subset(rng: np.random.Generator, N: int, count: int) -> np.ndarray:
    """Uniform random subset of {0..N-1} of a given size, sorted."""
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    if count * 3 >= N:
        return np.sort(rng.permutation(N)[:count]).astype(np.int64)
    chosen = np.unique(rng.integers(0, N, size=count))
    while chosen.size < count:
        extra = rng.integers(0, N, size=count - chosen.size)
        chosen = np.unique(np.concatenate([chosen, extra]))
    # the batch schedule depends only on how many distinct values were seen,
    # so by symmetry the final set is uniform among subsets of this size
    return chosen.astype(np.int64)


def _triangle_pairs(q: np.ndarray, s: int):
    """Map linear indices over {(r, c): 0 <= r < c < s} (row-major) to (r, c)."""
    q = q.astype(np.float64)
    r = np.floor(s - 0.5 - np.sqrt((s - 0.5) ** 2 - 2.0 * q)).astype(np.int64)
    # guard against float rounding at row boundaries
    start = r * s - r * (r + 1) // 2
    low = q < start
    r[low] -= 1
    start = r * s - r * (r + 1) // 2
    high = q >= start + (s - 1 - r)
    r[high] += 1
    start = r * s - r * (r + 1) // 2
    c = (q.astype(np.int64) - start) + r + 1
    return r, c


def _draw_weights(model: GraphModel, i: np.ndarray, j: np.ndarray, u: np.ndarray):
    idx = model.pair_law(i, j)
    w = np.zeros(i.size)
    atoms = np.full(i.size, -1, dtype=np.int64)
    for li in np.unique(idx):
        sel = idx == li
        vals, at = model.laws[li].from_uniform(u[sel])
        w[sel] = vals
        if at is not None:
            atoms[sel] = at
    w = w * model.pair_scale(i, j)
    return w, atoms


def sample_graph(model: GraphModel, seed: int) -> WeightedGraph:
    """Sample G(P, W): every pair independently, one weight draw per edge."""
    n = model.n
    us, vs, ws, ats = [], [], [], []
    if model.is_block:
        k = model.block_P.shape[0]
        members = [np.flatnonzero(model.theta == a) for a in range(k)]
        for a in range(k):
            for b in range(a, k):
                p = model.block_P[a, b]
                A, B = members[a], members[b]
                N = A.size * (A.size - 1) // 2 if a == b else A.size * B.size
                if p <= 0 or N == 0:
                    continue
                rng = stream(seed, "edges", a, b)
                count = int(rng.binomial(N, p)) if p < 1 else N
                q = _random_subset(rng, N, count)
                if a == b:
                    r, c = _triangle_pairs(q, A.size)
                    i, j = A[r], A[c]
                else:
                    i, j = A[q // B.size], B[q % B.size]
                uw = stream(seed, "weights", a, b).random(q.size)
                w, at = _draw_weights(model, i, j, uw)
                us.append(i), vs.append(j), ws.append(w), ats.append(at)
    else:
        P = model.P
        for i in range(n - 1):
            row = P[i, i + 1:]
            if not np.any(row > 0):
                continue
            hit = np.flatnonzero(stream(seed, "edges", i).random(n - i - 1) < row) + i + 1
            if hit.size == 0:
                continue
            ii = np.full(hit.size, i, dtype=np.int64)
            w, at = _draw_weights(model, ii, hit, stream(seed, "weights", i).random(hit.size))
            us.append(ii), vs.append(hit), ws.append(w), ats.append(at)
    if not us:
        return WeightedGraph.from_edges(n, np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    a = np.minimum(u, v)
    b = np.maximum(u, v)
    atoms = np.concatenate(ats)
    return WeightedGraph.from_edges(n, np.column_stack([a, b]), np.concatenate(ws),
                                    atoms=atoms if np.any(atoms >= 0) else None)


def block_sizes(n: int, pi: Sequence[float]) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    sizes = np.floor(pi * n).astype(np.int64)
    sizes[0] += n - sizes.sum()
    return sizes


def quota_theta(n: int, pi: Sequence[float]) -> np.ndarray:
    """Deterministic labels: floor(pi_k n) vertices per block, remainder to block 0."""
    return np.repeat(np.arange(len(pi)), block_sizes(n, pi))


def make_sbm(n: int, pi: Sequence[float], M0, alpha: float, *,
             laws: Sequence[WeightLaw] | None = None, law_index=None):
    """Stochastic block model with P = Theta (alpha/n M0) Theta^T.

    Returns ``(model, theta)``.  ``model.meta['normalization']`` holds the top
    modulus of diag(pi) M0, i.e. the value alpha must divide to make mu_1 = 1.
    """
    pi = np.asarray(pi, dtype=float)
    M0 = np.asarray(M0, dtype=float)
    if np.any(pi <= 0) or abs(pi.sum() - 1) > 1e-12:
        raise ValueError("pi must be a positive probability vector")
    if M0.shape != (pi.size, pi.size) or not np.allclose(M0, M0.T):
        raise ValueError("M0 must be a symmetric k x k matrix")
    if alpha * M0.max() > n:
        raise ValueError("probability overflow: alpha * max(M0) > n")
    theta = quota_theta(n, pi)
    kwargs = {}
    if laws is not None:
        kwargs["laws"] = laws
    model = GraphModel(n, theta=theta, block_P=alpha / n * M0, law_index=law_index, **kwargs)
    model.meta.update(family="sbm", alpha=float(alpha), pi=pi.tolist(), M0=M0.tolist(),
                      normalization=float(np.abs(np.linalg.eigvals(np.diag(pi) @ M0)).max()))
    return model, theta


@dataclass(frozen=True, eq=False)
class LabeledSBM:
    model: GraphModel
    theta: np.ndarray
    labels: np.ndarray
    law_in: np.ndarray
    law_out: np.ndarray
    weights: np.ndarray

    def sample(self, seed: int) -> CommunityInstance:
        g = sample_graph(self.model, seed)
        labels = None
        if g.atoms is not None:
            labels = self.labels[g.atoms]
        elif g.m:
            # single-atom laws are stored as constants; every edge has that label
            labels = np.full(g.m, self.labels[0])
        return CommunityInstance(graph=g, theta=self.theta, labels=labels)


def label_space(law_in: WeightLaw, law_out: WeightLaw):
    """Common label list and the two probability vectors on it."""
    labels = sorted(set(law_in.values) | set(law_out.values))
    p = np.zeros(len(labels))
    q = np.zeros(len(labels))
    for vals, probs, target in ((law_in.values, law_in.probs or (1.0,), p),
                                (law_out.values, law_out.probs or (1.0,), q)):
        for v, pr in zip(vals, probs):
            target[labels.index(v)] += pr
    return np.asarray(labels, dtype=float), p, q


def _as_weight_function(w, labels):
    if callable(w):
        return np.array([float(w(x)) for x in labels])
    if isinstance(w, Mapping):
        return np.array([float(w[x]) for x in labels])
    arr = np.asarray(w, dtype=float)
    if arr.shape != (len(labels),):
        raise ValueError("weight table must have one entry per label")
    return arr


def make_labeled_sbm(n: int, a: float, b: float, law_in: WeightLaw, law_out: WeightLaw,
                     w: Callable | Mapping | Sequence = lambda x: 1.0) -> LabeledSBM:
    """Two symmetric communities; within/across edge labels from law_in/law_out."""
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    labels, p, q = label_space(law_in, law_out)
    wt = _as_weight_function(w, labels)
    w_in = WeightLaw.discrete(wt, p / p.sum())
    w_out = WeightLaw.discrete(wt, q / q.sum())
    theta = quota_theta(n, (0.5, 0.5))
    block_P = np.array([[a, b], [b, a]], dtype=float) / n
    if block_P.max() > 1:
        raise ValueError("probability overflow: max(a, b) > n")
    model = GraphModel(n, theta=theta, block_P=block_P, laws=(w_in, w_out),
                       law_index=np.array([[0, 1], [1, 0]]))
    model.meta.update(family="labeled_sbm", a=float(a), b=float(b))
    return LabeledSBM(model=model, theta=theta, labels=labels, law_in=p, law_out=q, weights=wt)


def completion_dims(n: int, d: float):
    """(d_tilde, reveal probability) with d_tilde = 2d - d/n."""
    d_tilde = 2.0 * d - d / n
    return d_tilde, min(1.0, d_tilde / n)


def completion_model(M, d: float) -> GraphModel:
    """Weighted ER model whose samples are the scaled reveal masks of M."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or not np.allclose(M, M.T):
        raise ValueError("M must be symmetric n x n")
    d_tilde, p = completion_dims(n, d)
    scale = M / p if p > 0 else np.zeros_like(M)
    model = GraphModel(n, P=np.full((n, n), p), weight_scale=scale, d=max(d_tilde, 1e-300))
    model.meta.update(family="completion", d=float(d), d_tilde=d_tilde)
    return model


def reveal_mask(M, d: float, seed: int) -> WeightedGraph:
    """Reveal each unordered pair once with probability d_tilde/n, weight (n/d_tilde) M_ij."""
    return sample_graph(completion_model(M, d), seed)


# ---------------------------------------------------------------------------
# Galton-Watson trees


class _ChildSampler:
    """Draws child marks from pi_x = P[x, :] / d_x."""

    def __init__(self, model: GraphModel):
        self.model = model
        self.deg = model.degrees()
        if model.is_block:
            k = model.block_P.shape[0]
            self.members = [np.flatnonzero(model.theta == a) for a in range(k)]
            counts = np.array([m.size for m in self.members], dtype=float)
            wts = model.block_P * counts[None, :]
            tot = wts.sum(axis=1, keepdims=True)
            self.block_cdf = np.cumsum(np.divide(wts, tot, out=np.zeros_like(wts), where=tot > 0), axis=1)
        else:
            P = model.P
            rows = P.sum(axis=1, keepdims=True)
            cdf = np.cumsum(np.divide(P, rows, out=np.zeros_like(P), where=rows > 0), axis=1)
            cdf[:, -1] = 1.0
            self.flat = (np.arange(model.n)[:, None] + cdf).ravel()

    def draw(self, rng: np.random.Generator, parents: np.ndarray) -> np.ndarray:
        u = rng.random(parents.size)
        if self.model.is_block:
            pb = self.model.theta[parents]
            cdf = self.block_cdf[pb]
            cb = np.minimum((u[:, None] >= cdf).sum(axis=1), cdf.shape[1] - 1)
            out = np.empty(parents.size, dtype=np.int64)
            v = rng.random(parents.size)
            for blk in np.unique(cb):
                sel = cb == blk
                mem = self.members[blk]
                out[sel] = mem[np.minimum((v[sel] * mem.size).astype(np.int64), mem.size - 1)]
            return out
        n = self.model.n
        pos = np.searchsorted(self.flat, parents + u, side="right")
        return np.clip(pos - parents * n, 0, n - 1)


def sample_gw_forest(model: GraphModel, root: int, depth: int, n_trees: int, seed: int,
                     *, sampler: _ChildSampler | None = None) -> LabeledTree:
    """Sample ``n_trees`` independent trees rooted at mark ``root``, level by level."""
    sampler = sampler or _ChildSampler(model)
    deg = sampler.deg
    if deg[root] <= 0:
        raise ValueError("root has zero expected degree")
    rng = stream(seed, "gw", root, depth, n_trees)
    cap = int(10 * model.d + 50)
    parent = [np.full(n_trees, -1, dtype=np.int64)]
    marks = [np.full(n_trees, root, dtype=np.int64)]
    weights = [np.zeros(n_trees)]
    tids = [np.arange(n_trees, dtype=np.int64)]
    depths = [np.zeros(n_trees, dtype=np.int64)]
    offset = 0
    for level in range(1, depth + 1):
        pm = marks[-1]
        counts = np.minimum(rng.poisson(deg[pm]), cap)
        par_local = np.repeat(np.arange(pm.size), counts)
        pmarks = pm[par_local]
        cm = sampler.draw(rng, pmarks)
        w, _ = _draw_weights(model, pmarks, cm, rng.random(cm.size))
        parent.append(par_local + offset)
        offset += pm.size
        marks.append(cm)
        weights.append(w)
        tids.append(tids[-1][par_local])
        depths.append(np.full(cm.size, level, dtype=np.int64))
    return LabeledTree(parent=np.concatenate(parent), depth=np.concatenate(depths),
                       mark=np.concatenate(marks), weight=np.concatenate(weights),
                       tree_id=np.concatenate(tids), n_trees=n_trees)


def sample_gw_tree(model: GraphModel, root: int, depth: int, seed: int) -> LabeledTree:
    """One Galton-Watson tree with Poisson(d_x) offspring and marks from pi_x."""
    return sample_gw_forest(model, root, depth, 1, seed)


def delocalized_low_rank(n: int, mu: Sequence[float], seed: int = 0):
    """M = sum_k mu_k phi_k phi_k^T with phi_1 = 1/sqrt(n) and further sign patterns.

    The extra eigenvectors are random +-1/sqrt(n) vectors orthogonalized
    against the previous ones, so every |phi_k(i)| stays of order 1/sqrt(n).
    Returns (M, phi).
    """
    mu = np.asarray(mu, dtype=float)
    rng = stream(seed, "low-rank", n)
    cols = [np.ones(n) / math.sqrt(n)]
    for _ in range(1, mu.size):
        v = rng.choice([-1.0, 1.0], n) / math.sqrt(n)
        for c in cols:
            v -= c * (c @ v)
        cols.append(v / np.linalg.norm(v))
    phi = np.column_stack(cols)
    return (phi * mu[None, :]) @ phi.T, phi
