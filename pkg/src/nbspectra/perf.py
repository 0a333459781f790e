"""Timing helpers for the operator kernels and the sparse eigensolver."""
from __future__ import annotations

import time

import numpy as np

from .eigs import arnoldi_topk
from .model import GraphModel, WeightLaw
from .nbop import NBOperator
from .sample import make_sbm, sample_graph


def er_model(n: int, d0: float, law: WeightLaw | None = None) -> GraphModel:
    model, _ = make_sbm(n, [1.0], [[1.0]], d0, laws=[law] if law is not None else None)
    return model


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def matvec_ladder(ms=(10_000, 20_000, 40_000), d0: float = 5.0, repeats: int = 30,
                  inner: int = 20, seed: int = 0) -> list:
    """Best-of-``repeats`` time of ``inner`` matvecs for graphs with about m undirected edges."""
    rows = []
    for m in ms:
        n = int(round(2 * m / d0))
        g = sample_graph(er_model(n, d0), seed)
        op = NBOperator.from_graph(g)
        x = np.random.default_rng(seed).standard_normal(op.shape[0])

        def run():
            for _ in range(inner):
                op.matvec(x)

        run()
        t = _best_time(run, repeats) / inner
        rows.append({"m_target": m, "m": g.m, "seconds": t, "per_edge": t / g.m})
    for prev, cur in zip(rows, rows[1:]):
        cur["time_ratio"] = cur["seconds"] / prev["seconds"]
        cur["normalized_ratio"] = cur["per_edge"] / prev["per_edge"]
    return rows


def arnoldi_bench(n: int = 100_000, d0: float = 5.0, k: int = 2, seed: int = 0) -> dict:
    g = sample_graph(er_model(n, d0), seed)
    op = NBOperator.from_graph(g)
    t0 = time.perf_counter()
    rep = arnoldi_topk(op, k, seed=seed)
    dt = time.perf_counter() - t0
    return {"n": n, "m": g.m, "seconds": dt, "eigenvalues": rep.eigenvalues.tolist(),
            "residuals": rep.residuals.tolist(), "converged": bool(rep.all_converged),
            "iterations": rep.iterations, "matvecs": rep.matvecs}
