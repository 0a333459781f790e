"""Command-line harness: generate, spectrum, predict, compare and the experiment pipelines."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from . import io as fio
from .detect import complete_matrix, embed_and_cluster, optimal_weight, overlap
from .eigs import (DENSE_MAX, adjacency_spectrum, annotate, arnoldi_topk, bulk_radius_estimate,
                   default_threshold, dense_spectrum, split_outliers)
from .model import GraphModel, WeightLaw, model_spectral_data
from .nbop import NBOperator
from .perturb import certificate_sweep
from .sample import (completion_model, delocalized_low_rank, make_labeled_sbm, make_sbm,
                     sample_graph)
from .theory import labeled_tau_beta, predict_B_spectrum, predict_bbp
from .treelab import exact_poissonization_tv, mc_poisson_identities, mc_tree_identities


# ---------------------------------------------------------------------------
# configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LawSpec(_Strict):
    kind: Literal["constant", "discrete", "uniform", "rademacher"] = "constant"
    value: float = 1.0
    values: list[float] | None = None
    probs: list[float] | None = None
    lo: float | None = None
    hi: float | None = None

    def build(self) -> WeightLaw:
        if self.kind == "constant":
            return WeightLaw.constant(self.value)
        if self.kind == "rademacher":
            return WeightLaw.rademacher()
        if self.kind == "discrete":
            if self.values is None or self.probs is None:
                raise ValueError("discrete law needs values and probs")
            return WeightLaw.discrete(self.values, self.probs)
        if self.lo is None or self.hi is None:
            raise ValueError("uniform law needs lo and hi")
        return WeightLaw.uniform(self.lo, self.hi)


class ModelSpec(_Strict):
    family: Literal["er", "sbm", "labeled_sbm", "completion"] = "er"
    n: int = Field(1000, ge=2)
    d0: float = 4.0
    law: LawSpec = LawSpec()
    # stochastic block model
    pi: list[float] | None = None
    M0: list[list[float]] | None = None
    alpha: float | None = None
    a: float | None = None
    b: float | None = None
    # labelled SBM
    law_in: LawSpec | None = None
    law_out: LawSpec | None = None
    weights: Literal["one", "optimal"] | list[float] = "optimal"
    # completion
    mu: list[float] | None = None
    d: float | None = None
    matrix_seed: int = 0

    def sbm_parts(self):
        if self.a is not None and self.b is not None:
            alpha = (self.a + self.b) / 2
            return [0.5, 0.5], [[self.a / alpha, self.b / alpha], [self.b / alpha, self.a / alpha]], alpha
        if self.pi is None or self.M0 is None or self.alpha is None:
            raise ValueError("sbm needs (a, b) or (pi, M0, alpha)")
        return self.pi, self.M0, self.alpha

    def build(self):
        """(GraphModel, ground-truth communities or None, extras dict)."""
        if self.family == "er":
            model, _ = make_sbm(self.n, [1.0], [[1.0]], self.d0, laws=[self.law.build()])
            model.meta["family"] = "er"
            return model, None, {}
        if self.family == "sbm":
            pi, M0, alpha = self.sbm_parts()
            model, theta = make_sbm(self.n, pi, M0, alpha, laws=[self.law.build()])
            return model, theta, {"alpha": alpha}
        if self.family == "labeled_sbm":
            if self.a is None or self.b is None or self.law_in is None or self.law_out is None:
                raise ValueError("labeled_sbm needs a, b, law_in, law_out")
            lin, lout = self.law_in.build(), self.law_out.build()
            if self.weights == "optimal":
                w = optimal_weight(self.a, self.b, lin, lout).w
            elif self.weights == "one":
                w = lambda x: 1.0
            else:
                w = self.weights
            lab = make_labeled_sbm(self.n, self.a, self.b, lin, lout, w)
            return lab.model, lab.theta, {"labeled": lab, "weights": lab.weights.tolist(),
                                          "labels": lab.labels.tolist()}
        if self.mu is None or self.d is None:
            raise ValueError("completion needs mu and d")
        M, phi = delocalized_low_rank(self.n, self.mu, self.matrix_seed)
        model = completion_model(M, self.d)
        return model, None, {"M": M, "phi": phi}


class SolverSpec(_Strict):
    k: int = Field(6, ge=1)
    method: Literal["auto", "dense", "arnoldi"] = "auto"
    tol: float = 1e-8
    max_iter: int = 300
    restart_dim: int | None = None
    margin: float = 0.1


class Tolerances(_Strict):
    outlier_rel: float = 0.10
    first_outlier_rel: float = 0.05
    bulk_factor: float = 1.2
    overlap_min: float = 0.75
    vector_overlap_min: float = 0.8
    z_max: float = 4.0


class ExperimentConfig(_Strict):
    command: Literal["sbm", "labeled-sbm", "complete", "bbp", "certify", "treelab", "spectrum"] = "sbm"
    model: ModelSpec = ModelSpec()
    seeds: list[int] = [0]
    solver: SolverSpec = SolverSpec()
    tolerances: Tolerances = Tolerances()
    checks: list[str] = []
    output_dir: str = "nbspectra_out"
    trials: int = 500
    tree_t_max: int = 4
    tree_samples: int = 20_000
    workers: int | None = None
    c_constant: float = 1.0


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.model_dump(mode="json", exclude={"output_dir", "workers"}), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def n_workers(requested: int | None) -> int:
    if requested:
        return max(1, requested)
    env = os.environ.get("NBSPECTRA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# per-seed pipelines (module level so they can run in worker processes)


def _solve(op: NBOperator, solver: SolverSpec, seed: int):
    method = solver.method
    if method == "auto":
        method = "dense" if op.shape[0] <= 1000 else "arnoldi"
    if method == "dense":
        rep = dense_spectrum(op, tol=solver.tol)
        return rep.subset(np.arange(min(max(solver.k, 1), len(rep))))
    return arnoldi_topk(op, solver.k, tol=solver.tol, max_iter=solver.max_iter,
                        restart_dim=solver.restart_dim, seed=seed)


def seed_sbm(cfg: ExperimentConfig, seed: int) -> dict:
    model, theta, extra = cfg.model.build()
    sd = model_spectral_data(model)
    alpha = extra.get("alpha", abs(sd.mu[0]))
    pred = predict_B_spectrum(sd, model.n, sbm_alpha=alpha, c=cfg.c_constant)
    g = sample_graph(model, seed)
    op = NBOperator.from_graph(g)
    solver = cfg.solver.model_copy(update={"k": max(cfg.solver.k, sd.r0 + 2)})
    rep = _solve(op, solver, seed)
    thr = default_threshold(sd, cfg.solver.margin)
    rep = annotate(rep, thr)
    outl, bulk = split_outliers(rep, thr)
    tol = cfg.tolerances
    lam = rep.eigenvalues
    row = {"seed": seed, "m": g.m, "eigenvalues": [[z.real, z.imag] for z in lam],
           "residuals": rep.residuals.tolist(), "predicted": pred.outliers,
           "bulk_radius": pred.bulk_radius, "predicted_overlap": pred.sbm_overlap}
    checks = {}
    r0 = sd.r0
    for i, mu in enumerate(pred.outliers):
        got = lam[i].real if i < lam.size else float("nan")
        rel = abs(got - mu) / abs(mu)
        row[f"lambda{i + 1}"] = got
        row[f"rel_gap{i + 1}"] = rel
        lim = tol.first_outlier_rel if i == 0 else tol.outlier_rel
        checks[f"lambda{i + 1}"] = bool(rel <= lim)
    # everything past the informative outliers must stay within bulk_factor * sqrt(rho) v L
    extra_idx = np.arange(r0, lam.size)
    rest_solver = float(np.abs(lam[extra_idx]).max()) if extra_idx.size else 0.0
    rest_power = bulk_radius_estimate(op, rep.subset(np.arange(min(r0, lam.size))), seed=seed)
    row["rest_max_solver"] = rest_solver
    row["rest_power_estimate"] = rest_power
    limit = tol.bulk_factor * pred.bulk_radius
    checks["bulk"] = bool(rest_solver <= limit and rest_power <= limit)
    # eigenvector overlap with T phi_i / ||T phi_i||
    overlaps = []
    if rep.eigenvectors is not None:
        for i in range(min(r0, lam.size)):
            chi = op.T(sd.phi[:, i])
            xi = rep.eigenvectors[:, i]
            overlaps.append(float(abs(np.vdot(xi, chi)) / (np.linalg.norm(xi) * np.linalg.norm(chi))))
    row["vector_overlap"] = overlaps
    if len(overlaps) >= 2:
        checks["vector_overlap2"] = bool(overlaps[1] >= tol.overlap_min)
    if theta is not None and len(outl) >= 1:
        k = int(theta.max()) + 1
        try:
            assign = embed_and_cluster(rep, op, k, seed=seed)
            row["cluster_overlap"] = overlap(assign, theta, k)
        except Exception as exc:  # clustering is reported, never a hard check
            row["cluster_overlap"] = None
            row["cluster_error"] = str(exc)
    row["checks"] = checks
    row["passed"] = all(checks.values())
    return row


def seed_labeled(cfg: ExperimentConfig, seed: int) -> dict:
    spec = cfg.model
    model, theta, extra = spec.build()
    lab = extra["labeled"]
    rep_tb = labeled_tau_beta(spec.a, spec.b, spec.law_in.build(), spec.law_out.build(), lab.weights)
    inst = lab.sample(seed)
    op = NBOperator.from_graph(inst.graph)
    sd = model_spectral_data(model, strict=False)
    rep = _solve(op, cfg.solver.model_copy(update={"k": max(cfg.solver.k, 4)}), seed)
    rep = annotate(rep, default_threshold(sd, cfg.solver.margin))
    row = {"seed": seed, "tau": rep_tb.tau, "beta": rep_tb.beta, "snr": rep_tb.snr,
           "weights": extra["weights"], "labels": extra["labels"],
           "eigenvalues": [[z.real, z.imag] for z in rep.eigenvalues], "mu": sd.mu.tolist()}
    try:
        assign = embed_and_cluster(rep, op, 2, seed=seed)
        row["cluster_overlap"] = overlap(assign, theta, 2)
    except Exception as exc:
        row["cluster_overlap"] = None
        row["cluster_error"] = str(exc)
    row["checks"] = {}
    row["passed"] = True
    return row


def seed_complete(cfg: ExperimentConfig, seed: int) -> dict:
    model, _, extra = cfg.model.build()
    phi = extra["phi"]
    mu = np.asarray(cfg.model.mu, dtype=float)
    g = sample_graph(model, seed)
    est = complete_matrix(g, mu.size, margin=cfg.solver.margin, tol=cfg.solver.tol, seed=seed)
    vals = est.eigenvalues.real
    tol = cfg.tolerances
    checks = {"outlier_count": bool(vals.size >= mu.size)}
    row = {"seed": seed, "m": g.m, "estimates": vals.tolist(), "mu": mu.tolist(),
           "threshold": est.threshold, "rho_hat": est.rho_hat, "L_hat": est.L_hat}
    for i, target in enumerate(mu):
        got = vals[i] if i < vals.size else float("nan")
        row[f"rel_gap{i + 1}"] = abs(got - target) / abs(target)
        checks[f"mu{i + 1}"] = bool(row[f"rel_gap{i + 1}"] <= tol.outlier_rel)
    ov = float(abs(est.eigenvectors[:, 0] @ phi[:, 0]))
    row["vector_overlap1"] = ov
    checks["vector_overlap1"] = bool(ov >= tol.vector_overlap_min)
    row["checks"] = checks
    row["passed"] = all(checks.values())
    return row


def seed_bbp(cfg: ExperimentConfig, seed: int) -> dict:
    model, _, _ = cfg.model.build()
    sd = model_spectral_data(model)
    nu, ov_pred, _ = predict_bbp(sd, 0)
    g = sample_graph(model, seed)
    vals, vecs = adjacency_spectrum(g, 1)
    top = float(vals[0])
    ov = float(abs(vecs[:, 0] @ sd.phi[:, 0]))
    checks = {"nu1": bool(abs(top - nu) / nu <= 0.02), "overlap": bool(abs(ov - ov_pred) <= 0.05)}
    return {"seed": seed, "lambda1_A": top, "nu1": nu, "rel_gap": abs(top - nu) / nu,
            "overlap": ov, "predicted_overlap": ov_pred, "checks": checks,
            "passed": all(checks.values())}


PIPELINES = {"sbm": seed_sbm, "labeled-sbm": seed_labeled, "complete": seed_complete, "bbp": seed_bbp}


def _dispatch(args):
    name, cfg_json, seed = args
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    t0 = time.perf_counter()
    row = PIPELINES[name](cfg, seed)
    return row, time.perf_counter() - t0


def run(cfg: ExperimentConfig) -> tuple:
    """Execute the configured pipeline; returns (manifest dict, all hard checks passed)."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": config_hash(cfg), "version": __version__, "command": cfg.command,
                "outputs": {}, "timings": {}}
    ok = True
    t_start = time.perf_counter()
    if cfg.command in PIPELINES:
        jobs = [(cfg.command, cfg.model_dump_json(), s) for s in cfg.seeds]
        workers = min(n_workers(cfg.workers), len(jobs))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_dispatch, jobs))
        else:
            results = [_dispatch(j) for j in jobs]
        rows = []
        for (row, dt), seed in zip(results, cfg.seeds):
            path = fio.write_json(out / f"{cfg.command}_seed{seed}.json", row)
            manifest["outputs"][str(seed)] = path.name
            manifest["timings"][str(seed)] = dt
            rows.append(row)
            ok &= bool(row["passed"])
        summary = _summarize(rows)
        fio.write_json(out / f"{cfg.command}_summary.json", summary)
        manifest["outputs"]["summary"] = f"{cfg.command}_summary.json"
    elif cfg.command == "certify":
        res = certificate_sweep(cfg.trials, cfg.seeds[0] if cfg.seeds else 0)
        fio.write_json(out / "certify.json", res)
        manifest["outputs"]["certify"] = "certify.json"
        ok = res["total_violations"] == 0
    elif cfg.command == "treelab":
        records = treelab_records(cfg)
        fio.write_jsonl(out / "treelab.jsonl", records)
        manifest["outputs"]["treelab"] = "treelab.jsonl"
        ok = all(abs(r["z"]) <= cfg.tolerances.z_max for r in records if "z" in r)
    else:
        raise ValueError(f"command {cfg.command!r} is not a run pipeline")
    manifest["timings"]["total"] = time.perf_counter() - t_start
    manifest["passed"] = bool(ok)
    fio.write_json(out / "manifest.json", manifest)
    return manifest, bool(ok)


def _summarize(rows: list) -> dict:
    keys = sorted({k for r in rows for k, v in r.items() if isinstance(v, (int, float)) and k != "seed"})
    summary = {"n_seeds": len(rows), "passed": all(r["passed"] for r in rows)}
    for k in keys:
        vals = [r[k] for r in rows if isinstance(r.get(k), (int, float)) and r.get(k) is not None]
        if vals:
            summary[k] = {"mean": float(np.mean(vals)), "min": float(np.min(vals)), "max": float(np.max(vals))}
    summary["checks"] = {}
    for r in rows:
        for name, flag in r.get("checks", {}).items():
            summary["checks"].setdefault(name, []).append(bool(flag))
    return summary


def treelab_records(cfg: ExperimentConfig) -> list:
    model, _, _ = cfg.model.build()
    sd = model_spectral_data(model, strict=False)
    seed = cfg.seeds[0] if cfg.seeds else 0
    records = []
    for t in range(cfg.tree_t_max + 1):
        for est in mc_tree_identities(model, 0, t, cfg.tree_samples, seed + t, sd=sd):
            records.append({"kind": "tree", "t": t, **est.to_dict()})
    for est in mc_poisson_identities(3.0, WeightLaw.uniform(-1, 2), None, WeightLaw.discrete([1, 3], [0.5, 0.5]),
                                     100_000, seed):
        records.append({"kind": "poisson", **est.to_dict()})
    tv, bound = exact_poissonization_tv([0.3])
    records.append({"kind": "tv", "p": [0.3], "tv": tv, "bound": bound})
    return records


# ---------------------------------------------------------------------------
# compare


def compare(prediction: dict, spectrum_path, *, tol: Tolerances | None = None) -> dict:
    """Per-outlier relative gaps and bulk exceedances of a spectrum file against a prediction."""
    tol = tol or Tolerances()
    vals, res, outl, meta = fio.read_spectrum(spectrum_path)
    if "n" in meta and int(meta["n"]) != int(prediction["n"]):
        raise ValueError(f"n mismatch: prediction {prediction['n']} vs spectrum {meta['n']}")
    if meta.get("model") and prediction.get("model") and meta["model"] != prediction["model"]:
        raise ValueError("model fingerprint mismatch between prediction and spectrum")
    operator = meta.get("operator", "B")
    if operator == "adjacency":
        targets = [b["nu"] for b in prediction.get("bbp", []) if b]
        bulk_limit = None
    else:
        targets = list(prediction["outliers"])
        bulk_limit = tol.bulk_factor * prediction["bulk_radius"]
    order = np.argsort(-np.abs(vals), kind="stable")
    vals = vals[order]
    rows, ok = [], True
    for i, target in enumerate(targets):
        if i >= vals.size:
            rows.append({"i": i, "predicted": target, "observed": None, "rel_gap": None, "pass": False})
            ok = False
            continue
        got = vals[i]
        rel = abs(got - target) / abs(target) if target != 0 else abs(got)
        passed = rel <= tol.outlier_rel
        ok &= passed
        rows.append({"i": i, "predicted": target, "observed": [got.real, got.imag], "rel_gap": rel, "pass": passed})
    exceed = 0
    if bulk_limit is not None:
        exceed = int(np.sum(np.abs(vals[len(targets):]) > bulk_limit))
        ok &= exceed == 0
    absent = [{"mu": a, "status": "predicted-absent", "pass": True} for a in prediction.get("absent", [])]
    return {"operator": operator, "outliers": rows, "bulk_limit": bulk_limit, "bulk_exceedances": exceed,
            "absent": absent, "passed": bool(ok)}


def prediction_dict(spec: ModelSpec, c: float = 1.0) -> dict:
    model, _, extra = spec.build()
    sd = model_spectral_data(model, strict=False)
    out = {"n": model.n, "model": model.fingerprint(), "family": spec.family,
           "mu": sd.mu.tolist(), "rho": sd.rho, "L": sd.L, "r0": sd.r0}
    absent = [float(m) for m in sd.mu[sd.r0:] if abs(m) > 0]
    out["absent"] = absent
    if sd.r0 == 0:
        out.update({"outliers": [], "bulk_radius": sd.threshold, "bbp": []})
        return out
    pred = predict_B_spectrum(sd, model.n, c=c, sbm_alpha=extra.get("alpha"))
    out.update(pred.to_dict())
    out["model"] = model.fingerprint()
    return out


# ---------------------------------------------------------------------------
# argument parsing


def _load_model_spec(args) -> ModelSpec:
    if getattr(args, "model", None):
        data = json.loads(Path(args.model).read_text())
        data.pop("schema_version", None)
        return ModelSpec.model_validate(data)
    fields = {k: getattr(args, k) for k in ("family", "n", "d0", "a", "b", "alpha") if getattr(args, k, None) is not None}
    if getattr(args, "mu", None):
        fields["mu"] = args.mu
    if getattr(args, "d", None) is not None:
        fields["d"] = args.d
    return ModelSpec.model_validate(fields)


def _add_model_flags(p):
    p.add_argument("--model", help="model spec JSON file")
    p.add_argument("--family", choices=["er", "sbm", "labeled_sbm", "completion"])
    p.add_argument("--n", type=int)
    p.add_argument("--d0", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu", type=float, nargs="+")
    p.add_argument("--d", type=float)


def cmd_generate(args) -> int:
    spec = _load_model_spec(args)
    model, theta, _ = spec.build()
    g = sample_graph(model, args.seed)
    fio.write_graph(args.out, g, {"model": model.fingerprint(), "family": spec.family, "seed": args.seed})
    if theta is not None and args.truth:
        fio.atomic_write(args.truth, "vertex,community\n" + "".join(f"{i + 1},{c}\n" for i, c in enumerate(theta)))
    return 0


def cmd_spectrum(args) -> int:
    g, gmeta = fio.read_graph(args.graph)
    meta = {"n": g.n, "m": g.m}
    if "model" in gmeta:
        meta["model"] = gmeta["model"]
    if args.operator == "adjacency":
        vals, _ = adjacency_spectrum(g, args.k)
        from .eigs import SpectralReport
        rep = SpectralReport(vals.astype(complex), None, np.zeros(vals.size), np.ones(vals.size, bool), "adjacency")
        meta.update(operator="adjacency", method="symmetric")
    else:
        op = NBOperator.from_graph(g)
        solver = SolverSpec(k=args.k, method=args.method, tol=args.tol, max_iter=args.max_iter)
        rep = _solve(op, solver, args.seed)
        if args.method == "dense" or (args.method == "auto" and op.shape[0] <= 1000):
            if args.all:
                rep = dense_spectrum(op, tol=args.tol)
        if args.threshold is not None:
            rep = annotate(rep, args.threshold)
        meta.update(operator="B", method=rep.method, converged=int(rep.all_converged))
    fio.write_spectrum(args.out, rep, meta)
    return 0 if rep.all_converged else 3


def cmd_predict(args) -> int:
    spec = _load_model_spec(args)
    fio.write_json(args.out, prediction_dict(spec, args.c))
    return 0


def cmd_compare(args) -> int:
    pred = fio.read_json(args.prediction)
    report = compare(pred, args.spectrum, tol=Tolerances(outlier_rel=args.outlier_rel, bulk_factor=args.bulk_factor))
    text = fio.dumps(report)
    if args.out:
        fio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0 if report["passed"] else 1


def _pipeline_cmd(command: str):
    def handler(args) -> int:
        if args.config:
            data = json.loads(Path(args.config).read_text())
            cfg = ExperimentConfig.model_validate(data)
            cfg = cfg.model_copy(update={"command": command})
        else:
            spec = _load_model_spec(args)
            cfg = ExperimentConfig(command=command, model=spec, seeds=args.seeds or [0],
                                   output_dir=args.out, workers=args.workers)
        manifest, ok = run(cfg)
        sys.stdout.write(fio.dumps({"passed": ok, "output_dir": cfg.output_dir, "outputs": manifest["outputs"]}))
        return 0 if ok else 1
    return handler


def cmd_run(args) -> int:
    data = json.loads(Path(args.config).read_text())
    cfg = ExperimentConfig.model_validate(data)
    if args.out:
        cfg = cfg.model_copy(update={"output_dir": args.out})
    if args.workers:
        cfg = cfg.model_copy(update={"workers": args.workers})
    _, ok = run(cfg)
    return 0 if ok else 1


def cmd_certify(args) -> int:
    res = certificate_sweep(args.trials, args.seed)
    text = fio.dumps(res)
    if args.out:
        fio.atomic_write(args.out, text)
    sys.stdout.write(text)
    return 0 if res["total_violations"] == 0 else 1


def cmd_treelab(args) -> int:
    spec = _load_model_spec(args) if (args.model or args.family) else ModelSpec(family="er", n=50, d0=3.0)
    cfg = ExperimentConfig(command="treelab", model=spec, seeds=[args.seed], tree_t_max=args.t_max,
                           tree_samples=args.samples, output_dir=args.out)
    records = treelab_records(cfg)
    fio.write_jsonl(Path(args.out) / "treelab.jsonl", records)
    bad = [r for r in records if "z" in r and abs(r["z"]) > args.z_max]
    return 0 if not bad else 1


def cmd_bench(args) -> int:
    from .perf import arnoldi_bench, matvec_ladder

    ladder = matvec_ladder(tuple(args.ms), seed=args.seed)
    result = {"matvec": ladder}
    if args.arnoldi_n:
        result["arnoldi"] = arnoldi_bench(args.arnoldi_n, seed=args.seed)
    text = fio.dumps(result)
    if args.out:
        fio.atomic_write(args.out, text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbspectra", description="Non-backtracking spectra of random graphs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a graph from a model")
    _add_model_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="write ground-truth communities CSV here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spectrum", help="eigenvalues of B (or of the adjacency matrix)")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--method", choices=["auto", "dense", "arnoldi"], default="auto")
    p.add_argument("--operator", choices=["B", "adjacency"], default="B")
    p.add_argument("--all", action="store_true", help="full spectrum on the dense path")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("predict", help="theoretical predictions for a model")
    _add_model_flags(p)
    p.add_argument("--c", type=float, default=1.0, help="value of the unnamed absolute constant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="compare a spectrum file with a prediction file")
    p.add_argument("--prediction", required=True)
    p.add_argument("--spectrum", required=True)
    p.add_argument("--outlier-rel", type=float, default=0.10)
    p.add_argument("--bulk-factor", type=float, default=1.2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    for name in ("sbm", "labeled-sbm", "complete", "bbp"):
        p = sub.add_parser(name, help=f"{name} pipeline over seeds")
        _add_model_flags(p)
        p.add_argument("--config")
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--workers", type=int)
        p.add_argument("--out", default=f"nbspectra_{name}")
        p.set_defaults(func=_pipeline_cmd(name))

    p = sub.add_parser("certify", help="randomized perturbation-certificate sweep")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("treelab", help="Monte-Carlo tree and Poisson identities")
    _add_model_flags(p)
    p.add_argument("--t-max", type=int, default=4)
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--z-max", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="nbspectra_treelab")
    p.set_defaults(func=cmd_treelab)

    p = sub.add_parser("bench", help="matvec scaling and Arnoldi timing")
    p.add_argument("--ms", type=int, nargs="+", default=[10_000, 20_000, 40_000])
    p.add_argument("--arnoldi-n", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except ValidationError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
