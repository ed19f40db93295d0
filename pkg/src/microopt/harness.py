"""Experiment runner: dataset simulation, training, optimization sweeps,
baselines and ablations, with every artifact written under ``out_dir``.

Results files are deterministic for a given config and seed. Wall-clock
timings go to a separate ``timings.csv`` so ``results.csv`` stays
byte-identical between runs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .baselines import OracleEvaluator, grid_optimum, peak_alloc, scalar_variant_optimize
from .config import ExperimentConfig, derive_seed
from .domain import ConfigurationError, SlaSpec, TrafficSeries, normalized_cost, validate_sla
from .kernels import BACKEND
from .oracle import QoSDataset, evaluate_allocation, generate_grid_dataset
from .optimizer import Problem, SliceProblem, draw_panels, optimize, strict_betas
from .slicemodel import (HISTORY_KEYS, MODEL_VERSION, export_model, import_model, init_model,
                         model_metrics, train)
from .traffic import (TrafficDistribution, ingest_trace_csv, sample_traffic_series,
                      synth_weekly_trace, trace_stats, write_trace_csv)

log = logging.getLogger("microopt")

RESULT_FIELDS = ("method", "scenario", "q_thresh", "beta_thresh", "cpu_millicores", "bw_mbps",
                 "cost", "predicted_beta", "measured_beta", "seed", "status")
TIMING_FIELDS = ("method", "scenario", "q_thresh", "beta_thresh", "runtime_s")
ABLATION_VARIANTS = ("0sigma", "2sigma", "full")
SPLIT_FILES = {"train": "train.csv", "validation": "validation.csv", "test": "test.csv"}


@dataclass(frozen=True)
class Scenario:
    """A traffic pattern: constant rate, or truncated-normal around a center."""

    name: str
    center: float
    std: float = 0.0
    std_label: str = ""

    def series(self, cfg: ExperimentConfig) -> TrafficSeries:
        if self.std == 0:
            return TrafficSeries.constant(self.center, cfg.tau)
        # the same draw stream for every std at a center keeps comparisons paired
        seed = derive_seed(cfg.seed, "traffic", repr(self.center))
        return sample_traffic_series(TrafficDistribution(self.center, self.std), cfg.tau, seed)


@dataclass(frozen=True)
class Cell:
    method: str
    scenario: Scenario
    q_thresh: float
    beta_thresh: float
    variant: str = ""

    @property
    def key(self):
        return (self.variant, self.method, self.scenario.name, self.q_thresh, self.beta_thresh)


@dataclass
class ResultRow:
    method: str
    scenario: str
    q_thresh: float
    beta_thresh: float
    cpu_millicores: float = math.nan
    bw_mbps: float = math.nan
    cost: float = math.nan
    predicted_beta: float = math.nan
    measured_beta: float = math.nan
    seed: int = 0
    status: str = "ok"
    runtime_s: float = 0.0
    variant: str = ""

    def csv_values(self, fields=RESULT_FIELDS):
        out = []
        for f in fields:
            v = getattr(self, f)
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        return out


# ---- artifact paths ----------------------------------------------------

def dataset_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out / "dataset"


def model_path(cfg: ExperimentConfig) -> Path:
    return cfg.out / "model.json"


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, rows: List[ResultRow], fields=RESULT_FIELDS) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow(row.csv_values(fields))


def read_rows(path) -> List[dict]:
    """Parse a results CSV back into dicts with numeric fields as floats."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            for k in ("q_thresh", "beta_thresh", "cpu_millicores", "bw_mbps", "cost",
                      "predicted_beta", "measured_beta", "runtime_s"):
                if k in rec:
                    rec[k] = float(rec[k])
            if "seed" in rec:
                rec["seed"] = int(rec["seed"])
            out.append(rec)
    return out


# ---- dataset and training --------------------------------------------------

def cmd_simulate_dataset(cfg: ExperimentConfig) -> dict:
    seed = derive_seed(cfg.seed, "dataset")
    data = generate_grid_dataset(cfg.grid, cfg.oracle, seed)
    d = dataset_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    for split, name in SPLIT_FILES.items():
        data.subset(split).to_csv(d / name)
    manifest = {
        "seed": seed,
        "master_seed": cfg.seed,
        "counts": data.counts(),
        "grid_cardinality": cfg.grid.cardinality,
        "grid": _plain(asdict(cfg.grid)),
        "oracle": asdict(cfg.oracle),
        "files": dict(SPLIT_FILES),
    }
    _write_json(d / "manifest.json", manifest)
    log.info("dataset written to %s %s", d, manifest["counts"])
    return manifest


def load_dataset(cfg: ExperimentConfig) -> QoSDataset:
    d = dataset_dir(cfg)
    paths = [d / name for name in SPLIT_FILES.values()]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"dataset files missing: {missing}; run simulate-dataset first")
    return QoSDataset.from_csv(*paths)


def cmd_train(cfg: ExperimentConfig) -> dict:
    data = load_dataset(cfg)
    tcfg = replace(cfg.train, seed=derive_seed(cfg.seed, "train") % (2**32))
    t0 = time.perf_counter()
    model = train(init_model(cfg.arch, seed=tcfg.seed), data, tcfg)
    elapsed = time.perf_counter() - t0
    export_model(model, model_path(cfg))

    with open(cfg.out / "train_metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch",) + HISTORY_KEYS)
        for i in range(len(model.history[HISTORY_KEYS[0]])):
            w.writerow([i + 1] + [repr(float(model.history[k][i])) for k in HISTORY_KEYS])

    metrics = {"train_seconds": elapsed, "backend": BACKEND, "model_version": MODEL_VERSION}
    if data.has_split("test"):
        nll, mse, mae = model_metrics(model, data.subset("test"))
        metrics.update(test_nll=nll, test_mse=mse, test_mae=mae)
    _write_json(cfg.out / "train_summary.json", metrics)
    log.info("trained in %.1fs: %s", elapsed, metrics)
    return metrics


def ensure_model(cfg: ExperimentConfig):
    """Load the trained model, simulating and training first if absent."""
    if not model_path(cfg).is_file():
        if not (dataset_dir(cfg) / "train.csv").is_file():
            log.info("no dataset under %s; simulating", cfg.out)
            cmd_simulate_dataset(cfg)
        log.info("no model under %s; training", cfg.out)
        cmd_train(cfg)
    return import_model(model_path(cfg))


# ---- scenarios ---------------------------------------------------------

def traffic_stats(cfg: ExperimentConfig):
    if cfg.traffic.trace_csv:
        return ingest_trace_csv(cfg.traffic.trace_csv, cfg.traffic.peak)
    rows = synth_weekly_trace(derive_seed(cfg.seed, "trace"), cfg.traffic.synth_amplitude,
                              cfg.traffic.synth_noise)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(rows, cfg.out / "trace.csv")
    return trace_stats(rows, cfg.traffic.peak)


def constant_scenario(x: float) -> Scenario:
    return Scenario(f"const-x{x:g}", float(x))


def sweep_cells(cfg: ExperimentConfig, methods, variant="") -> List[Cell]:
    sc = constant_scenario(cfg.sweep.traffic)
    return [Cell(m, sc, float(q), float(b), variant)
            for q in cfg.sweep.q_thresh for b in cfg.sweep.beta_thresh for m in methods]


def experiment_cells(cfg: ExperimentConfig) -> List[Cell]:
    cells = sweep_cells(cfg, cfg.methods)
    s = cfg.sweep
    for x in s.table_traffic:
        cells += [Cell(m, constant_scenario(x), s.table_q_thresh, s.table_beta_thresh)
                  for m in cfg.methods]
    stats = traffic_stats(cfg)
    t = cfg.traffic
    for c in t.centers:
        for label, std in (("sigma_mean", stats.sigma_mean), ("sigma_max", stats.sigma_max)):
            sc = Scenario(f"dyn-c{c:g}-{label}", float(c), float(std), label)
            cells += [Cell(m, sc, t.q_thresh, t.beta_thresh) for m in cfg.methods]
    seen, out = set(), []
    for cell in cells:
        if cell.key not in seen:
            seen.add(cell.key)
            out.append(cell)
    return out


# ---- cell execution --------------------------------------------------------

def _sla(cfg, q, b) -> SlaSpec:
    return SlaSpec(q_thresh=q, beta_thresh=b)


def _peak_allocation(cfg: ExperimentConfig):
    bc = cfg.baselines
    ev = OracleEvaluator(cfg.oracle, bc.n_trials, derive_seed(cfg.seed, "baseline", "peak_alloc"))
    return peak_alloc(ev, bc.peak_traffic, bc.search_grid(),
                      SlaSpec(q_thresh=bc.peak_q_thresh, beta_thresh=bc.peak_beta_thresh), cfg.tau)


def _predicted_beta(cfg, model, traffic, sla, r, seed) -> float:
    problem = Problem([SliceProblem(model, traffic, sla)])
    panels = draw_panels(problem, cfg.optimizer.n_mc_certify, np.random.default_rng(seed))
    return float(strict_betas(problem, np.asarray(r, dtype=np.float64)[None, :], panels)[0])


def run_cell(cfg: ExperimentConfig, model, cell: Cell, peak=None) -> ResultRow:
    t0 = time.perf_counter()
    tag = (cell.variant or "main", cell.method, cell.scenario.name, repr(cell.q_thresh),
           repr(cell.beta_thresh))
    seed = derive_seed(cfg.seed, "cell", *tag)
    row = ResultRow(cell.method, cell.scenario.name, cell.q_thresh, cell.beta_thresh,
                    seed=seed, variant=cell.variant)
    try:
        sla = _sla(cfg, cell.q_thresh, cell.beta_thresh)
        traffic = cell.scenario.series(cfg)
        if cell.method == "microopt":
            ocfg = replace(cfg.optimizer, seed=seed)
            problem = Problem([SliceProblem(model, traffic, sla)])
            if cell.variant in ("", "full"):
                sol = optimize(problem, ocfg)
            else:
                sol = scalar_variant_optimize(problem, ocfg, k_sigma=float(cell.variant[0]))
            r = sol.allocations[0].values
            row.predicted_beta = float(sol.certified_betas[0])
            if not sol.feasible:
                row.status = "infeasible"
        elif cell.method in ("grid_optimum", "peak_alloc"):
            if cell.method == "peak_alloc":
                r = (peak if peak is not None else _peak_allocation(cfg)).values
            else:
                ev = OracleEvaluator(cfg.oracle, cfg.baselines.n_trials, seed)
                r = grid_optimum(ev, traffic, cfg.baselines.search_grid(), sla).values
            row.predicted_beta = _predicted_beta(cfg, model, traffic, sla, r, seed)
        else:
            raise ConfigurationError(f"unknown method {cell.method}")
        row.cpu_millicores, row.bw_mbps = float(r[0]), float(r[1])
        row.cost = normalized_cost(sla.weights, r)
        row.measured_beta = float(evaluate_allocation(
            traffic, r, sla, cfg.oracle, cfg.eval_trials, derive_seed(cfg.seed, "measure", *tag)))
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        log.exception("cell %s failed", tag)
        row.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    row.runtime_s = time.perf_counter() - t0
    return row


def _run_batch(args):
    cfg, cells = args
    model = import_model(model_path(cfg))
    peak = _peak_allocation(cfg) if any(c.method == "peak_alloc" for c in cells) else None
    return [run_cell(cfg, model, c, peak) for c in cells]


def run_cells(cfg: ExperimentConfig, cells: List[Cell]) -> List[ResultRow]:
    """Run cells in order, across ``cfg.workers`` processes if more than one."""
    ensure_model(cfg)
    if cfg.workers == 1 or len(cells) < 2:
        rows = _run_batch((cfg, cells))
    else:
        chunks = [cells[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_batch, [(cfg, ch) for ch in chunks]))
        by_key = {(r.variant, r.method, r.scenario, r.q_thresh, r.beta_thresh): r
                  for part in parts for r in part}
        rows = [by_key[c.key] for c in cells]
    for row in rows:
        log.info("%s %s %s q=%g b=%g cost=%.4f measured=%.4f %s", row.variant, row.method,
                 row.scenario, row.q_thresh, row.beta_thresh, row.cost, row.measured_beta, row.status)
    return rows


# ---- summaries -------------------------------------------------------------

def _mean(vals):
    vals = [v for v in vals if math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def summarize(rows: List[dict], cfg: ExperimentConfig) -> dict:
    """Aggregates computed only from parsed results rows, so they are recomputable."""
    ok = [r for r in rows if r["status"] in ("ok", "infeasible")]
    sweep_name = constant_scenario(cfg.sweep.traffic).name
    qs, bs = [float(q) for q in cfg.sweep.q_thresh], [float(b) for b in cfg.sweep.beta_thresh]

    def lookup(method, scenario, q, b):
        for r in ok:
            if (r["method"], r["scenario"], r["q_thresh"], r["beta_thresh"]) == (method, scenario, q, b):
                return r
        return None

    methods = sorted({r["method"] for r in rows})
    sweep = {}
    for m in methods:
        cells = {}
        for q in qs:
            for b in bs:
                r = lookup(m, sweep_name, q, b)
                if r is not None:
                    cells[f"q={q:g},beta={b:g}"] = {"cost": r["cost"], "measured_beta": r["measured_beta"],
                                                   "predicted_beta": r["predicted_beta"]}
        by_beta = {f"{b:g}": _mean([c["cost"] for k, c in cells.items() if k.endswith(f"beta={b:g}")])
                   for b in bs}
        by_q = {f"{q:g}": _mean([c["cost"] for k, c in cells.items() if k.startswith(f"q={q:g},")])
                for q in qs}
        sweep[m] = {"cells": cells, "mean_cost_by_beta": by_beta, "mean_cost_by_q": by_q,
                    "mean_measured_beta": _mean([c["measured_beta"] for c in cells.values()])}

    savings = {}
    for m in methods:
        if m == "peak_alloc":
            continue
        per = {}
        for q in qs:
            for b in bs:
                r, p = lookup(m, sweep_name, q, b), lookup("peak_alloc", sweep_name, q, b)
                if r is not None and p is not None and p["cost"] > 0:
                    per[f"q={q:g},beta={b:g}"] = 100.0 * (p["cost"] - r["cost"]) / p["cost"]
        savings[m] = {"per_cell_percent": per, "mean_percent": _mean(list(per.values()))}

    table = {}
    for r in ok:
        if r["scenario"].startswith("const-") and r["q_thresh"] == cfg.sweep.table_q_thresh \
                and r["beta_thresh"] == cfg.sweep.table_beta_thresh:
            table.setdefault(r["method"], {})[r["scenario"]] = r["cost"]

    dynamic = {}
    for r in ok:
        if r["scenario"].startswith("dyn-"):
            center, label = r["scenario"][len("dyn-c"):].split("-", 1)
            dynamic.setdefault(r["method"], {}).setdefault(center, {})[label] = r["cost"]

    return {
        "seed": cfg.seed,
        "n_rows": len(rows),
        "n_failed": sum(1 for r in rows if r["status"].startswith("error")),
        "sweep": sweep,
        "savings_vs_peak_alloc": savings,
        "constant_traffic_costs": table,
        "dynamic_traffic_costs": dynamic,
    }


def _write_timings(path: Path, rows: List[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant",) + TIMING_FIELDS)
        for r in rows:
            w.writerow([r.variant, r.method, r.scenario, repr(r.q_thresh), repr(r.beta_thresh),
                        f"{r.runtime_s:.3f}"])


def cmd_experiment(cfg: ExperimentConfig) -> dict:
    rows = run_cells(cfg, experiment_cells(cfg))
    write_rows(cfg.out / "results.csv", rows)
    _write_timings(cfg.out / "timings.csv", rows)
    summary = summarize(read_rows(cfg.out / "results.csv"), cfg)
    _write_json(cfg.out / "summary.json", summary)
    return summary


def cmd_ablation(cfg: ExperimentConfig) -> dict:
    cells = []
    for v in ABLATION_VARIANTS:
        cells += sweep_cells(cfg, ("microopt",), variant=v)
    rows = run_cells(cfg, cells)
    fields = ("variant",) + RESULT_FIELDS
    write_rows(cfg.out / "ablation.csv", rows, fields)
    _write_timings(cfg.out / "ablation_timings.csv", rows)
    parsed = read_rows(cfg.out / "ablation.csv")
    summary = {"seed": cfg.seed,
               "n_failed": sum(1 for r in parsed if r["status"].startswith("error"))}
    for v in ABLATION_VARIANTS:
        vr = [r for r in parsed if r["variant"] == v]
        summary[v] = {
            "mean_cost": _mean([r["cost"] for r in vr]),
            "mean_measured_beta": _mean([r["measured_beta"] for r in vr]),
            "cells": {f"q={r['q_thresh']:g},beta={r['beta_thresh']:g}":
                      {"cost": r["cost"], "measured_beta": r["measured_beta"]} for r in vr},
        }
    _write_json(cfg.out / "ablation_summary.json", summary)
    return summary


def cmd_optimize(cfg: ExperimentConfig, traffic: Optional[float] = None,
                 q_thresh: Optional[float] = None, beta_thresh: Optional[float] = None) -> ResultRow:
    """Optimize a single slice at constant traffic; write the solution and its result row."""
    x = cfg.sweep.table_traffic[-1] if traffic is None else traffic
    q = cfg.sweep.table_q_thresh if q_thresh is None else q_thresh
    b = cfg.sweep.table_beta_thresh if beta_thresh is None else beta_thresh
    sla = SlaSpec(q_thresh=float(q), beta_thresh=float(b))
    verdict = validate_sla(sla)
    if not verdict:
        raise ConfigurationError(verdict.reason)
    if not x > 0:
        raise ConfigurationError("traffic must be > 0")
    model = ensure_model(cfg)
    sc = constant_scenario(x)
    seed = derive_seed(cfg.seed, "optimize", sc.name, repr(sla.q_thresh), repr(sla.beta_thresh))
    problem = Problem([SliceProblem(model, sc.series(cfg), sla)])
    sol = optimize(problem, replace(cfg.optimizer, seed=seed))
    _write_json(cfg.out / "solution.json", sol.to_dict())

    r = sol.allocations[0].values
    row = ResultRow("microopt", sc.name, sla.q_thresh, sla.beta_thresh, float(r[0]), float(r[1]),
                    normalized_cost(sla.weights, r), float(sol.certified_betas[0]),
                    float(evaluate_allocation(sc.series(cfg), r, sla, cfg.oracle, cfg.eval_trials,
                                              derive_seed(cfg.seed, "measure", sc.name))),
                    seed, "ok" if sol.feasible else "infeasible", sol.wall_time)
    write_rows(cfg.out / "optimize_result.csv", [row])
    return row


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
