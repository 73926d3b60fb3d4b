"""Monte-Carlo oracle for quenched averages.

Samples field (and optionally coupling) realizations, runs LBP per
realization, and aggregates the per-variable Bethe free energy and the
magnetization. Every realization gets its own deterministic RNG stream
derived from the master seed and the realization index, so results do
not depend on execution order and parallel runs reproduce serial ones
bit for bit.

On lattice models realizations are batched through the vectorized grid
kernel; other graphs fall back to one ``run_lbp`` call per realization.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .lbp import DEFAULT_MAX_ITER, DEFAULT_TOL, magnetization, run_lbp, run_lbp_grid_batch
from .models import InteractionEnsemble, MrfModel

WORKERS_ENV = "RFBP_WORKERS"


@dataclass
class QuenchStats:
    mean: float
    std_dev: float
    std_error: float  # std_dev / sqrt(n_samples)
    n_samples: int  # realizations that entered the statistics
    n_excluded: int  # non-converged realizations, dropped and counted


def summarize(values: np.ndarray, n_excluded: int = 0) -> QuenchStats:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise RuntimeError("no converged samples to summarize")
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return QuenchStats(
        mean=float(np.mean(values)),
        std_dev=std,
        std_error=float(std / np.sqrt(n)),
        n_samples=n,
        n_excluded=n_excluded,
    )


def resolve_workers(n_workers: int | None) -> int:
    if n_workers is not None:
        return max(1, int(n_workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def field_rng(seed: int, coupling_index: int, field_index: int) -> np.random.Generator:
    """Counter-addressed stream: independent of sampling order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, coupling_index, field_index)))


def coupling_rng(seed: int, coupling_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, coupling_index)))


def _sample_couplings(model, ensemble, seed, c_idx):
    if ensemble is None:
        return None
    return ensemble.sample(model.graph.n_edges, coupling_rng(seed, c_idx))


def _one_realization(task, model: MrfModel, ensemble, seed, lbp_options):
    c_idx, f_idx = task
    couplings = _sample_couplings(model, ensemble, seed, c_idx)
    fields = model.fields.sample(model.graph.n_vertices, field_rng(seed, c_idx, f_idx))
    _, beliefs, report = run_lbp(model, fields, couplings, **lbp_options)
    return (
        report.bethe_free_energy / model.graph.n_vertices,
        magnetization(beliefs, model.states),
        report.converged,
    )


def _batch_realizations(task, model: MrfModel, ensemble, seed, lbp_options):
    c_idx, lo, hi = task
    couplings = _sample_couplings(model, ensemble, seed, c_idx)
    fields = np.stack(
        [model.fields.sample(model.graph.n_vertices, field_rng(seed, c_idx, f)) for f in range(lo, hi)]
    )
    res = run_lbp_grid_batch(
        model,
        fields,
        couplings,
        tol=lbp_options.get("tol", DEFAULT_TOL),
        max_iter=lbp_options.get("max_iter", DEFAULT_MAX_ITER),
        damping=lbp_options.get("damping"),
    )
    f = res.free_energy / model.graph.n_vertices
    return list(zip(f, res.magnetization, res.converged))


def _grid_batchable(model: MrfModel, lbp_options: dict) -> bool:
    if model.graph.grid is None:
        return False
    if lbp_options.get("schedule", "auto") not in ("auto", "grid"):
        return False
    return lbp_options.get("init", "uniform") == "uniform"


def mc_quenched_average(
    model: MrfModel,
    interaction_ensemble: InteractionEnsemble | None = None,
    n_field_samples: int = 1000,
    n_coupling_samples: int = 1,
    seed: int = 0,
    lbp_options: dict | None = None,
    n_workers: int | None = None,
    return_samples: bool = False,
):
    """Average F_bethe/n and the magnetization over disorder realizations.

    Returns a dict with QuenchStats under ``free_energy``,
    ``magnetization`` (signed), and ``magnetization_abs`` (the mean of
    the per-realization |magnetization|, which stays informative when
    the field distribution is symmetric and the signed mean vanishes).
    Non-converged LBP runs are excluded and counted.
    """
    if n_field_samples < 1 or n_coupling_samples < 1:
        raise ValueError("need at least one sample")
    if model.fields is None:
        raise ValueError("model has no field distribution")
    if interaction_ensemble is None and model.pair.needs_couplings():
        raise ValueError("product pair potential needs an interaction ensemble")
    if interaction_ensemble is None and n_coupling_samples != 1:
        raise ValueError("n_coupling_samples > 1 needs an interaction ensemble")
    lbp_options = dict(lbp_options or {})

    if _grid_batchable(model, lbp_options):
        chunk = _batch_chunk(model, n_field_samples)
        tasks = [
            (c, lo, min(lo + chunk, n_field_samples))
            for c in range(n_coupling_samples)
            for lo in range(0, n_field_samples, chunk)
        ]
        work = partial(_batch_realizations, model=model, ensemble=interaction_ensemble, seed=seed, lbp_options=lbp_options)
        flatten = True
    else:
        tasks = [(c, f) for c in range(n_coupling_samples) for f in range(n_field_samples)]
        work = partial(_one_realization, model=model, ensemble=interaction_ensemble, seed=seed, lbp_options=lbp_options)
        flatten = False

    workers = resolve_workers(n_workers)
    if workers > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(work, tasks, chunksize=chunksize))
    else:
        raw = [work(t) for t in tasks]
    results = [r for group in raw for r in group] if flatten else raw

    f_vals = np.array([r[0] for r in results if r[2]])
    m_vals = np.array([r[1] for r in results if r[2]])
    n_excluded = sum(1 for r in results if not r[2])
    if len(f_vals) == 0:
        raise RuntimeError("every LBP run failed to converge")

    out = {
        "free_energy": summarize(f_vals, n_excluded),
        "magnetization": summarize(m_vals, n_excluded),
        "magnetization_abs": summarize(np.abs(m_vals), n_excluded),
    }
    if return_samples:
        out["samples"] = {"free_energy": f_vals, "magnetization": m_vals}
    return out


def _batch_chunk(model: MrfModel, n_field_samples: int) -> int:
    # keep working arrays around a few hundred MB
    per_sample = model.graph.n_vertices * model.states.q
    return int(np.clip(3_000_000 // max(per_sample, 1), 1, n_field_samples))


def stats_csv_row(params: dict, stats: QuenchStats) -> str:
    """One CSV row: parameter values then mean/std/stderr/counts."""
    cells = [repr(float(v)) if isinstance(v, float) else str(v) for v in params.values()]
    cells += [
        repr(stats.mean),
        repr(stats.std_dev),
        repr(stats.std_error),
        str(stats.n_samples),
        str(stats.n_excluded),
    ]
    return ",".join(cells)
