"""Command-line harness: disorder sweeps, mean-field tables, restoration.

Experiments are described by a key-value config file (``key = value``
per line, ``#`` comments) plus repeatable ``--set key=value`` overrides;
overrides win. Every CSV starts with a ``#`` comment carrying the fully
resolved configuration, so a rerun with the same config is byte
identical. Worker count comes from the ``RFBP_WORKERS`` environment
variable unless the config sets ``workers``.
"""

from __future__ import annotations

import argparse
import ast
import sys
from pathlib import Path

import numpy as np

from . import exact
from .graphs import random_regular, square_lattice
from .lbp import run_lbp
from .meanfield import MeanFieldModel, solve_saddle, verify_rlbp_on_complete_graph
from .models import (
    FieldDistribution,
    InteractionEnsemble,
    MrfModel,
    PairPotential,
    StateSpace,
    UnaryPotential,
)
from .quench import coupling_rng, mc_quenched_average, resolve_workers
from .restore import (
    DegradedImage,
    Image,
    RestoreParams,
    dav_analytic,
    degrade,
    load_sample_image,
    mse,
    mse_mc_average,
    read_image,
    restore_mpm_checked,
    write_image,
)
from .rlbp import build_quadrature, run_rlbp_best


def parse_config_text(text: str) -> dict:
    cfg = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = _parse_value(value.strip())
    return cfg


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        lowered = text.lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        return text


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = parse_config_text(Path(path).read_text()) if path else {}
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse_value(value.strip())
    return cfg


def config_comment(cfg: dict) -> str:
    body = " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return f"# config: {body}"


def write_csv(path: str | None, comment: str, header: list[str], rows: list[list]) -> str:
    lines = [comment, ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def build_graph(cfg: dict):
    kind = cfg.get("graph", "lattice")
    if kind == "lattice":
        return square_lattice(int(cfg.get("width", 8)), int(cfg.get("height", 8)), cfg.get("boundary", "free"))
    if kind == "rrg":
        return random_regular(int(cfg["n"]), int(cfg["d"]), seed=int(cfg.get("graph_seed", 0)))
    raise ValueError(f"unknown graph kind {kind!r}")


def build_sweep_model(cfg: dict, sigma: float) -> MrfModel:
    q = int(cfg.get("q", 2))
    mode = cfg.get("mode", "spin")
    states = StateSpace.spin(q) if mode == "spin" else StateSpace.intensity(q)
    return MrfModel(
        graph=build_graph(cfg),
        states=states,
        unary=UnaryPotential.linear_field(),
        pair=PairPotential.product(),
        beta=float(cfg.get("beta", 1.0)),
        fields=FieldDistribution.gaussian(0.0, sigma**2),
    )


def sweep_values(cfg: dict):
    if "sweep_values" in cfg:
        return cfg["sweep"], [float(v) for v in cfg["sweep_values"]]
    start, stop, step = (float(cfg[k]) for k in ("sweep_start", "sweep_stop", "sweep_step"))
    n = int(round((stop - start) / step)) + 1
    return cfg["sweep"], [round(start + i * step, 10) for i in range(n)]


def cmd_sweep_quenched(cfg: dict) -> int:
    """Replica-symmetric vs Monte-Carlo quenched averages along a sweep."""
    param, values = sweep_values(cfg)
    if param not in ("sigma", "J", "c"):
        raise ValueError("sweep must be one of sigma, J, c")
    seed = int(cfg.get("seed", 0))
    n_field = int(cfg.get("n_field_samples", 200))
    n_coupling = int(cfg.get("n_coupling_samples", 1))
    delta = float(cfg.get("delta", 0.0))
    workers = resolve_workers(cfg.get("workers"))
    lbp_options = {"tol": float(cfg.get("lbp_tol", 1e-9)), "max_iter": int(cfg.get("max_iter", 10_000))}
    if "damping" in cfg:
        lbp_options["damping"] = float(cfg["damping"])
    rlbp_options = dict(
        tol=float(cfg.get("rlbp_tol", 1e-9)),
        max_iter=int(cfg.get("rlbp_max_iter", cfg.get("max_iter", 10_000))),
        n_nodes=int(cfg.get("n_nodes", 32)),
    )

    rows = []
    any_failed = False
    for value in values:
        sigma = value if param == "sigma" else float(cfg.get("sigma", 1.0))
        if param == "J":
            ensemble = InteractionEnsemble.fixed(value)
        elif param == "c":
            ensemble = (
                InteractionEnsemble.gaussian(value, delta**2)
                if delta > 0
                else InteractionEnsemble.fixed(value)
            )
        elif delta > 0:
            ensemble = InteractionEnsemble.gaussian(float(cfg.get("c", 0.0)), delta**2)
        else:
            ensemble = InteractionEnsemble.fixed(float(cfg.get("J", 0.2)))
        model = build_sweep_model(cfg, sigma)

        f_rs, m_rs = [], []
        for c_idx in range(n_coupling):
            couplings = ensemble.sample(model.graph.n_edges, coupling_rng(seed, c_idx))
            _, rep = run_rlbp_best(model, couplings, **rlbp_options)
            any_failed |= not rep.converged
            f_rs.append(rep.quenched_free_energy / model.graph.n_vertices)
            m_rs.append(abs(rep.quenched_magnetization))
        out = mc_quenched_average(
            model,
            ensemble,
            n_field_samples=n_field,
            n_coupling_samples=n_coupling,
            seed=seed,
            lbp_options=lbp_options,
            n_workers=workers,
        )
        fe = out["free_energy"]
        any_failed |= fe.n_excluded > 0
        rows.append(
            [
                value,
                float(np.mean(f_rs)),
                fe.mean,
                fe.std_error,
                fe.n_excluded,
                float(np.mean(m_rs)),
                out["magnetization_abs"].mean,
            ]
        )
    write_csv(
        cfg.get("out"),
        config_comment(cfg),
        [param, "f_rlbp", "f_mc_mean", "f_mc_std_error", "n_excluded", "m_rlbp", "m_lbp_mean"],
        rows,
    )
    return 1 if (any_failed and cfg.get("strict", False)) else 0


def cmd_meanfield(cfg: dict) -> int:
    """Saddle-point branches and the finite-n message-passing gap."""
    q = int(cfg.get("q", 2))
    states = StateSpace.spin(q)
    sigma = float(cfg.get("sigma", 0.0))
    field = FieldDistribution.delta(0.0) if sigma == 0 else FieldDistribution.gaussian(0.0, sigma**2)
    betas = [float(b) for b in cfg.get("betas", [cfg.get("beta", 1.0)])]
    ns = [int(n) for n in cfg.get("ns", [cfg.get("n_compare", 0)])]
    rows = []
    any_failed = False
    for beta in betas:
        model = MeanFieldModel(states=states, g=states.values, unary=UnaryPotential.linear_field(), beta=beta, field_dist=field)
        sols = solve_saddle(model)
        for n in ns:
            if n > 0:
                out = verify_rlbp_on_complete_graph(n, model, dict(tol=float(cfg.get("rlbp_tol", 1e-10))))
                any_failed |= not out["converged"]
                f_rlbp, gap = out["f_rlbp"], out["gap"]
            else:
                f_rlbp, gap = float("nan"), float("nan")
            for branch, sol in enumerate(sols):
                rows.append([beta, sigma, n, branch, sol.m, sol.f, f_rlbp, gap])
    write_csv(
        cfg.get("out"),
        config_comment(cfg),
        ["beta", "sigma", "n", "branch", "m", "f", "f_rlbp", "gap"],
        rows,
    )
    return 1 if (any_failed and cfg.get("strict", False)) else 0


def _load_input_image(cfg: dict) -> Image:
    source = cfg.get("input", "sample")
    if source == "sample":
        return load_sample_image()
    return read_image(source, q=int(cfg.get("q", 8)))


def cmd_restore(cfg: dict) -> int:
    """Restoration pipeline: single operations or figure-style sweeps."""
    mode = cfg.get("restore_mode", "sweep")
    params = RestoreParams(
        alpha=float(cfg.get("alpha", 0.4)),
        sigma2=float(cfg.get("sigma", 0.5)) ** 2,
        xi_kind=cfg.get("xi", "quadratic"),
        q=int(cfg.get("q", 8)),
    )
    seed = int(cfg.get("seed", 0))
    workers = resolve_workers(cfg.get("workers"))
    lbp_options = {"tol": float(cfg.get("lbp_tol", 1e-6)), "damping": float(cfg.get("damping", 0.0))}
    rlbp_options = {"tol": float(cfg.get("rlbp_tol", 1e-10))}
    failed = False

    if mode == "degrade":
        img = _load_input_image(cfg)
        degraded = degrade(img, params.sigma2, seed=seed)
        rounded = np.clip(np.rint(degraded.values), 0, params.q - 1).astype(int)
        write_image(Image(pixels=rounded, q=params.q), cfg.get("out", "degraded.ppm"))
    elif mode == "restore":
        img = _load_input_image(cfg)
        degraded = DegradedImage(values=img.pixels.astype(float), q=params.q)
        restored, ok = restore_mpm_checked(degraded, params, lbp_options)
        failed = not ok
        write_image(restored, cfg.get("out", "restored.ppm"))
    elif mode == "roundtrip":
        img = _load_input_image(cfg)
        degraded = degrade(img, params.sigma2, seed=seed)
        restored, ok = restore_mpm_checked(degraded, params, lbp_options)
        failed = not ok
        rounded = np.clip(np.rint(degraded.values), 0, params.q - 1).astype(int)
        write_image(Image(pixels=rounded, q=params.q), cfg.get("out_degraded", "degraded.ppm"))
        write_image(restored, cfg.get("out", "restored.ppm"))
        write_csv(
            cfg.get("out_csv"),
            config_comment(cfg),
            ["mse_restored", "mse_rounded"],
            [[mse(img, restored), mse(img, Image(pixels=rounded, q=params.q))]],
        )
    elif mode == "score":
        original = read_image(cfg["reference"], q=params.q)
        restored = read_image(cfg["input"], q=params.q)
        write_csv(cfg.get("out"), config_comment(cfg), ["mse"], [[mse(original, restored)]])
    elif mode == "dav":
        img = _load_input_image(cfg)
        value = dav_analytic(img, params, rlbp_options)
        write_csv(cfg.get("out"), config_comment(cfg), ["d_av_analytic"], [[value]])
    elif mode == "mc":
        img = _load_input_image(cfg)
        stats = mse_mc_average(
            img, params, int(cfg.get("n_samples", 200)), seed=seed, lbp_options=lbp_options, n_workers=workers
        )
        failed = stats.n_excluded > 0
        write_csv(
            cfg.get("out"),
            config_comment(cfg),
            ["d_av_mc_mean", "d_av_mc_std_dev", "d_av_mc_std_error", "n_samples", "n_excluded"],
            [[stats.mean, stats.std_dev, stats.std_error, stats.n_samples, stats.n_excluded]],
        )
    elif mode == "sweep":
        img = _load_input_image(cfg)
        param, values = sweep_values(cfg)
        if param not in ("alpha", "sigma"):
            raise ValueError("restoration sweeps run over alpha or sigma")
        n_samples = int(cfg.get("n_samples", 200))
        rows = []
        for value in values:
            p = RestoreParams(
                alpha=value if param == "alpha" else params.alpha,
                sigma2=(value**2 if param == "sigma" else params.sigma2),
                xi_kind=params.xi_kind,
                q=params.q,
            )
            d_av = dav_analytic(img, p, rlbp_options)
            stats = mse_mc_average(img, p, n_samples, seed=seed, lbp_options=lbp_options, n_workers=workers)
            failed |= stats.n_excluded > 0
            rows.append([value, d_av, stats.mean, stats.std_error])
        write_csv(
            cfg.get("out"),
            config_comment(cfg),
            [param, "d_av_analytic", "d_av_mc_mean", "d_av_mc_std_error"],
            rows,
        )
    else:
        raise ValueError(f"unknown restore mode {mode!r}")
    return 1 if (failed and cfg.get("strict", False)) else 0


def cmd_selftest(cfg: dict) -> int:
    """Fast end-to-end sanity checks; prints one line per check."""
    rng = np.random.default_rng(0)
    checks: list[tuple[str, bool]] = []

    from .graphs import path_graph

    graph = path_graph(6)
    model = MrfModel(graph, StateSpace.spin(3), UnaryPotential.linear_field(), PairPotential.product(), beta=1.0)
    h = rng.normal(0, 1, 6)
    J = rng.normal(0, 0.4, 5)
    res = exact.enumerate(model, h, J)
    _, beliefs, report = run_lbp(model, h, J, tol=1e-11)
    checks.append(("tree-exactness", abs(report.bethe_free_energy - res.free_energy) < 1e-8))

    lattice = square_lattice(4, 4)
    h = rng.normal(0, 1, 16)
    model = MrfModel(
        lattice,
        StateSpace.spin(2),
        UnaryPotential.linear_field(),
        PairPotential.product(),
        beta=1.0,
        fields=FieldDistribution.delta(h),
    )
    J = np.full(lattice.n_edges, 0.2)
    _, _, lbp_rep = run_lbp(model, h, J, tol=1e-11)
    _, rs_rep = run_rlbp_best(model, J, tol=1e-11)
    checks.append(
        ("fixed-field-reduction", abs(rs_rep.quenched_free_energy - lbp_rep.bethe_free_energy) < 1e-8)
    )

    rule = build_quadrature(FieldDistribution.gaussian(2.0, 4.0), 32)
    eh4 = float(rule.weights @ rule.nodes**4)
    checks.append(("quadrature-moments", abs(eh4 - 160.0) < 1e-6))

    from .restore import synthetic_color_image
    from scipy.stats import norm as _norm

    img = synthetic_color_image(8, 8, seed=3)
    dav = dav_analytic(img, RestoreParams(alpha=0.0, sigma2=0.25), dict(tol=1e-11))
    sd = 0.5
    ref = 0.0
    flat = img.pixels.reshape(-1)
    for intensity in flat:
        for k in range(8):
            lo = -np.inf if k == 0 else (k - 0.5 - intensity) / sd
            hi = np.inf if k == 7 else (k + 0.5 - intensity) / sd
            ref += (intensity - k) ** 2 * (_norm.cdf(hi) - _norm.cdf(lo))
    checks.append(("rounding-error-formula", abs(dav - ref / len(flat)) < 1e-6))

    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        ok &= passed
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rfbp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sweep-quenched", "meanfield", "restore", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    args = parser.parse_args(argv)
    cfg = load_config(args.config, args.set)
    dispatch = {
        "sweep-quenched": cmd_sweep_quenched,
        "meanfield": cmd_meanfield,
        "restore": cmd_restore,
        "selftest": cmd_selftest,
    }
    return dispatch[args.command](cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
