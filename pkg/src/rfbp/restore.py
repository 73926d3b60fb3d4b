"""Bayesian image restoration and its average-error predictor.

A q-level image degraded by additive white Gaussian noise is restored
by maximum-posterior-marginal estimation: run LBP on the posterior

    P(S | h) ~ exp( -sum_i (S_i - h_i)^2 / (2 sigma^2)
                    + alpha * sum_<ij> xi(S_i, S_j) )

and take the per-pixel belief argmax. The expected mean-square error
over all degraded images of one original can be estimated two ways:

* Monte Carlo - degrade, restore, score, repeat (:func:`mse_mc_average`);
* analytically - run the replica-symmetric engine with per-pixel field
  distributions N(I_i, sigma^2) and integrate the decision error of
  r_i(h) = argmax_S(phi_i(S,h) + Lambda_i(S)) in closed form
  (:func:`dav_analytic`). Since phi is quadratic in h, each state's
  score is affine in h, so r_i is piecewise constant and the Gaussian
  integral reduces to CDF differences over the argmax intervals.

RGB images are processed channel by channel with shared parameters and
the channel errors are averaged.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np

from .graphs import as_rng, square_lattice
from .models import FieldDistribution, MrfModel, PairPotential, StateSpace, UnaryPotential
from .quench import field_rng, resolve_workers, summarize
from .lbp import run_lbp, run_lbp_grid_batch
from .rlbp import run_rlbp


@dataclass
class Image:
    """Integer intensities in {0, ..., q-1}; (H, W) gray or (H, W, 3) color."""

    pixels: np.ndarray
    q: int = 8

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim not in (2, 3) or (p.ndim == 3 and p.shape[2] not in (1, 3)):
            raise ValueError("pixels must be (H, W) or (H, W, C) with C in {1, 3}")
        if p.min() < 0 or p.max() >= self.q:
            raise ValueError("intensities must lie in [0, q)")
        self.pixels = p.astype(np.int64)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]


@dataclass
class DegradedImage:
    """Real-valued observation h = I + noise, same layout as the source."""

    values: np.ndarray
    q: int = 8


@dataclass(frozen=True)
class RestoreParams:
    alpha: float  # smoothness strength, >= 0
    sigma2: float  # noise variance used in both degradation and restoration
    xi_kind: str = "quadratic"  # "quadratic": -(dS)^2/2, "absolute": -|dS|
    q: int = 8

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.xi_kind not in ("quadratic", "absolute"):
            raise ValueError(f"unknown xi kind {self.xi_kind!r}")


def degrade(image: Image, sigma2: float, seed=None) -> DegradedImage:
    """Add i.i.d. N(0, sigma2) noise to every pixel of every channel."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    rng = as_rng(seed)
    noise = math.sqrt(sigma2) * rng.standard_normal(image.pixels.shape)
    return DegradedImage(values=image.pixels + noise, q=image.q)


def posterior_model(width: int, height: int, params: RestoreParams) -> MrfModel:
    """Posterior MRF for one channel; the degraded values act as fields."""
    pair = (
        PairPotential.quadratic(params.alpha)
        if params.xi_kind == "quadratic"
        else PairPotential.absolute(params.alpha)
    )
    return MrfModel(
        graph=square_lattice(width, height, "free"),
        states=StateSpace.intensity(params.q),
        unary=UnaryPotential.gaussian_likelihood(params.sigma2),
        pair=pair,
        beta=1.0,
    )


def _channel_views(arr: np.ndarray):
    if arr.ndim == 2:
        return [arr]
    return [arr[:, :, c] for c in range(arr.shape[2])]


def _restore_channel(h2d: np.ndarray, params: RestoreParams, lbp_options: dict):
    model = posterior_model(h2d.shape[1], h2d.shape[0], params)
    _, beliefs, report = run_lbp(model, h2d.reshape(-1), None, **lbp_options)
    labels = np.argmax(beliefs.unary, axis=1)  # ties go to the smaller state
    return labels.reshape(h2d.shape), report.converged


def restore_mpm(degraded: DegradedImage, params: RestoreParams, lbp_options: dict | None = None) -> Image:
    """Per-pixel argmax of the LBP beliefs of the posterior.

    A non-converged channel still produces pixels from the best-effort
    beliefs; use :func:`restore_mpm_checked` when the flag matters.
    """
    img, _ = restore_mpm_checked(degraded, params, lbp_options)
    return img


def restore_mpm_checked(
    degraded: DegradedImage, params: RestoreParams, lbp_options: dict | None = None
) -> tuple[Image, bool]:
    opts = dict(lbp_options or {})
    planes, flags = [], []
    for h2d in _channel_views(np.asarray(degraded.values, dtype=float)):
        labels, ok = _restore_channel(h2d, params, opts)
        planes.append(labels)
        flags.append(ok)
    pixels = planes[0] if len(planes) == 1 else np.stack(planes, axis=2)
    return Image(pixels=pixels, q=params.q), all(flags)


def mse(original: Image, restored: Image) -> float:
    """Mean square error per pixel, averaged over channels for color."""
    if original.pixels.shape != restored.pixels.shape:
        raise ValueError("image shapes differ")
    diff = original.pixels.astype(float) - restored.pixels.astype(float)
    return float(np.mean(diff**2))


def _mse_batch_samples(task, original: Image, params: RestoreParams, seed: int, lbp_options: dict):
    """Degrade/restore/score a contiguous block of realization indices.

    Channels of consecutive realizations are stacked into one batched
    grid-kernel call; the noise draws are identical to the per-sample
    path because they come from the same per-index streams.
    """
    lo, hi = task
    model = posterior_model(original.width, original.height, params)
    planes, pixel_truth = [], []
    for i in range(lo, hi):
        degraded = degrade(original, params.sigma2, field_rng(seed, 0, i))
        for h2d in _channel_views(np.asarray(degraded.values, dtype=float)):
            planes.append(h2d.reshape(-1))
    for i2d in _channel_views(original.pixels):
        pixel_truth.append(i2d.reshape(-1).astype(float))
    truth = np.stack(pixel_truth)  # (C, n)

    res = run_lbp_grid_batch(
        model,
        np.stack(planes),
        None,
        tol=lbp_options.get("tol", 1e-9),
        max_iter=lbp_options.get("max_iter", 10_000),
        damping=lbp_options.get("damping"),
        compute_free_energy=False,
    )
    channels = original.channels
    labels = np.argmax(res.unary, axis=2).reshape(hi - lo, channels, -1)
    ok = res.converged.reshape(hi - lo, channels).all(axis=1)
    errs = np.mean((labels - truth[None]) ** 2, axis=(1, 2))
    return list(zip(errs, ok))


def mse_mc_average(
    original: Image,
    params: RestoreParams,
    n_samples: int,
    seed: int = 0,
    lbp_options: dict | None = None,
    n_workers: int | None = None,
    return_samples: bool = False,
):
    """Sample mean of the restoration MSE over degraded realizations.

    Seeded per realization index, so results are independent of worker
    count and scheduling. Non-converged restorations are excluded and
    counted.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    opts = dict(lbp_options or {})
    per_plane = original.width * original.height * params.q * original.channels
    chunk = int(np.clip(2_000_000 // max(per_plane, 1), 1, n_samples))
    tasks = [(lo, min(lo + chunk, n_samples)) for lo in range(0, n_samples, chunk)]
    work = partial(_mse_batch_samples, original=original, params=params, seed=seed, lbp_options=opts)
    workers = resolve_workers(n_workers)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(work, tasks))
    else:
        raw = [work(t) for t in tasks]
    results = [r for group in raw for r in group]
    vals = np.array([v for v, ok in results if ok])
    n_excluded = sum(1 for _, ok in results if not ok)
    if len(vals) == 0:
        raise RuntimeError("every restoration failed to converge")
    stats = summarize(vals, n_excluded)
    if return_samples:
        return stats, vals
    return stats


# ---------------------------------------------------------------------------
# Analytic average MSE
# ---------------------------------------------------------------------------


def argmax_intervals(lam: np.ndarray, sigma2: float, q: int):
    """Decompose the h axis by the argmax of -(S-h)^2/(2 s2) + lam[S].

    Scores are affine in h after dropping the common -h^2 term, with
    slopes S/sigma2 strictly increasing in S, so the argmax regions are
    ordered intervals. Returns (states, boundaries): state[t] wins on
    (boundaries[t-1], boundaries[t]) with implicit -inf/+inf at the
    ends. Adding a constant to lam leaves the result unchanged.
    """
    slopes = np.arange(q) / sigma2
    intercepts = lam - np.arange(q) ** 2 / (2.0 * sigma2)

    def cross(a, b):
        # h where line b overtakes line a (slope[b] > slope[a])
        return (intercepts[a] - intercepts[b]) / (slopes[b] - slopes[a])

    hull = [0]
    brk: list[float] = []
    for s in range(1, q):
        while True:
            x = cross(hull[-1], s)
            if brk and x <= brk[-1]:
                hull.pop()
                brk.pop()
            else:
                hull.append(s)
                brk.append(x)
                break
    return np.array(hull), np.array(brk)


def _gauss_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def decision_error_integral(intensity: float, lam: np.ndarray, sigma2: float, q: int) -> float:
    """E_h[(I - r(h))^2] for h ~ N(I, sigma2), exactly per interval."""
    states, brk = argmax_intervals(lam, sigma2, q)
    sd = math.sqrt(sigma2)
    edges = [-math.inf, *((b - intensity) / sd for b in brk), math.inf]
    total = 0.0
    for t, s in enumerate(states):
        p = _gauss_cdf(edges[t + 1]) - _gauss_cdf(edges[t])
        total += (intensity - s) ** 2 * p
    return total


def _dav_channel(i2d: np.ndarray, params: RestoreParams, rlbp_options: dict):
    model = posterior_model(i2d.shape[1], i2d.shape[0], params)
    model = MrfModel(
        graph=model.graph,
        states=model.states,
        unary=model.unary,
        pair=model.pair,
        beta=model.beta,
        fields=FieldDistribution.gaussian(i2d.reshape(-1).astype(float), params.sigma2),
    )
    state, report = run_rlbp(model, None, **rlbp_options)
    flat = i2d.reshape(-1)
    total = sum(
        decision_error_integral(float(flat[i]), state.lam[i], params.sigma2, params.q)
        for i in range(len(flat))
    )
    return total / len(flat), report.converged


def dav_analytic(original: Image, params: RestoreParams, rlbp_options: dict | None = None) -> float:
    """Analytic estimate of the average restoration MSE.

    Raises RuntimeError when the replica-symmetric fixed point does not
    converge, since the result would not be trustworthy.
    """
    opts = dict(rlbp_options or {})
    vals = []
    for i2d in _channel_views(original.pixels):
        val, ok = _dav_channel(i2d, params, opts)
        if not ok:
            raise RuntimeError("replica-symmetric engine did not converge")
        vals.append(val)
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Plain PPM (P3) / PGM (P2) files and test images
# ---------------------------------------------------------------------------


def read_image(path, q: int = 8) -> Image:
    """Read a plain P2/P3 file.

    maxval q-1 is taken as a native q-level image; any other maxval
    (e.g. 255) is quantized with round(v * (q-1) / maxval).
    """
    tokens = []
    for line in Path(path).read_text().splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens:
        raise ValueError("empty image file")
    magic = tokens[0]
    if magic not in ("P2", "P3"):
        raise ValueError(f"unsupported format {magic!r}, expected plain P2 or P3")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:], dtype=np.int64)
    channels = 1 if magic == "P2" else 3
    if len(data) != width * height * channels:
        raise ValueError("pixel count does not match header")
    shape = (height, width) if channels == 1 else (height, width, 3)
    data = data.reshape(shape)
    if maxval != q - 1:
        data = np.rint(data * (q - 1) / maxval).astype(np.int64)
    return Image(pixels=data, q=q)


def write_image(image: Image, path) -> None:
    """Write plain P2 (gray) or P3 (color) with maxval q-1."""
    magic = "P2" if image.channels == 1 else "P3"
    lines = [magic, f"{image.width} {image.height}", str(image.q - 1)]
    flat = image.pixels.reshape(image.height, -1)
    for row in flat:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def synthetic_color_image(width: int = 64, height: int = 64, q: int = 8, seed: int = 7) -> Image:
    """Deterministic piecewise-smooth RGB test image with q levels.

    Low-frequency gradients plus a few hard-edged shapes, loosely
    mimicking the level statistics of small natural photos.
    """
    rng = as_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(float)
    y /= max(height - 1, 1)
    x /= max(width - 1, 1)
    base = [
        0.55 + 0.35 * np.sin(2.1 * x + 0.8) * np.cos(1.7 * y),
        0.45 + 0.4 * (x - y) / 2.0 + 0.15 * np.sin(3.0 * y),
        0.5 + 0.3 * np.cos(2.5 * x) * np.sin(2.2 * y + 0.4),
    ]
    shapes = np.zeros((height, width))
    for _ in range(6):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        r = rng.uniform(0.08, 0.22)
        level = rng.uniform(-0.45, 0.45)
        mask = (y - cy) ** 2 + (x - cx) ** 2 < r**2
        shapes[mask] = level
    planes = []
    for c, b in enumerate(base):
        v = b + shapes * (0.6 + 0.2 * c)
        planes.append(np.clip(np.rint(v * (q - 1)), 0, q - 1))
    return Image(pixels=np.stack(planes, axis=2).astype(np.int64), q=q)


def load_sample_image() -> Image:
    """The bundled 64x64 3-bit color image used by demos and tests."""
    ref = resources.files("rfbp").joinpath("data/sample_rgb_64.ppm")
    with resources.as_file(ref) as path:
        return read_image(path, q=8)
