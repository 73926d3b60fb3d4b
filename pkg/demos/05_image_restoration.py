"""Bayesian image restoration and its analytic error forecast.

Degrades the bundled 3-bit color image with Gaussian noise, restores it
by maximum-posterior-marginal estimation, and compares the empirical
restoration error with the analytic average-error estimate that needs
no sampling at all. Writes degraded.ppm and restored.ppm next to this
script's working directory.
"""

import numpy as np

from rfbp.restore import (
    Image,
    RestoreParams,
    dav_analytic,
    degrade,
    load_sample_image,
    mse,
    mse_mc_average,
    restore_mpm,
    write_image,
)

image = load_sample_image()
params = RestoreParams(alpha=0.4, sigma2=0.25, xi_kind="quadratic")

degraded = degrade(image, params.sigma2, seed=3)
restored = restore_mpm(degraded, params, dict(tol=1e-7, damping=0.0))
rounded = Image(pixels=np.clip(np.rint(degraded.values), 0, 7).astype(int), q=8)
write_image(rounded, "degraded.ppm")
write_image(restored, "restored.ppm")

print("single realization (alpha = 0.4, sigma = 0.5):")
print(f"  error of plain rounding:  {mse(image, rounded):.4f}")
print(f"  error after restoration:  {mse(image, restored):.4f}")
print("  wrote degraded.ppm and restored.ppm")
print()

print("average error versus smoothing strength (sigma = 0.5):")
print("alpha   analytic    sampled(150)  stderr")
for alpha in (0.0, 0.2, 0.4, 0.8):
    p = RestoreParams(alpha=alpha, sigma2=0.25, xi_kind="quadratic")
    d_av = dav_analytic(image, p, dict(tol=1e-10))
    stats = mse_mc_average(image, p, n_samples=150, seed=5, lbp_options=dict(tol=1e-5, damping=0.0))
    print(f"{alpha:5.1f}   {d_av:.6f}    {stats.mean:.6f}    {stats.std_error:.1e}")
print()
print("the analytic column forecasts the sampled one to about a percent")
print("without generating a single degraded image")
