"""Fixed-parameter particle smoothing with a confidence interval.

Repeated independent particle filters give a ratio estimator of a
smoothed expectation together with a CLT interval; here on a Poisson
local-level toy, for the terminal latent level.
"""
import numpy as np

from ismcmc import bootstrap_model, psi_apf_model, laplace_fit, smooth_with_ci
from ismcmc.toys import poisson_local_level

dyn, obs = poisson_local_level(sigma=0.3, horizon=20)
y = np.random.default_rng(0).poisson(1.0, size=20).astype(float)

h = lambda path: float(path[-1, 0])  # terminal level
rng = np.random.default_rng(1)

bsf = bootstrap_model(dyn, obs, y)
est, v_n, ci = smooth_with_ci(bsf, m=200, n_repeats=30, h=h, rng=rng)
print(f"bootstrap:      {est:.4f}  95% CI [{ci[0]:.4f}, {ci[1]:.4f}]")

fit = laplace_fit(dyn, obs, y, init_signal=np.log(np.maximum(y, 0.1)))
apf = psi_apf_model(fit, dyn, obs, y)
est, v_n, ci = smooth_with_ci(apf, m=200, n_repeats=30, h=h, rng=rng)
print(f"twisted filter: {est:.4f}  95% CI [{ci[0]:.4f}, {ci[1]:.4f}]")
