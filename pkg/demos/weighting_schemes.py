"""Comparing weighting schemes and tuning the particle count.

The spread of log U at a representative parameter value drives how many
particles the exact variants need: the simulation-smoother (SPDK) and
twisted-filter (PSI_APF) schemes get away with a handful, the bootstrap
filter needs hundreds.
"""
import numpy as np

from ismcmc import PoissonTrendModel, RunConfig, pilot_tune_m
from ismcmc.pipeline import _LgssmWeighter

model = PoissonTrendModel()
_z, y = model.simulate([0.1, 0.01], 100, np.random.default_rng(11), z1=[0.0, 0.0])
theta = np.array([0.1, 0.01])

print("sd of log U - log L_a at theta =", theta)
for scheme in ("SPDK", "PSI_APF", "BSF"):
    w = _LgssmWeighter(model_name="poisson-trend", y=y, weighting=scheme, antithetic=True)
    log_la = w.log_la(theta)
    rng = np.random.default_rng(0)
    for m in (10, 50, 200):
        vals = [w.log_lik_estimate(theta, rng, m)[0] - log_la for _ in range(40)]
        print(f"  {scheme:<8} m={m:<4} delta={np.std(vals, ddof=1):.3f}")

cfg = RunConfig(model="poisson-trend", algorithm="IS2", weighting="BSF",
                m=10, n_iters=100, seed=0, data=y)
m_star = pilot_tune_m(cfg, 1.2, theta)
print(f"\npilot tuning: BSF needs m = {m_star} for delta <= 1.2")
