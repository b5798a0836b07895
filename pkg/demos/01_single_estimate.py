# One dataset, three estimators.
#
# Draws a sample from the baseline design (n=500, p=600, two active
# propensity and outcome coefficients) and compares the cross-fitted SDR
# estimate with the AIPW and residual-balancing baselines. The true effect is 0.

import numpy as np

from sdrate import ScenarioConfig, SolverConfig, estimate_ate_aipw, estimate_ate_arb, estimate_ate_sdr, simulate
from sdrate._rng import stream

ds, truth = simulate(ScenarioConfig(seed=1))
print("n, p:", ds.n, ds.p, " treated:", ds.arm_sizes()[1])

cfg = SolverConfig()  # penalties 2 and 4 times sqrt(log p / b)
est, nuis = estimate_ate_sdr(ds, cfg, rng=stream(1, 1))
print(f"SDR   tau = {est.tau_hat:+.3f}  95% CI ({est.ci[0]:+.3f}, {est.ci[1]:+.3f})")

# the variance splits into the contrast part and one weighted residual part per arm
print(f"      V = {est.omega_hat:.2f} + {est.v0_hat:.2f} + {est.v1_hat:.2f} = {est.v_hat:.2f}")

aipw = estimate_ate_aipw(ds, cfg, rng=stream(1, 2))
arb = estimate_ate_arb(ds, cfg)
for b in (aipw, arb):
    print(f"{b.method.upper():5s} tau = {b.tau_hat:+.3f}  95% CI ({b.ci[0]:+.3f}, {b.ci[1]:+.3f})")

# each arm/fold propensity fit balances its fold up to the penalty level
d = est.diagnostics
for arm in ("0", "1"):
    for f in ("A", "B"):
        print(f"arm {arm} fold {f}: balance {d['balance_inf_norm'][arm][f]:.3f}"
              f" <= lambda {d['lam_theta'][arm][f]:.3f},"
              f" nonzero theta {np.count_nonzero(nuis.propensity[int(arm), f].theta)}")
