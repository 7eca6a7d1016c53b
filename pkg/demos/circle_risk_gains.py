# Risk gains over the MLE plugin on the Fisher circle model.
#
# Data: n draws from N((cos w, sin w), sigma2 I).  The extended plugin
# shrinks the MLE mean toward the origin by the Bessel ratio I1/I0; the
# Bayesian predictive mixes over the posterior of w.  Both beat the MLE
# plugin by O(1/n^2), with leading constants sigma2/(8n^2) and
# (sigma2+2)/(8n^2).  The ratio printed last should approach 1 as n grows.

import numpy as np

from bayesext.circle import CircleData, extended_plugin_mean
from bayesext.geometry import projection_angle_cos
from bayesext.risk import TrialConfig, circle_constant_ratios, run_circle_risk

data = CircleData(25, np.array([0.9, 0.2]))
print("sample mean", data.xbar, "-> extended plugin mean", extended_plugin_mean(data))

for sigma2 in (1.0, 4.0):
    for n in (25, 100, 400):
        est = run_circle_risk(TrialConfig("circle", n, 200_000, seed=1, sigma2=sigma2))
        ratios = circle_constant_ratios(est)
        de = est.diff("mle-plugin", "extended-plugin")[0]
        df = est.diff("mle-plugin", "bayesian-predictive")[0]
        print(f"sigma2={sigma2:g} n={n:4d}  gain/leading: extended {ratios['extended-plugin'][0]:.3f}, "
              f"bayes {ratios['bayesian-predictive'][0]:.3f}  "
              f"cos angle {projection_angle_cos(de, df):.3f} (limit {np.sqrt(sigma2 / (sigma2 + 2)):.3f})")
