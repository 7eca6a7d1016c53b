# Spiked covariance model Sigma = lam u u' + I.
#
# For each trial: draw n samples, run the posterior chain, and compare the
# plugin at the Bayes estimate, the extended plugin N(0, E[Sigma | x]) and
# the full mixture of plugins.  The three risks are layered, and the
# extended plugin stores one l x l matrix instead of every draw.

from bayesext.risk import TrialConfig, benchmark_eval, run_spiked_risk
from bayesext.spiked import SamplerConfig

cfg = TrialConfig("spiked", 20, 40, seed=0, l=5, sampler=SamplerConfig.for_dimension(5), workers=4)
for est in run_spiked_risk(cfg, [0.5, 1.0, 4.0]):
    parts = ", ".join(f"{n} {m:.4f}" for n, m in zip(est.names, est.mean))
    g, se = est.diff("extended-plugin", "mixture")
    print(f"lam={est.meta['lambda']:g}: {parts}  (extended - mixture {g:.4f} +- {se:.4f})")

rep = benchmark_eval(l=40, draws=1000, points=500, repeats=3)
print(f"l=40, 1000 draws: mixture is {rep.time_ratio:.0f}x slower and {rep.size_ratio:.0f}x larger")
