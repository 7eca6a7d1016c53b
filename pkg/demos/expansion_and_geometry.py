# Geometry of the circle model and the first-order expansion of the
# posterior mean of eta.
#
# The circle sits in the 2-d Gaussian mean family with curvature 1, so the
# posterior mean is pulled inward by about 1/(2n) along the normal.  The
# expansion captures this; its error times n shrinks like 1/n.

import numpy as np

from bayesext.circle import CircleData, fisher_circle_model
from bayesext.geometry import embedding_curvature, geometry_at, optimal_beta, risk_improvement
from bayesext.risk import verify_expansions

model = fisher_circle_model()
rep = geometry_at(model, [0.4])
print("Fisher metric", rep.g.ravel(), " skewness", rep.skew.ravel())
print("embedding curvature", embedding_curvature(model, [0.4]).h.ravel())
print("optimal orthogonal shift", optimal_beta(model, [0.4]))
print("risk improvement at n=10", risk_improvement(model, [0.4], 10), "= 1/800")

for row in verify_expansions([25, 50, 100, 200, 400, 800]):
    print(f"n={row.n:4d}  n*|exact - expansion| = {row.expansion_gap_times_n:.3e}  "
          f"orthogonality residual {row.orthogonality_residual:.1e}")

