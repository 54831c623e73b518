"""Draws from the impairment density and compares with the Gamma law.

The density alpha*ln r - r^2/(2 sigma2) around a clean frame gives a
squared radius r^2 ~ Gamma((alpha + M)/2, scale 2 sigma2).  Larger alpha
pushes impaired frames further from the clean one.

Run: python demos/impairment_sampler.py
"""

import numpy as np
from scipy import stats

from augrec.toyworld import sample_impaired_frames

m, sigma2 = 20, 1.0
rng = np.random.default_rng(0)
clean = np.zeros(m)

print(" alpha   mean r^2   expected   KS p-value")
for alpha in (0.0, 1.0, 5.0, 25.0, 100.0):
    r2 = (sample_impaired_frames(clean, alpha, sigma2, 50_000, rng) ** 2).sum(axis=1)
    law = stats.gamma((alpha + m) / 2, scale=2 * sigma2)
    p = stats.kstest(r2, law.cdf).pvalue
    print(f"{alpha:6g} {r2.mean():10.2f} {(alpha + m) * sigma2:10.2f} {p:12.3f}")
