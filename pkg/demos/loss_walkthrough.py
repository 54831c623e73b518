"""How the three loss terms react to a single doubtful frame.

Run: python demos/loss_walkthrough.py
"""

import numpy as np

from augrec import HyperParams
from augrec.loss import severity_weights, total_loss

hp = HyperParams()
rng = np.random.default_rng(0)

# Five reference frames.  The classifier trusts all but frame 2.
y_star = rng.normal(size=(5, 20))
p_star = np.array([0.99, 0.97, 0.05, 0.98, 0.99])
print("severity weights:", np.array2string(severity_weights(p_star, hp.lambda_), precision=3))

# A generator that copies the reference exactly.  Reconstruction is perfect,
# but frame 2 sits at distance ~0 from a frame the classifier doubts, so
# the regulariser charges -w ln(eps) there.
copy = total_loss(y_star, y_star.copy(), p_star, p_gen=p_star, hp=hp)

# A generator that moves frame 2 away and makes it recognisable.
moved = y_star.copy()
moved[2] += 0.05
p_gen = p_star.copy()
p_gen[2] = 0.9
repaired = total_loss(y_star, moved, p_star, p_gen=p_gen, hp=hp)

for name, b in (("copy", copy), ("repaired", repaired)):
    print(f"{name:9s} rec={b.l_rec:8.3f} reg={b.l_reg:8.3f} consis={b.l_consis:7.3f} total={b.l_total:8.3f}")

# beta = gamma = 0 falls back to plain reconstruction.
plain = total_loss(y_star, moved, p_star, p_gen=p_gen, hp=HyperParams(beta=0.0, gamma=0.0))
print("reconstruction only:", round(plain.l_total, 3))
