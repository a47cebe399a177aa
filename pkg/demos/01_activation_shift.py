# Activation shift: why a random layer fed positive inputs produces row-wise offsets,
# and how zero-sum weight rows remove them.
#
# Run:  python demos/01_activation_shift.py

import numpy as np

from lcwnet.diagnostics import predicted_shift_constant_mean, shift_demo
from lcwnet.linalg import Rng

# Draw W ~ U(-1, 1) and A ~ U(0, 1), both 100 x 100. Every column of A has mean
# vector 0.5 * 1, so each row of Z = W A has a mean that depends only on how
# strongly that row of W points along the all-ones direction.

demo = shift_demo(Rng(0), size=100, gamma=0.5)
rep = demo.report

print("first five rows of Z = W A: predicted mean, empirical mean, standard error")
for i in range(5):
    print(f"  row {i}: {rep.predicted[i]:+8.3f}  {rep.empirical[i]:+8.3f}  {rep.stderr[i]:.3f}")

# The prediction is |gamma| sqrt(m) ||w_i|| cos(theta_i), with theta_i the angle between
# w_i and the all-ones vector. It agrees with the sample means row by row.

print(f"\nrows within 4 standard errors: {int(rep.within().sum())}/100")
same = np.allclose(predicted_shift_constant_mean(demo.W, 0.5), rep.predicted)
print(f"constant-mean formula equals the general formula: {same}")

# Because the offsets differ from row to row, an image of Z shows horizontal stripes.
# A compact way to see them: the spread of the row means is much larger than the
# spread within a row.

row_means = demo.Z.mean(axis=1)
print(f"\nspread of row means:          {row_means.std():.3f}")
print(f"typical within-row std:       {demo.Z.std(axis=1).mean():.3f}")

# Removing each row's mean puts it in the zero-sum subspace. The same inputs now give
# row means that are indistinguishable from zero.

lcw = demo.lcw_report
z_scores = np.abs(lcw.empirical) / lcw.stderr
print(f"\nzero-sum rows: spread of row means {lcw.empirical.std():.3f}, "
      f"largest |mean| / SE = {z_scores.max():.2f}")

# A coarse text rendering of the first 20 x 40 block of Z, before and after.

def render(z, rows=20, cols=40):
    chars = " .:-=+*#%@"
    block = z[:rows, :cols]
    scaled = (block - block.min()) / (np.ptp(block) + 1e-12)
    return "\n".join("".join(chars[int(v * (len(chars) - 1))] for v in line) for line in scaled)

print("\nZ = W A (standard rows):")
print(render(demo.Z))
W_lc = demo.W - demo.W.mean(axis=1, keepdims=True)
print("\nZ with zero-sum rows:")
print(render(W_lc @ demo.A))
