# Variance amplification through fully connected layers and nonlinearities.
#
# Run:  python demos/02_variance_rates.py   (about 15 s)

import numpy as np

from lcwnet import diagnostics as diag
from lcwnet.linalg import Rng

rng = Rng(1)
N = 1_000_000

# Forward: for zero-sum w and inputs with mean gamma * 1 and covariance sigma^2 I,
# z = w . a has mean 0 and variance sigma^2 ||w||^2, whatever gamma is.

w = diag.random_lcw_rows(64, 3, rng)
v = diag.verify_prop4(w, gamma=0.5, sigma=1.0, n_samples=N, rng=rng)
print("V(z) / (sigma^2 ||w||^2) for three zero-sum rows:",
      np.round(v.observed["variance_ratio"], 4))

# Scaling w by kappa scales that variance by kappa^2.

v = diag.verify_rescaling(w[0], 3.0, 0.5, 1.0, N, rng)
print(f"variance ratio after scaling by 3: {v.observed:.3f} (expect 9)")

# Backward: the gradient reaching input j has variance sigma^2 ||column j||^2.
# Summed over a square matrix, rows and columns carry the same energy, so forward and
# backward gains agree on average.

W = rng.normal(0.0, 1.0, (64, 64))
v = diag.verify_prop5(W, 1.0, N, rng)
print(f"backward ratios lie in [{v.observed['min_ratio']:.4f}, {v.observed['max_ratio']:.4f}]")
rows, cols = diag.row_column_energy(W)
print(f"sum of squared row norms {rows:.6f}, of squared column norms {cols:.6f}")

# Nonlinearities. For ReLU with z ~ N(0, s^2) the forward variance ratio is
# (1 - 1/pi) / 2 and the backward one is 1/2, independent of s.

est = diag.measure_phi("relu", 1.0, N, rng)
print(f"\nReLU: forward {est.phi_fw:.4f} (theory {(1 - 1 / np.pi) / 2:.4f}), "
      f"backward {est.phi_bw:.4f} (theory 0.5)")

# Sigmoid has no closed form. Its slope is at most 1/4, so both variance ratios are at
# most 1/16. The reference table (0.236, 0.237), (0.208, 0.211), (0.157, 0.170)
# for s = 0.5, 1, 2 matches the square roots of these ratios.

print("\nsigmoid      variance ratios      std ratios        table")
for s, ref in diag.SIGMOID_GAIN_TABLE.items():
    e = diag.measure_phi("sigmoid", s, N, rng)
    print(f"  s = {s:<4}  ({e.phi_fw:.4f}, {e.phi_bw:.4f})   ({e.gain_fw:.4f}, {e.gain_bw:.4f})"
          f"   {ref}")
