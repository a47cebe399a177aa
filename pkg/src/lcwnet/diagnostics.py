"""Measurements of activation shift and variance amplification.

Monte Carlo checks report a verdict with the expected value, the observed
value and the tolerance; statistical checks use a band of four standard
errors unless stated otherwise.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lcw import build_basis, lift_rows, project_rows
from .linalg import Rng, SummaryStats, summarize
from .nn import BatchNorm, Network, _Weighted, sigmoid

SE_BAND = 4.0
CHUNK = 100_000

# Amplification through a sigmoid for z ~ N(0, s^2), grad ~ N(0, 1), quoted as
# standard-deviation ratios: s -> (std(f(z)) / s, std(f'(z) g)).
SIGMOID_GAIN_TABLE = {0.5: (0.236, 0.237), 1.0: (0.208, 0.211), 2.0: (0.157, 0.170)}
SIGMOID_GAIN_TOL = 0.01
RELU_PHI = ((1.0 - 1.0 / np.pi) / 2.0, 0.5)


@dataclass
class Verdict:
    name: str
    expected: object
    observed: object
    tolerance: object
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def verdicts_json(verdicts: list[Verdict]) -> str:
    return json.dumps({"all_passed": all(v.passed for v in verdicts),
                       "verdicts": [v.to_dict() for v in verdicts]}, indent=2)


def write_csv(path, rows: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            return path
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def family_band(count: int, k: float = SE_BAND) -> float:
    """Band (in standard errors) giving ``count`` simultaneous two-sided checks the
    same total false-failure rate as one check at ``k`` (Bonferroni)."""
    if count <= 1:
        return k
    target = math.erfc(k / math.sqrt(2)) / count
    lo, hi = k, k + 10.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if math.erfc(mid / math.sqrt(2)) > target:
            lo = mid
        else:
            hi = mid
    return hi


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return float(np.pi / 2)  # no direction: treated as orthogonal, zero shift
    return float(np.arccos(np.clip(u @ v / (nu * nv), -1.0, 1.0)))


# --- activation shift ------------------------------------------------------

@dataclass
class ShiftReport:
    predicted: np.ndarray   # per-neuron expected w . a
    empirical: np.ndarray   # per-neuron sample mean of w . a
    stderr: np.ndarray      # standard error of the sample mean
    angles: np.ndarray      # angle between w_i and the mean vector, radians
    norms: np.ndarray       # ||w_i||

    def __len__(self):
        return self.predicted.size

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.predicted - self.empirical)))

    def within(self, k: float = SE_BAND) -> np.ndarray:
        return np.abs(self.empirical - self.predicted) <= k * self.stderr

    def rows(self) -> list[dict]:
        return [
            {"neuron": i, "norm": float(self.norms[i]), "angle": float(self.angles[i]),
             "predicted_mean": float(self.predicted[i]), "empirical_mean": float(self.empirical[i]),
             "stderr": float(self.stderr[i])}
            for i in range(len(self))
        ]


def predicted_shift(w: np.ndarray, mean_vec: np.ndarray) -> np.ndarray:
    """E(w_i . a) = ||w_i|| ||mu|| cos(angle(w_i, mu)), or 0 when ||mu|| = 0."""
    w = np.atleast_2d(w)
    mu_norm = np.linalg.norm(mean_vec)
    if mu_norm == 0:
        return np.zeros(w.shape[0])
    norms = np.linalg.norm(w, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.clip((w @ mean_vec) / (norms * mu_norm), -1.0, 1.0)
    return np.where(norms > 0, norms * mu_norm * np.nan_to_num(cos), 0.0)


def predicted_shift_constant_mean(w: np.ndarray, gamma: float) -> np.ndarray:
    """|gamma| sqrt(m) ||w_i|| cos(theta_i) for mean vector gamma * 1_m.

    theta_i is measured against the direction of ``gamma * 1_m``.
    """
    w = np.atleast_2d(w)
    m = w.shape[1]
    if gamma == 0:
        return np.zeros(w.shape[0])
    direction = np.sign(gamma) * np.ones(m)
    norms = np.linalg.norm(w, axis=1)
    theta = np.array([_angle(row, direction) if n > 0 else 0.0 for row, n in zip(w, norms)])
    return abs(gamma) * np.sqrt(m) * norms * np.cos(theta)


def measure_shift(W, A, mean_vec) -> ShiftReport:
    """Compare per-row sample means of ``W @ A`` (columns of A are samples)
    with the mean predicted from ``mean_vec``, the expected column of A."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    A = np.asarray(A, dtype=np.float64)
    mean_vec = np.asarray(mean_vec, dtype=np.float64)
    if A.ndim != 2 or W.shape[1] != A.shape[0] or mean_vec.shape != (A.shape[0],):
        raise ValueError(f"incompatible shapes W {W.shape}, A {A.shape}, mean {mean_vec.shape}")
    if A.shape[1] < 2:
        raise ValueError("need at least 2 samples (columns of A)")
    Z = W @ A
    n = A.shape[1]
    empirical = Z.mean(axis=1)
    stderr = Z.std(axis=1, ddof=1) / np.sqrt(n)
    angles = np.array([_angle(w, mean_vec) for w in W])
    return ShiftReport(predicted_shift(W, mean_vec), empirical, stderr, angles,
                       np.linalg.norm(W, axis=1))


@dataclass
class ShiftDemo:
    W: np.ndarray
    A: np.ndarray
    Z: np.ndarray
    report: ShiftReport
    lcw_report: ShiftReport

    def grid_rows(self) -> list[dict]:
        rows = []
        for name, mat in (("W", self.W), ("A", self.A), ("Z", self.Z)):
            for i in range(mat.shape[0]):
                for j in range(mat.shape[1]):
                    rows.append({"matrix": name, "row": i, "col": j, "value": float(mat[i, j])})
        return rows

    def mean_rows(self) -> list[dict]:
        rows = []
        for label, rep in (("standard", self.report), ("lcw", self.lcw_report)):
            for r in rep.rows():
                rows.append({"weights": label, **r})
        return rows


def shift_demo(rng: Rng, size: int = 100, gamma: float = 0.5) -> ShiftDemo:
    """Random W ~ U(-1,1), A ~ U(0,1) (so E(a) = 0.5 * 1); rows of Z = W A are
    visibly offset. Also reports the same rows with their mean removed (LCW)."""
    W = rng.uniform(-1.0, 1.0, (size, size))
    A = rng.uniform(0.0, 1.0, (size, size))
    mean_vec = np.full(size, gamma)
    basis = build_basis(size)
    W_lc = lift_rows(project_rows(W, basis), basis)
    return ShiftDemo(W, A, W @ A, measure_shift(W, A, mean_vec), measure_shift(W_lc, A, mean_vec))


# --- variance propagation ---------------------------------------------------

def _moments(total: np.ndarray, total2: np.ndarray, total3: np.ndarray, total4: np.ndarray, n: int):
    """Mean, population variance and standard error of the variance from raw power sums."""
    mean = total / n
    m2 = total2 / n - mean**2
    m4 = total4 / n - 4 * mean * total3 / n + 6 * mean**2 * total2 / n - 3 * mean**4
    se_var = np.sqrt(np.maximum(m4 - m2**2, 0.0) / n)
    return mean, m2, se_var


def _stream_stats(draw, n_samples: int, chunk: int = CHUNK):
    """Accumulate power sums of ``draw(k)`` (features x k) along the sample axis."""
    sums = None
    shift = None
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        x = draw(k)
        if shift is None:
            # centring on a pilot mean keeps the raw power sums well conditioned
            shift = x.mean(axis=1, keepdims=True)
        x = x - shift
        x2 = x * x
        parts = (x.sum(axis=1), x2.sum(axis=1), (x2 * x).sum(axis=1), (x2 * x2).sum(axis=1))
        sums = parts if sums is None else tuple(s + p for s, p in zip(sums, parts))
        done += k
    mean, var, se_var = _moments(*sums, n_samples)
    return mean + shift[:, 0], var, se_var


def _uniform_activations(rng: Rng, m: int, k: int, gamma: float, sigma: float) -> np.ndarray:
    # i.i.d. components with mean gamma and variance sigma^2 (not Gaussian)
    half = sigma * np.sqrt(3.0)
    return rng.uniform(gamma - half, gamma + half, (m, k))


def verify_prop4(w_list, gamma: float, sigma: float, n_samples: int, rng: Rng) -> Verdict:
    """For zero-sum w and a with mean gamma*1, covariance sigma^2 I: E(z)=0, V(z)=sigma^2 ||w||^2."""
    W = np.atleast_2d(np.asarray(w_list, dtype=np.float64))
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    norms2 = (W**2).sum(axis=1)
    if np.any(norms2 == 0):
        raise ValueError("weight vectors must be non-zero")
    m = W.shape[1]
    sums = np.abs(W.sum(axis=1))
    if np.any(sums > 1e-9 * np.sqrt(norms2) * np.sqrt(m)):
        raise ValueError("weight vectors must sum to zero")
    mean, var, se_var = _stream_stats(
        lambda k: W @ _uniform_activations(rng, m, k, gamma, sigma), n_samples)
    expected_var = sigma**2 * norms2
    se_mean = np.sqrt(var / n_samples)
    ratio = var / expected_var
    band = family_band(2 * W.shape[0])
    ok = (np.abs(mean) <= band * se_mean) & (np.abs(var - expected_var) <= band * se_var)
    return Verdict("forward_variance", {"mean": 0.0, "variance_ratio": 1.0},
                   {"mean": mean, "variance_ratio": ratio}, f"{band:.3g} standard errors",
                   bool(ok.all()),
                   {"n_samples": n_samples, "m": m, "gamma": gamma, "sigma": sigma,
                    "mean_stderr": se_mean, "variance_ratio_stderr": se_var / expected_var})


def verify_rescaling(w, kappa: float, gamma: float, sigma: float, n_samples: int, rng: Rng) -> Verdict:
    """V((kappa w) . a) / V(w . a) = kappa^2, estimated from independent draws."""
    w = np.asarray(w, dtype=np.float64)
    m = w.size
    W = np.vstack([w])
    _, v1, se1 = _stream_stats(lambda k: W @ _uniform_activations(rng, m, k, gamma, sigma), n_samples)
    _, v2, se2 = _stream_stats(lambda k: (kappa * W) @ _uniform_activations(rng, m, k, gamma, sigma),
                               n_samples)
    ratio = float(v2[0] / v1[0])
    rel_se = float(np.hypot(se1[0] / v1[0], se2[0] / v2[0]))
    expected = kappa**2
    passed = abs(ratio / expected - 1.0) <= SE_BAND * rel_se
    return Verdict("kappa_rescaling", expected, ratio, f"{SE_BAND} standard errors", passed,
                   {"kappa": kappa, "relative_deviation": ratio / expected - 1.0,
                    "relative_stderr": rel_se})


def verify_prop5(W, sigma: float, n_samples: int, rng: Rng) -> Verdict:
    """For grad_z with zero mean, covariance sigma^2 I: V((W^T grad_z)_j) = sigma^2 ||column_j||^2."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    WT = W.T
    mean, var, se_var = _stream_stats(lambda k: WT @ rng.normal(0.0, sigma, (W.shape[0], k)),
                                      n_samples)
    expected = sigma**2 * (W**2).sum(axis=0)
    se_mean = np.sqrt(var / n_samples)
    band = family_band(2 * W.shape[1])
    ok = (np.abs(mean) <= band * se_mean) & (np.abs(var - expected) <= band * se_var)
    ratio = var / expected
    return Verdict("backward_variance", 1.0,
                   {"min_ratio": float(ratio.min()), "max_ratio": float(ratio.max())},
                   f"{band:.3g} standard errors", bool(ok.all()),
                   {"n_samples": n_samples, "sigma": sigma, "ratios": ratio,
                    "max_relative_deviation": float(np.max(np.abs(ratio - 1.0)))})


def row_column_energy(W) -> tuple[float, float]:
    """(sum of squared row norms, sum of squared column norms)."""
    W = np.asarray(W, dtype=np.float64)
    rows = np.sum(np.sum(W * W, axis=1))
    cols = np.sum(np.sum(W * W, axis=0))
    return float(rows), float(cols)


def verify_eta_xi(W) -> Verdict:
    """Square W: mean squared row norm (forward gain) equals mean squared column norm."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"need a square matrix, got {W.shape}")
    rows, cols = row_column_energy(W)
    m = W.shape[0]
    rel = abs(rows - cols) / max(rows, np.finfo(float).tiny)
    return Verdict("eta_equals_xi", rows / m, cols / m, 1e-12, rel < 1e-12,
                   {"relative_difference": rel, "size": m})


# --- nonlinearities ---------------------------------------------------------

@dataclass
class PhiEstimate:
    activation: str
    sigma_z: float
    phi_fw: float        # V(f(z)) / sigma_z^2
    phi_bw: float        # V(f'(z) g) / V(g)
    n_samples: int
    se_fw: float
    se_bw: float

    @property
    def gain_fw(self) -> float:
        """Forward amplification as a standard-deviation ratio."""
        return float(np.sqrt(self.phi_fw))

    @property
    def gain_bw(self) -> float:
        return float(np.sqrt(self.phi_bw))


def _activation_pair(kind: str):
    if kind == "relu":
        return (lambda z: np.maximum(z, 0.0)), (lambda z: (z > 0).astype(np.float64))
    if kind == "sigmoid":
        def d(z):
            s = sigmoid(z)
            return s * (1.0 - s)
        return sigmoid, d
    if kind == "identity":
        return (lambda z: z), (lambda z: np.ones_like(z))
    raise ValueError(f"unknown activation {kind!r}")


def measure_phi(activation: str, sigma_z: float, n_samples: int, rng: Rng) -> PhiEstimate:
    """Monte Carlo forward/backward variance ratios for z ~ N(0, sigma_z^2), g ~ N(0, 1)."""
    if sigma_z <= 0:
        raise ValueError("sigma_z must be positive")
    if n_samples < 100_000:
        raise ValueError(f"need at least 1e5 samples, got {n_samples}")
    f, df = _activation_pair(activation)

    def draw(k):
        z = rng.normal(0.0, sigma_z, k)
        g = rng.normal(0.0, 1.0, k)
        return np.vstack([f(z), df(z) * g])

    _, var, se_var = _stream_stats(draw, n_samples)
    s2 = sigma_z**2
    return PhiEstimate(activation, float(sigma_z), float(var[0] / s2), float(var[1]),
                       n_samples, float(se_var[0] / s2), float(se_var[1]))


def verify_relu_phi(n_samples: int, rng: Rng, sigma_z: float = 1.0) -> Verdict:
    est = measure_phi("relu", sigma_z, n_samples, rng)
    band = family_band(2)
    ok = (abs(est.phi_fw - RELU_PHI[0]) <= band * est.se_fw
          and abs(est.phi_bw - RELU_PHI[1]) <= band * est.se_bw)
    return Verdict("relu_phi", list(RELU_PHI), [est.phi_fw, est.phi_bw],
                   f"{band:.3g} standard errors", ok,
                   {"sigma_z": sigma_z, "se": [est.se_fw, est.se_bw], "n_samples": n_samples})


def verify_sigmoid_table(n_samples: int, rng: Rng) -> list[Verdict]:
    """Sigmoid amplification against the reference table (std ratios, +-0.01)."""
    out = []
    for s, ref in SIGMOID_GAIN_TABLE.items():
        est = measure_phi("sigmoid", s, n_samples, rng)
        gains = (est.gain_fw, est.gain_bw)
        ok = all(abs(g - r) <= SIGMOID_GAIN_TOL for g, r in zip(gains, ref))
        out.append(Verdict(f"sigmoid_gain_sigma_{s}", list(ref), list(gains), SIGMOID_GAIN_TOL, ok,
                           {"phi_fw": est.phi_fw, "phi_bw": est.phi_bw, "n_samples": n_samples}))
    return out


def verify_identity_phi(n_samples: int, rng: Rng) -> Verdict:
    est = measure_phi("identity", 1.0, n_samples, rng)
    band = family_band(2)
    ok = abs(est.phi_fw - 1) <= band * est.se_fw and abs(est.phi_bw - 1) <= band * est.se_bw
    return Verdict("identity_phi", [1.0, 1.0], [est.phi_fw, est.phi_bw],
                   f"{band:.3g} standard errors", ok)


# --- network profiles -------------------------------------------------------

@dataclass
class LayerProfile:
    preactivation: list[SummaryStats]
    gradient: list[SummaryStats]

    def __len__(self):
        return len(self.preactivation)

    def gradient_variance_ratio(self, first: int, last: int) -> float:
        """V(grad z^first) / V(grad z^last), 1-based layer indices."""
        return self.gradient[first - 1].variance / self.gradient[last - 1].variance

    def rows(self) -> list[dict]:
        rows = []
        for i, (z, g) in enumerate(zip(self.preactivation, self.gradient), start=1):
            for quantity, stats in (("z", z), ("grad_z", g)):
                for stat, value in stats.as_dict().items():
                    rows.append({"layer": i, "quantity": quantity, "stat": stat, "value": value})
        return rows


def _batch_size(x: np.ndarray) -> int:
    return x.shape[1] if x.ndim == 2 else x.shape[0]


def _frozen_bn(net: Network):
    return [(l, l.running_mean.copy(), l.running_var.copy())
            for l in net.layers if isinstance(l, BatchNorm)]


def layer_profile(net: Network, x, labels=None, rng: Rng | None = None) -> LayerProfile:
    """One forward/backward pass on a probe batch; statistics of z^l and grad z^l.

    Without labels, uniformly random labels are drawn from ``rng``. Batch norm
    uses batch statistics; its running statistics are left unchanged.
    Parameter gradients are zeroed before and after.
    """
    x = np.asarray(x, dtype=np.float64)
    n = _batch_size(x)
    if n == 0:
        raise ValueError("probe batch is empty")
    if labels is None:
        rng = rng if rng is not None else Rng(0)
        classes = net.weighted_layers()[-1].out_features
        labels = rng.integers(classes, n)
    saved = _frozen_bn(net)
    net.zero_grad()
    net.loss(x, labels, train=True)
    net.backward()
    layers = net.weighted_layers()
    profile = LayerProfile([summarize(l.out) for l in layers], [summarize(l.grad_out) for l in layers])
    net.zero_grad()
    for layer, mean, var in saved:
        layer.running_mean, layer.running_var = mean, var
    return profile


def hidden_activations(net: Network, x) -> list[np.ndarray]:
    """a^l for l = 1..L-1: the input reaching weighted layer l+1, as (units, batch)."""
    saved = _frozen_bn(net)
    h = np.asarray(x, dtype=np.float64)
    weighted_seen = 0
    acts = []
    for layer in net.layers:
        if isinstance(layer, _Weighted):
            if weighted_seen > 0:
                if h.ndim != 2:
                    raise ValueError("activation quantiles need fully connected layers")
                acts.append(h)
            weighted_seen += 1
        h = layer.forward(h, train=True)
    for layer, mean, var in saved:
        layer.running_mean, layer.running_var = mean, var
    return acts


def activation_quantiles(net: Network, x, layer_indices, neuron_count: int) -> list[dict]:
    """Per-neuron summary of a_i^l over the batch for the first ``neuron_count`` units."""
    acts = hidden_activations(net, x)
    rows = []
    for l in layer_indices:
        if not 1 <= l <= len(acts):
            raise IndexError(f"layer {l} out of range 1..{len(acts)}")
        a = acts[l - 1]
        if not 1 <= neuron_count <= a.shape[0]:
            raise IndexError(f"neuron_count {neuron_count} out of range 1..{a.shape[0]}")
        for i in range(neuron_count):
            stats = summarize(a[i])
            for stat, value in stats.as_dict().items():
                rows.append({"layer": l, "neuron": i, "stat": stat, "value": value})
    return rows


def quantile_table(rows: list[dict]) -> dict[tuple[int, int], dict[str, float]]:
    """Pivot activation_quantiles rows to {(layer, neuron): {stat: value}}."""
    out: dict[tuple[int, int], dict[str, float]] = {}
    for r in rows:
        out.setdefault((r["layer"], r["neuron"]), {})[r["stat"]] = r["value"]
    return out


# --- full verification run --------------------------------------------------

def random_lcw_rows(m: int, count: int, rng: Rng) -> np.ndarray:
    return lift_rows(rng.normal(0.0, 1.0, (count, m - 1)), build_basis(m))


def verify_all(seed: int = 0, n_samples: int = 1_000_000) -> list[Verdict]:
    """Every activation-shift and variance-amplification check."""
    verdicts = []

    rng = Rng(seed, 10)
    W = rng.normal(0.0, 1.0, (20, 16))
    p1 = predicted_shift_constant_mean(W, 0.5)
    p2 = predicted_shift(W, np.full(16, 0.5))
    err = float(np.max(np.abs(p1 - p2)))
    verdicts.append(Verdict("shift_formulas_agree", 0.0, err, 1e-10, err < 1e-10))

    demo = shift_demo(Rng(seed, 11))
    hits = int(demo.report.within().sum())
    verdicts.append(Verdict("shift_rows", ">= 99 of 100 rows", hits, f"{SE_BAND} SE",
                            hits >= 99, {"max_abs_error": demo.report.max_abs_error}))
    z = np.abs(demo.lcw_report.empirical) / demo.lcw_report.stderr
    verdicts.append(Verdict("zero_sum_rows_no_shift", "all 100 rows", int((z < SE_BAND).sum()),
                            f"{SE_BAND} SE", bool((z < SE_BAND).all()),
                            {"max_predicted": float(np.max(np.abs(demo.lcw_report.predicted)))}))

    rng = Rng(seed, 12)
    w = random_lcw_rows(64, 3, rng)
    verdicts.append(verify_prop4(w, 0.5, 1.0, n_samples, rng))
    verdicts.append(verify_rescaling(w[0], 3.0, 0.5, 1.0, n_samples, rng))

    rng = Rng(seed, 13)
    verdicts.append(verify_prop5(rng.normal(0.0, 1.0, (64, 64)), 1.0, n_samples, rng))
    for m in (8, 64, 512):
        verdicts.append(verify_eta_xi(rng.normal(0.0, 1.0, (m, m))))

    rng = Rng(seed, 14)
    verdicts.append(verify_relu_phi(n_samples, rng))
    verdicts.extend(verify_sigmoid_table(n_samples, rng))
    verdicts.append(verify_identity_phi(n_samples, rng))
    return verdicts
