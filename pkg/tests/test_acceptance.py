"""Acceptance criteria, one test each, at the stated tolerances and time budgets.

Every test prints a ``PASS``/``FAIL`` line; the lines are repeated in the
terminal summary (see ``conftest.py``) so they are visible without ``-s``.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from lcwnet import diagnostics as diag
from lcwnet.config import load_config
from lcwnet.data import to_network_input
from lcwnet.gradcheck import TOLERANCE, gradcheck_suite
from lcwnet.init import minibatch_rescale_init
from lcwnet.lcw import build_basis
from lcwnet.linalg import Rng
from lcwnet.nn import build_mlp
from lcwnet.train import STREAM_SHUFFLE, SGDState, load_data, prepare_network, sgd_step, train

CONFIGS = Path(__file__).parents[1] / "configs"
N = 1_000_000
RESULTS: list[str] = []


def report(cid, title, ok, detail, elapsed, budget=None):
    within = budget is None or elapsed < budget
    line = (f"{'PASS' if ok and within else 'FAIL'}  criterion {cid:<3} {title}: {detail}"
            f"  [{elapsed:.2f} s" + (f" / budget {budget:g} s]" if budget else "]"))
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert within, f"criterion {cid} exceeded its {budget} s budget ({elapsed:.2f} s)"


# 1 -------------------------------------------------------------------------

def test_criterion_01_basis():
    t = time.perf_counter()
    build_basis.cache_clear()
    worst = 0.0
    for m in (2, 3, 4, 8, 16, 64, 256, 512):
        b = build_basis(m).basis
        worst = max(worst, np.linalg.norm(b.T @ b - np.eye(m - 1)), np.linalg.norm(np.ones(m) @ b))
    report(1, "zero-sum orthonormal basis", worst < 1e-10, f"worst residual {worst:.2e} (< 1e-10)",
           time.perf_counter() - t, 5)


# 2, 3 ----------------------------------------------------------------------

def _shift_regime():
    r = Rng(2024)
    W = r.uniform(-1, 1, (100, 100))
    A = r.uniform(0, 1, (100, 100))
    return W, A


def test_criterion_02_shift_prediction():
    t = time.perf_counter()
    W, A = _shift_regime()
    predicted = diag.predicted_shift_constant_mean(W, 0.5)
    rep = diag.measure_shift(W, A, np.full(100, 0.5))
    hits = int((np.abs(rep.empirical - predicted) <= 4 * rep.stderr).sum())
    report(2, "row means match |g| sqrt(m) ||w|| cos(theta)", hits >= 99,
           f"{hits}/100 rows within 4 SE (need >= 99)", time.perf_counter() - t, 1)


def test_criterion_03_zero_shift_rows():
    t = time.perf_counter()
    W, A = _shift_regime()
    basis = build_basis(100)
    W_lc = (W @ basis.basis) @ basis.basis.T
    rep = diag.measure_shift(W_lc, A, np.full(100, 0.5))
    z = np.abs(rep.empirical) / rep.stderr
    report(3, "zero-sum rows have no shift", bool((z < 4).all()),
           f"{int((z < 4).sum())}/100 rows with |mean| < 4 SE, max {z.max():.2f} SE",
           time.perf_counter() - t, 1)


# 4 -------------------------------------------------------------------------

def test_criterion_04_variance_propagation():
    t = time.perf_counter()
    r = Rng(4)
    w = diag.random_lcw_rows(64, 1, r)
    fw = float(diag.verify_prop4(w, 0.5, 1.0, N, r).observed["variance_ratio"][0])
    W = r.normal(0, 1, (64, 64))
    bw = diag.verify_prop5(W, 1.0, N, r).details["ratios"]
    kappa = diag.verify_rescaling(w[0], 3.0, 0.5, 1.0, N, r).observed / 9.0
    ok = (0.98 <= fw <= 1.02 and np.all((bw >= 0.98) & (bw <= 1.02)) and abs(kappa - 1) <= 0.02)
    report(4, "forward/backward variance, kappa^2 rescaling", bool(ok),
           f"V(z)/(s^2||w||^2)={fw:.4f}, backward ratios in [{bw.min():.4f}, {bw.max():.4f}], "
           f"kappa ratio/9={kappa:.4f}", time.perf_counter() - t, 30)


# 5 -------------------------------------------------------------------------

def test_criterion_05_eta_equals_xi():
    t = time.perf_counter()
    r = Rng(5)
    worst = 0.0
    for m in (1, 2, 3, 10, 64, 100, 256, 511, 512):
        for _ in range(3):
            rows, cols = diag.row_column_energy(r.normal(0, 1, (m, m)) * r.uniform(0.1, 10, 1)[0])
            worst = max(worst, abs(rows - cols) / rows)
    report(5, "row energy equals column energy", worst < 1e-12,
           f"max relative difference {worst:.2e} (< 1e-12)", time.perf_counter() - t)


# 6 -------------------------------------------------------------------------

def test_criterion_06_relu_rates():
    t = time.perf_counter()
    est = diag.measure_phi("relu", 1.0, N, Rng(6))
    target = (1 - 1 / np.pi) / 2
    ok = abs(est.phi_fw - target) <= 0.005 and abs(est.phi_bw - 0.5) <= 0.005
    report(6, "ReLU variance rates", ok,
           f"phi_fw={est.phi_fw:.4f} (0.3408 +- 0.005), phi_bw={est.phi_bw:.4f} (0.5 +- 0.005)",
           time.perf_counter() - t)


# 7 -------------------------------------------------------------------------

def _sigmoid_estimates():
    r = Rng(7)
    return {s: diag.measure_phi("sigmoid", s, N, r) for s in diag.SIGMOID_GAIN_TABLE}


def test_criterion_07_sigmoid_rates():
    # phi as variance ratios V(a)/V(z) and V(grad z)/V(grad a), compared with the table
    t = time.perf_counter()
    est = _sigmoid_estimates()
    ok, parts = True, []
    for s, ref in diag.SIGMOID_GAIN_TABLE.items():
        e = est[s]
        ok &= abs(e.phi_fw - ref[0]) <= 0.01 and abs(e.phi_bw - ref[1]) <= 0.01
        parts.append(f"s={s}: ({e.phi_fw:.4f}, {e.phi_bw:.4f}) vs {ref}")
    report(7, "sigmoid variance rates vs table", ok, "; ".join(parts), time.perf_counter() - t, 30)


def test_criterion_07b_sigmoid_gains():
    # same table read as standard-deviation ratios
    t = time.perf_counter()
    est = _sigmoid_estimates()
    ok, parts = True, []
    for s, ref in diag.SIGMOID_GAIN_TABLE.items():
        e = est[s]
        ok &= abs(e.gain_fw - ref[0]) <= 0.01 and abs(e.gain_bw - ref[1]) <= 0.01
        parts.append(f"s={s}: ({e.gain_fw:.4f}, {e.gain_bw:.4f}) vs {ref}")
    report("7b", "sigmoid std gains vs table", ok, "; ".join(parts), time.perf_counter() - t, 30)


# 8 -------------------------------------------------------------------------

def test_criterion_08_gradient_check():
    t = time.perf_counter()
    verdicts = gradcheck_suite(range(10))
    worst = max(verdicts, key=lambda v: v.observed)
    report(8, "finite-difference gradients, 10 seeds", all(v.passed for v in verdicts),
           f"{len(verdicts)} cases, worst {worst.name} = {worst.observed:.2e} (< {TOLERANCE:g})",
           time.perf_counter() - t, 30)


# 9 -------------------------------------------------------------------------

def test_criterion_09_vanishing_gradient():
    t = time.perf_counter()
    ratios, var_range = {}, []
    for lcw in (False, True):
        cfg = load_config(CONFIGS / "mlp20_sigmoid_profile.json")
        cfg.model.lcw = lcw
        train_data, _ = load_data(cfg)
        net, order = prepare_network(cfg, train_data, Rng(cfg.seed, STREAM_SHUFFLE))
        probe = train_data.subset(order[:100])
        prof = diag.layer_profile(net, to_network_input(probe.inputs), probe.labels)
        ratios[lcw] = prof.gradient_variance_ratio(1, 19)
        var_range += [z.variance for z in prof.preactivation]
    ok = ratios[False] < 1e-4 and 0.1 <= ratios[True] <= 10 and 0.5 <= min(var_range) \
        and max(var_range) <= 2
    report(9, "gradient variance ratio layer 1 / layer 19", ok,
           f"standard {ratios[False]:.2e} (< 1e-4), lcw {ratios[True]:.3f} (in [0.1, 10]), "
           f"V(z) in [{min(var_range):.4f}, {max(var_range):.4f}]", time.perf_counter() - t, 10)


# 10 ------------------------------------------------------------------------

def test_criterion_10_constraint_preservation():
    t = time.perf_counter()
    cfg = load_config(CONFIGS / "mlp15_sigmoid_lcw.json")
    train_data, _ = load_data(cfg)
    r = Rng(10)
    net = build_mlp(128, 64, 6, 10, lcw=True)
    x_all = to_network_input(train_data.inputs)
    minibatch_rescale_init(net, x_all[:, :128], r)
    params = net.params()
    state = SGDState(params)
    for _ in range(200):
        idx = r.integers(len(train_data), 128)
        net.zero_grad()
        net.loss(x_all[:, idx], train_data.labels[idx])
        net.backward()
        sgd_step(params, state, 0.1, 0.9, 1e-4)
    worst = max(float(np.max(np.abs(l.weight.sum(axis=1)))) for l in net.weighted_layers())
    report(10, "zero-sum rows after 200 SGD steps", worst < 1e-9,
           f"max |sum_j w_ij| = {worst:.2e} (< 1e-9)", time.perf_counter() - t)


# 11, 12 --------------------------------------------------------------------

def _run(name, out):
    cfg = load_config(CONFIGS / name)
    cfg.output_dir = str(out)
    return train(cfg)


@pytest.fixture(scope="module")
def contrast_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("contrast")
    t = time.perf_counter()
    runs = {kind: _run(f"mlp15_sigmoid_{kind}.json", base / kind) for kind in ("plain", "lcw")}
    return runs, base, time.perf_counter() - t


def test_criterion_11_trainability(contrast_runs):
    runs, _, elapsed = contrast_runs
    plain, lcw = runs["plain"].metrics.rows, runs["lcw"].metrics.rows
    plain_acc, lcw_acc = plain[-1].train_accuracy, lcw[-1].train_accuracy
    faster = lcw[-1].train_loss <= plain[-1].train_loss
    ok = abs(plain_acc - 0.1) <= 0.05 and lcw_acc > 0.8 and faster and len(plain) == 30
    report(11, "15-layer sigmoid MLP, plain vs zero-sum", ok,
           f"plain train acc {plain_acc:.4f} (chance 0.1 +- 0.05), lcw train acc {lcw_acc:.4f} "
           f"(> 0.8), final loss plain {plain[-1].train_loss:.3f} / lcw {lcw[-1].train_loss:.3f}",
           elapsed, 300)


def test_criterion_12_determinism(contrast_runs, tmp_path):
    _, base, _ = contrast_runs
    t = time.perf_counter()
    same = []
    for kind in ("plain", "lcw"):
        _run(f"mlp15_sigmoid_{kind}.json", tmp_path / kind)
        same.append((tmp_path / kind / "metrics.csv").read_bytes()
                    == (base / kind / "metrics.csv").read_bytes())
    report(12, "repeat runs give identical metrics CSV", all(same),
           f"byte-identical: plain {same[0]}, lcw {same[1]}", time.perf_counter() - t)
