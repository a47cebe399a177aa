"""Independent oracles shared by the test modules.

These deliberately avoid the library's own helpers so that a bug in, say,
``gradcheck.numeric_grad`` cannot hide a bug in a backward pass.
"""
import numpy as np
import pytest

from lcwnet.linalg import Rng


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def central_diff(f, x, h=1e-5):
    """d f() / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300))


def layer_grad_errors(layer, x, rng, train=True):
    """Relative errors of input and parameter gradients of ``sum(R * layer(x))``."""
    x = x.copy()
    y = layer.forward(x, train=train)
    r = rng.normal(0.0, 1.0, y.shape)

    def f():
        return float(np.sum(r * layer.forward(x, train=train)))

    for p in layer.params():
        p.grad[...] = 0.0
    layer.forward(x, train=train)
    gx = layer.backward(r)
    errs = {"input": rel_err(gx, central_diff(f, x))}
    for p in layer.params():
        errs[p.name] = rel_err(p.grad.copy(), central_diff(f, p.value))
    return errs


@pytest.fixture
def rng():
    return Rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
