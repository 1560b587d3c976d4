"""Central finite-difference gradient oracle shared by the op and model tests."""

import numpy as np

from unitspeak import tensor as T


def rel_err(a, b):
    return np.abs(a - b) / np.maximum.reduce([np.abs(a), np.abs(b), np.ones_like(a)])


def fd_grad(forward, leaf, h=1e-5, indices=None):
    """Central finite differences of the scalar ``forward()`` w.r.t. ``leaf``.

    forward must recompute the loss from leaf.data each call. Returns the
    gradient for the sampled flat ``indices`` (all entries when None).
    """
    flat = leaf.data.reshape(-1)
    indices = list(range(flat.size)) if indices is None else list(indices)
    grads = np.zeros(len(indices))
    for j, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        up = forward()
        flat[i] = orig - h
        down = forward()
        flat[i] = orig
        grads[j] = (up - down) / (2.0 * h)
    return grads


def check_grads(build_loss, leaves, h=1e-5, tol=1e-4, max_samples=40, rng=None):
    """Assert autodiff grads of ``build_loss()`` match finite differences.

    build_loss constructs the graph from the leaves' current data and returns
    the scalar loss tensor. Large leaves are spot-checked on sampled entries.
    """
    rng = rng or np.random.default_rng(0)
    for leaf in leaves:
        leaf.zero_grad()
    loss = build_loss()
    T.backward(loss)

    def forward():
        with T.no_grad():
            return float(build_loss().data)

    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None, "leaf did not receive a gradient"
        n = leaf.data.size
        if n <= max_samples:
            idx = list(range(n))
        else:
            idx = sorted(rng.choice(n, size=max_samples, replace=False).tolist())
        fd = fd_grad(forward, leaf, h=h, indices=idx)
        ad = leaf.grad.reshape(-1)[idx]
        worst = max(worst, float(rel_err(ad, fd).max()))
    assert worst <= tol, f"max relative error {worst:.3e} > {tol}"
    return worst
