"""Shared fixtures and the finite-difference gradient oracle.

The oracle is the independent route for every gradient assertion in the
suite: it never touches the tape machinery beyond calling backward once,
and recomputes the loss from scratch for each perturbed coordinate.
"""

import numpy as np
import pytest

from metroflow import Tape, backward, synthesize_dataset


def fd_check(forward_fn, params, *, eps=1e-5, rng=None, max_coords=6):
    """Worst relative error between tape gradients and central differences.

    ``forward_fn`` rebuilds the full forward pass from the parameters'
    current values and returns a scalar (1x1) tensor. Gradients are read
    from the leaf ``params`` after one backward call; finite differences
    perturb up to ``max_coords`` coordinates per parameter (all of them
    when the tensor is small enough).

    Only leaf gradients are compared: intermediate grad buffers are not
    guaranteed to survive the backward sweep.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = forward_fn()
    backward(loss, tape)
    grads = [np.array(p.grad) for p in params]

    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.values.reshape(-1)
        if flat.size <= max_coords:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            keep = flat[i]
            flat[i] = keep + eps
            hi = forward_fn().item()
            flat[i] = keep - eps
            lo = forward_fn().item()
            flat[i] = keep
            fd = (hi - lo) / (2.0 * eps)
            tg = g.reshape(-1)[i]
            worst = max(worst, abs(tg - fd) / max(abs(tg), abs(fd), 1e-3))
    return worst


def assert_grads_match(forward_fn, params, *, tol=1e-4, **kw):
    err = fd_check(forward_fn, params, **kw)
    assert err < tol, f"worst gradient error {err:.3e} >= {tol:g}"


@pytest.fixture(scope="session")
def tiny_ds():
    """8-station single line; smallest thing the generator allows to be
    interesting."""
    return synthesize_dataset(8, 13, 1, seed=3)


@pytest.fixture(scope="session")
def path12_ds():
    # 12-station single path: the over-smoothing geometry (k=10 leaves
    # exactly the two endpoints as neighborhood twins)
    return synthesize_dataset(12, 13, 1, seed=3)


@pytest.fixture(scope="session")
def default_ds():
    """The generator's default scale: 40 stations, 4 lines, 13 years."""
    return synthesize_dataset(40, 13, 4, seed=0)
