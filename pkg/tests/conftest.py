"""Shared test utilities: the central finite-difference gradient oracle."""

import numpy as np
import pytest

from lipseq.gradcore import Tape, backward


def finite_difference_check(build_loss, tensors, h=1e-5, tol=1e-4,
                            max_elements=40, seed=0):
    """Check analytic gradients against central finite differences.

    build_loss(tape) must rebuild the scalar loss from the given float64
    Tensors each call. For every checked element the relative error
    |analytic - fd| / max(|analytic|, |fd|, 1) must stay below tol.
    """
    tape = Tape()
    loss = build_loss(tape)
    assert loss.data.size == 1
    backward(tape, loss)
    analytic = {id(t): np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        assert t.data.dtype == np.float64, "finite differences are pinned to 64-bit"
        flat = t.data.reshape(-1)
        n = flat.size
        idxs = np.arange(n) if n <= max_elements else \
            rng.choice(n, size=max_elements, replace=False)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + h
            up = float(build_loss(None).data)
            flat[k] = orig - h
            down = float(build_loss(None).data)
            flat[k] = orig
            fd = (up - down) / (2 * h)
            an = analytic[id(t)].reshape(-1)[k]
            err = abs(an - fd) / max(abs(an), abs(fd), 1.0)
            worst = max(worst, err)
            assert err < tol, (f"gradient mismatch at element {k} of "
                               f"{t.name or t.shape}: analytic={an:.8g} fd={fd:.8g} "
                               f"rel_err={err:.3g}")
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
