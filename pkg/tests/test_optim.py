import numpy as np

from spade.nn import Tensor
from spade.optim import AdamW


def test_converges_on_quadratic():
    x = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = AdamW([x], lr=0.1, weight_decay=0.0)
    for _ in range(300):
        loss = (x * x).sum()
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert np.all(np.abs(x.data) < 1e-3)


def test_weight_decay_is_decoupled():
    # with zero gradient pressure the decay shrinks weights geometrically
    x = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW([x], lr=0.5, weight_decay=0.1)
    for _ in range(3):
        loss = (x * 0.0).sum()
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert np.allclose(x.data, (1 - 0.5 * 0.1) ** 3)


def test_deterministic_updates():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal(4), requires_grad=True)
        opt = AdamW([x], lr=0.01)
        for _ in range(10):
            loss = ((x - 2.0) ** 2).sum()
            opt.zero_grad()
            loss.backward()
            opt.step()
        return x.data.copy()

    assert np.array_equal(run(), run())


def test_params_without_grad_untouched():
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW([x, y], lr=0.1)
    loss = (x * x).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    assert y.data[0] == 2.0
    assert x.data[0] != 1.0
