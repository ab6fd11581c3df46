import numpy as np

from spade.gradsuite import FAMILIES, TOLERANCE, run_suite
from spade.nn import Tensor
from spade.nn.gradcheck import fd_gradcheck


def test_suite_passes_within_budget():
    results = run_suite(seed=0)
    assert results["all_pass"]
    assert results["runtime_s"] <= 60.0
    assert set(results["families"]) == set(FAMILIES)


def test_suite_deterministic():
    a = run_suite(seed=3)
    b = run_suite(seed=3)
    assert a["families"] == b["families"]


def test_sabotaged_backward_is_caught():
    # an op whose backward rule is deliberately scaled by 1.05 must fail
    def buggy_square(x: Tensor) -> Tensor:
        out_data = x.data**2
        return Tensor._make(out_data, (x,), lambda g: Tensor._accum(x, g * 2.0 * x.data * 1.05))

    x = Tensor(np.array([1.3, -0.7, 2.1]), requires_grad=True)
    worst = fd_gradcheck(lambda: buggy_square(x).sum(), [x], seed=0)
    assert worst > TOLERANCE


def test_correct_rule_passes_same_harness():
    x = Tensor(np.array([1.3, -0.7, 2.1]), requires_grad=True)
    worst = fd_gradcheck(lambda: (x * x).sum(), [x], seed=0)
    assert worst <= TOLERANCE
