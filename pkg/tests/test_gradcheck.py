"""The finite-difference checker itself, and the registered suite."""

import numpy as np
import pytest

from dmsr import gradcheck
from dmsr import tensor as T
from dmsr.tensor import ConfigError


def test_finite_difference_on_a_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    grads = gradcheck.finite_difference(
        lambda arrs: float(np.sum(arrs[0] ** 2)), [x])
    np.testing.assert_allclose(grads[0], 2 * x, atol=1e-6)


def test_check_fn_passes_a_correct_gradient():
    err = gradcheck.check_fn(lambda a: (a * a * a).sum(),
                             [np.array([0.7, -1.3, 2.1])])
    assert err < gradcheck.TOLERANCE


def test_check_fn_flags_a_wrong_backward():
    # an op that claims d/dx x^2 = 3x must be caught, otherwise the whole
    # suite proves nothing
    def bad_square(x):
        out_data = x.data ** 2

        def build(out):
            def bw(g):
                x.accumulate_grad(3.0 * x.data * g)
            return bw

        return T._finish("bad_square", out_data, (x,), build)

    err = gradcheck.check_fn(lambda a: bad_square(a).sum(),
                             [np.array([1.0, -2.0, 0.5])])
    assert err > 100 * gradcheck.TOLERANCE


def test_listing_covers_every_module():
    pairs = gradcheck.list_checks()
    modules = {m for m, _ in pairs}
    assert modules == {"tensor", "ssm", "ss2d", "deform", "network",
                       "losses"}
    only = gradcheck.list_checks("losses")
    assert only and all(m == "losses" for m, _ in only)
    with pytest.raises(ConfigError):
        gradcheck.list_checks("no_such_module")


def test_run_module_rejects_unknown_module():
    with pytest.raises(ConfigError, match="available"):
        gradcheck.run_module("no_such_module")


def test_every_registered_check_is_below_tolerance():
    results = gradcheck.run_all()
    flat = {f"{m}.{op}": err
            for m, ops in results.items() for op, err in ops.items()}
    assert len(flat) >= 25
    bad = {name: err for name, err in flat.items()
           if err >= gradcheck.TOLERANCE}
    assert bad == {}
