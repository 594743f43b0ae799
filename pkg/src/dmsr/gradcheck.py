"""Finite-difference gradient verification.

``check_fn`` is the single oracle used both by the test suite and by the
``dmsr check-grad`` command: analytic gradients from the tape are compared
against central differences with step ``h``.  Checks are registered per
source module in ``CHECKS`` so the CLI can run one module or all of them;
anything above ``TOLERANCE`` is a failure.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ConfigError, Tensor

TOLERANCE = 1e-4
FD_STEP = 1e-5

# module name -> list of (op name, zero-arg callable returning max rel err)
CHECKS: dict[str, list[tuple[str, object]]] = {}


def register_check(module: str, op: str):
    """Decorator: add a check callable under CHECKS[module]."""
    def deco(fn):
        CHECKS.setdefault(module, []).append((op, fn))
        return fn
    return deco


def finite_difference(f, arrays, h: float = FD_STEP):
    """Central-difference gradients of scalar ``f(arrays)`` w.r.t. each array."""
    grads = []
    for i, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = f(arrays)
            arr[idx] = orig - h
            fm = f(arrays)
            arr[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def check_fn(fn, arrays, h: float = FD_STEP) -> float:
    """Max normalized gradient error of scalar-valued ``fn(*tensors)``.

    ``fn`` must be a pure function of its tensor arguments.  The error for
    each input is max|analytic - numeric| / max(|analytic|_inf,
    |numeric|_inf, 1), and the worst input's error is returned.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    T.reset_tape()
    out = fn(*tensors)
    T.backward(out)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    def f(arrs):
        with T.no_grad():
            return fn(*[Tensor(a) for a in arrs]).item()

    numeric = finite_difference(f, arrays, h)
    worst = 0.0
    for ga, gf in zip(analytic, numeric):
        scale = max(np.max(np.abs(ga)), np.max(np.abs(gf)), 1.0)
        worst = max(worst, np.max(np.abs(ga - gf)) / scale)
    return worst


def run_module(module: str) -> dict[str, float]:
    """Run every registered check of one module; op name -> max rel err."""
    _ensure_registered()
    if module not in CHECKS:
        raise ConfigError(
            f"unknown module {module!r}; available: {sorted(CHECKS)}")
    return {op: fn() for op, fn in CHECKS[module]}


def run_all() -> dict[str, dict[str, float]]:
    _ensure_registered()
    return {m: run_module(m) for m in CHECKS}


def list_checks(module: str | None = None) -> list[tuple[str, str]]:
    """(module, op) pairs, optionally restricted to one module."""
    _ensure_registered()
    if module is not None and module not in CHECKS:
        raise ConfigError(
            f"unknown module {module!r}; available: {sorted(CHECKS)}")
    modules = [module] if module else sorted(CHECKS)
    return [(m, op) for m in modules for op, _ in CHECKS[m]]


def _ensure_registered():
    # The standard checks live in a separate module to keep import cost
    # out of the common path; importing it populates CHECKS.
    from . import _gradcheck_defs  # noqa: F401
