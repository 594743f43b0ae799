"""State-space sequence models.

Covers three layers of machinery:

* zero-order-hold discretization of a diagonal continuous system
  h'(t) = a h(t) + b x(t), y = c h;
* the linear time-invariant analysis pair — step-by-step recurrence and
  the equivalent causal convolution with the unrolled kernel — used as a
  cross-check oracle;
* the input-dependent (selective) scan used by the network, exposed as a
  single fused autodiff op backed by the compiled/numpy kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import nn
from . import tensor as T
from .tensor import ContractError, DimensionError, DomainError, Tensor


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------

def zoh_discretize(a, b, delta):
    """Discretize diagonal h' = a h + b x under a zero-order hold on x.

    Returns (a_bar, b_bar) with a_bar = exp(delta*a) and
    b_bar = (exp(delta*a) - 1)/a * b, using the series
    delta*b*(1 + delta*a/2) when |delta*a| < 1e-8 to avoid the 0/0.
    """
    if not np.all(np.asarray(delta) > 0):
        raise DomainError("zoh_discretize requires delta > 0")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    arg = delta * a
    a_bar = np.exp(arg)
    small = np.abs(arg) < kernels.SERIES_EPS
    safe_a = np.where(small, 1.0, a)
    closed = np.expm1(arg) / safe_a * b
    series = delta * b * (1.0 + 0.5 * arg)
    return a_bar, np.where(small, series, closed)


@dataclass
class SsmParams:
    """Continuous diagonal system: state matrix diag(a), input b, readout c."""

    a: np.ndarray  # [N] diagonal, expected negative for stability
    b: np.ndarray  # [N]
    c: np.ndarray  # [N]


@dataclass
class DiscreteSsm:
    """Discrete diagonal system h[t] = a_bar*h[t-1] + b_bar*x[t], y = c.h."""

    a_bar: np.ndarray  # [N]
    b_bar: np.ndarray  # [N]
    c: np.ndarray      # [N]

    @classmethod
    def from_continuous(cls, params: SsmParams, delta: float) -> "DiscreteSsm":
        a_bar, b_bar = zoh_discretize(params.a, params.b, delta)
        return cls(a_bar, b_bar, np.asarray(params.c, dtype=np.float64))


def recurrent_scan(dssm: DiscreteSsm, x) -> np.ndarray:
    """Run the step recurrence over a scalar input sequence x[M]."""
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros_like(dssm.a_bar)
    y = np.empty(len(x))
    for t, xt in enumerate(x):
        h = dssm.a_bar * h + dssm.b_bar * xt
        y[t] = dssm.c @ h
    return y


def conv_kernel(dssm: DiscreteSsm, m: int) -> np.ndarray:
    """Unrolled impulse response (c.b_bar, c.a_bar b_bar, ..., length m)."""
    k = np.empty(m)
    pw = dssm.b_bar.copy()
    for i in range(m):
        k[i] = dssm.c @ pw
        pw = pw * dssm.a_bar
    return k


def conv_form(dssm: DiscreteSsm, x) -> np.ndarray:
    """Evaluate the same system as a causal convolution with its kernel.

    Only valid for time-invariant parameters; per-step parameter arrays
    are rejected loudly rather than silently averaged.
    """
    for field in (dssm.a_bar, dssm.b_bar, dssm.c):
        if np.asarray(field).ndim > 1:
            raise ContractError(
                "conv_form requires time-invariant parameters; got a "
                "per-step parameter array")
    x = np.asarray(x, dtype=np.float64)
    k = conv_kernel(dssm, len(x))
    return np.convolve(x, k)[:len(x)]


# --------------------------------------------------------------------------
# fused selective scan (autodiff op)
# --------------------------------------------------------------------------

def ssm_scan(x: Tensor, delta: Tensor, b: Tensor, c: Tensor, a: Tensor,
             d_skip: Tensor) -> Tensor:
    """Input-dependent scan: per-step ZOH discretization + recurrence + skip.

    Shapes: x, delta [L, D]; b, c [L, N]; a [D, N] (diagonal per channel);
    d_skip [D].  y[t, d] = sum_n c[t, n] h[t, d, n] + d_skip[d] x[t, d].
    Forward and backward run in the selected kernel backend.
    """
    for t_, nd in ((x, 2), (delta, 2), (b, 2), (c, 2), (a, 2), (d_skip, 1)):
        if t_.data.ndim != nd:
            raise DimensionError("ssm_scan operand has wrong rank")
    if np.any(delta.data <= 0):
        raise DomainError("ssm_scan requires delta > 0 (apply softplus "
                          "with a bias before the scan)")
    y, h = kernels.scan_forward(x.data, delta.data, b.data, c.data, a.data,
                                d_skip.data)
    inputs = (x, delta, b, c, a, d_skip)

    def build(out):
        def bw(g):
            grads = kernels.scan_backward(x.data, delta.data, b.data, c.data,
                                          a.data, d_skip.data, h, g)
            for t_, gr in zip(inputs, grads):
                if t_.requires_grad:
                    t_.accumulate_grad(gr)
        return bw

    return T._finish("ssm_scan", y, inputs, build)


# Softplus bias range chosen so the initial step sizes land in
# [0.001, 0.1]: bias ~ U(softplus^-1(0.001), softplus^-1(0.1)).
DT_INIT_RANGE = (0.001, 0.1)


def _inv_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


class SelectiveScan(nn.Module):
    """S6-style scan over token sequences [L, D].

    Per-step parameters are projections of the input itself:
    delta = softplus(x W_dt + bias), b = x W_b, c = x W_c.  The state
    matrix is diagonal, parameterized as a = -exp(log_a) (so always
    negative), initialized to a[d, n] = -(n + 1).  A learned d_skip adds
    the direct input path.
    """

    def __init__(self, d: int, n_state: int, rng: np.random.Generator,
                 scheme: str = "fan_in_uniform"):
        self.w_dt = nn.init_param((d, d), d, rng, scheme)
        lo, hi = (_inv_softplus(v) for v in DT_INIT_RANGE)
        self.b_dt = Tensor(rng.uniform(lo, hi, size=d), requires_grad=True)
        self.w_b = nn.init_param((d, n_state), d, rng, scheme)
        self.w_c = nn.init_param((d, n_state), d, rng, scheme)
        log_a = np.log(np.tile(np.arange(1, n_state + 1.0), (d, 1)))
        self.log_a = Tensor(log_a, requires_grad=True)
        self.d_skip = Tensor(np.ones(d), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        delta = T.softplus(T.matmul(x, self.w_dt) + self.b_dt)
        b = T.matmul(x, self.w_b)
        c = T.matmul(x, self.w_c)
        a = -T.exp(self.log_a)
        return ssm_scan(x, delta, b, c, a, self.d_skip)
