"""Online drift estimation by stochastic gradient descent in continuous time.

The estimate solves, alongside the data stream,

    d theta = xi(t) dI (x) f(F_t),    dI = dX - theta f(X) dt,

with learning rate xi(t) = a / (b + t).  The innovation always uses f(X);
only the outer-product factor switches between f(X) (plain) and f(Z)
(filtered).  The discretization shares the data grid:

    theta_{k+1} = theta_k + xi(t_k) [(X_{k+1} - X_k) - theta_k f(X_k) h] (x) f(F_k).

For the radial multiplicative model the update is
L_{k+1} = L_k - xi(t_k) L_k (X_k (x) Z_k) h - xi(t_k) (X_{k+1} - X_k) (x) Z_k.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import SimulationError
from .estimators import EstimatePath, _channel, _z_channel
from .model import DriftBasis, neg_identity_basis

Array = np.ndarray


@dataclass(frozen=True)
class LearningRate:
    """The decreasing schedule xi(t) = a / (b + t)."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")

    def __call__(self, t) -> float:
        return self.a / (self.b + t)

    def clt_ready(self, delta: float) -> bool:
        """Whether a exceeds 1 + delta, the normality threshold."""
        return self.a > 1.0 + delta


class SgdctAccumulator:
    """Streaming state for the online estimator over one data stream."""

    def __init__(self, theta0: Array, lr: LearningRate, h: float, levy: bool = False):
        self.theta = np.array(theta0, dtype=float)
        if self.theta.ndim != 2:
            raise ValueError("theta0 must be a matrix")
        self.lr = lr
        self.h = float(h)
        self.levy = levy
        self.k = 0
        self._warned = False

    def update(self, dx: Array, u: Array, v: Array) -> None:
        """Advance over a block: u = f(X) (or X), v = f(F) (or Z)."""
        if not self._warned:
            factor = self.lr(self.k * self.h) * (u[0] @ u[0]) * self.h
            if factor >= 1.0:
                warnings.warn(
                    f"learning-rate step factor {factor:.3g} >= 1 at "
                    f"t={self.k * self.h:.6g}; the update may be unstable",
                    RuntimeWarning,
                    stacklevel=2,
                )
                self._warned = True
        if self.levy:
            bad = _kernels.sgdct_levy_block(
                self.theta, self.k, self.lr.a, self.lr.b, self.h, dx, u, v
            )
        else:
            bad = _kernels.sgdct_block(
                self.theta, self.k, self.lr.a, self.lr.b, self.h, dx, u, v
            )
        if bad >= 0:
            raise SimulationError(
                f"online estimate became non-finite at step {bad}", step=int(bad)
            )
        self.k += dx.shape[0]

    def snapshot(self) -> Array:
        return self.theta.copy()


def _checkpoint_indices(checkpoints, h, n) -> Array:
    if checkpoints is None:
        return np.arange(1, n + 1)
    idx = np.array([int(round(t / h)) for t in checkpoints], dtype=int)
    times = np.asarray(checkpoints, dtype=float)
    if np.any(np.abs(idx * h - times) > 1e-9 * np.maximum(np.abs(times), 1.0)):
        raise ValueError("checkpoints must lie on the data grid")
    if np.any(idx < 0) or np.any(idx > n):
        raise ValueError("checkpoints must lie in [0, T]")
    return idx


def _run_accumulator(acc: SgdctAccumulator, dx, u, v, idx, h, variant) -> EstimatePath:
    d, l = acc.theta.shape
    values = np.empty((len(idx), d, l))
    prev = 0
    for pos, kc in enumerate(idx):
        if kc > prev:
            acc.update(dx[prev:kc], u[prev:kc], v[prev:kc])
            prev = kc
        values[pos] = acc.snapshot()
    return EstimatePath(idx * h, values, np.full(len(idx), np.nan), variant=variant)


def sgdct_run(x, f_data, basis: DriftBasis, lr: LearningRate,
              theta0=None, checkpoints: Optional[Sequence[float]] = None,
              h: Optional[float] = None) -> EstimatePath:
    """Run the online estimator on a data channel pair.

    ``f_data`` is None for the plain variant (the outer factor reuses f(X))
    or the filtered channel for the filtered variants; the innovation term
    always evaluates f on X.
    """
    xs, h = _channel(x, h)
    n = xs.shape[0] - 1
    d = xs.shape[1]
    if theta0 is None:
        theta0 = np.zeros((d, basis.dim_out))
    theta0 = np.asarray(theta0, dtype=float).reshape(d, basis.dim_out)
    fx = basis.eval_block(xs[:-1])
    if f_data is None:
        ff = fx
        variant = "sgdct"
    else:
        ff = basis.eval_block(_z_channel(f_data, xs, h)[:-1])
        variant = "sgdct-filtered"
    idx = _checkpoint_indices(checkpoints, h, n)
    acc = SgdctAccumulator(theta0, lr, h)
    return _run_accumulator(acc, np.diff(xs, axis=0), fx, ff, idx, h, variant)


def sgdct_levy(x, z, lr: LearningRate, l0=None,
               checkpoints: Optional[Sequence[float]] = None,
               h: Optional[float] = None) -> EstimatePath:
    """Online estimator of the radial multiplicative limit drift matrix."""
    xs, h = _channel(x, h)
    if xs.shape[1] != 2:
        raise ValueError("the radial multiplicative estimator requires d = 2")
    zs = _z_channel(z, xs, h)
    n = xs.shape[0] - 1
    if l0 is None:
        l0 = np.zeros((2, 2))
    idx = _checkpoint_indices(checkpoints, h, n)
    acc = SgdctAccumulator(np.asarray(l0, float).reshape(2, 2), lr, h, levy=True)
    return _run_accumulator(acc, np.diff(xs, axis=0), xs[:-1], zs[:-1], idx, h,
                            "sgdct-levy")


CLOSED_FORM_VARIANTS = ("colored", "filtered-colored")


def sgdct_closed_form_1d(x, z, y, *, theta: float, g: float, epsilon: float,
                         lr: LearningRate, theta0: float = 0.0,
                         basis: Optional[DriftBasis] = None,
                         checkpoints: Optional[Sequence[float]] = None,
                         h: Optional[float] = None,
                         variant: str = "filtered-colored") -> EstimatePath:
    """Closed-form solution of the scalar online-estimator equation.

    Evaluates

        theta + (theta0 - theta) exp(-E(t))
              + G int_0^t xi(s) exp(-(E(t) - E(s))) f(F_s) (Y_s / eps) ds

    with E(t) = int_0^t xi(r) f(X_r) f(F_r) dr, where F = Z for the
    filtered-colored variant and F = X for the colored variant.  The exponent
    uses trapezoidal quadrature and the outer integral left-point quadrature,
    matching the discrete estimator to first order in h.
    """
    if variant not in CLOSED_FORM_VARIANTS:
        raise ValueError(f"variant must be one of {CLOSED_FORM_VARIANTS}")
    xs, h = _channel(x, h)
    if xs.shape[1] != 1:
        raise ValueError("the closed form is one-dimensional")
    if y is None:
        raise ValueError("the colored closed form requires the Y channel")
    ys = _z_channel(y, xs, h)
    if basis is None:
        basis = neg_identity_basis(1)
    fx = basis.eval_block(xs)[:, 0]
    if variant == "filtered-colored":
        if z is None:
            raise ValueError("the filtered variant requires the Z channel")
        ff = basis.eval_block(_z_channel(z, xs, h))[:, 0]
    else:
        ff = fx
    n = xs.shape[0] - 1
    t_grid = np.arange(n + 1) * h
    rate = lr(t_grid)
    integrand = rate * fx * ff
    exponent = np.concatenate([
        [0.0], np.cumsum(0.5 * h * (integrand[:-1] + integrand[1:]))
    ])
    w = rate[:-1] * g * ff[:-1] * (ys[:-1, 0] / epsilon)

    idx = _checkpoint_indices(checkpoints, h, n)
    values = np.empty((len(idx), 1, 1))
    prev = 0
    term = 0.0
    e_prev = 0.0
    for pos, kc in enumerate(idx):
        e_here = exponent[kc]
        if kc > prev:
            seg = np.exp(exponent[prev:kc] - e_here)
            term = term * np.exp(e_prev - e_here) + float(w[prev:kc] @ seg) * h
            prev = kc
            e_prev = e_here
        values[pos, 0, 0] = theta + (theta0 - theta) * np.exp(-e_here) + term
    return EstimatePath(idx * h, values, np.full(len(idx), np.nan),
                        variant=f"sgdct-closed-{variant}")
