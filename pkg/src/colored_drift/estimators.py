"""Drift estimators of ratio type.

The batch estimator is N_T G_T^{-1} with

    N_T = sum_k (X_{k+1} - X_k) (x) v_k          (Ito left-point sums)
    G_T = sum_k u_k (x) v_k h

where (u, v) = (f(X), f(X)) for the plain variant, (f(X), f(Z)) for the
filtered variant, and (X, Z) with an overall minus sign for the radial
multiplicative variant.  Sums run over k = 0..N-1 in step order; the running
variant snapshots the same accumulators, so a snapshot at the final time is
bit-identical to the batch value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import GramSingularError
from .model import DriftBasis
from .simulate import Path

Array = np.ndarray

COND_LIMIT = 1e12


@dataclass(frozen=True)
class DriftEstimate:
    """A drift matrix estimate with conditioning diagnostics."""

    value: Array                 # (d, l)
    at_time: float
    condition_number: float
    gram_min_singular: float

    def __post_init__(self):
        if not np.isfinite(self.value).all():
            raise GramSingularError("estimate has non-finite entries")


@dataclass
class EstimatePath:
    """A time-indexed sequence of estimates.

    Entries where the Gram matrix was still singular are NaN with infinite
    condition number rather than errors.
    """

    times: Array                 # (K,)
    values: Array                # (K, d, l)
    cond: Array                  # (K,)
    variant: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.cond = np.asarray(self.cond, dtype=float)
        if not (len(self.times) == len(self.values) == len(self.cond)):
            raise ValueError("times, values, and cond must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> Array:
        return self.values[-1]

    def available(self) -> Array:
        return np.isfinite(self.values).all(axis=(1, 2))

    def to_csv(self, dest) -> None:
        k, d, l = self.values.shape
        header = ["t"] + [f"theta_{i+1}{j+1}" for i in range(d) for j in range(l)]
        header.append("cond")
        data = np.hstack([
            self.times[:, None],
            self.values.reshape(k, d * l),
            self.cond[:, None],
        ])
        out = dest if hasattr(dest, "write") else open(dest, "w")
        try:
            np.savetxt(out, data, fmt="%.17g", delimiter=",",
                       header=",".join(header), comments="")
        finally:
            if out is not dest:
                out.close()


class MleAccumulator:
    """Streaming numerator/Gram sums for the ratio estimators."""

    def __init__(self, d: int, l: int, h: float, negate: bool = False):
        self.num = np.zeros((d, l))
        self.gram = np.zeros((l, l))
        self.h = float(h)
        self.negate = negate
        self.steps = 0

    def update(self, dx: Array, u: Array, v: Array) -> None:
        self.steps += _kernels.mle_accum_block(self.num, self.gram, dx, u, v, self.h)

    def _solve(self):
        gram = self.gram
        cond = float(np.linalg.cond(gram)) if np.isfinite(gram).all() else np.inf
        if not np.isfinite(cond) or cond > COND_LIMIT:
            return None, cond, 0.0
        sv = np.linalg.svd(gram, compute_uv=False)
        value = np.linalg.solve(gram.T, self.num.T).T
        if self.negate:
            value = -value
        return value, cond, float(sv[-1])

    def snapshot(self, at_time: float):
        """(value or None, cond, min singular value) at the current sums."""
        value, cond, smin = self._solve()
        return value, cond, smin

    def estimate(self, at_time: float) -> DriftEstimate:
        value, cond, smin = self._solve()
        if value is None:
            raise GramSingularError(
                f"Gram matrix is singular at T={at_time:.6g} "
                f"(condition number {cond:.3g})"
            )
        return DriftEstimate(value, float(at_time), cond, smin)


def _channel(x, h):
    """Return (array (N+1, d), step) from a Path or a raw array."""
    if isinstance(x, Path):
        return x.X, x.h_stored
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if h is None:
        raise ValueError("h is required for raw array inputs")
    return arr, float(h)


def _z_channel(z, x, h):
    if isinstance(z, Path):
        if z.Z is not None:
            arr, hz = z.Z, z.h_stored
        else:
            arr, hz = z.X, z.h_stored
    else:
        arr = np.asarray(z, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        hz = h
    if arr.shape != x.shape or (hz is not None and h is not None
                                and abs(hz - h) > 1e-12 * max(h, 1.0)):
        raise ValueError("X and Z must share one grid")
    return arr


def mle(x, basis: DriftBasis, h: Optional[float] = None) -> DriftEstimate:
    """Ratio estimator on one data channel; agnostic to how X was generated."""
    xs, h = _channel(x, h)
    fx = basis.eval_block(xs[:-1])
    acc = MleAccumulator(xs.shape[1], basis.dim_out, h)
    acc.update(np.diff(xs, axis=0), fx, fx)
    return acc.estimate(at_time=(xs.shape[0] - 1) * h)


def mle_filtered(x, z, basis: DriftBasis, h: Optional[float] = None) -> DriftEstimate:
    """Ratio estimator pairing raw increments with filtered features."""
    xs, h = _channel(x, h)
    zs = _z_channel(z, xs, h)
    fx = basis.eval_block(xs[:-1])
    fz = basis.eval_block(zs[:-1])
    acc = MleAccumulator(xs.shape[1], basis.dim_out, h)
    acc.update(np.diff(xs, axis=0), fx, fz)
    return acc.estimate(at_time=(xs.shape[0] - 1) * h)


def mle_levy(x, z, h: Optional[float] = None) -> DriftEstimate:
    """Estimate the limit drift matrix of the radial multiplicative model.

    Returns -[sum dX (x) Z][sum X (x) Z h]^{-1} on planar data.
    """
    xs, h = _channel(x, h)
    if xs.shape[1] != 2:
        raise ValueError("the radial multiplicative estimator requires d = 2")
    zs = _z_channel(z, xs, h)
    acc = MleAccumulator(2, 2, h, negate=True)
    acc.update(np.diff(xs, axis=0), xs[:-1], zs[:-1])
    return acc.estimate(at_time=(xs.shape[0] - 1) * h)


MLE_VARIANTS = ("mle", "mle-filtered", "mle-levy")


def estimate_path(variant: str, x, z=None, basis: Optional[DriftBasis] = None,
                  checkpoints: Optional[Sequence[float]] = None,
                  h: Optional[float] = None) -> EstimatePath:
    """Running ratio estimator snapshotted at checkpoint times.

    ``checkpoints`` must lie on the data grid; the default is every stored
    time after the first.  The snapshot at the final time equals the batch
    estimator exactly (same sums, same order).
    """
    if variant not in MLE_VARIANTS:
        raise ValueError(f"variant must be one of {MLE_VARIANTS}")
    xs, h = _channel(x, h)
    n = xs.shape[0] - 1
    d = xs.shape[1]
    if variant == "mle-levy":
        if d != 2:
            raise ValueError("the radial multiplicative estimator requires d = 2")
        u = xs[:-1]
        v = _z_channel(z, xs, h)[:-1]
        l = 2
        acc = MleAccumulator(d, l, h, negate=True)
    else:
        if basis is None:
            raise ValueError("basis is required")
        u = basis.eval_block(xs[:-1])
        l = basis.dim_out
        if variant == "mle-filtered":
            v = basis.eval_block(_z_channel(z, xs, h)[:-1])
        else:
            v = u
        acc = MleAccumulator(d, l, h)
    if checkpoints is None:
        idx = np.arange(1, n + 1)
    else:
        idx = np.array([int(round(t / h)) for t in checkpoints], dtype=int)
        times = np.asarray(checkpoints, dtype=float)
        if np.any(np.abs(idx * h - times) > 1e-9 * np.maximum(np.abs(times), 1.0)):
            raise ValueError("checkpoints must lie on the data grid")
        if np.any(idx < 1) or np.any(idx > n):
            raise ValueError("checkpoints must lie in (0, T]")
    dx = np.diff(xs, axis=0)
    values = np.full((len(idx), d, l), np.nan)
    conds = np.full(len(idx), np.inf)
    prev = 0
    for pos, kc in enumerate(idx):
        acc.update(dx[prev:kc], u[prev:kc], v[prev:kc])
        prev = kc
        value, cond, _ = acc.snapshot(kc * h)
        if value is not None:
            values[pos] = value
        conds[pos] = cond
    return EstimatePath(idx * h, values, conds, variant=variant)
