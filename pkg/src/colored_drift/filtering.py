"""Exponential filtering of trajectories.

The filtered process is the causal convolution

    Z_t = (1/delta) int_0^t exp(-(t - s)/delta) X_s ds,      Z_0 = 0,

equivalently the solution of dZ = (X - Z)/delta dt.  Two one-step updates are
provided: the forward-Euler discretization of that ODE and the exact
exponential update, which treats X as constant over each step and is
unconditionally stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import StabilityError
from .simulate import Path

Array = np.ndarray

SCHEMES = ("exact-exponential", "euler")


@dataclass(frozen=True)
class FilterConfig:
    """Filtering width and one-step update scheme."""

    delta: float
    scheme: str = "exact-exponential"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


class ExponentialFilter:
    """Streaming exponential filter aligned with the input grid.

    ``consume`` maps the block of states X_k, k = k0..k1-1, to the filtered
    values Z_k on the same indices (so the first value returned overall is
    Z_0 = 0) and advances the internal state to Z_k1.
    """

    def __init__(self, cfg: FilterConfig, h: float, dim: int):
        if not h > 0:
            raise ValueError("h must be positive")
        if cfg.scheme == "euler" and h >= cfg.delta:
            raise StabilityError(
                f"euler filter update is unstable for h={h} >= delta={cfg.delta}; "
                "use the exact-exponential scheme"
            )
        self.cfg = cfg
        self.h = float(h)
        self._decay = math.exp(-h / cfg.delta)
        self._h_over_delta = h / cfg.delta
        self._z = np.zeros(dim)

    @property
    def current(self) -> Array:
        return self._z.copy()

    def consume(self, x_block: Array) -> Array:
        x_block = np.ascontiguousarray(x_block, dtype=float)
        out = np.empty_like(x_block)
        if self.cfg.scheme == "euler":
            _kernels.ema_euler_block(self._z, self._h_over_delta, x_block, out)
        else:
            _kernels.ema_exact_block(self._z, self._decay, x_block, out)
        return out


def filter_path(x, cfg: FilterConfig, h: float | None = None):
    """Filter a whole trajectory.

    Accepts a Path (returns a new Path with the Z channel attached, filtered
    at the stored resolution) or an (N+1, d) array with the step ``h``.
    """
    if isinstance(x, Path):
        z = filter_path(x.X, cfg, h=x.h_stored)
        return x.with_z(z)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return filter_path(x[:, None], cfg, h=h)[:, 0]
    if h is None:
        raise ValueError("h is required when filtering a raw array")
    filt = ExponentialFilter(cfg, h, x.shape[1])
    z_left = filt.consume(x[:-1])
    return np.vstack([z_left, filt.current[None, :]])
