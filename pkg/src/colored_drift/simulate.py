"""Euler-Maruyama integration of the colored system and its white-noise limit.

Determinism contract: a path is a pure function of (model, grid, seed, init).
Gaussian increments are consumed in step-major, channel-minor order (exactly
``m`` draws per step); an optional stationary draw for Y0 consumes ``n`` draws
before the stepping stream.  Splitting a run into blocks never changes the
draws or the arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .errors import SimulationError, StabilityError
from .model import (
    ColoredModel,
    IsotropicNormDiffusion,
    LevyLimitModel,
    LimitModel,
)

Array = np.ndarray

DEFAULT_BLOCK = 1 << 16


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k h for k = 0..n_steps."""

    h: float
    n_steps: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def T(self) -> float:
        return self.n_steps * self.h

    def times(self) -> Array:
        return np.arange(self.n_steps + 1) * self.h

    @classmethod
    def from_horizon(cls, T: float, h: float) -> "TimeGrid":
        n = int(round(T / h))
        if abs(n * h - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"T={T} is not an integer multiple of h={h}")
        return cls(h, n)

    @classmethod
    def eps_cubed(cls, T: float, epsilon: float) -> "TimeGrid":
        """The fine-step convention h = epsilon^3."""
        return cls.from_horizon(T, epsilon**3)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.h))
        if k < 0 or k > self.n_steps or abs(k * self.h - t) > 1e-9 * max(abs(t), 1.0):
            raise ValueError(f"time {t} is not on the grid")
        return k


def geometric_checkpoints(grid: TimeGrid, count: int = 48,
                          t_min: Optional[float] = None) -> Array:
    """Grid times spaced geometrically up to T, always including T.

    Suits the log-like convergence curves of the running estimators.
    """
    if t_min is None:
        t_min = max(grid.h, grid.T / 1000.0)
    raw = np.geomspace(t_min, grid.T, count)
    idx = np.unique(np.clip(np.rint(raw / grid.h).astype(int), 1, grid.n_steps))
    return idx * grid.h


@dataclass
class Path:
    """A stored trajectory on a (possibly thinned) uniform grid."""

    grid: TimeGrid
    X: Array                       # (n_stored + 1, d)
    Y: Optional[Array] = None      # (n_stored + 1, n)
    Z: Optional[Array] = None      # (n_stored + 1, d)
    seed: Optional[int] = None
    thin: int = 1

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def h_stored(self) -> float:
        return self.grid.h * self.thin

    def times(self) -> Array:
        return np.arange(self.X.shape[0]) * self.h_stored

    def with_z(self, z: Array) -> "Path":
        if z.shape != self.X.shape:
            raise ValueError("Z must share the stored grid of X")
        return Path(self.grid, self.X, self.Y, z, self.seed, self.thin)


def write_path_csv(path: Path, dest) -> None:
    """Write ``t,X1..Xd[,Y1..Yn][,Z1..Zd]`` rows at full double precision."""
    cols = [path.times()[:, None], path.X]
    header = ["t"] + [f"X{i+1}" for i in range(path.X.shape[1])]
    if path.Y is not None:
        cols.append(path.Y)
        header += [f"Y{i+1}" for i in range(path.Y.shape[1])]
    if path.Z is not None:
        cols.append(path.Z)
        header += [f"Z{i+1}" for i in range(path.Z.shape[1])]
    data = np.hstack(cols)
    out = dest if hasattr(dest, "write") else open(dest, "w")
    try:
        np.savetxt(out, data, fmt="%.17g", delimiter=",",
                   header=",".join(header), comments="")
    finally:
        if out is not dest:
            out.close()


def read_path_csv(src) -> Path:
    """Read a path CSV written by :func:`write_path_csv`."""
    fh = src if hasattr(src, "read") else open(src)
    try:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    finally:
        if fh is not src:
            fh.close()
    if header[0] != "t":
        raise ValueError("path CSV must start with a 't' column")
    t = data[:, 0]
    if len(t) < 2:
        raise ValueError("path CSV must contain at least two rows")
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=0, atol=1e-9 * max(h, 1.0)):
        raise ValueError("path CSV grid is not uniform")
    names = header[1:]
    blocks = {"X": [], "Y": [], "Z": []}
    for j, name in enumerate(names):
        key = name[0]
        if key not in blocks:
            raise ValueError(f"unexpected column {name!r}")
        blocks[key].append(j + 1)
    if not blocks["X"]:
        raise ValueError("path CSV has no X columns")
    grid = TimeGrid(h, len(t) - 1)
    return Path(
        grid,
        data[:, blocks["X"]],
        data[:, blocks["Y"]] if blocks["Y"] else None,
        data[:, blocks["Z"]] if blocks["Z"] else None,
        seed=None,
    )


def _block_edges(n_steps: int, block_size: int,
                 required: Sequence[int] = ()) -> list[int]:
    edges = set(range(0, n_steps, block_size))
    edges.add(n_steps)
    edges.update(int(k) for k in required if 0 <= k <= n_steps)
    edges.discard(0)
    return [0] + sorted(edges)


def _scan_finite(xb: Array, k0: int) -> None:
    if not np.isfinite(xb[1:]).all():
        bad = int(np.argmax(~np.isfinite(xb[1:]).all(axis=1)))
        raise SimulationError(
            f"non-finite state at step {k0 + bad + 1}", step=k0 + bad + 1
        )


class ColoredSimulator:
    """Single-pass block simulator for the colored system."""

    def __init__(self, model: ColoredModel, grid: TimeGrid, seed: int,
                 x0=None, y0=None, increments: Optional[Array] = None):
        self.model = model
        self.grid = grid
        self.seed = int(seed) if seed is not None else None
        eps2 = model.epsilon**2
        lam = float(np.linalg.eigvals(model.A).real.max())
        if grid.h >= 2 * eps2 / lam:
            raise StabilityError(
                f"h={grid.h} exceeds the fast-noise stability bound "
                f"2*eps^2/lambda_max = {2 * eps2 / lam:.6g}"
            )
        if grid.h > eps2 / 10:
            warnings.warn(
                f"h={grid.h} > eps^2/10 = {eps2 / 10:.6g}; the fast noise "
                "time scale is marginally resolved",
                RuntimeWarning,
                stacklevel=3,
            )
        d, n = model.dim, model.dim_noise
        self._x = np.zeros(d) if x0 is None else np.array(x0, float).reshape(d)
        self._rng = np.random.default_rng(self.seed)
        if isinstance(y0, str):
            if y0 != "stationary":
                raise ValueError("y0 must be an array, None, or 'stationary'")
            chol = np.linalg.cholesky(model.noise_stationary_covariance())
            self._y = chol @ self._rng.standard_normal(n)
        else:
            self._y = np.zeros(n) if y0 is None else np.array(y0, float).reshape(n)
        self._increments = increments
        self._k = 0
        self._done = False
        basis_name = model.basis.name
        self._basis_id = _kernels.BASIS_IDS.get(basis_name, -1)
        self._fast = self._basis_id >= 0 and (
            model.constant_diffusion
            or isinstance(model.diffusion, IsotropicNormDiffusion)
        )

    def _draw(self, nsteps: int) -> Array:
        m = self.model.dim_wiener
        if self._increments is not None:
            xi = self._increments[self._k:self._k + nsteps]
            return np.ascontiguousarray(xi, dtype=float).reshape(nsteps, m)
        return self._rng.standard_normal((nsteps, m))

    def blocks(self, block_size: int = DEFAULT_BLOCK,
               required_edges: Sequence[int] = ()) -> Iterator[Tuple[int, int, Array, Array]]:
        """Yield (k0, k1, X_states, Y_states) with rows k0..k1 inclusive."""
        if self._done:
            raise RuntimeError("simulator blocks can only be consumed once")
        self._done = True
        mdl = self.model
        h = self.grid.h
        sqrt_h = np.sqrt(h)
        inv_e = 1.0 / mdl.epsilon
        inv_e2 = inv_e * inv_e
        edges = _block_edges(self.grid.n_steps, block_size, required_edges)
        for k0, k1 in zip(edges[:-1], edges[1:]):
            nsteps = k1 - k0
            xi = self._draw(nsteps)
            xb = np.empty((nsteps + 1, mdl.dim))
            yb = np.empty((nsteps + 1, mdl.dim_noise))
            if self._fast and mdl.constant_diffusion:
                _kernels.colored_additive_block(
                    self._x, self._y, mdl.theta, mdl.diffusion, mdl.A,
                    mdl.sigma, self._basis_id, inv_e, inv_e2, h, sqrt_h,
                    xi, xb, yb,
                )
            elif self._fast:
                diff = mdl.diffusion
                _kernels.colored_isonorm_block(
                    self._x, self._y, mdl.theta, mdl.A, mdl.sigma,
                    diff.kappa, diff.beta, self._basis_id, inv_e, inv_e2,
                    h, sqrt_h, xi, xb, yb,
                )
            else:
                self._python_block(xi, xb, yb, inv_e, inv_e2, h, sqrt_h)
            self._k = k1
            _scan_finite(xb, k0)
            yield k0, k1, xb, yb

    def _python_block(self, xi, xb, yb, inv_e, inv_e2, h, sqrt_h):
        mdl = self.model
        x, y = self._x, self._y
        basis = mdl.basis
        const = mdl.constant_diffusion
        xb[0] = x
        yb[0] = y
        for k in range(xi.shape[0]):
            g = mdl.diffusion if const else mdl.diffusion.g(x)
            xn = x + (mdl.theta @ basis.eval(x) + (g @ y) * inv_e) * h
            yn = y - (mdl.A @ y) * inv_e2 * h + (mdl.sigma @ xi[k]) * inv_e * sqrt_h
            x, y = xn, yn
            xb[k + 1] = x
            yb[k + 1] = y
        self._x[:] = x
        self._y[:] = y

    def run(self, thin: int = 1, store_y: bool = True,
            block_size: int = DEFAULT_BLOCK) -> Path:
        return _collect(self, thin, store_y, block_size)


class LimitSimulator:
    """Single-pass block simulator for the white-noise limit equation."""

    def __init__(self, model: Union[LimitModel, LevyLimitModel], grid: TimeGrid,
                 seed: int, x0=None, increments: Optional[Array] = None):
        self.model = model
        self.grid = grid
        self.seed = int(seed) if seed is not None else None
        d = model.dim
        self._x = np.zeros(d) if x0 is None else np.array(x0, float).reshape(d)
        self._rng = np.random.default_rng(self.seed)
        self._increments = increments
        self._k = 0
        self._done = False
        if isinstance(model, LevyLimitModel):
            self._kind = "levy"
        else:
            self._kind = "additive"
            self._basis_id = _kernels.BASIS_IDS.get(model.basis.name, -1)
            self._s_mat = _principal_sqrt(2.0 * model.dsym)
            self._fast = self._basis_id >= 0 and model.b is None

    def _draw(self, nsteps: int) -> Array:
        d = self.model.dim
        if self._increments is not None:
            xi = self._increments[self._k:self._k + nsteps]
            return np.ascontiguousarray(xi, dtype=float).reshape(nsteps, d)
        return self._rng.standard_normal((nsteps, d))

    def blocks(self, block_size: int = DEFAULT_BLOCK,
               required_edges: Sequence[int] = ()) -> Iterator[Tuple[int, int, Array, None]]:
        if self._done:
            raise RuntimeError("simulator blocks can only be consumed once")
        self._done = True
        mdl = self.model
        h = self.grid.h
        sqrt_h = np.sqrt(h)
        edges = _block_edges(self.grid.n_steps, block_size, required_edges)
        for k0, k1 in zip(edges[:-1], edges[1:]):
            nsteps = k1 - k0
            xi = self._draw(nsteps)
            xb = np.empty((nsteps + 1, mdl.dim))
            if self._kind == "levy":
                _kernels.limit_levy_block(
                    self._x, mdl.L, mdl.kappa0, mdl.beta0, h, sqrt_h, xi, xb
                )
            elif self._fast:
                _kernels.limit_additive_block(
                    self._x, mdl.theta, self._s_mat, self._basis_id,
                    h, sqrt_h, xi, xb,
                )
            else:
                self._python_block(xi, xb, h, sqrt_h)
            self._k = k1
            _scan_finite(xb, k0)
            yield k0, k1, xb, None

    def _python_block(self, xi, xb, h, sqrt_h):
        mdl = self.model
        x = self._x
        xb[0] = x
        for k in range(xi.shape[0]):
            drift = mdl.theta @ mdl.basis.eval(x)
            if mdl.b is not None:
                drift = drift + mdl.b(x)
            x = x + drift * h + (self._s_mat @ xi[k]) * sqrt_h
            xb[k + 1] = x
        self._x[:] = x

    def run(self, thin: int = 1, block_size: int = DEFAULT_BLOCK) -> Path:
        return _collect(self, thin, False, block_size)


def _principal_sqrt(mat: Array) -> Array:
    """Principal symmetric square root, tolerant of zero eigenvalues."""
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(sym)
    scale = max(abs(w).max(), 1.0)
    if w.min() < -1e-12 * scale:
        raise ValueError(f"matrix is indefinite: eigenvalue {w.min():.6g}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _collect(sim, thin: int, store_y: bool, block_size: int) -> Path:
    grid = sim.grid
    if thin < 1 or grid.n_steps % thin != 0:
        raise ValueError("thin must be a positive divisor of n_steps")
    n_stored = grid.n_steps // thin
    d = sim.model.dim
    x_out = np.empty((n_stored + 1, d))
    y_out = None
    if store_y and isinstance(sim, ColoredSimulator):
        y_out = np.empty((n_stored + 1, sim.model.dim_noise))
    for k0, k1, xb, yb in sim.blocks(block_size=block_size):
        s0 = -(-k0 // thin)          # first stored index with s*thin >= k0
        s1 = (k1 - 1) // thin        # last stored index with s*thin < k1
        if s1 >= s0:
            rows = np.arange(s0, s1 + 1) * thin - k0
            x_out[s0:s1 + 1] = xb[rows]
            if y_out is not None:
                y_out[s0:s1 + 1] = yb[rows]
        if k1 == grid.n_steps:
            x_out[n_stored] = xb[k1 - k0]
            if y_out is not None:
                y_out[n_stored] = yb[k1 - k0]
    return Path(grid, x_out, y_out, None, seed=sim.seed, thin=thin)


def simulate_colored(model: ColoredModel, grid: TimeGrid, seed: int,
                     x0=None, y0=None, thin: int = 1) -> Path:
    """Integrate the colored system; returns a Path with X and Y channels."""
    return ColoredSimulator(model, grid, seed, x0=x0, y0=y0).run(thin=thin)


def simulate_limit(model: Union[LimitModel, LevyLimitModel], grid: TimeGrid,
                   seed: int, x0=None, thin: int = 1) -> Path:
    """Integrate the white-noise limit equation; returns a Path with X."""
    return LimitSimulator(model, grid, seed, x0=x0).run(thin=thin)


def simulate_coupled(model: ColoredModel, grid: TimeGrid,
                     seed: int) -> Tuple[Path, Path]:
    """Simulate the colored system and its limit on one shared noise stream.

    Supported for the scalar additive case (d = n = m = 1, constant G); the
    limit equation uses diffusion G sigma / A.
    """
    if not (model.dim == model.dim_noise == model.dim_wiener == 1
            and model.constant_diffusion):
        raise ValueError("coupled simulation requires the 1d additive model")
    g = float(model.diffusion[0, 0])
    a = float(model.A[0, 0])
    sig = float(model.sigma[0, 0])
    n = grid.n_steps
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n, 1))
    colored = ColoredSimulator(model, grid, seed, increments=xi).run()
    dsym = 0.5 * (g * sig / a) ** 2
    limit_model = LimitModel(theta=model.theta, basis=model.basis, dsym=[[dsym]])
    limit = LimitSimulator(limit_model, grid, seed, increments=xi).run()
    return colored, limit
