"""Model definitions and derived white-noise-limit quantities.

The colored-noise system couples a slow process X with a fast stationary
Ornstein-Uhlenbeck process Y:

    dX = theta f(X) dt + g(X) (Y / eps) dt
    dY = -(A / eps^2) Y dt + (sigma / eps) dW

As eps -> 0, X converges weakly to the Ito SDE

    dX = (theta f(X) + b(X)) dt + sqrt(2 D^S(X)) dW

where D(x) = g(x) S_inf A^{-T} g(x)^T, D^S is its symmetric part, S_inf
solves the steady-state Lyapunov equation A S + S A^T = sigma sigma^T, and
b(x) is the drift correction induced by the Levy area of the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import AssumptionError, ErgodicityError, UnstableMatrixError

Array = np.ndarray

ROTATION_2D = np.array([[0.0, 1.0], [-1.0, 0.0]])
ROTATION_2D.setflags(write=False)


def _frozen(a, dtype=float) -> Array:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_matrix(a, rows, cols, name) -> Array:
    out = np.asarray(a, dtype=float)
    if out.ndim == 0:
        out = out.reshape(1, 1)
    if out.shape != (rows, cols):
        raise ValueError(f"{name} must have shape {(rows, cols)}, got {out.shape}")
    return out


# ---------------------------------------------------------------------------
# Drift bases
# ---------------------------------------------------------------------------

class _NegIdentityMap:
    def __call__(self, x):
        return -np.asarray(x, dtype=float)

    def jac(self, x):
        d = np.size(x)
        return -np.eye(d)

    def block(self, x):
        return -x

    def jvp_block(self, x, w):
        return -w


class _IdentityMap:
    def __call__(self, x):
        return np.asarray(x, dtype=float).copy()

    def jac(self, x):
        d = np.size(x)
        return np.eye(d)

    def block(self, x):
        return x.copy()

    def jvp_block(self, x, w):
        return w.copy()


class _NegCubeMap:
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -x**3

    def jac(self, x):
        x = np.asarray(x, dtype=float)
        return np.diag(-3.0 * x**2)

    def block(self, x):
        return -x**3

    def jvp_block(self, x, w):
        return -3.0 * x**2 * w


@dataclass(frozen=True)
class DriftBasis:
    """A drift feature map f: R^d -> R^l with its Jacobian.

    ``eval`` maps a point (d,) to features (l,); ``jacobian`` maps a point to
    the (l, d) derivative matrix and may be None when unavailable.
    ``eval_block`` maps (B, d) batches to (B, l) batches.
    """

    name: str
    dim_in: int
    dim_out: int
    eval: Callable[[Array], Array]
    jacobian: Optional[Callable[[Array], Array]] = None
    eval_block: Optional[Callable[[Array], Array]] = None
    jac_vec_block: Optional[Callable[[Array, Array], Array]] = None

    def __post_init__(self):
        if self.eval_block is None:
            point = self.eval

            def _block(x, _f=point):
                return np.apply_along_axis(_f, 1, x)

            object.__setattr__(self, "eval_block", _block)
        if self.jac_vec_block is None and self.jacobian is not None:
            jac = self.jacobian

            def _jvp(x, w, _j=jac):
                out = np.empty((x.shape[0], self.dim_out))
                for k in range(x.shape[0]):
                    out[k] = _j(x[k]) @ w[k]
                return out

            object.__setattr__(self, "jac_vec_block", _jvp)


def neg_identity_basis(dim: int = 1) -> DriftBasis:
    """f(x) = -x, the mean-reverting linear basis."""
    m = _NegIdentityMap()
    return DriftBasis("neg-identity", dim, dim, m, m.jac, m.block, m.jvp_block)


def identity_basis(dim: int = 1) -> DriftBasis:
    """f(x) = x."""
    m = _IdentityMap()
    return DriftBasis("identity", dim, dim, m, m.jac, m.block, m.jvp_block)


def neg_cubic_basis(dim: int = 1) -> DriftBasis:
    """Componentwise odd cubic f(x) = -x^3."""
    m = _NegCubeMap()
    return DriftBasis("neg-cubic", dim, dim, m, m.jac, m.block, m.jvp_block)


BUILTIN_BASES = {
    "neg-identity": neg_identity_basis,
    "identity": identity_basis,
    "neg-cubic": neg_cubic_basis,
}


def make_basis(name: str, dim: int) -> DriftBasis:
    try:
        return BUILTIN_BASES[name](dim)
    except KeyError:
        raise ValueError(
            f"unknown basis {name!r}; available: {sorted(BUILTIN_BASES)}"
        ) from None


# ---------------------------------------------------------------------------
# Diffusion maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateDiffusion:
    """State-dependent diffusion g: R^d -> R^{d x n}.

    ``jacobian(x)[i, a, j]`` is the derivative of g[i, a] with respect to
    x[j]; when None, divergences fall back to central finite differences.
    """

    g: Callable[[Array], Array]
    dim_in: int
    dim_noise: int
    jacobian: Optional[Callable[[Array], Array]] = None


class IsotropicNormDiffusion:
    """g(x) = sqrt(kappa + beta ||x||^2) I, the radial multiplicative noise."""

    def __init__(self, kappa: float, beta: float, dim: int = 2):
        if kappa <= 0 or beta < 0:
            raise ValueError("kappa must be positive and beta non-negative")
        self.kappa = float(kappa)
        self.beta = float(beta)
        self.dim_in = self.dim_noise = int(dim)

    def scale(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return math.sqrt(self.kappa + self.beta * float(x @ x))

    def g(self, x) -> Array:
        return self.scale(x) * np.eye(self.dim_in)

    def jacobian(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        d = self.dim_in
        out = np.zeros((d, d, d))
        s = self.scale(x)
        for i in range(d):
            out[i, i, :] = self.beta * x / s
        return out


DiffusionLike = Union[Array, StateDiffusion, IsotropicNormDiffusion]


# ---------------------------------------------------------------------------
# Stationary covariance of the fast noise
# ---------------------------------------------------------------------------

def _check_stable(a_mat: Array, what: str = "A"):
    eigs = np.linalg.eigvals(a_mat)
    bad = eigs[eigs.real <= 0]
    if bad.size:
        raise UnstableMatrixError(
            f"{what} must have eigenvalues with positive real part; "
            f"found eigenvalue {bad[0]:.6g}"
        )


def stationary_covariance(a_mat, sigma) -> Array:
    """Solve A S + S A^T = sigma sigma^T for the stationary covariance S.

    Uses the vectorized Kronecker form of the Lyapunov equation; intended for
    the small noise dimensions (n <= 4) used throughout.
    """
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim < 2:
        sigma = sigma.reshape(a_mat.shape[0], -1)
    n = a_mat.shape[0]
    if a_mat.shape != (n, n) or sigma.shape[0] != n:
        raise ValueError("incompatible shapes for A and sigma")
    _check_stable(a_mat)
    q = sigma @ sigma.T
    eye = np.eye(n)
    m = np.kron(eye, a_mat) + np.kron(a_mat, eye)
    s = np.linalg.solve(m, q.flatten(order="F")).reshape((n, n), order="F")
    s = 0.5 * (s + s.T)
    resid = np.linalg.norm(a_mat @ s + s @ a_mat.T - q)
    if resid > 1e-10 * max(np.linalg.norm(q), 1e-300):
        raise ArithmeticError(f"Lyapunov solve residual too large: {resid:.3g}")
    return s


# ---------------------------------------------------------------------------
# Colored model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColoredModel:
    """Full specification of the slow/fast colored-noise system."""

    theta: Array                 # (d, l) drift matrix
    basis: DriftBasis
    diffusion: DiffusionLike     # constant G (d, n) or a state map
    A: Array                     # (n, n)
    sigma: Array                 # (n, m)
    epsilon: float

    def __post_init__(self):
        d, l = self.basis.dim_in, self.basis.dim_out
        theta = _as_matrix(self.theta, d, l, "theta")
        a_mat = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = a_mat.shape[0]
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim < 2:
            sigma = sigma.reshape(n, -1)
        if a_mat.shape != (n, n):
            raise ValueError("A must be square")
        if sigma.shape[0] != n:
            raise ValueError("sigma must have n rows")
        _check_stable(a_mat)
        s = sigma @ sigma.T
        if np.linalg.norm(s - s.T) > 1e-12 * max(np.linalg.norm(s), 1e-300):
            raise ValueError("sigma sigma^T must be symmetric")
        if np.linalg.eigvalsh(0.5 * (s + s.T)).min() <= 0:
            raise ValueError("sigma sigma^T must be positive definite")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        diff = self.diffusion
        if isinstance(diff, (StateDiffusion, IsotropicNormDiffusion)):
            if diff.dim_in != d or diff.dim_noise != n:
                raise ValueError("diffusion map dimensions do not match model")
        else:
            diff = _as_matrix(diff, d, n, "G")
            object.__setattr__(self, "diffusion", _frozen(diff))
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "A", _frozen(a_mat))
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def dim(self) -> int:
        return self.basis.dim_in

    @property
    def dim_noise(self) -> int:
        return self.A.shape[0]

    @property
    def dim_wiener(self) -> int:
        return self.sigma.shape[1]

    @property
    def constant_diffusion(self) -> bool:
        return isinstance(self.diffusion, np.ndarray)

    def noise_stationary_covariance(self) -> Array:
        return stationary_covariance(self.A, self.sigma)


def ou1d_model(theta=1.0, g=1.0, a=1.0, sigma=1.0, epsilon=0.1) -> ColoredModel:
    """The scalar mean-reverting benchmark model with colored noise."""
    return ColoredModel(
        theta=[[theta]],
        basis=neg_identity_basis(1),
        diffusion=[[g]],
        A=[[a]],
        sigma=[[sigma]],
        epsilon=epsilon,
    )


def additive_2d_model(theta, alpha=1.0, gamma=1.0, eta=1.0, epsilon=0.1) -> ColoredModel:
    """Planar additive model with rotational noise matrix A = alpha I + gamma J."""
    a_mat = alpha * np.eye(2) + gamma * ROTATION_2D
    return ColoredModel(
        theta=theta,
        basis=neg_identity_basis(2),
        diffusion=np.eye(2),
        A=a_mat,
        sigma=math.sqrt(eta) * np.eye(2),
        epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# White-noise limit models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitModel:
    """Additive white-noise limit: dX = (theta f(X) + b(X)) dt + sqrt(2 dsym) dW."""

    theta: Array
    basis: DriftBasis
    dsym: Array                      # (d, d) symmetric PSD
    b: Optional[Callable[[Array], Array]] = None

    def __post_init__(self):
        d, l = self.basis.dim_in, self.basis.dim_out
        theta = _as_matrix(self.theta, d, l, "theta")
        dsym = _as_matrix(self.dsym, d, d, "dsym")
        scale = max(np.linalg.norm(dsym), 1.0)
        if np.abs(dsym - dsym.T).max() > 1e-12 * scale:
            raise ValueError("dsym must be symmetric")
        if np.linalg.eigvalsh(0.5 * (dsym + dsym.T)).min() < -1e-12 * scale:
            raise ValueError("dsym must be positive semi-definite")
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "dsym", _frozen(dsym))

    @property
    def dim(self) -> int:
        return self.basis.dim_in


@dataclass(frozen=True)
class LevyLimitModel:
    """Radial multiplicative limit: dX = -L X dt + sqrt(kappa0 + beta0 ||X||^2) dW."""

    L: Array
    kappa0: float
    beta0: float

    def __post_init__(self):
        l_mat = _as_matrix(self.L, 2, 2, "L")
        if self.kappa0 < 0 or self.beta0 < 0:
            raise ValueError("kappa0 and beta0 must be non-negative")
        object.__setattr__(self, "L", _frozen(l_mat))
        object.__setattr__(self, "kappa0", float(self.kappa0))
        object.__setattr__(self, "beta0", float(self.beta0))

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class LevyModel:
    """Radial multiplicative colored model and its limit coefficients.

    The colored system has drift -theta x and diffusion map
    g(x) = sqrt(kappa + beta ||x||^2) I driven by A = alpha I + gamma J and
    sigma = sqrt(eta) I.  Derived: rho = alpha^2 + gamma^2,
    kappa0 = kappa eta / rho, beta0 = beta eta / rho.
    """

    theta: float
    alpha: float
    gamma: float
    kappa: float
    beta: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("theta", "alpha", "gamma", "kappa", "beta", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.theta > self.beta0 / 2:
            raise ErgodicityError(
                f"ergodicity requires theta > beta0/2; got theta={self.theta}, "
                f"beta0/2={self.beta0 / 2}"
            )

    @property
    def rho(self) -> float:
        return self.alpha**2 + self.gamma**2

    @property
    def kappa0(self) -> float:
        return self.kappa * self.eta / self.rho

    @property
    def beta0(self) -> float:
        return self.beta * self.eta / self.rho

    def colored(self, epsilon: float) -> ColoredModel:
        a_mat = self.alpha * np.eye(2) + self.gamma * ROTATION_2D
        return ColoredModel(
            theta=self.theta * np.eye(2),
            basis=neg_identity_basis(2),
            diffusion=IsotropicNormDiffusion(self.kappa, self.beta, 2),
            A=a_mat,
            sigma=math.sqrt(self.eta) * np.eye(2),
            epsilon=epsilon,
        )

    def limit(self) -> LevyLimitModel:
        return LevyLimitModel(levy_limit(self), self.kappa0, self.beta0)


def levy_limit(model: LevyModel) -> Array:
    """Drift matrix of the radial multiplicative limit equation.

    L = (theta - beta0/2) I + (gamma beta0 / (2 alpha)) J with J the 2x2
    rotation generator.
    """
    beta0 = model.beta0
    if not model.theta > beta0 / 2:
        raise ErgodicityError(
            f"ergodicity requires theta > beta0/2; got theta={model.theta}, "
            f"beta0/2={beta0 / 2}"
        )
    return (model.theta - beta0 / 2) * np.eye(2) + (
        model.gamma * beta0 / (2 * model.alpha)
    ) * ROTATION_2D


# ---------------------------------------------------------------------------
# Limit coefficients of the general colored model
# ---------------------------------------------------------------------------

def _diffusion_value(diff: DiffusionLike, x) -> Array:
    if isinstance(diff, np.ndarray):
        return diff
    return diff.g(x)


def _diffusion_jacobian(diff: DiffusionLike, x, d: int, n: int) -> Array:
    if isinstance(diff, np.ndarray):
        return np.zeros((d, n, d))
    if diff.jacobian is not None:
        return np.asarray(diff.jacobian(x), dtype=float)
    # central finite differences of g, componentwise in x
    x = np.asarray(x, dtype=float)
    step = 1e-5 * (1.0 + np.linalg.norm(x))
    out = np.empty((d, n, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        out[:, :, j] = (diff.g(x + e) - diff.g(x - e)) / (2 * step)
    return out


@dataclass(frozen=True)
class LimitCoefficients:
    """Limit diffusion D, its symmetric part, and the drift correction b."""

    D: Callable[[Array], Array]
    Dsym: Callable[[Array], Array]
    b: Callable[[Array], Array]
    constant: bool = False
    dsym_value: Optional[Array] = None


def limit_coefficients(model: ColoredModel) -> LimitCoefficients:
    """Derive the white-noise limit coefficients of a colored model.

    With S_inf the stationary noise covariance, B(x) = g(x) A^{-1},
    R(x) = g(x) S_inf, and D(x) = R(x) B(x)^T, the limit drift correction is
    b(x) = div(D(x)^T) - B(x) div(R(x)^T) with per-row divergences.
    """
    a_mat = model.A
    d, n = model.dim, model.dim_noise
    s_inf = model.noise_stationary_covariance()
    try:
        a_inv = np.linalg.inv(a_mat)
    except np.linalg.LinAlgError:
        raise UnstableMatrixError("A must be invertible") from None
    p_mat = s_inf @ a_inv.T  # S_inf A^{-T}
    diff = model.diffusion

    if isinstance(diff, np.ndarray):
        d0 = diff @ p_mat @ diff.T
        dsym0 = 0.5 * (d0 + d0.T)
        zero = np.zeros(d)
        return LimitCoefficients(
            D=lambda x, _d0=d0: _d0.copy(),
            Dsym=lambda x, _ds=dsym0: _ds.copy(),
            b=lambda x, _z=zero: _z.copy(),
            constant=True,
            dsym_value=_frozen(dsym0),
        )

    def d_fun(x):
        g = _diffusion_value(diff, x)
        return g @ p_mat @ g.T

    def dsym_fun(x):
        d_val = d_fun(x)
        return 0.5 * (d_val + d_val.T)

    def b_fun(x):
        x = np.asarray(x, dtype=float)
        g = _diffusion_value(diff, x)
        dg = _diffusion_jacobian(diff, x, d, n)
        # div(D^T)_i = sum_j d/dx_j D[j, i]
        div_dt = np.einsum("jaj,ab,ib->i", dg, p_mat, g) + np.einsum(
            "ja,ab,ibj->i", g, p_mat, dg
        )
        # div(R^T)_a = sum_j d/dx_j R[j, a], with R = g S_inf
        div_rt = np.einsum("jbj,ba->a", dg, s_inf)
        return div_dt - g @ a_inv @ div_rt

    return LimitCoefficients(D=d_fun, Dsym=dsym_fun, b=b_fun, constant=False)


def additive_limit(model: ColoredModel) -> LimitModel:
    """White-noise limit of a constant-diffusion colored model."""
    if not model.constant_diffusion:
        raise ValueError("additive_limit requires a constant diffusion matrix")
    coeffs = limit_coefficients(model)
    return LimitModel(theta=model.theta, basis=model.basis, dsym=coeffs.dsym_value)


# ---------------------------------------------------------------------------
# Filtering-width assumption
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipativityBounds:
    """Constants (a, b, c) of the drift/noise dissipativity assumption.

    They satisfy theta f(x) . x <= a - b ||x||^2 and A y . y >= c ||y||^2;
    they are model-specific inputs, not derived quantities.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("dissipativity constants must be positive")


def validate_filter_width(bounds: DissipativityBounds, g_norm: float, delta: float) -> bool:
    """Check the lower bound on the filter width delta.

    Requires 2 b c - ||G||^2 > 0; returns True iff
    delta > c / (2 b c - ||G||^2).
    """
    margin = 2 * bounds.b * bounds.c - g_norm**2
    if margin <= 0:
        raise AssumptionError(
            f"dissipativity violated: 2*b*c - ||G||^2 = {margin:.6g} <= 0"
        )
    return delta > bounds.c / margin
