"""Monte Carlo studies: replication summaries, normality checks, and
stationary-identity diagnostics.

Every experiment is a pure function of its configuration and base seed;
replication r always uses seed base_seed + r, and aggregation runs in seed
order, so outputs are reproducible byte for byte.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ColoredDriftError
from .estimators import EstimatePath, MleAccumulator
from .filtering import ExponentialFilter, FilterConfig
from .model import (
    ColoredModel,
    IsotropicNormDiffusion,
    LevyLimitModel,
    LimitModel,
)
from .sgdct import LearningRate, SgdctAccumulator
from .simulate import (
    ColoredSimulator,
    LimitSimulator,
    TimeGrid,
    geometric_checkpoints,
    simulate_coupled,
)

Array = np.ndarray

MLE_KINDS = ("mle", "mle-filtered", "mle-levy")
SGDCT_KINDS = ("sgdct", "sgdct-filtered", "sgdct-levy")
FILTERED_KINDS = ("mle-filtered", "sgdct-filtered", "mle-levy", "sgdct-levy")
ALL_VARIANTS = MLE_KINDS + SGDCT_KINDS


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def batch_means(series: Array, n_batches: int = 32) -> tuple[float, float]:
    """Mean of a correlated series and its batch-means standard error."""
    series = np.asarray(series, dtype=float).ravel()
    if n_batches < 2:
        raise ValueError("need at least two batches")
    size = len(series) // n_batches
    if size < 1:
        raise ValueError("series too short for the requested batches")
    trimmed = series[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    se = means.std(ddof=1) / math.sqrt(n_batches)
    return float(series.mean()), float(se)


def freedman_diaconis_bins(samples: Array) -> tuple[Array, Array]:
    """Histogram counts and edges with Freedman-Diaconis widths."""
    counts, edges = np.histogram(np.asarray(samples, float), bins="fd")
    return counts, edges


# ---------------------------------------------------------------------------
# Replication harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationTask:
    """One estimator study: a data model plus the estimator arms to run."""

    model: Union[ColoredModel, LimitModel, LevyLimitModel]
    grid: TimeGrid
    variants: tuple[str, ...]
    delta: Optional[float] = None
    scheme: str = "exact-exponential"
    lr: Optional[LearningRate] = None
    theta0: Optional[Array] = None
    checkpoints: Optional[Array] = None
    x0: Optional[Array] = None
    y0: Optional[Array] = None

    def __post_init__(self):
        unknown = set(self.variants) - set(ALL_VARIANTS)
        if unknown:
            raise ValueError(f"unknown estimator variants: {sorted(unknown)}")
        if any(v in FILTERED_KINDS for v in self.variants) and self.delta is None:
            raise ValueError("filtered variants require a filtering width delta")
        if any(v in SGDCT_KINDS for v in self.variants) and self.lr is None:
            raise ValueError("online variants require a learning rate")
        levy = any(v.endswith("levy") for v in self.variants)
        if levy and self.model.dim != 2:
            raise ValueError("the radial multiplicative variants require d = 2")

    def resolved_checkpoints(self) -> Array:
        if self.checkpoints is not None:
            return np.asarray(self.checkpoints, dtype=float)
        return geometric_checkpoints(self.grid)


def _make_accumulator(variant: str, task: ReplicationTask, d: int, l: int):
    h = task.grid.h
    if variant == "mle-levy":
        return MleAccumulator(2, 2, h, negate=True)
    if variant in MLE_KINDS:
        return MleAccumulator(d, l, h)
    shape = (2, 2) if variant == "sgdct-levy" else (d, l)
    theta0 = np.zeros(shape) if task.theta0 is None else \
        np.asarray(task.theta0, float).reshape(shape)
    return SgdctAccumulator(theta0, task.lr, h, levy=(variant == "sgdct-levy"))


def _replicate(task: ReplicationTask, seed: int) -> dict[str, EstimatePath]:
    """Simulate one seed and run all estimator arms on the shared stream."""
    model = task.model
    grid = task.grid
    h = grid.h
    colored = isinstance(model, ColoredModel)
    if colored:
        sim = ColoredSimulator(model, grid, seed, x0=task.x0, y0=task.y0)
    else:
        sim = LimitSimulator(model, grid, seed, x0=task.x0)
    d = model.dim
    basis = getattr(model, "basis", None)
    l = basis.dim_out if basis is not None else d
    needs_z = any(v in FILTERED_KINDS for v in task.variants)
    needs_f = any(v in ("mle", "mle-filtered", "sgdct", "sgdct-filtered")
                  for v in task.variants)
    needs_fz = any(v in ("mle-filtered", "sgdct-filtered") for v in task.variants)
    filt = (ExponentialFilter(FilterConfig(task.delta, task.scheme), h, d)
            if needs_z else None)
    accs = {v: _make_accumulator(v, task, d, l) for v in task.variants}
    ckpt_times = task.resolved_checkpoints()
    ckpt_idx = [grid.index_of(t) for t in ckpt_times]
    if any(k < 1 for k in ckpt_idx):
        raise ValueError("checkpoints must be strictly positive grid times")
    snaps = {v: [] for v in task.variants}
    conds = {v: [] for v in task.variants}
    pending = list(ckpt_idx)
    pos = 0
    for k0, k1, xb, yb in sim.blocks(required_edges=ckpt_idx):
        xl = xb[:-1]
        dx = np.diff(xb, axis=0)
        zl = filt.consume(xl) if filt is not None else None
        fx = basis.eval_block(xl) if needs_f else None
        fz = basis.eval_block(zl) if needs_fz else None
        for v, acc in accs.items():
            if v == "mle":
                acc.update(dx, fx, fx)
            elif v == "mle-filtered":
                acc.update(dx, fx, fz)
            elif v == "mle-levy":
                acc.update(dx, xl, zl)
            elif v == "sgdct":
                acc.update(dx, fx, fx)
            elif v == "sgdct-filtered":
                acc.update(dx, fx, fz)
            else:
                acc.update(dx, xl, zl)
        while pos < len(pending) and pending[pos] == k1:
            t_here = pending[pos] * h
            for v, acc in accs.items():
                if isinstance(acc, MleAccumulator):
                    value, cond, _ = acc.snapshot(t_here)
                    snaps[v].append(value if value is not None
                                    else np.full(acc.num.shape, np.nan))
                    conds[v].append(cond)
                else:
                    snaps[v].append(acc.snapshot())
                    conds[v].append(np.nan)
            pos += 1
    out = {}
    for v in task.variants:
        out[v] = EstimatePath(ckpt_times, np.stack(snaps[v]),
                              np.array(conds[v]), variant=v)
    return out


@dataclass
class MonteCarloSummary:
    """Entrywise mean and spread of estimate paths over M replications."""

    variant: str
    times: Array                  # (K,)
    mean: Array                   # (K, d, l)
    std: Array                    # (K, d, l)
    M: int
    base_seed: int
    finals: Array                 # (M_ok, d, l)
    failures: list = field(default_factory=list)

    @property
    def mean_final(self) -> Array:
        return self.mean[-1]

    def to_json_dict(self, config_echo: Optional[dict] = None) -> dict:
        k, d, l = self.mean.shape
        return {
            "variant": self.variant,
            "M": self.M,
            "base_seed": self.base_seed,
            "times": self.times.tolist(),
            "mean": self.mean.reshape(k, d * l).tolist(),
            "std": self.std.reshape(k, d * l).tolist(),
            "failures": self.failures,
            "config": config_echo or {},
        }

    def to_csv(self, dest) -> None:
        k, d, l = self.mean.shape
        labels = [f"{i+1}{j+1}" for i in range(d) for j in range(l)]
        header = ["t"] + [f"mean_{s}" for s in labels] + [f"std_{s}" for s in labels]
        data = np.hstack([
            self.times[:, None],
            self.mean.reshape(k, d * l),
            self.std.reshape(k, d * l),
        ])
        out = dest if hasattr(dest, "write") else open(dest, "w")
        try:
            np.savetxt(out, data, fmt="%.17g", delimiter=",",
                       header=",".join(header), comments="")
        finally:
            if out is not dest:
                out.close()


def run_replications(task: ReplicationTask, M: int, base_seed: int,
                     threads: int = 1) -> dict[str, MonteCarloSummary]:
    """Run M seeded replications and summarize each estimator arm.

    Failed replications are excluded from the statistics and reported in the
    ``failures`` list of every summary.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    seeds = [base_seed + r for r in range(M)]

    def one(seed):
        try:
            return seed, _replicate(task, seed), None
        except ColoredDriftError as exc:
            return seed, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    failures = [{"seed": s, "error": err} for s, _, err in results if err]
    ok = [(s, paths) for s, paths, err in results if err is None]
    if not ok:
        raise ColoredDriftError("all replications failed")
    summaries = {}
    times = task.resolved_checkpoints()
    for v in task.variants:
        stack = np.stack([paths[v].values for _, paths in ok])   # (M_ok, K, d, l)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(stack, axis=0)
            std = (np.nanstd(stack, axis=0, ddof=1) if len(ok) > 1
                   else np.zeros_like(mean))
        summaries[v] = MonteCarloSummary(
            variant=v, times=times, mean=mean, std=std, M=M,
            base_seed=base_seed, finals=stack[:, -1], failures=failures,
        )
    return summaries


# ---------------------------------------------------------------------------
# Asymptotic-normality study
# ---------------------------------------------------------------------------

def clt_variance_mle(delta: float) -> float:
    """Predicted limit variance 2 (1 + delta) of the scaled filtered estimator."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return 2.0 * (1.0 + delta)


def clt_variance_sgdct(a: float, delta: float) -> float:
    """Predicted limit variance a^2 / (2 (a - (1 + delta))) of the online arm.

    Requires a > 1 + delta; a must be chosen sufficiently large for the
    normal limit to hold.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not a > 1.0 + delta:
        raise ValueError(
            f"a must be chosen sufficiently large: a > 1 + delta = {1.0 + delta}"
        )
    return a * a / (2.0 * (a - (1.0 + delta)))


def optimal_sgdct_rate(delta: float) -> float:
    """The a minimizing the online limit variance, a = 2 (1 + delta)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return 2.0 * (1.0 + delta)


def ou_stationary_predictions(epsilon: float, delta: float) -> dict[str, float]:
    """Closed stationary moments of the unit scalar model with filtering.

    Returns E[Z Y / eps], E[Z X], and E[Z^2] for theta = G = A = sigma = 1;
    the latter two are the white-noise limit values 1 / (2 (1 + delta)).
    """
    if delta <= 0:
        warnings.warn("delta <= 0 violates the filter-width assumption; "
                      "returning the formal formula values", RuntimeWarning)
    e2 = epsilon * epsilon
    return {
        "EZY_over_eps": e2 / (2.0 * (1.0 + e2) * (delta + e2)),
        "EZX": 1.0 / (2.0 * (1.0 + delta)),
        "EZ2": 1.0 / (2.0 * (1.0 + delta)),
    }


@dataclass
class CltSample:
    """Scaled estimator deviations across seeds with a Gaussian fit."""

    arm: str
    samples: Array
    predicted_variance: float
    fitted_mean: float
    fitted_variance: float
    bin_counts: Array
    bin_edges: Array
    wide_confidence: bool

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValueError("need at least two samples")
        if not self.fitted_variance > 0:
            raise ValueError("fitted variance must be positive")

    def to_json_dict(self) -> dict:
        return {
            "arm": self.arm,
            "samples": self.samples.tolist(),
            "predicted_variance": self.predicted_variance,
            "fitted_mean": self.fitted_mean,
            "fitted_variance": self.fitted_variance,
            "bins": {
                "counts": self.bin_counts.tolist(),
                "edges": self.bin_edges.tolist(),
            },
            "wide_confidence": self.wide_confidence,
        }


def _fit_sample(arm: str, samples: Array, predicted: float) -> CltSample:
    samples = np.asarray(samples, dtype=float)
    counts, edges = freedman_diaconis_bins(samples)
    return CltSample(
        arm=arm,
        samples=samples,
        predicted_variance=predicted,
        fitted_mean=float(samples.mean()),
        fitted_variance=float(samples.var(ddof=1)),
        bin_counts=counts,
        bin_edges=edges,
        wide_confidence=len(samples) < 30,
    )


def experiment_clt(R: int = 1000, base_seed: int = 0, *, epsilon: float = 0.1,
                   T: float = 1000.0, delta: float = 1.0, a: float = 4.0,
                   b: float = 1.0, h: Optional[float] = None,
                   scheme: str = "exact-exponential", theta: float = 1.0,
                   threads: int = 1) -> tuple[CltSample, CltSample]:
    """Collect sqrt(T) (estimate - theta) over R seeds for both estimators.

    Both arms run on the same colored unit-model realizations; the online arm
    is refused outright when a <= 1 + delta.
    """
    from .model import ou1d_model

    predicted_mle = clt_variance_mle(delta)
    predicted_sgdct = clt_variance_sgdct(a, delta)   # raises if a <= 1 + delta
    if R < 2:
        raise ValueError("R must be at least 2")
    model = ou1d_model(theta=theta, epsilon=epsilon)
    grid = TimeGrid.from_horizon(T, h if h is not None else epsilon**3)
    task = ReplicationTask(
        model=model, grid=grid, variants=("mle-filtered", "sgdct-filtered"),
        delta=delta, scheme=scheme, lr=LearningRate(a, b),
        checkpoints=np.array([grid.T]),
    )
    summaries = run_replications(task, R, base_seed, threads=threads)
    sqrt_t = math.sqrt(grid.T)
    mle_samples = sqrt_t * (summaries["mle-filtered"].finals[:, 0, 0] - theta)
    sgd_samples = sqrt_t * (summaries["sgdct-filtered"].finals[:, 0, 0] - theta)
    return (
        _fit_sample("mle-filtered", mle_samples, predicted_mle),
        _fit_sample("sgdct-filtered", sgd_samples, predicted_sgdct),
    )


# ---------------------------------------------------------------------------
# Stationary identities
# ---------------------------------------------------------------------------

IDENTITY_NAMES = (
    "colored-plain",      # noise/Gram balance on unfiltered colored data
    "colored-filtered",   # filtered balance on colored data
    "limit-filtered",     # filtered balance on limit data
    "levy-colored",       # radial multiplicative balance, colored data
    "levy-limit",         # radial multiplicative balance, limit data
)


@dataclass
class IdentityResidual:
    """Monte Carlo residual of one stationary balance identity."""

    name: str
    residual: Array            # entrywise mean over replications
    se: Array                  # entrywise standard error
    M: int
    terms: dict = field(default_factory=dict)
    term_se: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.residual) <= 3.0 * self.se))

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": np.asarray(self.residual).ravel().tolist(),
            "se": np.asarray(self.se).ravel().tolist(),
            "M": self.M,
            "passed": self.passed,
            "terms": {k: np.asarray(v).ravel().tolist()
                      for k, v in self.terms.items()},
        }


def _identity_terms(name: str, model, delta: float, scheme: str,
                    grid: TimeGrid, seed: int, burn_k: int) -> dict[str, Array]:
    """Per-replication time averages of the identity building blocks."""
    colored = isinstance(model, ColoredModel)
    sim = (ColoredSimulator(model, grid, seed) if colored
           else LimitSimulator(model, grid, seed))
    d = model.dim
    needs_z = name != "colored-plain"
    filt = (ExponentialFilter(FilterConfig(delta, scheme), grid.h, d)
            if needs_z else None)
    basis = getattr(model, "basis", None)
    sums: dict[str, Array] = {}
    count = 0

    def add(key, mat):
        if key in sums:
            sums[key] += mat
        else:
            sums[key] = mat

    for k0, k1, xb, yb in sim.blocks(required_edges=[burn_k]):
        xl = xb[:-1]
        zl = filt.consume(xl) if filt is not None else None
        if k1 <= burn_k:
            continue
        yl = yb[:-1] if yb is not None else None
        count += xl.shape[0]
        if name == "colored-plain":
            fx = basis.eval_block(xl)
            add("y_fx", np.einsum("ba,bj->aj", yl, fx))
            add("fx_fx", np.einsum("bi,bj->ij", fx, fx))
        elif name in ("colored-filtered", "limit-filtered"):
            fx = basis.eval_block(xl)
            fz = basis.eval_block(zl)
            jvp = basis.jac_vec_block(zl, xl - zl)
            add("fx_fz", np.einsum("bi,bj->ij", fx, fz))
            add("x_jvp", np.einsum("bi,bj->ij", xl, jvp))
            if name == "colored-filtered":
                add("y_fz", np.einsum("ba,bj->aj", yl, fz))
        else:
            add("x_z", np.einsum("bi,bj->ij", xl, zl))
            add("x_zx", np.einsum("bi,bj->ij", xl, zl - xl))
            if name == "levy-colored":
                diff = model.diffusion
                scale = np.sqrt(diff.kappa + diff.beta * (xl * xl).sum(axis=1))
                add("sy_z", np.einsum("b,ba,bj->aj", scale, yl, zl))
    return {k: v / count for k, v in sums.items()}


def _identity_residual_from_terms(name: str, model, delta: float,
                                  terms: dict[str, Array]) -> Array:
    if name == "colored-plain":
        g = model.diffusion
        return (g @ terms["y_fx"]) / model.epsilon + model.theta @ terms["fx_fx"]
    if name == "colored-filtered":
        g = model.diffusion
        return ((g @ terms["y_fz"]) / model.epsilon
                + model.theta @ terms["fx_fz"] + terms["x_jvp"] / delta)
    if name == "limit-filtered":
        return terms["x_jvp"] / delta + model.theta @ terms["fx_fz"]
    if name == "levy-colored":
        theta_s = float(model.theta[0, 0])
        eps = model.epsilon
        return (terms["sy_z"] / eps - theta_s * terms["x_z"]
                - terms["x_zx"] / delta)
    if name == "levy-limit":
        return terms["x_zx"] / delta + model.L @ terms["x_z"]
    raise ValueError(f"unknown identity {name!r}")


def identity_residuals(name: str, model, *, delta: float, T: float, M: int,
                       base_seed: int = 0, h: Optional[float] = None,
                       scheme: str = "exact-exponential",
                       burn_in: float = 0.1) -> IdentityResidual:
    """Monte Carlo residual of a stationary balance identity.

    Each replication contributes the time average of the identity terms after
    the burn-in fraction; the report passes when every residual entry lies
    within three standard errors of zero.
    """
    if name not in IDENTITY_NAMES:
        raise ValueError(f"identity must be one of {IDENTITY_NAMES}")
    if M < 2:
        raise ValueError("M must be at least 2 for a standard error")
    _check_identity_model(name, model)
    if h is None:
        h = model.epsilon**3 if isinstance(model, ColoredModel) else 1e-3
    grid = TimeGrid.from_horizon(T, h)
    burn_k = int(round(burn_in * grid.n_steps))
    residuals = []
    all_terms = []
    for r in range(M):
        terms = _identity_terms(name, model, delta, scheme, grid,
                                base_seed + r, burn_k)
        all_terms.append(terms)
        residuals.append(_identity_residual_from_terms(name, model, delta, terms))
    stack = np.stack(residuals)
    se = stack.std(axis=0, ddof=1) / math.sqrt(M)
    mean_terms = {}
    term_se = {}
    for key in all_terms[0]:
        values = np.stack([t[key] for t in all_terms])
        mean_terms[key] = values.mean(axis=0)
        term_se[key] = values.std(axis=0, ddof=1) / math.sqrt(M)
    return IdentityResidual(name=name, residual=stack.mean(axis=0), se=se,
                            M=M, terms=mean_terms, term_se=term_se)


def _check_identity_model(name: str, model) -> None:
    if name == "colored-plain":
        if not isinstance(model, ColoredModel) or model.dim != 1:
            raise ValueError("this identity requires a one-dimensional colored model")
    elif name == "colored-filtered":
        if not (isinstance(model, ColoredModel) and model.constant_diffusion):
            raise ValueError("this identity requires an additive colored model")
        if model.basis.jac_vec_block is None:
            raise ValueError("the basis must provide a jacobian")
    elif name == "limit-filtered":
        if not isinstance(model, LimitModel):
            raise ValueError("this identity requires an additive limit model")
        if model.basis.jac_vec_block is None:
            raise ValueError("the basis must provide a jacobian")
    elif name == "levy-colored":
        if not (isinstance(model, ColoredModel)
                and isinstance(model.diffusion, IsotropicNormDiffusion)):
            raise ValueError("this identity requires the radial multiplicative "
                             "colored model")
    elif name == "levy-limit":
        if not isinstance(model, LevyLimitModel):
            raise ValueError("this identity requires the radial multiplicative "
                             "limit model")


# ---------------------------------------------------------------------------
# Strong coupling rate
# ---------------------------------------------------------------------------

@dataclass
class CouplingRateResult:
    epsilons: Array
    rms: Array
    slope: float
    n_reps: int

    def to_json_dict(self) -> dict:
        return {
            "epsilons": self.epsilons.tolist(),
            "rms": self.rms.tolist(),
            "slope": self.slope,
            "n_reps": self.n_reps,
        }


def coupling_rms(model_factory: Callable[[float], ColoredModel],
                 epsilons: Sequence[float], T: float, n_reps: int,
                 base_seed: int = 0) -> CouplingRateResult:
    """Root-mean-square terminal gap between coupled colored and limit paths.

    Each epsilon uses its own fine step h = eps^3; the fitted log-log slope
    estimates the strong convergence order in epsilon.
    """
    epsilons = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    rms = np.empty(len(epsilons))
    for i, eps in enumerate(epsilons):
        model = model_factory(eps)
        grid = TimeGrid.eps_cubed(T, eps)
        gaps = np.empty(n_reps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for r in range(n_reps):
                colored, limit = simulate_coupled(model, grid, base_seed + r)
                gaps[r] = colored.X[-1, 0] - limit.X[-1, 0]
        rms[i] = math.sqrt(float(np.mean(gaps**2)))
    slope = float(np.polyfit(np.log(epsilons), np.log(rms), 1)[0])
    return CouplingRateResult(epsilons, rms, slope, n_reps)


# ---------------------------------------------------------------------------
# Named experiment bundles
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    name: str
    checks: list
    data: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _write_json(out_dir, filename, payload) -> Optional[str]:
    if out_dir is None:
        return None
    import json
    from pathlib import Path

    path = Path(out_dir) / filename
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return str(path)


def _emit_summaries(out_dir, result: ExperimentResult, summaries: dict,
                    config_echo: dict) -> None:
    for variant, summary in summaries.items():
        p = _write_json(out_dir, f"{variant}_summary.json",
                        summary.to_json_dict(config_echo))
        if p:
            result.outputs.append(p)
        if out_dir is not None:
            from pathlib import Path

            csv_path = Path(out_dir) / f"{variant}_summary.csv"
            summary.to_csv(csv_path)
            result.outputs.append(str(csv_path))


def _entry_check(name: str, estimate: Array, truth: Array, tol: float) -> CheckResult:
    err = float(np.abs(np.asarray(estimate) - np.asarray(truth)).max())
    return CheckResult(name, err <= tol,
                       f"max entry error {err:.4f} (tolerance {tol})")


def experiment_additive_1d(out_dir=None, *, M: int = 20, base_seed: int = 0,
                           epsilon: float = 0.1, T: float = 1000.0,
                           delta: float = 1.0, a: float = 1.0, b: float = 0.1,
                           h: Optional[float] = None,
                           scheme: str = "exact-exponential",
                           theta: float = 1.0,
                           threads: int = 1) -> ExperimentResult:
    """Scalar benchmark: plain estimators collapse to zero on colored data
    while the filtered estimators recover the drift coefficient."""
    from .model import ou1d_model

    model = ou1d_model(theta=theta, epsilon=epsilon)
    grid = TimeGrid.from_horizon(T, h if h is not None else epsilon**3)
    task = ReplicationTask(
        model=model, grid=grid,
        variants=("mle", "sgdct", "mle-filtered", "sgdct-filtered"),
        delta=delta, scheme=scheme, lr=LearningRate(a, b),
    )
    summaries = run_replications(task, M, base_seed, threads=threads)
    config_echo = {"experiment": "additive-1d", "M": M, "base_seed": base_seed,
                   "epsilon": epsilon, "T": T, "delta": delta,
                   "lr": {"a": a, "b": b}, "h": grid.h, "scheme": scheme,
                   "theta": theta}
    result = ExperimentResult("additive-1d", [], data={"summaries": summaries})
    for v in ("mle", "sgdct"):
        final = float(summaries[v].mean_final[0, 0])
        result.checks.append(CheckResult(
            f"{v} collapses to zero", abs(final) <= 0.1,
            f"mean final estimate {final:+.4f} (tolerance 0.1 around 0)"))
    late = summaries["mle"].times >= min(200.0, 0.2 * T)
    flat = float(np.abs(summaries["mle"].mean[late, 0, 0]).max())
    result.checks.append(CheckResult(
        "mle late curve stays near zero", flat <= 0.1,
        f"max |mean| over late checkpoints {flat:.4f} (tolerance 0.1)"))
    for v in ("mle-filtered", "sgdct-filtered"):
        final = float(summaries[v].mean_final[0, 0])
        result.checks.append(CheckResult(
            f"{v} recovers the drift", abs(final - theta) <= 0.15,
            f"mean final estimate {final:.4f} (tolerance 0.15 around {theta})"))
    _emit_summaries(out_dir, result, summaries, config_echo)
    return result


def experiment_additive_2d(out_dir=None, *, M: int = 20, base_seed: int = 0,
                           epsilon: float = 0.1, T: float = 2000.0,
                           delta: float = 1.0, a: float = 100.0, b: float = 0.1,
                           theta: Sequence[Sequence[float]] = ((2.0, 1.0), (1.0, 2.0)),
                           alpha: float = 1.0, gamma: float = 1.0,
                           eta: float = 1.0, h: Optional[float] = None,
                           scheme: str = "exact-exponential",
                           threads: int = 1) -> ExperimentResult:
    """Planar additive benchmark: filtered estimators recover the drift matrix."""
    from .model import additive_2d_model

    model = additive_2d_model(theta, alpha=alpha, gamma=gamma, eta=eta,
                              epsilon=epsilon)
    grid = TimeGrid.from_horizon(T, h if h is not None else epsilon**3)
    task = ReplicationTask(
        model=model, grid=grid, variants=("mle-filtered", "sgdct-filtered"),
        delta=delta, scheme=scheme, lr=LearningRate(a, b),
    )
    summaries = run_replications(task, M, base_seed, threads=threads)
    truth = np.asarray(theta, dtype=float)
    config_echo = {"experiment": "additive-2d", "M": M, "base_seed": base_seed,
                   "epsilon": epsilon, "T": T, "delta": delta,
                   "lr": {"a": a, "b": b}, "h": grid.h, "scheme": scheme,
                   "theta": truth.tolist(), "alpha": alpha, "gamma": gamma,
                   "eta": eta}
    result = ExperimentResult("additive-2d", [], data={"summaries": summaries})
    for v in ("mle-filtered", "sgdct-filtered"):
        result.checks.append(_entry_check(
            f"{v} recovers the drift matrix", summaries[v].mean_final, truth, 0.2))
    _emit_summaries(out_dir, result, summaries, config_echo)
    return result


def experiment_levy(out_dir=None, *, M: int = 20, base_seed: int = 0,
                    epsilon: float = 0.1, T: float = 4000.0, delta: float = 1.0,
                    a: float = 10.0, b: float = 0.1, theta: float = 1.0,
                    alpha: float = 1.0, gamma: float = 1.0, kappa: float = 1.0,
                    beta: float = 1.0, eta: float = 1.0,
                    h: Optional[float] = None,
                    scheme: str = "exact-exponential",
                    threads: int = 1) -> ExperimentResult:
    """Radial multiplicative benchmark: the limit drift matrix, including its
    rotational part, is recovered from colored data."""
    from .model import LevyModel, levy_limit

    levy = LevyModel(theta=theta, alpha=alpha, gamma=gamma, kappa=kappa,
                     beta=beta, eta=eta)
    truth = levy_limit(levy)
    model = levy.colored(epsilon)
    grid = TimeGrid.from_horizon(T, h if h is not None else epsilon**3)
    task = ReplicationTask(
        model=model, grid=grid, variants=("mle-levy", "sgdct-levy"),
        delta=delta, scheme=scheme, lr=LearningRate(a, b),
    )
    summaries = run_replications(task, M, base_seed, threads=threads)
    config_echo = {"experiment": "levy", "M": M, "base_seed": base_seed,
                   "epsilon": epsilon, "T": T, "delta": delta,
                   "lr": {"a": a, "b": b}, "h": grid.h, "scheme": scheme,
                   "theta": theta, "alpha": alpha, "gamma": gamma,
                   "kappa": kappa, "beta": beta, "eta": eta,
                   "limit_matrix": truth.tolist()}
    result = ExperimentResult("levy", [], data={"summaries": summaries,
                                                "truth": truth})
    result.checks.append(_entry_check(
        "mle-levy recovers the limit matrix",
        summaries["mle-levy"].mean_final, truth, 0.15))
    result.checks.append(_entry_check(
        "sgdct-levy recovers the limit matrix",
        summaries["sgdct-levy"].mean_final, truth, 0.2))
    off = summaries["mle-levy"].mean_final
    signs_ok = off[0, 1] > 0 and off[1, 0] < 0
    result.checks.append(CheckResult(
        "rotational part detected with correct sign", bool(signs_ok),
        f"off-diagonal estimates {off[0, 1]:+.4f}, {off[1, 0]:+.4f}"))
    _emit_summaries(out_dir, result, summaries, config_echo)
    return result


def experiment_clt_bundle(out_dir=None, *, R: int = 1000, base_seed: int = 0,
                          epsilon: float = 0.1, T: float = 1000.0,
                          delta: float = 1.0, a: float = 4.0, b: float = 1.0,
                          h: Optional[float] = None,
                          scheme: str = "exact-exponential",
                          threads: int = 1) -> ExperimentResult:
    """Normality study: fitted variances against the predicted limits."""
    mle_sample, sgd_sample = experiment_clt(
        R, base_seed, epsilon=epsilon, T=T, delta=delta, a=a, b=b, h=h,
        scheme=scheme, threads=threads,
    )
    var_tol = 0.25 if R >= 1000 else 0.35
    result = ExperimentResult("clt", [], data={"mle": mle_sample,
                                               "sgdct": sgd_sample})
    for sample in (mle_sample, sgd_sample):
        rel = abs(sample.fitted_variance - sample.predicted_variance) \
            / sample.predicted_variance
        result.checks.append(CheckResult(
            f"{sample.arm} variance matches the prediction", rel <= var_tol,
            f"fitted {sample.fitted_variance:.3f} vs predicted "
            f"{sample.predicted_variance:.3f} (relative error {rel:.2%}, "
            f"tolerance {var_tol:.0%})"))
        mean_tol = 3.0 * math.sqrt(sample.predicted_variance / R)
        result.checks.append(CheckResult(
            f"{sample.arm} mean is centered", abs(sample.fitted_mean) <= mean_tol,
            f"fitted mean {sample.fitted_mean:+.3f} (tolerance {mean_tol:.3f})"))
    if out_dir is not None:
        for tag, sample in (("mle", mle_sample), ("sgdct", sgd_sample)):
            p = _write_json(out_dir, f"clt_{tag}.json", sample.to_json_dict())
            result.outputs.append(p)
        _write_json(out_dir, "clt_config.json",
                    {"experiment": "clt", "R": R, "base_seed": base_seed,
                     "epsilon": epsilon, "T": T, "delta": delta,
                     "lr": {"a": a, "b": b}, "scheme": scheme})
    return result


def experiment_identities(out_dir=None, *, M: int = 8, base_seed: int = 0,
                          epsilon: float = 0.1, delta: float = 1.0,
                          scheme: str = "exact-exponential",
                          t_scale: float = 1.0) -> ExperimentResult:
    """Monte Carlo verification of the stationary balance identities.

    Each identity runs at its own horizon and step: the residuals that reduce
    to near-telescoping time averages have tiny Monte Carlo noise, so their
    integrator bias must be pushed well below it with a step much finer than
    the data-generation convention h = eps^3.
    """
    from .model import LevyModel, additive_limit, ou1d_model

    colored = ou1d_model(epsilon=epsilon)
    limit = additive_limit(colored)
    levy = LevyModel(theta=1.0, alpha=1.0, gamma=1.0, kappa=1.0, beta=1.0)
    protocols = [
        ("colored-plain", colored, 100.0, 1e-5, 2 * M),
        ("colored-filtered", colored, 1000.0, 1e-4, M),
        ("limit-filtered", limit, 1000.0, 5e-4, M),
        ("levy-colored", levy.colored(epsilon), 1000.0, 1e-4, M),
        ("levy-limit", levy.limit(), 2000.0, 5e-4, M),
    ]
    reports = [
        identity_residuals(name, model, delta=delta, T=T * t_scale, M=m,
                           base_seed=base_seed, h=h, scheme=scheme)
        for name, model, T, h, m in protocols
    ]
    result = ExperimentResult("identities", [], data={"reports": reports})
    for rep in reports:
        worst = float(np.abs(rep.residual / np.maximum(rep.se, 1e-300)).max())
        result.checks.append(CheckResult(
            f"identity {rep.name} holds", rep.passed,
            f"max |residual|/SE = {worst:.2f} (tolerance 3)"))
    # cross-check against the closed value theta / (2 (1 + delta)) on the
    # unit scalar limit model, where E[X^2] = 1/2 and E[XZ] = 1/(2(1+delta))
    lf = reports[2]
    closed = 1.0 / (2.0 * (1.0 + delta))
    measured = float(-lf.terms["x_jvp"][0, 0] / delta)
    se = float(lf.term_se["x_jvp"][0, 0] / delta)
    result.checks.append(CheckResult(
        "filtered balance matches its closed value",
        abs(measured - closed) <= 3.0 * se,
        f"measured {measured:.4f} vs closed {closed:.4f} (3 SE = {3 * se:.4f})"))
    if out_dir is not None:
        payload = {"experiment": "identities", "M": M, "base_seed": base_seed,
                   "delta": delta, "epsilon": epsilon, "t_scale": t_scale,
                   "reports": [r.to_json_dict() for r in reports]}
        result.outputs.append(_write_json(out_dir, "identities.json", payload))
    return result


def experiment_convergence_rate(out_dir=None, *,
                                epsilons: Sequence[float] = (0.2, 0.1, 0.05),
                                T: float = 10.0, n_reps: int = 200,
                                base_seed: int = 0) -> ExperimentResult:
    """Strong coupling rate of the colored system to its limit."""
    from .model import ou1d_model

    def factory(eps):
        return ou1d_model(epsilon=eps)

    rate = coupling_rms(factory, epsilons, T, n_reps, base_seed)
    result = ExperimentResult("convergence-rate", [], data={"rate": rate})
    result.checks.append(CheckResult(
        "terminal gap shrinks linearly in epsilon",
        0.6 <= rate.slope <= 1.4,
        f"fitted log-log slope {rate.slope:.3f} (expected in [0.6, 1.4])"))
    if out_dir is not None:
        payload = dict(rate.to_json_dict(), experiment="convergence-rate",
                       base_seed=base_seed, T=T)
        result.outputs.append(_write_json(out_dir, "convergence_rate.json",
                                          payload))
    return result


EXPERIMENTS = {
    "additive-1d": experiment_additive_1d,
    "additive-2d": experiment_additive_2d,
    "levy": experiment_levy,
    "clt": experiment_clt_bundle,
    "identities": experiment_identities,
    "convergence-rate": experiment_convergence_rate,
}
