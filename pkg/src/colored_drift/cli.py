"""Command-line interface: seeded simulation, estimation, and experiments.

Every run writes its fully resolved configuration into the output directory;
re-running from that file with the same seed reproduces all outputs byte for
byte.  Exit status is 0 only when all requested checks pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ColoredDriftError, ConfigError
from .estimators import estimate_path
from .experiments import EXPERIMENTS
from .filtering import filter_path
from .model import make_basis
from .simulate import (
    LimitSimulator,
    ColoredSimulator,
    geometric_checkpoints,
    read_path_csv,
    write_path_csv,
)

THREADS_ENV = "COLORED_DRIFT_THREADS"


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _out_dir(args, cfg, default: str) -> Path:
    if args.out:
        return Path(args.out)
    directory = cfg.get("output", {}).get("directory") if cfg else None
    return Path(directory) if directory else Path(default)


def _overrides(args) -> dict:
    over = {}
    if getattr(args, "eps", None) is not None:
        over["model.epsilon"] = args.eps
    if getattr(args, "variant", None) is not None:
        over["estimator.variant"] = args.variant
    if getattr(args, "seed", None) is not None:
        over["experiment.base_seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        over["experiment.M"] = args.replications
        over["experiment.R"] = max(args.replications, 2)
    return over


def cmd_simulate(args) -> int:
    raw = cfgmod.load_config(args.config)
    cfg = cfgmod.resolve(raw, _overrides(args))
    model, data = cfgmod.build_model(cfg)
    grid = cfgmod.build_grid(cfg)
    seed = cfg["experiment"]["base_seed"]
    thin = cfg["output"]["thinning"]
    fcfg = cfgmod.build_filter(cfg)
    if data == "colored":
        path = ColoredSimulator(model, grid, seed).run(thin=1)
    else:
        path = LimitSimulator(model, grid, seed).run(thin=1)
    if fcfg is not None:
        path = filter_path(path, fcfg)
    if thin > 1:
        from .simulate import Path as TrajPath

        path = TrajPath(grid, path.X[::thin], None if path.Y is None
                        else path.Y[::thin], None if path.Z is None
                        else path.Z[::thin], seed=seed, thin=thin)
    out = _out_dir(args, cfg, "runs/simulate")
    out.mkdir(parents=True, exist_ok=True)
    write_path_csv(path, out / "path.csv")
    _write_json(out / "config.json", cfg)
    _write_json(out / "metadata.json", {
        "seed": seed,
        "h": grid.h,
        "T": grid.T,
        "n_steps": grid.n_steps,
        "thinning": thin,
        "data": data,
        "model_digest": cfgmod.config_digest(cfg["model"]),
    })
    print(f"wrote {out / 'path.csv'} (seed {seed}, h {grid.h:g}, T {grid.T:g})")
    return 0


def cmd_estimate(args) -> int:
    raw = cfgmod.load_config(args.config)
    cfg = cfgmod.resolve(raw, _overrides(args))
    est = cfg.get("estimator")
    if est is None:
        raise ConfigError("an estimator block is required for estimation")
    variant = est["variant"]
    path = read_path_csv(args.input)
    basis = None
    if not variant.endswith("levy"):
        theta = np.atleast_2d(np.asarray(cfg["model"].get("theta", 1.0), float))
        basis = make_basis(cfg["model"].get("basis", "neg-identity"),
                           path.X.shape[1])
        if basis.dim_in != path.X.shape[1]:
            raise ConfigError("basis dimension does not match the data")
    needs_z = variant in cfgmod.FILTERED_VARIANTS
    z = None
    if needs_z:
        if path.Z is not None:
            z = path.Z
        else:
            fcfg = cfgmod.build_filter(cfg)
            if fcfg is None:
                raise ConfigError(
                    f"variant {variant!r} needs a Z channel or a filter block")
            z = filter_path(path.X, fcfg, h=path.h_stored)
    checkpoints = cfg["experiment"].get("checkpoints")
    if checkpoints is None:
        checkpoints = geometric_checkpoints(path.grid).tolist()
    h = path.h_stored
    if variant in ("mle", "mle-filtered", "mle-levy"):
        ep = estimate_path(variant, path.X, z=z, basis=basis,
                           checkpoints=checkpoints, h=h)
    else:
        from .sgdct import sgdct_levy, sgdct_run

        lr = cfgmod.build_learning_rate(cfg)
        theta0 = est.get("theta0")
        if variant == "sgdct-levy":
            ep = sgdct_levy(path.X, z, lr, l0=theta0,
                            checkpoints=checkpoints, h=h)
        else:
            ep = sgdct_run(path.X, z if variant == "sgdct-filtered" else None,
                           basis, lr, theta0=theta0,
                           checkpoints=checkpoints, h=h)
    out = _out_dir(args, cfg, "runs/estimate")
    out.mkdir(parents=True, exist_ok=True)
    ep.to_csv(out / "estimate.csv")
    _write_json(out / "config.json", cfg)
    final = ep.values[-1]
    _write_json(out / "final.json", {
        "variant": variant,
        "at_time": float(ep.times[-1]),
        "value": final.tolist(),
        "condition_number": None if not np.isfinite(ep.cond[-1])
        else float(ep.cond[-1]),
    })
    print(f"wrote {out / 'estimate.csv'}; final estimate "
          f"{np.array2string(final, precision=4)}")
    return 0


def cmd_experiment(args) -> int:
    name = args.name
    if name not in EXPERIMENTS:
        available = ", ".join(sorted(EXPERIMENTS))
        print(f"unknown experiment {name!r}; available: {available}",
              file=sys.stderr)
        return 2
    raw = (cfgmod.load_config(args.config) if args.config
           else default_experiment_config(name))
    cfg = cfgmod.resolve(raw, _overrides(args))
    threads = args.threads or int(os.environ.get(THREADS_ENV, "1"))
    kwargs = _experiment_kwargs(name, cfg, threads, args)
    out = _out_dir(args, cfg, f"runs/{name}")
    out.mkdir(parents=True, exist_ok=True)
    result = EXPERIMENTS[name](out, **kwargs)
    _write_json(out / "config.json", cfg)
    _write_json(out / "verdict.json", {
        "experiment": name,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                   for c in result.checks],
        "all_passed": result.all_passed,
    })
    for check in result.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    return 0 if result.all_passed else 1


def default_experiment_config(name: str) -> dict:
    """Built-in protocol parameters for each named experiment."""
    base_1d = {"kind": "additive", "theta": 1.0, "epsilon": 0.1}
    configs = {
        "additive-1d": {
            "model": base_1d,
            "grid": {"T": 1000.0},
            "filter": {"delta": 1.0},
            "estimator": {"variant": "mle-filtered", "lr": {"a": 1.0, "b": 0.1}},
            "experiment": {"M": 20},
        },
        "additive-2d": {
            "model": {"kind": "additive", "theta": [[2.0, 1.0], [1.0, 2.0]],
                      "epsilon": 0.1,
                      "A": [[1.0, 1.0], [-1.0, 1.0]]},
            "grid": {"T": 2000.0},
            "filter": {"delta": 1.0},
            "estimator": {"variant": "mle-filtered",
                          "lr": {"a": 100.0, "b": 0.1}},
            "experiment": {"M": 20},
        },
        "levy": {
            "model": {"kind": "levy", "epsilon": 0.1},
            "grid": {"T": 4000.0},
            "filter": {"delta": 1.0},
            "estimator": {"variant": "mle-levy", "lr": {"a": 10.0, "b": 0.1}},
            "experiment": {"M": 20},
        },
        "clt": {
            "model": base_1d,
            "grid": {"T": 1000.0},
            "filter": {"delta": 1.0},
            "estimator": {"variant": "mle-filtered", "lr": {"a": 4.0, "b": 1.0}},
            "experiment": {"R": 1000},
        },
        "identities": {
            "model": base_1d,
            "grid": {"T": 1000.0},
            "filter": {"delta": 1.0},
            "experiment": {"M": 8},
        },
        "convergence-rate": {
            "model": base_1d,
            "grid": {"T": 10.0},
            "experiment": {"M": 200},
        },
    }
    return configs[name]


def _experiment_kwargs(name: str, cfg: dict, threads: int, args) -> dict:
    model = cfg["model"]
    exp = cfg["experiment"]
    lr = cfg.get("estimator", {}).get("lr", {})
    delta = cfg.get("filter", {}).get("delta")
    scheme = cfg.get("filter", {}).get("scheme", "exact-exponential")
    T = cfg["grid"]["T"]
    kw: dict = {"base_seed": exp["base_seed"]}
    if name == "convergence-rate":
        kw.update(T=T, n_reps=exp["M"])
        return kw
    if name == "identities":
        kw.update(M=exp["M"], epsilon=model["epsilon"],
                  delta=delta if delta is not None else 1.0, scheme=scheme)
        return kw
    kw.update(epsilon=model["epsilon"], T=T, threads=threads)
    if "h_rule" not in cfg["grid"]:
        kw["h"] = cfg["grid"]["h"]
    if delta is not None:
        kw.update(delta=delta, scheme=scheme)
    if lr:
        kw.update(a=lr["a"], b=lr["b"])
    if name == "clt":
        kw["R"] = exp["R"] if args.replications is None else args.replications
    else:
        kw["M"] = exp["M"]
    if name == "additive-1d":
        kw["theta"] = float(np.atleast_2d(model["theta"])[0, 0])
    elif name == "additive-2d":
        kw["theta"] = np.atleast_2d(np.asarray(model["theta"], float)).tolist()
    elif name == "levy":
        kw.update(theta=model["theta"], alpha=model["alpha"],
                  gamma=model["gamma"], kappa=model["kappa"],
                  beta=model["beta"], eta=model["eta"])
    return kw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colored-drift",
        description="Simulation and drift inference for SDEs driven by "
                    "colored noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON run configuration")
        p.add_argument("--seed", type=int, help="base seed (64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--eps", type=float, help="override model.epsilon")
        p.add_argument("--replications", type=int,
                       help="override the replication count")
        p.add_argument("--variant", help="override estimator.variant")
        p.add_argument("--threads", type=int, default=None,
                       help=f"parallel replications (env {THREADS_ENV})")

    p_sim = sub.add_parser("simulate", help="integrate the configured model")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="run an estimator on a path CSV")
    common(p_est)
    p_est.add_argument("input", help="path CSV produced by simulate")
    p_est.set_defaults(func=cmd_estimate)

    p_exp = sub.add_parser("experiment", help="run a named experiment bundle")
    p_exp.add_argument("name", help="experiment name")
    common(p_exp, config_required=False)
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ColoredDriftError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
