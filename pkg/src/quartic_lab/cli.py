"""Command-line runner for sampling, tables, sums, and experiments.

Config files are flat JSON with a strict schema: unknown keys are
rejected so a typo cannot silently fall back to a default.  All
randomness flows from the single seed in the config (or --seed), and
rerunning any verb with the same inputs reproduces its output files
byte for byte, whatever the worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import analytic, functions, sums, verify
from .errors import ConfigError, QuarticLabError
from .kernels import CovKernel, Grid, fbm_composite_kernel, fbm_quarter_kernel, heat_kernel
from .simulate import save_ensemble, write_ensemble_csv

_NAMED_KERNELS = {
    "heat": heat_kernel,
    "fbm": fbm_quarter_kernel,
    "fbm-composite": fbm_composite_kernel,
    "bm": lambda: CovKernel("bm"),
}


def _kernel_from(value):
    if isinstance(value, CovKernel):
        return value
    if isinstance(value, dict):
        return CovKernel.from_dict(value)
    if isinstance(value, str):
        maker = _NAMED_KERNELS.get(value)
        if maker is None:
            raise ConfigError(
                f"unknown kernel {value!r}; named kernels: {', '.join(sorted(_NAMED_KERNELS))}"
            )
        return maker()
    raise ConfigError("kernel must be a name or a kernel record")


def _g_from(value, coeffs=None):
    if value is None:
        return None
    if isinstance(value, dict):
        return functions.from_spec(value)
    if isinstance(value, str):
        if value == "poly_k":
            if coeffs is None:
                raise ConfigError("g = poly_k needs coefficients (--coeffs c0,c1,...)")
            return functions.builtin("poly_k", coeffs=coeffs)
        if coeffs is not None:
            raise ConfigError("--coeffs applies only to g = poly_k")
        return functions.builtin(value)
    raise ConfigError("g must be a test-function name or spec record")


def _float_list(text):
    try:
        values = [float(v) for v in str(text).split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}") from exc
    if not values:
        raise ConfigError("expected at least one value in the list")
    return values


# ---------------------------------------------------------------------------
# Experiment configuration.
# ---------------------------------------------------------------------------

EXPERIMENTS = ("ito", "bn", "trapezoid", "expansion", "fbm-window")

_ALLOWED_KEYS = {
    "ito": {
        "kernel", "c", "g", "n", "m", "horizon", "probes", "seed", "seeds",
        "window_start", "tolerances", "out_dir",
    },
    "fbm-window": {
        "kernel", "c", "g", "n", "m", "horizon", "probes", "seed", "seeds",
        "window_start", "tolerances", "out_dir",
    },
    "bn": {"kernel", "n", "m", "probes", "seed", "tolerances", "out_dir"},
    "trapezoid": {"kernel", "g", "n_list", "m", "probes", "seed", "tolerances", "out_dir"},
    "expansion": {"kernel", "g", "n_list", "m", "probes", "seed", "tolerances", "out_dir"},
}

_ALLOWED_TOLERANCES = {
    "ito": {"ks_tol", "mean_tol", "var_tol"},
    "fbm-window": {"ks_tol", "mean_tol", "var_tol"},
    "bn": {"ks_tol", "corr_tol"},
    "trapezoid": {"final_tol", "max_inversions"},
    "expansion": {"max_inversions"},
}

_DEFAULTS = {
    "ito": {
        "kernel": "heat", "c": None, "g": "square", "n": 4096, "m": 1000,
        "horizon": None, "probes": (1.0,), "seed": 7, "seeds": 3, "window_start": 0.0,
    },
    "fbm-window": {
        "kernel": "fbm-composite", "c": None, "g": "square", "n": 4096, "m": 1000,
        "horizon": None, "probes": (1.0,), "seed": 7, "seeds": 3, "window_start": 0.1,
    },
    "bn": {"kernel": "heat", "n": 4096, "m": 1000, "probes": (0.25, 0.5, 0.75, 1.0), "seed": 7},
    "trapezoid": {
        "kernel": "heat", "g": "square", "n_list": (256, 1024, 4096), "m": 200,
        "probes": (1.0,), "seed": 7,
    },
    "expansion": {
        "kernel": "heat", "g": "square", "n_list": (256, 1024, 4096), "m": 200,
        "probes": (1.0,), "seed": 7,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment inputs; every field is already normalized."""

    experiment: str
    kernel: CovKernel
    c: float | None
    g: object | None
    n: int | None
    n_list: tuple[int, ...] | None
    m: int
    horizon: float | None
    probes: tuple[float, ...]
    seed: int
    seeds: int
    window_start: float
    tolerances: dict
    out_dir: str | None

    @staticmethod
    def from_dict(experiment, rec):
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )
        rec = dict(rec or {})
        allowed = _ALLOWED_KEYS[experiment]
        unknown = sorted(set(rec) - allowed)
        if unknown:
            raise ConfigError(
                f"unknown config keys for {experiment}: {', '.join(unknown)}; "
                f"allowed: {', '.join(sorted(allowed))}"
            )
        merged = dict(_DEFAULTS[experiment])
        merged.update({k: v for k, v in rec.items() if k not in ("tolerances", "out_dir")})

        tolerances = dict(rec.get("tolerances") or {})
        bad_tol = sorted(set(tolerances) - _ALLOWED_TOLERANCES[experiment])
        if bad_tol:
            raise ConfigError(
                f"unknown tolerance keys for {experiment}: {', '.join(bad_tol)}; "
                f"allowed: {', '.join(sorted(_ALLOWED_TOLERANCES[experiment]))}"
            )
        for key, value in tolerances.items():
            if key == "max_inversions":
                if not isinstance(value, int) or value < 0:
                    raise ConfigError("max_inversions must be a nonnegative integer")
            elif not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"tolerance {key} must be positive, got {value!r}")

        probes = tuple(float(t) for t in merged.get("probes", (1.0,)))
        if not probes or any(t <= 0 for t in probes):
            raise ConfigError("probes must be positive times")
        horizon = merged.get("horizon")
        if horizon is not None and max(probes) > float(horizon) + 1e-12:
            raise ConfigError("probe times must not exceed the horizon")

        n = merged.get("n")
        n_list = merged.get("n_list")
        if "n" in allowed and (not isinstance(n, int) or n < 2):
            raise ConfigError("n must be an integer >= 2")
        if "n_list" in allowed:
            if not n_list or any(not isinstance(v, int) or v < 2 for v in n_list):
                raise ConfigError("n_list must hold integers >= 2")
            n_list = tuple(n_list)
            n = None
        else:
            n_list = None

        m = merged.get("m")
        if not isinstance(m, int) or m < 1:
            raise ConfigError("m must be a positive integer")
        seed = merged.get("seed")
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        seeds = int(merged.get("seeds", 1))
        if seeds < 1:
            raise ConfigError("seeds must be >= 1")
        window_start = float(merged.get("window_start", 0.0))
        if window_start < 0:
            raise ConfigError("window_start must be nonnegative")

        return ExperimentConfig(
            experiment=experiment,
            kernel=_kernel_from(merged["kernel"]),
            c=None if merged.get("c") is None else float(merged["c"]),
            g=_g_from(merged.get("g")),
            n=n,
            n_list=n_list,
            m=m,
            horizon=None if horizon is None else float(horizon),
            probes=probes,
            seed=seed,
            seeds=seeds,
            window_start=window_start,
            tolerances=tolerances,
            out_dir=rec.get("out_dir"),
        )


def run_experiment(config, workers=1):
    """Dispatch a validated config to its experiment function."""
    tol = config.tolerances
    if config.experiment in ("ito", "fbm-window"):
        return verify.verify_ito_formula(
            kernel=config.kernel,
            c=config.c,
            g=config.g,
            n=config.n,
            m=config.m,
            probes=config.probes,
            seed=config.seed,
            seeds=config.seeds,
            window_start=config.window_start,
            horizon=config.horizon,
            workers=workers,
            experiment_name=config.experiment,
            **tol,
        )
    if config.experiment == "bn":
        return verify.verify_bn_limit(
            kernel=config.kernel,
            n=config.n,
            m=config.m,
            probes=config.probes,
            seed=config.seed,
            workers=workers,
            **tol,
        )
    if config.experiment == "trapezoid":
        return verify.verify_trapezoid_ucp(
            kernel=config.kernel,
            g=config.g,
            n_list=config.n_list,
            m=config.m,
            probes=config.probes,
            seed=config.seed,
            workers=workers,
            **tol,
        )
    return verify.verify_expansion_residual(
        kernel=config.kernel,
        g=config.g,
        n_list=config.n_list,
        m=config.m,
        probes=config.probes,
        seed=config.seed,
        workers=workers,
        **tol,
    )


# ---------------------------------------------------------------------------
# Verbs.
# ---------------------------------------------------------------------------

def _cmd_compute_kappa(args):
    result = analytic.kappa(args.tol)
    print(f"kappa = {result.value:.10f}")
    print(f"certified bound = {result.bound:.3e} (requested {args.tol:.1e})")
    print(f"series terms = {result.terms}")
    return 0


def _cmd_cov_table(args):
    table = analytic.discrete_cov_table(args.n, maxj=args.maxj, lag=args.lag)
    report = analytic.audit_cov_table(args.n, maxj=args.maxj)
    os.makedirs(args.out, exist_ok=True)

    with open(os.path.join(args.out, "table.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("j,sigma_sq,sigma_hat\n")
        for j in range(1, table.maxj + 1):
            fh.write(f"{j},{table.sigma_sq[j - 1]:.17g},{table.sigma_hat[j - 1]:.17g}\n")
    with open(os.path.join(args.out, "cross.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,cov\n")
        for i in range(1, table.maxj + 1):
            for ell in range(1, table.lag + 1):
                value = table.cross[i - 1, ell - 1]
                if not math.isnan(value):
                    fh.write(f"{i},{i + ell},{value:.17g}\n")
    with open(os.path.join(args.out, "audit.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")

    status = "ok" if report.ok else "VIOLATIONS FOUND"
    print(f"covariance audit at n={args.n}, maxj={report.maxj}: {status}")
    print(f"  sig2 max ratio   = {report.sig2_max_ratio:.6f}")
    print(f"  sighat sup ratio = {report.sighat_sup_ratio:.6f} (reported, no pinned constant)")
    print(f"  sigdel sup ratio = {report.sigdel_sup_ratio:.6f} (reported, no pinned constant)")
    print(f"wrote table.csv, cross.csv, audit.json to {args.out}")
    return 0 if report.ok else 1


def _cmd_sample(args):
    kernel = _kernel_from(args.kernel)
    grid = Grid(args.n, args.horizon)
    ens = verify.draw_ensemble(kernel, grid, args.replicates, args.seed)
    if args.format == "bin":
        save_ensemble(ens, args.out)
    else:
        write_ensemble_csv(ens, args.out)
    print(
        f"wrote {args.replicates} paths (kernel {kernel.canonical_id()}, n={args.n}, "
        f"T={args.horizon:g}) to {args.out}"
    )
    return 0


_SUMS_FUNCTIONALS = ("midpoint", "offset", "trapezoid", "jn", "qn", "bn", "bnbar", "power")


def _cmd_sums(args):
    if args.functional not in _SUMS_FUNCTIONALS:
        raise ConfigError(
            f"unknown functional {args.functional!r}; choose from {', '.join(_SUMS_FUNCTIONALS)}"
        )
    needs_g = args.functional in ("midpoint", "offset", "trapezoid", "jn", "power")
    if not needs_g:
        for flag, value in (("--g", args.g), ("--deriv", args.deriv), ("--p", args.p)):
            if value is not None:
                raise ConfigError(f"{flag} does not apply to functional {args.functional!r}")
    if args.functional == "power" and args.p not in (3, 4):
        raise ConfigError("--p must be 3 or 4 for the power functional")

    probes = _float_list(args.t) if args.t else [1.0]
    horizon = args.horizon if args.horizon is not None else max(probes)
    if max(probes) > horizon + 1e-12:
        raise ConfigError("probe times must not exceed the horizon")
    kernel = _kernel_from(args.kernel)
    grid = Grid(args.n, horizon)
    g = _g_from(args.g or "const", coeffs=_float_list(args.coeffs) if args.coeffs else None)
    deriv = args.deriv if args.deriv is not None else 0

    ens = verify.draw_ensemble(kernel, grid, args.replicates, args.seed)
    values = ens.values
    if args.functional == "midpoint":
        series = sums.midpoint_sum_ensemble(values, grid, g, deriv)
    elif args.functional == "offset":
        series = sums.offset_midpoint_sum_ensemble(values, grid, g, deriv)
    elif args.functional == "trapezoid":
        series = sums.trapezoid_sum_ensemble(values, grid, g, deriv)
    elif args.functional == "jn":
        series = sums.alt_qv_weighted_ensemble(values, grid, g, deriv)
    elif args.functional == "qn":
        series = sums.qn_process_ensemble(values, grid)
    elif args.functional == "bn":
        series = sums.bn_process_ensemble(values, grid)
    elif args.functional == "bnbar":
        series = sums.bn_smoothed_ensemble(values, grid)
    else:
        series = sums.power_sum_ensemble(
            values, grid, g, args.p, parity=args.parity, eval_point=args.eval_point,
            deriv_order=deriv,
        )

    times = grid.times()
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replicate,t,value\n")
        for rep in range(args.replicates):
            for t in probes:
                k = grid.index_at(t)
                fh.write(f"{rep},{times[k]:.17g},{series[rep, k]:.17g}\n")
    for t in probes:
        col = series[:, grid.index_at(t)]
        se = float(np.std(col, ddof=1) / np.sqrt(col.size)) if col.size > 1 else float("nan")
        print(f"t={t:g}: mean = {col.mean():.6f}  se = {se:.6f}  ({col.size} replicates)")
    print(f"wrote {args.out}")
    return 0


def _cmd_verify(args):
    rec = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                rec = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise ConfigError("config file must hold a JSON object")
    if args.seed is not None:
        rec["seed"] = args.seed
    if args.n is not None:
        rec["n"] = args.n
    if args.replicates is not None:
        rec["m"] = args.replicates
    config = ExperimentConfig.from_dict(args.experiment, rec)

    report = run_experiment(config, workers=args.workers)
    outdir = args.out or config.out_dir or f"verify-{config.experiment}"
    summary_path, csv_path = report.write(outdir)

    for check in report.checks:
        if check.passed is None:
            verdict = "INFO"
        elif check.passed:
            verdict = "pass"
        else:
            verdict = "FAIL"
        flag = "  [flagged]" if check.flagged else ""
        bound = "-" if check.threshold is None else f"{check.threshold:g}"
        print(f"  [{verdict}] {check.name}: {check.value:.6g} (threshold {bound}){flag}")
    print(f"wrote {summary_path} and {csv_path}")
    print(f"experiment {config.experiment}: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="quartic-lab",
        description="Simulation laboratory for quartic-variation Gaussian processes.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("compute-kappa", help="series constant with a certified error bound")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=_cmd_compute_kappa)

    p = sub.add_parser("cov-table", help="increment covariance table and inequality audit")
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--maxj", type=int, default=None)
    p.add_argument("--lag", type=int, default=None)
    p.add_argument("--out", default="cov-table")
    p.set_defaults(func=_cmd_cov_table)

    p = sub.add_parser("sample", help="draw an exact-covariance path ensemble")
    p.add_argument("--kernel", default="heat")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--T", dest="horizon", type=float, default=1.0)
    p.add_argument("--M", dest="replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("sums", help="evaluate a discrete functional over an ensemble")
    p.add_argument("--functional", required=True, choices=_SUMS_FUNCTIONALS)
    p.add_argument("--g", default=None)
    p.add_argument("--coeffs", default=None, help="comma list, only with --g poly_k")
    p.add_argument("--deriv", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--parity", choices=("odd", "even", "all"), default="all")
    p.add_argument("--eval-point", dest="eval_point", choices=("left", "right"), default="left")
    p.add_argument("--t", default=None, help="comma list of probe times (default 1.0)")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--T", dest="horizon", type=float, default=None)
    p.add_argument("--M", dest="replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--kernel", default="heat")
    p.add_argument("--out", default="sums.csv")
    p.set_defaults(func=_cmd_sums)

    p = sub.add_parser("verify", help="run one end-to-end experiment")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--config", default=None, help="JSON config file (strict schema)")
    p.add_argument("--out", default=None, help="output directory for summary.json + CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--M", dest="replicates", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QuarticLabError as exc:
        diagnostic = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
