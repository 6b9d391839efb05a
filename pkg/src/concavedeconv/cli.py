"""Command-line front end.

Subcommands: ``gen``, ``fit``, ``verify``, ``figures``, ``rates``, ``bounds``.
Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags.

Exit status: 0 success, 2 usage or validation error, 3 non-convergence
(also 1 when ``verify`` finds a violated characterization).
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import formats, plotting
from .asymptotics import (
    LocalQuantities,
    RateStudyConfig,
    local_quantities,
    lse_constants,
    minimax_bound_T1,
    minimax_bound_T2,
    rate_study,
)
from .errors import DeconvError, NotConverged
from .kernels import make_kernel, solve_reciprocal
from .lse import UnProcess, fit_lse, lse_char_weights
from .mixture import AnalyticCDF, Sample, make_truth, sample
from .mle import fit_mle, mle_slack_weights

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

# flag name -> config key
_SHARED = {
    "kernel": str,
    "kernel_table": str,
    "k0": float,
    "truth": str,
    "n": int,
    "seed": int,
    "estimator": str,
    "tol_mle": float,
    "tol_lse": float,
    "outdir": str,
    "h": float,
    "T": float,
    "grid_points": int,
    "x0": float,
    "n_grid": str,
    "replications": int,
    "workers": int,
}


class UsageError(Exception):
    pass


def _add_shared(p):
    p.add_argument("--config", help="key = value settings file")
    for key, typ in _SHARED.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=typ, default=None)


def resolve_config(args):
    """Merge defaults, the config file and explicit flags; validate."""
    cfg = {k: v[1] for k, v in formats.CONFIG_KEYS.items()}
    explicit = set()
    if getattr(args, "config", None):
        try:
            file_cfg = formats.read_config(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        cfg.update(file_cfg)
        explicit.update(file_cfg)
    for key in _SHARED:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
            explicit.add(key)
    cfg["_explicit"] = explicit
    if cfg["n"] < 1:
        raise UsageError("n must be at least 1")
    for key in ("tol_mle", "tol_lse", "h"):
        if not cfg[key] > 0:
            raise UsageError(f"{key} must be positive")
    if cfg["estimator"] not in ("mle", "lse", "both"):
        raise UsageError("estimator must be mle, lse or both")
    if cfg["grid_points"] < 2:
        raise UsageError("grid_points must be at least 2")
    if cfg["workers"] < 1:
        raise UsageError("workers must be at least 1")
    return cfg


def kernel_from_cfg(cfg):
    try:
        return make_kernel(cfg["kernel"], cfg.get("kernel_table"), cfg.get("k0"))
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def truth_from_cfg(cfg):
    try:
        return make_truth(cfg["truth"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _estimators(cfg):
    return ("mle", "lse") if cfg["estimator"] == "both" else (cfg["estimator"],)


def _reciprocal(kernel, cfg, smp):
    horizon = cfg["T"] if cfg["T"] is not None else max(10.0, float(smp.observations[-1]) + 1.0)
    if horizon < smp.observations[-1]:
        raise UsageError(f"T = {horizon} must be at least the largest observation")
    recip = solve_reciprocal(kernel, h=cfg["h"], T=horizon)
    return recip, {"h": cfg["h"], "T": horizon}


def eval_grid(smp: Sample, points, kinks=()):
    """``points`` equispaced on ``[0, Z_(n) + 1]`` plus the kink locations."""
    grid = np.linspace(0.0, float(smp.observations[-1]) + 1.0, points)
    return np.union1d(grid, np.asarray(kinks, dtype=float))


def _fit_all(smp, kernel, cfg, which):
    """Fit the requested estimators; returns ``(fits, recip_params, failed)``."""
    fits, params, failed = {}, None, []
    if "mle" in which:
        try:
            fits["mle"] = fit_mle(smp, kernel, tol=cfg["tol_mle"])
        except NotConverged as exc:
            fits["mle"] = exc.fit
            failed.append(("mle", str(exc)))
    if "lse" in which:
        recip, params = _reciprocal(kernel, cfg, smp)
        try:
            fits["lse"] = fit_lse(smp, recip, tol=cfg["tol_lse"], kernel_name=kernel.name)
        except NotConverged as exc:
            fits["lse"] = exc.fit
            failed.append(("lse", str(exc)))
    return fits, params, failed


# --- gen -------------------------------------------------------------------


def cmd_gen(args):
    cfg = resolve_config(args)
    kernel = kernel_from_cfg(cfg)
    truth = truth_from_cfg(cfg)
    smp = sample(truth, kernel, cfg["n"], cfg["seed"])
    out = Path(args.out) if args.out else (
        Path(cfg["outdir"]) / f"sample_{kernel.name}_n{cfg['n']}_seed{cfg['seed']}.txt"
    )
    header = {"kernel": kernel.name, "truth": cfg["truth"], "n": cfg["n"], "seed": cfg["seed"]}
    if kernel.name == "custom":
        header["kernel_table"] = cfg["kernel_table"]
        header["k0"] = cfg["k0"]
    formats.write_sample(out, smp, header)
    print(out)
    return EXIT_OK


# --- fit -------------------------------------------------------------------


def _sample_kernel(args, cfg):
    try:
        smp, header = formats.read_sample(args.sample)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if "kernel" in header:
        if "kernel" in cfg["_explicit"] and cfg["kernel"] != header["kernel"]:
            raise UsageError(
                f"kernel {cfg['kernel']!r} does not match the sample header ({header['kernel']!r})"
            )
        cfg = dict(cfg, kernel=header["kernel"])
        for key, typ in (("kernel_table", str), ("k0", float)):
            if key in header and key not in cfg["_explicit"]:
                cfg[key] = typ(header[key])
    return smp, kernel_from_cfg(cfg), cfg


def cmd_fit(args):
    cfg = resolve_config(args)
    smp, kernel, cfg = _sample_kernel(args, cfg)
    outdir = Path(cfg["outdir"])
    stem = Path(args.sample).stem
    fits, params, failed = _fit_all(smp, kernel, cfg, _estimators(cfg))
    for name, fit in fits.items():
        path = outdir / f"{stem}.{name}.json"
        formats.write_fit(path, fit, kernel, params if name == "lse" else None)
        grid = eval_grid(smp, cfg["grid_points"], fit.estimate.kinks())
        if name == "mle":
            formats.write_curve(outdir / f"{stem}.mle_F.tsv", grid, fit.estimate.F(grid), ("x", "F"))
            worst = float(fit.slack.value.max())
            print(f"{path}\tmax_slack\t{worst:.17g}\titerations\t{fit.iterations}")
        else:
            formats.write_curve(outdir / f"{stem}.lse_s.tsv", grid, fit.estimate.s(grid), ("x", "s"))
            worst = float(fit.char_table.value.min())
            print(f"{path}\tmin_char\t{worst:.17g}\titerations\t{fit.iterations}")
    for name, msg in failed:
        print(f"error: {name}: {msg}; partial fit written with converged = false", file=sys.stderr)
        for line in fits[name].log[-5:]:
            print(f"  {line}", file=sys.stderr)
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


# --- verify ----------------------------------------------------------------


def _worst(theta, values, mask=None):
    if mask is not None:
        theta, values = theta[mask], values[mask]
    if values.size == 0:
        return math.nan, math.nan
    i = int(np.argmax(values))
    return float(values[i]), float(theta[i])


def verify_fit(d, mle_tol=1e-6, lse_tol=1e-8):
    """Check one parsed fit file; returns a list of ``(label, passed, detail)``."""
    smp = Sample(d["observations"])
    kernel = formats.kernel_from_dict(d["kernel"])
    theta, tau = d["support"], d["weights"]
    total = float(tau.sum())
    simplex = bool(np.all(tau >= 0)) and abs(total - 1.0) <= 1e-10
    checks = [("simplex", simplex, f"sum_weights={total:.17g} min_weight={float(tau.min()):.17g}")]
    if d["estimator"] == "mle":
        tab = mle_slack_weights(theta, tau, smp, kernel, extra_grid=theta)
        v, at = _worst(tab.theta, tab.value)
        checks.append(("max_slack", v <= 1.0 + mle_tol, f"max_slack={v:.17g} at theta={at:.17g}"))
        dev, at = _worst(tab.theta, np.abs(tab.value - 1.0), tab.kink)
        checks.append(("support_equality", not dev > mle_tol,
                       f"max|slack-1|={dev:.17g} at theta={at:.17g}"))
    elif d["estimator"] == "lse":
        rp = d.get("reciprocal") or {}
        recip = solve_reciprocal(kernel, h=rp.get("h", 1e-3),
                                 T=rp.get("T", max(10.0, float(smp.observations[-1]) + 1.0)))
        tab = lse_char_weights(theta, tau, UnProcess(smp, recip), extra_grid=theta)
        v, at = _worst(tab.theta, -tab.value)
        checks.append(("min_char", -v >= -lse_tol, f"min_char={-v:.17g} at theta={at:.17g}"))
        dev, at = _worst(tab.theta, np.abs(tab.value), tab.kink)
        checks.append(("kink_equality", not dev > lse_tol,
                       f"max|H-Y| at kinks={dev:.17g} at theta={at:.17g}"))
    else:
        raise ValueError(f"unknown estimator {d['estimator']!r}")
    return checks


def cmd_verify(args):
    ok = True
    for path in args.fits:
        try:
            d = formats.read_fit(path)
            checks = verify_fit(d, args.mle_tol, args.lse_tol)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{path}: {exc}") from exc
        except DeconvError as exc:
            checks = [("evaluate", False, f"{type(exc).__name__}: {exc}")]
        for label, passed, detail in checks:
            ok &= passed
            print(f"{path}\t{d['estimator'].upper()}\t{label}\t{'PASS' if passed else 'FAIL'}\t{detail}")
    return EXIT_OK if ok else EXIT_FAIL


# --- figures ---------------------------------------------------------------

FIGURE_KERNELS = {1: "exponential", 2: "triangular"}
FIGURE_SIZES = (10, 100)


def _figure_fits(kernel_name, n, cfg, truth):
    kernel = make_kernel(kernel_name)
    smp = sample(truth, kernel, n, cfg["seed"])
    fits, _, failed = _fit_all(smp, kernel, cfg, ("mle", "lse"))
    if failed:
        raise NotConverged("; ".join(f"{a}: {b}" for a, b in failed))
    return smp, kernel, fits


def _true_F(truth, x):
    return np.asarray(truth.F(x), dtype=float)


def figure_estimates(fig_no, cfg, truth, outdir):
    written = []
    for n in FIGURE_SIZES:
        smp, kernel, fits = _figure_fits(FIGURE_KERNELS[fig_no], n, cfg, truth)
        kinks = np.union1d(fits["mle"].estimate.kinks(), fits["lse"].estimate.kinks())
        grid = eval_grid(smp, cfg["grid_points"], kinks)
        curves = {
            "true": (grid, _true_F(truth, grid)),
            "mle": (grid, fits["mle"].estimate.F(grid)),
            "lse": (grid, 1.0 - fits["lse"].estimate.s(grid)),
        }
        for key, (x, y) in curves.items():
            path = outdir / f"fig{fig_no}_n{n}_{key}.tsv"
            formats.write_curve(path, x, y, ("x", "F"))
            written.append(path)
        svg = outdir / f"fig{fig_no}_n{n}.svg"
        plotting.plot_estimates(svg, curves, title=f"{kernel.name} noise, n = {n}")
        written.append(svg)
        sup = {k: float(np.max(np.abs(curves[k][1] - curves["true"][1]))) for k in ("mle", "lse")}
        print(f"fig{fig_no}\tn\t{n}\tsup_err_mle\t{sup['mle']:.6g}\tsup_err_lse\t{sup['lse']:.6g}")
    return written


def figure_characterization(cfg, truth, outdir):
    smp, kernel, fits = _figure_fits("exponential", 10, cfg, truth)
    zmax = float(smp.observations[-1])
    grid = np.linspace(0.0, zmax, cfg["grid_points"] + 1)[1:]
    mle_est, lse_est = fits["mle"].estimate, fits["lse"].estimate
    mtab = mle_slack_weights(mle_est.theta, mle_est.tau, smp, kernel, extra_grid=grid)
    recip, _ = _reciprocal(kernel, cfg, smp)
    ltab = lse_char_weights(lse_est.theta, lse_est.tau, UnProcess(smp, recip), extra_grid=grid)
    paths = [outdir / "fig3_mle_slack.tsv", outdir / "fig3_lse_char.tsv", outdir / "fig3.svg"]
    formats.write_curve(paths[0], mtab.theta, mtab.value, ("theta", "slack"))
    formats.write_curve(paths[1], ltab.theta, ltab.value, ("theta", "H_minus_Y"))
    plotting.plot_characterization(
        paths[2], (mtab.theta, mtab.value), (ltab.theta, ltab.value),
        (mtab.theta[mtab.kink], mtab.value[mtab.kink]),
        (ltab.theta[ltab.kink], ltab.value[ltab.kink]),
        title="exponential noise, n = 10",
    )
    print(f"fig3\tmax_mle_slack\t{mtab.value.max():.17g}\tmin_lse_char\t{ltab.value.min():.17g}")
    return paths


def cmd_figures(args):
    cfg = resolve_config(args)
    truth = truth_from_cfg(cfg)
    outdir = Path(cfg["outdir"])
    which = (1, 2, 3) if args.which == "all" else (int(args.which),)
    try:
        for fig_no in which:
            paths = (figure_characterization(cfg, truth, outdir) if fig_no == 3
                     else figure_estimates(fig_no, cfg, truth, outdir))
            for p in paths:
                print(p)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# --- rates -----------------------------------------------------------------


def parse_n_grid(text):
    try:
        grid = tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise UsageError(f"malformed n grid {text!r}") from exc
    return grid


def cmd_rates(args):
    cfg = resolve_config(args)
    try:
        study = RateStudyConfig(
            truth=cfg["truth"],
            kernel=cfg["kernel"],
            x0=cfg["x0"],
            n_grid=parse_n_grid(cfg["n_grid"]),
            replications=cfg["replications"],
            base_seed=args.base_seed,
            estimator=args.rate_estimator,
            h=cfg["h"],
            tol=cfg["tol_lse"] if args.rate_estimator == "lse" else cfg["tol_mle"],
            workers=cfg["workers"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    kernel_from_cfg(cfg)
    truth_from_cfg(cfg)
    res = rate_study(study, n_boot=args.bootstrap)
    outdir = Path(cfg["outdir"])
    table, svg = outdir / "rates.tsv", outdir / "rates.svg"
    formats.write_rate_table(table, res)
    plotting.plot_rates(svg, res.n, res.median_value_error, res.median_deriv_error,
                        res.value_slope, res.deriv_slope)
    print("n\tmedian_value_error\tmedian_deriv_error\treps\tfailures")
    for row in res.rows():
        print("\t".join(str(v) for v in row))
    print(f"slope value {res.value_slope:.4f} 95% CI [{res.value_ci[0]:.4f}, {res.value_ci[1]:.4f}]"
          f" band {list(study.value_band)}")
    print(f"slope deriv {res.deriv_slope:.4f} 95% CI [{res.deriv_ci[0]:.4f}, {res.deriv_ci[1]:.4f}]"
          f" band {list(study.deriv_band)}")
    print(table)
    print(svg)
    return EXIT_OK


# --- bounds ----------------------------------------------------------------


def cmd_bounds(args):
    cfg = resolve_config(args)
    manual = (args.f0, args.f0_prime, args.g0)
    try:
        if any(v is not None for v in manual):
            if any(v is None for v in manual):
                raise UsageError("--f0, --f0-prime and --g0 must be given together")
            k0 = cfg["k0"] if cfg["k0"] is not None else kernel_from_cfg(cfg).k0
            q = LocalQuantities(cfg["x0"], args.f0, args.f0_prime, args.g0, k0)
        else:
            truth = truth_from_cfg(cfg)
            if not isinstance(truth, AnalyticCDF):
                raise UsageError("bounds need a smooth truth (sqrt5) or explicit local quantities")
            q = local_quantities(truth, kernel_from_cfg(cfg), cfg["x0"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    c1, c2 = lse_constants(q)
    rows = [
        ("x0", q.x0), ("f0", q.f0_x0), ("f0_prime", q.f0_prime_x0), ("g0", q.g0_x0),
        ("k0", q.k0), ("T1", minimax_bound_T1(q)), ("T2", minimax_bound_T2(q)),
        ("c1", c1), ("c2", c2),
    ]
    for name, val in rows:
        print(f"{name}\t{val:.17g}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="concavedeconv",
        description="Deconvolution estimators for concave distribution functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="simulate Z = X + noise")
    _add_shared(p)
    p.add_argument("--out", help="sample file (default: OUTDIR/sample_<kernel>_n<n>_seed<seed>.txt)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit the MLE and/or LSE to a sample file")
    _add_shared(p)
    p.add_argument("sample")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="check characterizations in fit files")
    p.add_argument("fits", nargs="+")
    p.add_argument("--mle-tol", type=float, default=1e-6)
    p.add_argument("--lse-tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("figures", help="estimate and characterization figures")
    _add_shared(p)
    p.add_argument("--which", choices=("1", "2", "3", "all"), default="all")
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("rates", help="Monte Carlo convergence rates at x0")
    _add_shared(p)
    p.add_argument("--base-seed", type=int, default=20090401)
    p.add_argument("--rate-estimator", choices=("lse", "mle"), default="lse")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("bounds", help="minimax bounds and LSE limit constants at x0")
    _add_shared(p)
    p.add_argument("--f0", type=float)
    p.add_argument("--f0-prime", type=float)
    p.add_argument("--g0", type=float)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog} {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
