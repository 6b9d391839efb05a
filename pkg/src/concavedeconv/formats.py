"""Reading and writing samples, fits, curves, rate tables and configs.

All floats are written with 17 significant digits so every file round-trips
to the same in-memory values.  Writes go to a temporary file in the target
directory and are renamed into place.
"""
from __future__ import annotations

import configparser
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .kernels import NoiseKernel, make_custom, make_kernel
from .mixture import Sample
from .results import CharTable, MleFit

__all__ = [
    "write_atomic",
    "write_sample",
    "read_sample",
    "header_path",
    "fit_to_dict",
    "write_fit",
    "read_fit",
    "kernel_from_dict",
    "kernel_to_dict",
    "write_curve",
    "read_curve",
    "write_rate_table",
    "read_rate_table",
    "read_config",
    "CONFIG_KEYS",
]

def write_atomic(path, data, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return format(float(x), ".17g")


def header_path(path):
    path = Path(path)
    return path.with_name(path.name + ".header")


def write_sample(path, smp: Sample, header: dict):
    """One observation per line plus a ``key = value`` sidecar header."""
    write_atomic(path, "".join(_fmt(z) + "\n" for z in smp.observations))
    lines = [f"{k} = {v}\n" for k, v in header.items()]
    write_atomic(header_path(path), "".join(lines))


def _parse_kv(text, source):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_sample(path):
    """Return ``(Sample, header)``; the header is ``{}`` when no sidecar exists."""
    path = Path(path)
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from exc
    hp = header_path(path)
    header = _parse_kv(hp.read_text(), hp) if hp.exists() else {}
    seed = int(header["seed"]) if "seed" in header else None
    return Sample(np.array(values), seed=seed), header


def kernel_to_dict(kernel: NoiseKernel):
    out = {"name": kernel.name}
    if "table_x" in kernel.meta:
        out["k0"] = kernel.k0
        out["table_x"] = [float(v) for v in kernel.meta["table_x"]]
        out["table_kappa"] = [float(v) for v in kernel.meta["table_kappa"]]
    return out


def kernel_from_dict(d):
    if "table_x" in d:
        return make_custom(d["table_x"], d["table_kappa"], d["k0"], name=d.get("name", "custom"))
    return make_kernel(d["name"])


def fit_to_dict(fit, kernel: NoiseKernel, recip_params=None):
    est = fit.estimate
    table = fit.slack if isinstance(fit, MleFit) else fit.char_table
    d = {
        "estimator": "mle" if isinstance(fit, MleFit) else "lse",
        "kernel": kernel_to_dict(kernel),
        "n": int(fit.sample.n),
        "seed": fit.sample.seed,
        "observations": [float(z) for z in fit.sample.observations],
        "support": [float(t) for t in est.theta],
        "weights": [float(t) for t in est.tau],
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "char_table": {
            "theta": [float(t) for t in table.theta],
            "value": [float(v) for v in table.value],
            "kink": [bool(k) for k in table.kink],
        },
        "iteration_log": list(fit.log),
    }
    if isinstance(fit, MleFit):
        d["loglik"] = float(fit.loglik)
    else:
        d["objective"] = float(fit.objective)
        d["reciprocal"] = dict(recip_params or {})
    return d


def write_fit(path, fit, kernel, recip_params=None):
    d = fit_to_dict(fit, kernel, recip_params)
    write_atomic(path, json.dumps(d, indent=1) + "\n")


def read_fit(path):
    """Parse a fit file into a dict with numpy arrays and a ``CharTable``.

    Weights are not renormalized or validated here, so a hand-edited file
    reaches the verifier unchanged.
    """
    d = json.loads(Path(path).read_text())
    for key in ("estimator", "kernel", "observations", "support", "weights"):
        if key not in d:
            raise ValueError(f"{path}: missing field {key!r}")
    d["observations"] = np.asarray(d["observations"], dtype=float)
    d["support"] = np.asarray(d["support"], dtype=float)
    d["weights"] = np.asarray(d["weights"], dtype=float)
    ct = d.get("char_table")
    if ct is not None:
        d["char_table"] = CharTable(ct["theta"], ct["value"], ct["kink"])
    return d


def write_curve(path, x, y, names=("x", "y")):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    body = "".join(f"{_fmt(a)}\t{_fmt(b)}\n" for a, b in zip(x, y))
    write_atomic(path, f"# {names[0]}\t{names[1]}\n" + body)


def read_curve(path):
    arr = np.loadtxt(path, comments="#", delimiter="\t", ndmin=2)
    return arr[:, 0], arr[:, 1]


def write_rate_table(path, result):
    lines = ["# n\tmedian_value_error\tmedian_deriv_error\treps\tfailures\n"]
    for n, v, d, reps, fails in result.rows():
        lines.append(f"{n}\t{_fmt(v)}\t{_fmt(d)}\t{reps}\t{fails}\n")
    lines.append(
        f"# slope_value {_fmt(result.value_slope)} ci {_fmt(result.value_ci[0])} "
        f"{_fmt(result.value_ci[1])} slope_deriv {_fmt(result.deriv_slope)} ci "
        f"{_fmt(result.deriv_ci[0])} {_fmt(result.deriv_ci[1])}\n"
    )
    write_atomic(path, "".join(lines))


def read_rate_table(path):
    rows, summary = [], {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# slope_value"):
            tok = line[2:].split()
            summary = {
                "slope_value": float(tok[1]),
                "value_ci": (float(tok[3]), float(tok[4])),
                "slope_deriv": float(tok[6]),
                "deriv_ci": (float(tok[8]), float(tok[9])),
            }
        elif line and not line.startswith("#"):
            n, v, d, reps, fails = line.split("\t")
            rows.append((int(n), float(v), float(d), int(reps), int(fails)))
    return rows, summary


# documented config schema: key -> (type, default)
CONFIG_KEYS = {
    "kernel": (str, "exponential"),
    "kernel_table": (str, None),
    "k0": (float, None),
    "truth": (str, "sqrt5"),
    "n": (int, 10),
    "seed": (int, 42),
    "estimator": (str, "both"),
    "tol_mle": (float, 1e-8),
    "tol_lse": (float, 1e-10),
    "outdir": (str, "out"),
    "h": (float, 1e-3),
    "T": (float, None),
    "grid_points": (int, 512),
    "x0": (float, 1.0),
    "n_grid": (str, "200,800,3200"),
    "replications": (int, 100),
    "workers": (int, 1),
}


def read_config(path):
    """Flat ``key = value`` config file; unknown keys are an error."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[config]\n" + text, source=str(path))
    out = {}
    for key, raw in parser["config"].items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}: unknown config key {key!r}")
        typ = CONFIG_KEYS[key][0]
        try:
            out[key] = typ(raw)
        except ValueError as exc:
            raise ValueError(f"{path}: bad value for {key!r}: {raw!r}") from exc
    return out
