"""Asymptotic constants, the local perturbation family and rate studies."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import integrate, optimize

from .errors import DeconvError, PerturbationInfeasible, QuadratureFailure, StudyFailed
from .kernels import NoiseKernel, make_kernel, solve_reciprocal
from .mixture import AnalyticCDF, check_concave_cdf, make_truth, rng_for, sample

__all__ = [
    "LocalQuantities",
    "local_quantities",
    "minimax_bound_T1",
    "minimax_bound_T2",
    "lse_constants",
    "PerturbedCDF",
    "perturb",
    "hellinger",
    "hellinger_perturbation",
    "hellinger_limit_constant",
    "richardson_zero",
    "RateStudyConfig",
    "RateStudyResult",
    "rate_study",
]


@dataclass(frozen=True)
class LocalQuantities:
    """Local features of the truth and kernel at ``x0``."""

    x0: float
    f0_x0: float
    f0_prime_x0: float
    g0_x0: float
    k0: float
    s0_pp_x0: float = None

    def __post_init__(self):
        if self.s0_pp_x0 is None:
            object.__setattr__(self, "s0_pp_x0", -self.f0_prime_x0)
        if not self.f0_x0 > 0:
            raise ValueError("f0(x0) must be positive")
        if not self.f0_prime_x0 < 0:
            raise ValueError("f0'(x0) must be negative")
        if not math.isclose(self.s0_pp_x0, -self.f0_prime_x0, rel_tol=1e-12):
            raise ValueError("s0''(x0) must equal -f0'(x0)")
        if not (self.g0_x0 > 0 and self.k0 > 0):
            raise ValueError("g0(x0) and k0 must be positive")


_G0_CACHE = {}


def _g0(truth, kernel, x0):
    key = (truth.name, kernel.name, float(x0))
    if key not in _G0_CACHE:
        _G0_CACHE[key] = float(truth.g(kernel, x0, epsabs=1e-12, epsrel=1e-9)[0])
    return _G0_CACHE[key]


def local_quantities(truth: AnalyticCDF, kernel: NoiseKernel, x0: float) -> LocalQuantities:
    """Evaluate ``f0, f0', g0`` at ``x0``; ``g0`` by adaptive quadrature (cached)."""
    return LocalQuantities(
        x0=float(x0),
        f0_x0=float(truth.f(x0)),
        f0_prime_x0=float(truth.f_prime(x0)),
        g0_x0=_g0(truth, kernel, x0),
        k0=float(kernel.k0),
    )


def minimax_bound_T1(q: LocalQuantities) -> float:
    """Lower bound on ``liminf n^(2/5) R(n, T1)`` for estimating ``F(x0)``."""
    inner = abs(q.f0_prime_x0) * q.g0_x0**2 / (100.0 * math.e**2 * q.k0**4)
    return inner ** 0.2 / 8.0


def minimax_bound_T2(q: LocalQuantities) -> float:
    """Lower bound on ``liminf n^(1/5) R(n, T2)`` for estimating ``f(x0)``."""
    inner = abs(q.f0_prime_x0) ** 3 * q.g0_x0 / (4.0 * math.e * q.k0**2)
    return inner ** 0.2 / 4.0


def lse_constants(q: LocalQuantities):
    """Normalizing constants ``(c1, c2)`` of the LSE limit law at ``x0``."""
    c1 = (24.0 * q.k0**4 / (q.g0_x0**2 * q.s0_pp_x0)) ** 0.2
    c2 = (24.0 / q.s0_pp_x0) ** 0.6 * (q.k0**2 / q.g0_x0) ** 0.2
    return c1, c2


class PerturbedCDF:
    """``F0`` with its density flattened on ``[x0 - c eps, x0 + eps]``.

    On ``[x0 - c eps, x0 - eps]`` the density is ``f0(x0 - c eps)``, on
    ``(x0 - eps, x0 + eps]`` it is ``f0(x0 + eps)``; ``c`` makes ``F`` continuous
    at ``x0 - eps``.
    """

    def __init__(self, base: AnalyticCDF, x0, eps, c_eps):
        self.base = base
        self.x0 = float(x0)
        self.eps = float(eps)
        self.c_eps = float(c_eps)
        self.lo = self.x0 - self.c_eps * self.eps
        self.mid = self.x0 - self.eps
        self.hi = self.x0 + self.eps
        self.f_lo = float(base.f(self.lo))
        self.f_hi = float(base.f(self.hi))
        self.F_lo = float(base.F(self.lo))
        self.F_hi = float(base.F(self.hi))
        self.right_endpoint = base.right_endpoint
        self.name = f"{base.name}~perturbed(x0={x0:g},eps={eps:g})"

    def F(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.base.F(x), dtype=float)
        left = (x >= self.lo) & (x <= self.mid)
        right = (x > self.mid) & (x <= self.hi)
        out = np.where(left, self.F_lo + (x - self.lo) * self.f_lo, out)
        return np.where(right, self.F_hi + (x - self.hi) * self.f_hi, out)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.base.f(x), dtype=float)
        out = np.where((x >= self.lo) & (x <= self.mid), self.f_lo, out)
        return np.where((x > self.mid) & (x <= self.hi), self.f_hi, out)

    def s(self, x):
        return 1.0 - self.F(x)

    def density_gap(self, x):
        """``f0(x) - f_eps(x)``, nonzero only on ``[lo, hi]``."""
        x = np.asarray(x, dtype=float)
        base = np.asarray(self.base.f(x), dtype=float)
        out = np.where((x >= self.lo) & (x <= self.mid), base - self.f_lo, 0.0)
        return np.where((x > self.mid) & (x <= self.hi), base - self.f_hi, out)

    def g_gap(self, kernel: NoiseKernel, z):
        """``g0(z) - g_eps(z) = int k(z - x) (f0 - f_eps)(x) dx``."""
        z = float(z)
        if z <= self.lo:
            return 0.0
        total = 0.0
        for a, b in ((self.lo, self.mid), (self.mid, self.hi)):
            b = min(b, z)
            if b <= a:
                continue
            pts = [z - bp for bp in kernel.breakpoints if a < z - bp < b]
            val, _ = integrate.quad(
                lambda x: float(kernel.k(z - x) * self.density_gap(x)),
                a, b, points=pts or None, epsabs=0.0, epsrel=1e-11, limit=200,
            )
            total += val
        return total

    def g(self, kernel: NoiseKernel, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        g0 = np.asarray(self.base.g(kernel, z), dtype=float)
        gap = np.array([self.g_gap(kernel, zi) for zi in z.ravel()]).reshape(z.shape)
        return g0 - gap


def perturb(F0: AnalyticCDF, x0: float, eps: float, bracket=(1.0, 10.0)) -> PerturbedCDF:
    """Local perturbation ``F_eps`` of ``F0`` at ``x0``.

    ``c_eps`` is found by bisection on ``bracket``.  Raises
    ``PerturbationInfeasible`` when the bracket leaves the support of ``F0``
    or the result is not a concave distribution function.
    """
    x0, eps = float(x0), float(eps)
    if eps <= 0:
        raise PerturbationInfeasible("eps must be positive")
    lo_c, hi_c = bracket
    if x0 - hi_c * eps <= 0 or x0 + eps >= F0.right_endpoint:
        raise PerturbationInfeasible(f"eps = {eps:g} too large for x0 = {x0:g}")
    F_hi = float(F0.F(x0 + eps))
    f_hi = float(F0.f(x0 + eps))

    def residual(c):
        a = x0 - c * eps
        return float(F0.F(a)) + (c - 1.0) * eps * float(F0.f(a)) - (F_hi - 2.0 * eps * f_hi)

    r_lo, r_hi = residual(lo_c), residual(hi_c)
    if not (r_lo <= 0 <= r_hi):
        raise PerturbationInfeasible("continuity equation has no root in the bracket")
    c_eps = optimize.bisect(residual, lo_c, hi_c, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    if abs(residual(c_eps)) > 1e-10:
        raise PerturbationInfeasible("continuity residual above 1e-10")
    pert = PerturbedCDF(F0, x0, eps, c_eps)
    grid = np.union1d(
        np.linspace(0.0, F0.right_endpoint, 2001),
        np.linspace(pert.lo - eps, pert.hi + eps, 401),
    )
    try:
        check_concave_cdf(pert, grid[grid >= 0], atol=1e-9)
    except ValueError as exc:
        raise PerturbationInfeasible(str(exc)) from exc
    return pert


def hellinger(g, h, domain=(0.0, np.inf), tol=1e-10, difference=None, points=None):
    """Hellinger distance ``(1/2 int (sqrt h - sqrt g)^2)^(1/2)``.

    ``difference(x) = h(x) - g(x)``, when supplied, is used through
    ``(h - g)^2 / (sqrt h + sqrt g)^2`` to avoid cancellation for nearby
    densities.  ``points`` are interior break points for the quadrature.
    """
    a, b = domain

    def integrand(x):
        gx = max(float(g(x)), 0.0)
        hx = max(float(h(x)), 0.0)
        if difference is None:
            return (math.sqrt(hx) - math.sqrt(gx)) ** 2
        den = math.sqrt(hx) + math.sqrt(gx)
        return 0.0 if den == 0 else (float(difference(x)) / den) ** 2

    edges = [a] + sorted(p for p in (points or []) if a < p < b) + [b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(integrand, lo, hi, epsabs=tol, epsrel=1e-10, limit=400)
        if err > max(10 * tol, 1e-6 * abs(val)):
            raise QuadratureFailure(f"error estimate {err:.3g} on [{lo:g}, {hi:g}]")
        total += val
    return math.sqrt(0.5 * total)


def hellinger_perturbation(F0: AnalyticCDF, kernel: NoiseKernel, x0: float, eps: float,
                           tail: float = 60.0) -> float:
    """``H(g_eps, g0)`` for the local perturbation of ``F0`` at ``x0``."""
    pert = perturb(F0, x0, eps)
    upper = pert.hi + (kernel.support_bound if np.isfinite(kernel.support_bound) else tail)
    pts = {pert.mid, pert.hi, F0.right_endpoint}
    for bp in kernel.breakpoints:
        pts |= {pert.lo + bp, pert.mid + bp, pert.hi + bp}
    cache = {}

    def gap(z):
        if z not in cache:
            cache[z] = pert.g_gap(kernel, z)
        return cache[z]

    g0 = lambda z: float(F0.g(kernel, z)[0])
    geps = lambda z: g0(z) - gap(z)
    # difference is h - g with h = g_eps, g = g0
    scale = eps**2.5
    dist = hellinger(g0, geps, (pert.lo, upper), tol=1e-6 * scale**2,
                     difference=lambda z: -gap(z), points=sorted(pts))
    return dist


def hellinger_limit_constant(q: LocalQuantities) -> float:
    """Limit of ``H(g_eps, g0)^2 / eps^5`` as ``eps -> 0``."""
    return 2.0 * q.k0**2 * q.f0_prime_x0**2 / (5.0 * q.g0_x0)


def richardson_zero(eps, values):
    """Extrapolate ``values(eps)`` to ``eps = 0`` with a polynomial through all points."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    coef = np.polyfit(eps, values, eps.size - 1)
    return float(np.polyval(coef, 0.0))


@dataclass
class RateStudyConfig:
    truth: str = "sqrt5"
    kernel: str = "exponential"
    x0: float = 1.0
    n_grid: tuple = (200, 800, 3200)
    replications: int = 100
    base_seed: int = 20090401
    estimator: str = "lse"
    h: float = 1e-3
    tol: float = 1e-10
    workers: int = 1
    value_band: tuple = (-0.55, -0.25)
    deriv_band: tuple = (-0.35, -0.05)

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if len(self.n_grid) < 2 or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must hold at least two increasing sizes")
        if self.n_grid[0] < 1:
            raise ValueError("sample sizes must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.estimator not in ("lse", "mle"):
            raise ValueError("estimator must be 'lse' or 'mle'")


@dataclass
class RateStudyResult:
    config: RateStudyConfig
    n: np.ndarray
    median_value_error: np.ndarray
    median_deriv_error: np.ndarray
    failures: np.ndarray
    value_slope: float
    deriv_slope: float
    value_ci: tuple
    deriv_ci: tuple
    value_errors: list = field(repr=False, default_factory=list)
    deriv_errors: list = field(repr=False, default_factory=list)

    def rows(self):
        for i, n in enumerate(self.n):
            yield (int(n), float(self.median_value_error[i]), float(self.median_deriv_error[i]),
                   self.config.replications, int(self.failures[i]))


def _replication(args):
    cfg, n, rep = args
    from .lse import fit_lse
    from .mle import fit_mle

    truth = make_truth(cfg["truth"])
    kernel = make_kernel(cfg["kernel"])
    x0 = cfg["x0"]
    try:
        smp = sample(truth, kernel, n, cfg["base_seed"], rng=rng_for(cfg["base_seed"], n, rep))
        if cfg["estimator"] == "lse":
            recip = solve_reciprocal(kernel, cfg["h"], smp.observations[-1] + 1.0)
            est = fit_lse(smp, recip, tol=cfg["tol"], kernel_name=kernel.name).estimate
        else:
            est = fit_mle(smp, kernel, tol=max(cfg["tol"], 1e-9)).estimate
    except DeconvError as exc:
        return math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    value = abs(float(est.s(x0)) - float(truth.s(x0)))
    deriv = abs(float(-est.f(x0)) - float(-truth.f(x0)))
    return value, deriv, None


def _slope(n, med):
    return float(np.polyfit(np.log(n), np.log(med), 1)[0])


def rate_study(cfg: RateStudyConfig, n_boot: int = 1000) -> RateStudyResult:
    """Monte Carlo errors of the estimator at ``x0`` across sample sizes.

    Replication ``r`` at size ``n`` uses the stream ``(base_seed, n, r)``, so
    results do not depend on ``workers``.  Slopes are least squares fits of
    log median error on log ``n``; the 95% bands come from resampling
    replications (seeded from ``base_seed``).
    """
    plain = asdict(cfg)
    tasks = [(plain, n, r) for n in cfg.n_grid for r in range(cfg.replications)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_replication, tasks, chunksize=8))
    else:
        results = [_replication(t) for t in tasks]
    n_arr = np.asarray(cfg.n_grid, dtype=float)
    val_err, der_err, fails = [], [], []
    for i, n in enumerate(cfg.n_grid):
        block = results[i * cfg.replications:(i + 1) * cfg.replications]
        v = np.array([b[0] for b in block])
        d = np.array([b[1] for b in block])
        nfail = sum(b[2] is not None for b in block)
        if nfail > 0.1 * cfg.replications:
            raise StudyFailed(f"{nfail} of {cfg.replications} replications failed at n = {n}")
        val_err.append(v[np.isfinite(v)])
        der_err.append(d[np.isfinite(d)])
        fails.append(nfail)
    med_v = np.array([np.median(v) for v in val_err])
    med_d = np.array([np.median(d) for d in der_err])
    rng = rng_for(cfg.base_seed, 0xB007)
    boot_v, boot_d = [], []
    for _ in range(n_boot):
        mv = [np.median(rng.choice(v, v.size)) for v in val_err]
        md = [np.median(rng.choice(d, d.size)) for d in der_err]
        boot_v.append(_slope(n_arr, mv))
        boot_d.append(_slope(n_arr, md))
    ci = lambda b: (float(np.percentile(b, 2.5)), float(np.percentile(b, 97.5)))
    return RateStudyResult(
        config=cfg,
        n=n_arr,
        median_value_error=med_v,
        median_deriv_error=med_d,
        failures=np.array(fails),
        value_slope=_slope(n_arr, med_v),
        deriv_slope=_slope(n_arr, med_d),
        value_ci=ci(boot_v),
        deriv_ci=ci(boot_d),
        value_errors=val_err,
        deriv_errors=der_err,
    )
