"""Concave distribution functions, convolution densities and sampling.

Every concave distribution function on ``[0, inf)`` is a mixture of the
uniform CDFs ``F_theta(x) = min(x / theta, 1)``.  Estimates are finite
mixtures (:class:`MixtureCDF`); benchmark truths are analytic
(:class:`AnalyticCDF`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .kernels import NoiseKernel

__all__ = [
    "MixtureCDF",
    "AnalyticCDF",
    "Sample",
    "sqrt5_truth",
    "make_truth",
    "basis_g",
    "eval_F",
    "eval_f",
    "eval_s",
    "eval_g",
    "sample",
    "rng_for",
    "check_concave_cdf",
]


def basis_g(theta, kernel: NoiseKernel, z):
    """``g_theta(z) = (K(z) - K(z - theta)) / theta`` with broadcasting."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    return (kernel.K(z) - kernel.K(z - theta)) / theta


class MixtureCDF:
    """Finite mixture ``F = sum_j tau_j F_{theta_j}`` of uniform CDFs.

    Duplicate support points are merged and zero weights kept only if
    ``keep_zero`` is set.
    """

    def __init__(self, theta, tau, keep_zero=False, atol=1e-12):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if theta.shape != tau.shape or theta.size == 0:
            raise ValueError("support and weights must be nonempty and equally long")
        if np.any(~np.isfinite(theta)) or np.any(theta <= 0):
            raise ValueError("support points must be positive and finite")
        if np.any(tau < -atol):
            raise ValueError("weights must be nonnegative")
        if abs(tau.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {tau.sum():.15g}, not 1")
        uniq, inv = np.unique(theta, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, np.maximum(tau, 0.0))
        if not keep_zero:
            keep = merged > 0
            uniq, merged = uniq[keep], merged[keep]
        self.theta = uniq
        self.tau = merged / merged.sum()

    def __repr__(self):
        return f"MixtureCDF(theta={self.theta!r}, tau={self.tau!r})"

    @property
    def right_endpoint(self):
        return float(self.theta[-1])

    def F(self, x):
        x = np.asarray(x, dtype=float)
        ratio = np.clip(x[..., None] / self.theta, 0.0, 1.0)
        return ratio @ self.tau

    def f(self, x):
        x = np.asarray(x, dtype=float)
        active = (x[..., None] >= 0) & (x[..., None] < self.theta)
        return (active / self.theta) @ self.tau

    def s(self, x):
        return 1.0 - self.F(x)

    def s_right_derivative(self, x):
        return -self.f(x)

    def g(self, kernel: NoiseKernel, z):
        z = np.asarray(z, dtype=float)
        return basis_g(self.theta, kernel, z[..., None]) @ self.tau

    def kinks(self):
        return self.theta.copy()

    def draw(self, rng, n):
        j = rng.choice(self.theta.size, size=n, p=self.tau)
        return rng.random(n) * self.theta[j]


@dataclass(frozen=True)
class AnalyticCDF:
    """Analytic concave distribution function with density and quantile."""

    name: str
    cdf: Callable
    pdf: Callable
    quantile: Callable
    right_endpoint: float
    pdf_prime: Optional[Callable] = None
    meta: dict = field(default_factory=dict, compare=False)

    def F(self, x):
        return self.cdf(np.asarray(x, dtype=float))

    def f(self, x):
        return self.pdf(np.asarray(x, dtype=float))

    def s(self, x):
        return 1.0 - self.F(x)

    def f_prime(self, x):
        if self.pdf_prime is None:
            raise ValueError(f"truth {self.name!r} has no density derivative")
        return self.pdf_prime(np.asarray(x, dtype=float))

    def g(self, kernel: NoiseKernel, z, epsabs=1e-12, epsrel=1e-10):
        """``int k(z - x) dF(x)`` by quadrature in the quantile variable."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.empty(z.shape)
        for idx, zi in np.ndenumerate(z):
            out[idx] = self._g_scalar(kernel, zi, epsabs, epsrel)
        return out

    def _g_scalar(self, kernel, z, epsabs, epsrel):
        if z <= 0:
            return 0.0
        lo = float(self.F(max(z - kernel.support_bound, 0.0))) if np.isfinite(kernel.support_bound) else 0.0
        hi = float(self.F(z))
        if hi <= lo:
            return 0.0
        pts = [float(self.F(z - b)) for b in kernel.breakpoints if 0 < z - b]
        pts = [u for u in pts if lo < u < hi]
        val, _ = integrate.quad(
            lambda u: float(kernel.k(z - self.quantile(u))),
            lo, hi, points=pts or None, epsabs=epsabs, epsrel=epsrel, limit=200,
        )
        return val

    def draw(self, rng, n):
        return self.quantile(rng.random(n))


def sqrt5_truth() -> AnalyticCDF:
    """The benchmark ``F(x) = min(sqrt(x / 5), 1)``."""
    return AnalyticCDF(
        name="sqrt5",
        cdf=lambda x: np.where(x > 0, np.minimum(np.sqrt(np.maximum(x, 0.0) / 5.0), 1.0), 0.0),
        pdf=lambda x: np.where(
            (x > 0) & (x < 5), 0.5 / np.sqrt(5.0 * np.where(x > 0, x, 1.0)), 0.0
        ),
        quantile=lambda u: 5.0 * np.asarray(u, dtype=float) ** 2,
        right_endpoint=5.0,
        pdf_prime=lambda x: np.where(
            (x > 0) & (x < 5), -0.25 / np.sqrt(5.0) * np.where(x > 0, x, 1.0) ** -1.5, 0.0
        ),
    )


def make_truth(spec):
    """Resolve a truth spec: ``"sqrt5"`` or a mixture literal ``"1:0.5,2:0.5"``."""
    if isinstance(spec, (MixtureCDF, AnalyticCDF)):
        return spec
    spec = str(spec).strip()
    if spec == "sqrt5":
        return sqrt5_truth()
    try:
        pairs = [p.split(":") for p in spec.split(",") if p.strip()]
        theta = [float(a) for a, _ in pairs]
        tau = [float(b) for _, b in pairs]
    except ValueError as exc:
        raise ValueError(f"cannot parse truth spec {spec!r}") from exc
    return MixtureCDF(theta, tau)


@dataclass(frozen=True)
class Sample:
    """Sorted positive observations with provenance."""

    observations: np.ndarray
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        z = np.sort(np.asarray(self.observations, dtype=float).ravel())
        if z.size < 1:
            raise ValueError("a sample needs at least one observation")
        if np.any(~np.isfinite(z)) or np.any(z <= 0):
            raise ValueError("observations must be positive and finite")
        z.setflags(write=False)
        object.__setattr__(self, "observations", z)

    @property
    def n(self):
        return self.observations.size

    def unique(self):
        """Distinct values and their empirical weights (multiplicity / n)."""
        vals, counts = np.unique(self.observations, return_counts=True)
        return vals, counts / self.n


def eval_F(cdf, x):
    return cdf.F(x)


def eval_f(cdf, x):
    return cdf.f(x)


def eval_s(cdf, x):
    return cdf.s(x)


def eval_g(cdf, kernel: NoiseKernel, z):
    return cdf.g(kernel, z)


def rng_for(seed, *keys):
    """Independent generator for ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def sample(cdf, kernel: NoiseKernel, n: int, seed: int, rng=None) -> Sample:
    """Draw ``Z = X + eps`` with ``X ~ cdf`` and ``eps ~ kernel``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if rng is None:
        rng = rng_for(seed)
    x = cdf.draw(rng, n)
    eps = kernel.quantile(rng.random(n))
    z = x + eps
    # a zero noise draw with X = 0 has probability zero; keep the sample valid
    z = np.where(z > 0, z, np.nextafter(0.0, 1.0))
    return Sample(z, seed=seed)


def check_concave_cdf(cdf, grid=None, atol=1e-10):
    """Check ConcaveCDF invariants on a grid; raise ``ValueError`` on failure."""
    right = float(cdf.right_endpoint)
    if grid is None:
        grid = np.linspace(0.0, right, 2001)
    grid = np.asarray(grid, dtype=float)
    F = cdf.F(grid)
    if abs(float(cdf.F(0.0))) > atol:
        raise ValueError("F(0) must be 0")
    if abs(float(cdf.F(right)) - 1.0) > 1e-9:
        raise ValueError("F must reach 1 at its right endpoint")
    if np.any(np.diff(F) < -atol):
        raise ValueError("F must be nondecreasing")
    mid = cdf.F(0.5 * (grid[:-1] + grid[1:]))
    if np.any(mid < 0.5 * (F[:-1] + F[1:]) - atol):
        raise ValueError("F fails the midpoint concavity test")
    f = cdf.f(grid[(grid > 0) & (grid < right)])
    if np.any(f < -atol) or np.any(np.diff(f) > atol):
        raise ValueError("density must be nonnegative and nonincreasing")
    return True
