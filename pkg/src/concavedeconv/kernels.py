"""Noise kernels and their reciprocal kernels.

A noise kernel ``k`` is a bounded, nonincreasing probability density on
``[0, inf)``.  Its reciprocal kernel ``p`` solves ``(p * k)(x) = x`` for
``x >= 0`` and turns the deconvolution into direct integrals of the
unknown distribution function.  For smooth kernels, ``k(x) = k0 - int_0^x
kappa``, and ``p = 1/k0 + int_0^t ell`` where ``ell`` solves a second-kind
Volterra equation that we march forward on a uniform grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DivergentSolve, MissingKappa, OutOfHorizon

__all__ = [
    "NoiseKernel",
    "ReciprocalKernel",
    "make_exponential",
    "make_uniform01",
    "make_triangular",
    "make_custom",
    "make_kernel",
    "solve_reciprocal",
    "eval_p",
    "eval_p_bar",
    "convolve_p_k",
    "KERNEL_NAMES",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]

KERNEL_NAMES = ("exponential", "uniform01", "triangular", "custom")


@dataclass(frozen=True)
class NoiseKernel:
    """A known noise density ``k`` supported on ``[0, support_bound]``.

    Parameters
    ----------
    name : str
    k0 : float
        Right limit ``k(0+)``.
    density, primitive, quantile : callable
        Vectorized ``k``, ``K = int_0^x k`` and ``K^{-1}`` on ``(0, 1)``.
    kappa : callable, optional
        ``-k'``, so that ``k(x) = k0 - int_0^x kappa``.
    kappa_lipschitz_const : float, optional
    support_bound : float
        Right end of the support (``inf`` for full support).
    closed_form_p : tuple of callables, optional
        ``(p, p_bar)`` with ``p_bar`` the primitive of ``p``.
    breakpoints : tuple of float
        Points where ``k`` or ``kappa`` are not smooth; used by quadrature.
    """

    name: str
    k0: float
    density: ArrayFn
    primitive: ArrayFn
    quantile: ArrayFn
    kappa: Optional[ArrayFn] = None
    kappa_lipschitz_const: Optional[float] = None
    support_bound: float = np.inf
    closed_form_p: Optional[tuple] = None
    breakpoints: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def k(self, x):
        return self.density(np.asarray(x, dtype=float))

    def K(self, x):
        return self.primitive(np.asarray(x, dtype=float))

    def kappa_at(self, x):
        if self.kappa is None:
            raise MissingKappa(f"kernel {self.name!r} has no derivative weight")
        return self.kappa(np.asarray(x, dtype=float))

    def check(self, upper=None, num=2001, atol=1e-6):
        """Scan a grid for the kernel invariants; raise ``ValueError`` on violation."""
        if not (0 < self.k0 < np.inf):
            raise ValueError("k0 must be positive and finite")
        if upper is None:
            upper = self.support_bound if np.isfinite(self.support_bound) else 40.0
        x = np.linspace(0.0, upper, num)
        kx = self.k(x[1:])
        if np.any(np.diff(kx) > atol) or np.any(kx < -atol):
            raise ValueError("k must be nonnegative and nonincreasing")
        if np.any(self.k(-x[1:]) != 0):
            raise ValueError("k must vanish on the negative half-line")
        Kx = self.K(x)
        if abs(Kx[0]) > atol or np.any(np.diff(Kx) < -atol):
            raise ValueError("K must start at 0 and be nondecreasing")
        if abs(self.K(upper * 1.5 + 1.0) - 1.0) > 1e-4:
            raise ValueError("K does not reach total mass 1")
        if self.kappa is not None:
            kap = self.kappa(x)
            if np.any(kap < -atol):
                raise ValueError("kappa must be nonnegative")
            pts = sorted({0.0, upper, *[b for b in self.breakpoints if 0 < b < upper]})
            for xi in x[:: max(1, num // 20)][1:]:
                acc = 0.0
                for a, b in zip(pts[:-1], pts[1:]):
                    if a >= xi:
                        break
                    acc += integrate.quad(self.kappa, a, min(b, xi))[0]
                if abs(self.k0 - acc - float(self.k(xi))) > 1e-5:
                    raise ValueError("k(x) != k0 - int kappa")
        return True


def _exp_p(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, 1.0 + t, 0.0)


def _exp_p_bar(t):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    return t + 0.5 * t * t


def make_exponential() -> NoiseKernel:
    """Standard exponential noise, ``k(x) = exp(-x)``, with ``p(t) = 1 + t``."""
    return NoiseKernel(
        name="exponential",
        k0=1.0,
        density=lambda x: np.where(x >= 0, np.exp(-np.maximum(x, 0.0)), 0.0),
        primitive=lambda x: -np.expm1(-np.maximum(x, 0.0)),
        quantile=lambda u: -np.log1p(-np.asarray(u, dtype=float)),
        kappa=lambda x: np.where(x >= 0, np.exp(-np.maximum(x, 0.0)), 0.0),
        kappa_lipschitz_const=1.0,
        closed_form_p=(_exp_p, _exp_p_bar),
    )


def _unif_p(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, 1.0 + np.floor(np.maximum(t, 0.0)), 0.0)


def _unif_p_bar(t):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    m = np.floor(t)
    return m + 0.5 * m * (m - 1.0) + (t - m) * (1.0 + m)


def make_uniform01() -> NoiseKernel:
    """Uniform(0, 1) noise.  Not Volterra-solvable; ``p(t) = 1 + floor(t)``."""
    return NoiseKernel(
        name="uniform01",
        k0=1.0,
        density=lambda x: np.where((x >= 0) & (x <= 1), 1.0, 0.0),
        primitive=lambda x: np.clip(x, 0.0, 1.0),
        quantile=lambda u: np.asarray(u, dtype=float),
        kappa=None,
        support_bound=1.0,
        closed_form_p=(_unif_p, _unif_p_bar),
        breakpoints=(1.0,),
    )


def make_triangular() -> NoiseKernel:
    """Triangular noise ``k(x) = 2(1 - x)`` on ``[0, 1]``."""

    def primitive(x):
        y = np.clip(x, 0.0, 1.0)
        return 2.0 * y - y * y

    return NoiseKernel(
        name="triangular",
        k0=2.0,
        density=lambda x: np.where((x >= 0) & (x <= 1), 2.0 * (1.0 - x), 0.0),
        primitive=primitive,
        quantile=lambda u: 1.0 - np.sqrt(1.0 - np.asarray(u, dtype=float)),
        kappa=lambda x: np.where((x >= 0) & (x <= 1), 2.0, 0.0),
        kappa_lipschitz_const=None,
        support_bound=1.0,
        breakpoints=(1.0,),
    )


def make_custom(x, kappa, k0, name="custom") -> NoiseKernel:
    """Kernel defined by a table of ``kappa`` samples and ``k0``.

    ``kappa`` is linearly interpolated on ``x`` (which must start at 0) and
    taken to vanish beyond ``x[-1]``.  ``k`` and ``K`` are exact integrals of
    the interpolant, so ``k(x[-1])`` must be (close to) zero and the total
    mass close to one.
    """
    x = np.asarray(x, dtype=float)
    kap = np.asarray(kappa, dtype=float)
    if x.ndim != 1 or x.shape != kap.shape or x.size < 2:
        raise ValueError("kappa table needs two equal-length columns with >= 2 rows")
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise ValueError("kappa table abscissae must start at 0 and increase")
    if np.any(kap < 0):
        raise ValueError("kappa must be nonnegative")
    k0 = float(k0)
    dx = np.diff(x)
    slope = np.diff(kap) / dx
    # k at nodes, then K at nodes (k is piecewise quadratic)
    k_nodes = k0 - np.concatenate([[0.0], np.cumsum(0.5 * dx * (kap[:-1] + kap[1:]))])
    cell_K = dx * k_nodes[:-1] - kap[:-1] * dx**2 / 2 - slope * dx**3 / 6
    K_nodes = np.concatenate([[0.0], np.cumsum(cell_K)])
    if abs(k_nodes[-1]) > 1e-6 * k0:
        raise ValueError(f"k at the end of the table is {k_nodes[-1]:.3g}, not 0")
    if abs(K_nodes[-1] - 1.0) > 1e-3:
        raise ValueError(f"kernel mass is {K_nodes[-1]:.6g}, not 1")
    xmax = x[-1]

    def locate(v):
        i = np.clip(np.searchsorted(x, v, side="right") - 1, 0, x.size - 2)
        return i, v - x[i]

    def kappa_fn(v):
        v = np.asarray(v, dtype=float)
        inside = (v >= 0) & (v <= xmax)
        return np.where(inside, np.interp(v, x, kap), 0.0)

    def density(v):
        v = np.asarray(v, dtype=float)
        vc = np.clip(v, 0.0, xmax)
        i, d = locate(vc)
        val = k_nodes[i] - kap[i] * d - 0.5 * slope[i] * d * d
        return np.where((v >= 0) & (v <= xmax), np.maximum(val, 0.0), 0.0)

    def primitive(v):
        v = np.asarray(v, dtype=float)
        vc = np.clip(v, 0.0, xmax)
        i, d = locate(vc)
        val = K_nodes[i] + k_nodes[i] * d - kap[i] * d**2 / 2 - slope[i] * d**3 / 6
        return val / K_nodes[-1]

    grid = np.linspace(0.0, xmax, 4097)
    Kgrid = primitive(grid)

    def quantile(u):
        u = np.asarray(u, dtype=float)
        q = np.interp(u, Kgrid, grid)
        for _ in range(3):
            dens = density(q)
            step = np.where(dens > 0, (primitive(q) - u) / np.where(dens > 0, dens, 1.0), 0.0)
            q = np.clip(q - step, 0.0, xmax)
        return q

    lip = float(np.max(np.abs(slope))) if slope.size else 0.0
    return NoiseKernel(
        name=name,
        k0=k0,
        density=density,
        primitive=primitive,
        quantile=quantile,
        kappa=kappa_fn,
        kappa_lipschitz_const=lip,
        support_bound=float(xmax),
        breakpoints=(float(xmax),),
        meta={"table_x": x, "table_kappa": kap},
    )


def make_kernel(name, table=None, k0=None) -> NoiseKernel:
    """Build a kernel from its configuration name."""
    if name == "exponential":
        return make_exponential()
    if name == "uniform01":
        return make_uniform01()
    if name == "triangular":
        return make_triangular()
    if name == "custom":
        if table is None or k0 is None:
            raise ValueError("custom kernel needs a kappa table and k0")
        tab = np.loadtxt(table, ndmin=2, delimiter=None) if not isinstance(table, np.ndarray) else table
        return make_custom(tab[:, 0], tab[:, 1], k0)
    raise ValueError(f"unknown kernel {name!r}; expected one of {KERNEL_NAMES}")


@dataclass(frozen=True)
class ReciprocalKernel:
    """Reciprocal kernel ``p`` of a noise kernel, with primitive ``p_bar``.

    Either analytic (``p_fn``/``p_bar_fn`` set) or tabulated on the uniform
    grid ``t_i = i*h``, ``i = 0..N``.  Tabulated ``p`` is linearly
    interpolated between nodes and ``p_bar`` is the exact integral of that
    interpolant.
    """

    k0: float
    p_fn: Optional[ArrayFn] = None
    p_bar_fn: Optional[ArrayFn] = None
    h: Optional[float] = None
    horizon: float = np.inf
    ell: Optional[np.ndarray] = None
    p_nodes: Optional[np.ndarray] = None
    p_bar_nodes: Optional[np.ndarray] = None
    ratio_tol: float = np.inf

    @property
    def analytic(self):
        return self.p_fn is not None

    def _locate(self, t):
        if np.any(t > self.horizon * (1 + 1e-12)):
            raise OutOfHorizon(
                f"t = {float(np.max(t)):.6g} beyond reciprocal horizon {self.horizon:.6g}"
            )
        tc = np.clip(t, 0.0, self.horizon)
        i = np.minimum((tc / self.h).astype(np.int64), self.p_nodes.size - 2)
        frac = tc / self.h - i
        return tc, i, frac

    def p(self, t):
        t = np.asarray(t, dtype=float)
        if self.analytic:
            return self.p_fn(t)
        _, i, frac = self._locate(t)
        val = self.p_nodes[i] + frac * (self.p_nodes[i + 1] - self.p_nodes[i])
        return np.where(t >= 0, val, 0.0)

    def p_bar(self, t):
        t = np.asarray(t, dtype=float)
        if self.analytic:
            return self.p_bar_fn(t)
        _, i, frac = self._locate(t)
        p0 = self.p_nodes[i]
        dp = self.p_nodes[i + 1] - p0
        val = self.p_bar_nodes[i] + self.h * frac * (p0 + 0.5 * frac * dp)
        return np.where(t > 0, val, 0.0)


def _kappa_nodes(kernel, t):
    # average of one-sided limits, so jumps of kappa do not bias the march
    kap = np.asarray(kernel.kappa(t), dtype=float).copy()
    pos = t > 0
    delta = 1e-9 * np.maximum(1.0, t[pos])
    kap[pos] = 0.5 * (kernel.kappa(t[pos] - delta) + kernel.kappa(t[pos] + delta))
    return kap


def solve_reciprocal(kernel: NoiseKernel, h: float = 1e-3, T: float = 10.0,
                     cap: float = 1e12, ratio_tol: float = 0.1,
                     force_numeric: bool = False) -> ReciprocalKernel:
    """Compute the reciprocal kernel of ``kernel`` up to horizon ``T``.

    A closed-form ``p`` is returned verbatim unless ``force_numeric``.
    Otherwise the second-kind equation for ``ell`` is marched with product
    trapezoidal weights: ``ell`` is piecewise linear and the moments of
    ``kappa`` over each cell are taken exactly from ``k`` and ``K``.

    Raises
    ------
    MissingKappa
        Neither ``kappa`` nor a closed form is available.
    DivergentSolve
        ``|ell|`` exceeded ``cap``.
    """
    if h <= 0 or T <= 0:
        raise ValueError("h and T must be positive")
    if kernel.closed_form_p is not None and not force_numeric:
        p_fn, p_bar_fn = kernel.closed_form_p
        return ReciprocalKernel(k0=kernel.k0, p_fn=p_fn, p_bar_fn=p_bar_fn)
    if kernel.kappa is None:
        raise MissingKappa(
            f"kernel {kernel.name!r} has no kappa and no closed-form reciprocal"
        )
    k0 = float(kernel.k0)
    N = int(np.ceil(T / h - 1e-9))
    t = h * np.arange(N + 1)
    kt = kernel.k(t)
    kt[0] = k0
    Kt = kernel.K(t)
    dK = np.diff(Kt) / h
    # exact moments of kappa on [m h, (m+1) h] against the two hat functions
    A = dK - kt[1:]
    B = kt[:-1] - dK
    B = np.append(B, 0.0)
    c = np.zeros(N + 1)
    c[1:] = A + B[1:]
    rhs = _kappa_nodes(kernel, t) / k0**2
    ell = np.empty(N + 1)
    ell[0] = rhs[0]
    denom = 1.0 - B[0] / k0
    for i in range(1, N + 1):
        conv = np.dot(c[i:0:-1], ell[:i]) - B[i] * ell[0]
        ell[i] = (rhs[i] + conv / k0) / denom
        if not np.isfinite(ell[i]) or abs(ell[i]) > cap:
            raise DivergentSolve(f"|ell| exceeded {cap:g} at t = {t[i]:.6g}")
    p_nodes = 1.0 / k0 + np.concatenate([[0.0], np.cumsum(0.5 * h * (ell[1:] + ell[:-1]))])
    p_bar_nodes = np.concatenate([[0.0], np.cumsum(0.5 * h * (p_nodes[1:] + p_nodes[:-1]))])
    return ReciprocalKernel(
        k0=k0,
        h=h,
        horizon=float(t[-1]),
        ell=ell,
        p_nodes=p_nodes,
        p_bar_nodes=p_bar_nodes,
        ratio_tol=ratio_tol,
    )


def eval_p(recip: ReciprocalKernel, t):
    """``p(t)``; zero for ``t < 0``, ``OutOfHorizon`` beyond a tabulated horizon."""
    return recip.p(t)


def eval_p_bar(recip: ReciprocalKernel, t):
    """``p_bar(t) = int_0^t p``; zero for ``t <= 0``."""
    return recip.p_bar(t)


def convolve_p_k(recip: ReciprocalKernel, kernel: NoiseKernel, t, order=4):
    """Evaluate ``(p * k)(t) = int_0^t p(v) k(t - v) dv`` by product quadrature.

    Gauss-Legendre on every cell of the reciprocal grid (or on unit cells for
    analytic ``p``), with extra cell breaks where ``k`` is not smooth.  Used
    to check the first-kind identity ``(p * k)(t) = t``.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    out = []
    for ti in np.atleast_1d(np.asarray(t, dtype=float)):
        if ti <= 0:
            out.append(0.0)
            continue
        step = recip.h if not recip.analytic else min(1e-2, ti)
        edges = np.arange(0.0, ti, step)
        extra = [b for b in range(1, int(ti) + 1)] if recip.analytic else []
        extra += [ti - b for b in kernel.breakpoints if 0 < ti - b < ti]
        edges = np.unique(np.concatenate([edges, extra, [ti]]))
        a, b = edges[:-1], edges[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        v = mid[:, None] + half[:, None] * xg[None, :]
        vals = recip.p(v) * kernel.k(ti - v)
        out.append(float(np.sum(half[:, None] * wg[None, :] * vals)))
    return np.asarray(out)
