"""Independent reference computations used by the tests.

Nothing here calls the library's numerical routines; each oracle rebuilds
its quantity from definitions with plain quadrature or brute force.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate, optimize


# --- reciprocal kernel: first-kind collocation -------------------------------


def first_kind_reciprocal(K, h, T):
    """Solve ``int_0^t p(u) k(t - u) du = t`` directly.

    ``p`` is piecewise constant on cells of width ``h`` and the equation is
    collocated at the cell ends.  Returns cell midpoints and values.
    """
    m = int(round(T / h))
    w = K(np.arange(1, m + 1) * h) - K(np.arange(0, m) * h)
    p = np.empty(m)
    for i in range(m):
        s = w[i:0:-1] @ p[:i] if i else 0.0
        p[i] = ((i + 1) * h - s) / w[0]
    return (np.arange(m) + 0.5) * h, p


def convolve_quad(p, k, t, support=1.0, h=1e-3, order=6):
    """``(p * k)(t) = int_0^min(t, support) p(t - u) k(u) du``.

    Gauss-Legendre on a grid that contains every multiple of ``h`` in
    ``t - u`` so the piecewise linear ``p`` is integrated exactly per cell.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    out = np.empty(len(t))
    for idx, ti in enumerate(t):
        hi = min(ti, support)
        brk = ti - np.arange(np.floor(ti / h), np.floor((ti - hi) / h) - 1, -1) * h
        brk = np.unique(np.clip(np.concatenate([[0.0, hi], brk]), 0.0, hi))
        a, b = brk[:-1], brk[1:]
        u = 0.5 * (b - a)[:, None] * xg + 0.5 * (a + b)[:, None]
        out[idx] = np.sum(0.5 * (b - a)[:, None] * wg * p(ti - u) * k(u))
    return out


# --- least squares: exhaustive active set --------------------------------------


def gram_quad(a, b):
    """``int (1 - x/a)_+ (1 - x/b)_+ dx`` by quadrature."""
    return integrate.quad(lambda x: (1 - x / a) * (1 - x / b), 0.0, min(a, b),
                          epsabs=1e-14, epsrel=1e-13)[0]


def s_dU_exponential(theta, z):
    """``int s_theta dU_n`` for exponential noise, reciprocal ``p = (1 + t) 1{t >= 0}``.

    ``dp`` is a unit atom at 0 plus Lebesgue measure, so
    ``int s d p(. - Z) = s(Z) + int_Z^theta s``.
    """
    val = theta / 2.0
    for zi in z:
        if zi < theta:
            val -= ((1 - zi / theta) + 0.5 * (theta - zi) ** 2 / theta) / len(z)
    return val


def s_dU_uniform(theta, z):
    """Same for uniform noise on ``[0, 1]``: ``p = 1 + floor(t)`` has unit atoms at the integers."""
    val = theta / 2.0
    for zi in z:
        m = 0
        while zi + m < theta:
            val -= (1 - (zi + m) / theta) / len(z)
            m += 1
    return val


def lse_active_set(z, s_dU):
    """Minimize ``1/2 a'Ga - a'u`` over the simplex by trying every support subset.

    Returns ``(theta, weights, objective)`` for the subset whose equality
    constrained solution is positive and satisfies the first-order
    conditions outside the subset.
    """
    theta = np.unique(z)
    m = theta.size
    G = np.array([[gram_quad(a, b) for b in theta] for a in theta])
    u = np.array([s_dU(t, z) for t in theta])
    best = None
    for r in range(1, m + 1):
        for S in itertools.combinations(range(m), r):
            S = list(S)
            kkt = np.zeros((r + 1, r + 1))
            kkt[:r, :r] = G[np.ix_(S, S)]
            kkt[:r, r] = 1.0
            kkt[r, :r] = 1.0
            rhs = np.concatenate([u[S], [1.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            a_S, lam = sol[:r], -sol[r]
            if np.any(a_S <= 0):
                continue
            a = np.zeros(m)
            a[S] = a_S
            grad = G @ a - u
            if np.all(grad >= lam - 1e-10):
                obj = 0.5 * a @ G @ a - a @ u
                if best is None or obj < best[2]:
                    best = (theta, a, obj)
    return best


# --- maximum likelihood: simplex grid plus refinement ---------------------------


def g_theta_quad(k, theta, z, support=np.inf):
    """``(1/theta) int_0^theta k(z - x) dx`` by quadrature."""
    lo = max(0.0, z - support)
    hi = min(theta, z)
    if hi <= lo:
        return 0.0
    return integrate.quad(lambda x: k(z - x), lo, hi, epsabs=1e-14, epsrel=1e-13)[0] / theta


def mle_grid_refine(z, k, support=np.inf, step=0.02):
    """Maximize the mean log density over mixtures supported on the observations."""
    theta = np.unique(z)
    m = theta.size
    B = np.array([[g_theta_quad(k, t, zi, support) for t in theta] for zi in z])

    def ll(w):
        g = B @ w
        return np.mean(np.log(g)) if np.all(g > 0) else -np.inf

    ticks = np.arange(0.0, 1.0 + step / 2, step)
    best_w, best = None, -np.inf
    for head in itertools.product(ticks, repeat=m - 1):
        last = 1.0 - sum(head)
        if last < -1e-12:
            continue
        w = np.array(list(head) + [max(last, 0.0)])
        v = ll(w)
        if v > best:
            best_w, best = w, v

    def neg(w):
        w = np.maximum(w, 0.0)
        return -ll(w / w.sum()) if w.sum() > 0 else np.inf

    res = optimize.minimize(
        neg, best_w, method="SLSQP", bounds=[(0.0, 1.0)] * m,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    refined = -res.fun if np.isfinite(res.fun) else -np.inf
    # polish: tiny local grid around the best point
    w0 = best_w if best >= refined else np.maximum(res.x, 0) / np.maximum(res.x, 0).sum()
    top = max(best, refined)
    for scale in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        improved = True
        while improved:
            improved = False
            for i, j in itertools.permutations(range(m), 2):
                d = min(scale, w0[j])
                if d <= 0:
                    continue
                w = w0.copy()
                w[i] += d
                w[j] -= d
                v = ll(w)
                if v > top:
                    w0, top, improved = w, v, True
    return theta, w0, top
