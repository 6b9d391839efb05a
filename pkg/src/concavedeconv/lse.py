"""Least squares estimation of the survival function.

With ``U_n(x) = x - (p * dG_n)(x)`` the LS criterion is

    Q_n(s) = 1/2 int s^2 - int s dU_n,

minimized over convex combinations of ``s_theta(x) = (1 - x/theta)_+``
with ``theta`` in the observation set.  All integrals are closed form:
``<s_a, s_b> = a/2 - a^2/(6b)`` for ``a <= b`` and
``<s_theta, dU_n> = Y_n(theta) / theta``.
"""
from __future__ import annotations

import numpy as np

from .errors import NotConverged
from .kernels import ReciprocalKernel
from .mixture import MixtureCDF, Sample
from .results import CharTable, LseFit

__all__ = [
    "UnProcess",
    "eval_Un",
    "eval_Yn",
    "inner_ss",
    "inner_sU",
    "qn",
    "fit_lse",
    "lse_char",
    "second_primitive",
    "lse_char_weights",
]

_CHUNK = 1 << 20


class UnProcess:
    """Empirical ``U_n`` and its integral ``Y_n`` for a sample."""

    def __init__(self, sample: Sample, recip: ReciprocalKernel):
        self.sample = sample
        self.recip = recip
        self.z = sample.observations
        self.n = sample.n

    def _rows(self, x):
        return max(1, _CHUNK // self.n), x.ravel()

    def U(self, x):
        x = np.asarray(x, dtype=float)
        step, flat = self._rows(x)
        out = np.empty(flat.size)
        for i in range(0, flat.size, step):
            xi = flat[i:i + step, None]
            out[i:i + step] = xi[:, 0] - self.recip.p(xi - self.z).sum(axis=1) / self.n
        return out.reshape(x.shape)

    def Y(self, theta):
        theta = np.asarray(theta, dtype=float)
        step, flat = self._rows(theta)
        out = np.empty(flat.size)
        for i in range(0, flat.size, step):
            ti = flat[i:i + step, None]
            out[i:i + step] = 0.5 * ti[:, 0] ** 2 - self.recip.p_bar(ti - self.z).sum(axis=1) / self.n
        return out.reshape(theta.shape)


def eval_Un(proc: UnProcess, x):
    return proc.U(x)


def eval_Yn(proc: UnProcess, theta):
    return proc.Y(theta)


def inner_ss(a, b):
    """``int_0^inf s_a s_b dx`` for ``s_theta(x) = (1 - x/theta)_+``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = lo / 2.0 - lo * lo / (6.0 * hi)
    return np.where(lo > 0, val, 0.0)


def inner_sU(proc: UnProcess, theta):
    """``int s_theta dU_n = Y_n(theta) / theta``."""
    theta = np.asarray(theta, dtype=float)
    safe = np.where(theta > 0, theta, 1.0)
    return np.where(theta > 0, proc.Y(safe) / safe, 0.0)


def qn(support, weights, proc: UnProcess) -> float:
    """``Q_n`` of the mixture ``sum_i w_i s_{theta_i}``."""
    support = np.atleast_1d(np.asarray(support, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    G = inner_ss(support[:, None], support[None, :])
    return float(0.5 * weights @ G @ weights - weights @ inner_sU(proc, support))


def _eliminated_solve(G, u):
    """Minimize ``1/2 a'Ga - a'u`` subject to ``sum a = 1``.

    The first weight is eliminated, ``a_1 = 1 - sum_{i>=2} a_i``, giving the
    system ``A a_{2:} = b`` with ``A_ij = <s_1 - s_i, s_1 - s_j>`` and
    ``b_i = <s_1 - s_i, s_1> - <s_1 - s_i, dU_n>``.
    """
    m = u.size
    if m == 1:
        return np.ones(1)
    A = G[0, 0] - G[0, 1:][None, :] - G[1:, 0][:, None] + G[1:, 1:]
    b = (G[0, 0] - G[1:, 0]) - (u[0] - u[1:])
    try:
        rest = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        rest = np.linalg.lstsq(A, b, rcond=None)[0]
    return np.concatenate([[1.0 - rest.sum()], rest])


def fit_lse(sample: Sample, recip: ReciprocalKernel, tol: float = 1e-10,
            max_iter: int = 10000, start=None, strict: bool = True,
            kernel_name: str = "") -> LseFit:
    """Least squares estimate of the survival function.

    Parameters
    ----------
    sample : Sample
    recip : ReciprocalKernel
        Must cover ``[0, Z_(n)]``.
    tol : float
        Stop once ``min_theta c1(theta; s) >= <s, s> - <s, dU_n> - tol``.
    max_iter : int
        Support-point insertions allowed.
    start : float, optional
        Initial single support point (an observation); defaults to ``Z_(n)``.
    strict : bool
        Raise ``NotConverged`` at ``max_iter``.
    """
    proc = UnProcess(sample, recip)
    theta = np.unique(sample.observations)
    m = theta.size
    u = inner_sU(proc, theta)
    alpha = np.zeros(m)
    j0 = m - 1 if start is None else int(np.argmin(np.abs(theta - start)))
    alpha[j0] = 1.0
    S = [j0]

    def objective():
        idx = np.asarray(S)
        G = inner_ss(theta[idx, None], theta[None, idx])
        a = alpha[idx]
        return float(0.5 * a @ G @ a - a @ u[idx])

    def reduce():
        while True:
            idx = np.asarray(S)
            G = inner_ss(theta[idx, None], theta[None, idx])
            x = _eliminated_solve(G, u[idx])
            if np.all(x > 0):
                alpha[:] = 0.0
                alpha[idx] = x
                return True
            old = alpha[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(x <= 0, old / (old - x), np.inf)
            k = int(np.argmin(t))
            if t[k] <= 0:
                S.remove(idx[k])
                return False
            alpha[idx] = np.maximum(old + t[k] * (x - old), 0.0)
            alpha[idx[k]] = 0.0
            S.remove(idx[k])

    q = objective()
    history = [q]
    log = [f"iter 0 Q {q:.17g} support 1"]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.asarray(S)
        Gs = inner_ss(theta[:, None], theta[None, idx]) @ alpha[idx]
        c1 = Gs - u
        thr = float(alpha[idx] @ Gs[idx] - alpha[idx] @ u[idx])
        j = int(np.argmin(c1))  # ties: smallest theta
        if c1[j] >= thr - tol or j in S:
            converged = c1[j] >= thr - tol
            it -= 1
            break
        S.append(j)
        S.sort()
        entered = reduce()
        q = objective()
        history.append(q)
        log.append(
            f"iter {it} Q {q:.17g} add {theta[j]:.17g} gap {thr - c1[j]:.3e} "
            f"support {len(S)}"
        )
        if not entered:
            break
    # exact simplex: clear round-off drift
    alpha[alpha < 0] = 0.0
    alpha /= alpha.sum()
    keep = alpha > 0
    estimate = MixtureCDF(theta[keep], alpha[keep])
    fit = LseFit(
        estimate=estimate,
        objective=qn(estimate.theta, estimate.tau, proc),
        char_table=None,
        iterations=it,
        converged=converged,
        sample=sample,
        kernel_name=kernel_name,
        history=history,
        log=log,
    )
    fit.char_table = lse_char(fit, proc)
    if not converged and strict:
        raise NotConverged(f"LSE did not converge in {max_iter} iterations", fit=fit)
    return fit


def second_primitive(knots, values, x):
    """``int_0^x int_0^t s(v) dv dt`` for piecewise linear ``s``.

    ``s`` interpolates ``values`` at ``knots`` (starting at 0) and is
    constant at ``values[-1]`` beyond the last knot.
    """
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    L = np.diff(knots)
    ds = np.diff(values)
    S1 = np.concatenate([[0.0], np.cumsum(L * (values[:-1] + 0.5 * ds))])
    S2 = np.concatenate([[0.0], np.cumsum(S1[:-1] * L + values[:-1] * L**2 / 2 + ds * L**2 / 6)])
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, knots.size - 1)
    d = x - knots[i]
    slope = np.append(ds / np.where(L > 0, L, 1.0), 0.0)[i]
    out = S2[i] + S1[i] * d + values[i] * d**2 / 2 + slope * d**3 / 6
    return np.where(x > 0, out, 0.0)


def lse_char(fit: LseFit, proc: UnProcess, extra_grid=None) -> CharTable:
    """``theta -> H_n(theta; s) - Y_n(theta)`` over the observations."""
    est = fit.estimate
    return lse_char_weights(est.theta, est.tau, proc, extra_grid)


def lse_char_weights(support, weights, proc: UnProcess, extra_grid=None) -> CharTable:
    """Characterization table for ``s = sum_j w_j s_{theta_j}``.

    The weights are used as given, without projecting onto the simplex.
    The double integral of ``s`` is taken segment by segment from the
    piecewise linear survival function; ``int s^2`` and ``int s dU_n`` come
    from the Gram quantities.
    """
    support = np.atleast_1d(np.asarray(support, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    order = np.argsort(support)
    support, weights = support[order], weights[order]
    theta = np.unique(proc.z)
    if extra_grid is not None:
        extra = np.asarray(extra_grid, dtype=float)
        extra = extra[(extra > 0) & (extra <= theta[-1])]
        theta = np.union1d(theta, extra)
    knots = np.concatenate([[0.0], support])
    values = np.clip(1.0 - knots[:, None] / support, 0.0, None) @ weights
    ss = float(weights @ inner_ss(support[:, None], support[None, :]) @ weights)
    sU = float(weights @ inner_sU(proc, support))
    H = second_primitive(knots, values, theta) - theta * (ss - sU)
    value = H - proc.Y(theta)
    return CharTable(theta, value, np.isin(theta, support[weights != 0]))
