"""Maximum likelihood estimation of a concave distribution function.

The estimate is a mixture of uniform CDFs with support on the distinct
observations.  We minimize the cone objective ``-int log g dG_n + int g``
by sequential quadratic approximation; each local quadratic is minimized
over the cone spanned by ``{g_theta}`` with the support reduction
algorithm.
"""
from __future__ import annotations

import numpy as np

from .errors import NotConverged, ZeroDensity
from .kernels import NoiseKernel
from .mixture import MixtureCDF, Sample, basis_g
from .results import CharTable, MleFit

__all__ = ["loglik", "fit_mle", "mle_char_slack", "mle_slack_weights"]

_LAMBDA_FLOOR = 2.0**-30


def loglik(cdf, sample: Sample, kernel: NoiseKernel) -> float:
    """Average log density ``(1/n) sum_i log g_F(Z_i)``."""
    g = np.asarray(cdf.g(kernel, sample.observations), dtype=float)
    if np.any(g <= 0):
        bad = sample.observations[np.argmax(g <= 0)]
        raise ZeroDensity(f"g_F vanishes at observation {bad:.6g}")
    return float(np.mean(np.log(g)))


def mle_char_slack(cdf, sample: Sample, kernel: NoiseKernel, extra_grid=None) -> CharTable:
    """Slack ``theta -> (1/n) sum_i g_theta(Z_i) / g_F(Z_i)`` over the observations.

    ``extra_grid`` adds points in ``(0, Z_(n)]``; violations there are
    reported, not raised.
    """
    return mle_slack_weights(cdf.theta, cdf.tau, sample, kernel, extra_grid)


def mle_slack_weights(support, weights, sample: Sample, kernel: NoiseKernel,
                      extra_grid=None) -> CharTable:
    """Slack table for ``g = sum_j w_j g_{theta_j}`` with the weights as given."""
    support = np.atleast_1d(np.asarray(support, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    z, w = sample.unique()
    gF = basis_g(support[None, :], kernel, z[:, None]) @ weights
    if np.any(gF <= 0):
        raise ZeroDensity("g_F vanishes at an observation")
    theta = z
    if extra_grid is not None:
        extra = np.asarray(extra_grid, dtype=float)
        extra = extra[(extra > 0) & (extra <= z[-1])]
        theta = np.union1d(theta, extra)
    value = basis_g(theta[None, :], kernel, z[:, None]).T @ (w / gF)
    kink = np.isin(theta, support[weights != 0])
    return CharTable(theta, value, kink)


def _solve(A, b):
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, b, rcond=None)[0]


def _inner_sra(G, w, gbar, beta, tol, max_steps=1000):
    """Minimize the local quadratic model at ``gbar`` over the cone.

    Returns the cone weights of the minimizer, starting from the feasible
    ``beta``.  Support points enter by the scaled steepest-descent rule and
    leave by the standard reduction step when the unconstrained solve on
    the support produces a nonpositive weight.
    """
    beta = beta.copy()
    wg2 = w / gbar**2
    r = G.T @ (w / gbar)
    b_full = 2.0 * r - 1.0
    c2 = (G * G).T @ wg2
    c2 = np.where(c2 > 0, c2, np.inf)
    S = list(np.flatnonzero(beta > 0))

    def reduce():
        # solve on the support; walk back to the first zero crossing otherwise
        while S:
            idx = np.asarray(S)
            GS = G[:, idx]
            A = GS.T @ (wg2[:, None] * GS)
            x = _solve(A, b_full[idx])
            if np.all(x > 0):
                beta[:] = 0.0
                beta[idx] = x
                return True
            old = beta[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(x <= 0, old / (old - x), np.inf)
            k = int(np.argmin(t))
            if t[k] <= 0:
                S.remove(idx[k])
                return False
            beta[idx] = np.maximum(old + t[k] * (x - old), 0.0)
            beta[idx[k]] = 0.0
            S.remove(idx[k])
        return True

    reduce()
    for _ in range(max_steps):
        g = G[:, S] @ beta[S] if S else np.zeros(G.shape[0])
        c1 = 1.0 - 2.0 * r + G.T @ (wg2 * g)
        j = int(np.argmin(c1 / np.sqrt(c2)))  # ties: smallest theta
        if c1[j] >= -tol:
            break
        if j in S:
            break
        S.append(j)
        S.sort()
        if not reduce():
            # the entering point could not take weight (round-off level)
            break
    return beta


def fit_mle(sample: Sample, kernel: NoiseKernel, tol: float = 1e-8,
            max_iter: int = 500, strict: bool = True) -> MleFit:
    """Maximum likelihood estimate over concave distribution functions.

    Parameters
    ----------
    sample : Sample
    kernel : NoiseKernel
    tol : float
        Stop once the slack is at most ``1 + tol`` everywhere on the
        observations and within ``tol`` of 1 on the support.
    max_iter : int
        Outer (quadratic model) iterations.
    strict : bool
        Raise ``NotConverged`` (with the fit attached) when ``max_iter`` is
        reached.

    Returns
    -------
    MleFit
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    z, w = sample.unique()
    G = basis_g(z[None, :], kernel, z[:, None])
    alpha = np.zeros(z.size)
    alpha[-1] = 1.0
    g = G @ alpha
    if np.any(g <= 0):
        raise ZeroDensity("initial iterate has zero density at an observation")
    ll = float(w @ np.log(g))
    history = [ll]
    log = [f"iter 0 loglik {ll:.17g} support 1"]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        slack = G.T @ (w / g)
        S = alpha > 0
        gap = max(slack.max() - 1.0, np.max(np.abs(slack[S] - 1.0)))
        if gap <= tol:
            converged = True
            it -= 1
            break
        alpha_q = _inner_sra(G, w, g, alpha, 0.1 * tol)
        step = alpha_q - alpha
        psi_old = ll - 1.0
        lam = 1.0
        accepted = None
        while lam >= _LAMBDA_FLOOR:
            cand = alpha + lam * step
            gc = G @ cand
            if np.all(gc > 0):
                psi = float(w @ np.log(gc)) - cand.sum()
                if psi >= psi_old - 4 * np.finfo(float).eps * max(1.0, abs(psi_old)):
                    accepted = cand
                    break
            lam *= 0.5
        if accepted is None:
            log.append(f"iter {it} line search failed at lambda floor")
            break
        # rescaling onto the simplex can only increase the cone objective
        alpha = np.where(accepted > 1e-300, accepted, 0.0)
        alpha /= alpha.sum()
        g = G @ alpha
        ll = float(w @ np.log(g))
        history.append(ll)
        log.append(
            f"iter {it} loglik {ll:.17g} lambda {lam:.6g} gap {gap:.3e} "
            f"support {int(np.count_nonzero(alpha))}"
        )
    S = alpha > 0
    estimate = MixtureCDF(z[S], alpha[S])
    slack_tab = mle_char_slack(estimate, sample, kernel)
    fit = MleFit(
        estimate=estimate,
        loglik=loglik(estimate, sample, kernel),
        slack=slack_tab,
        iterations=it,
        converged=converged,
        sample=sample,
        kernel_name=kernel.name,
        history=history,
        log=log,
    )
    if not converged and strict:
        raise NotConverged(f"MLE did not converge in {max_iter} iterations", fit=fit)
    return fit
