import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from concavedeconv import NotConverged, OutOfHorizon, Sample, fit_lse, qn, sample, solve_reciprocal
from concavedeconv.lse import (
    UnProcess,
    eval_Un,
    eval_Yn,
    inner_ss,
    inner_sU,
    lse_char_weights,
    second_primitive,
)

import oracles


def recip_for(kernel, smp, h=1e-3):
    return solve_reciprocal(kernel, h=h, T=float(smp.observations[-1]) + 1.0)


def test_gram_matches_quadrature():
    pts = np.array([0.3, 1.0, 2.5, 7.0])
    G = inner_ss(pts[:, None], pts[None, :])
    ref = np.array([[oracles.gram_quad(a, b) for b in pts] for a in pts])
    np.testing.assert_allclose(G, ref, atol=1e-14)
    np.testing.assert_array_equal(G, G.T)
    assert np.all(np.linalg.eigvalsh(G) > 0)


@pytest.mark.parametrize("which", ["exponential", "uniform01"])
def test_inner_sU_matches_stieltjes(which, truth, exponential, uniform01):
    kernel, ref_fn = ((exponential, oracles.s_dU_exponential) if which == "exponential"
                      else (uniform01, oracles.s_dU_uniform))
    smp = sample(truth, kernel, 15, 4)
    proc = UnProcess(smp, recip_for(kernel, smp))
    theta = np.concatenate([smp.observations, [0.37, 2.2]])
    ref = [ref_fn(t, smp.observations) for t in theta]
    np.testing.assert_allclose(inner_sU(proc, theta), ref, atol=1e-13)


def test_Un_and_Yn_exponential(truth, exponential):
    smp = sample(truth, exponential, 12, 2)
    proc = UnProcess(smp, recip_for(exponential, smp))
    z = smp.observations
    x = np.linspace(0.0, z[-1] + 0.5, 57)
    direct = x - np.array([np.sum((1 + xi - z) * (xi >= z)) for xi in x]) / z.size
    np.testing.assert_allclose(eval_Un(proc, x), direct, atol=1e-13)
    for t in (0.4, 2.0, z[-1]):
        ref = integrate.quad(lambda v: float(eval_Un(proc, v)), 0, t, points=z[z < t], limit=200)[0]
        assert eval_Yn(proc, t) == pytest.approx(ref, abs=1e-10)


def test_qn_matches_quadrature(truth, exponential):
    smp = sample(truth, exponential, 8, 6)
    proc = UnProcess(smp, recip_for(exponential, smp))
    support = smp.observations[[2, 5, 7]]
    w = np.array([0.2, 0.3, 0.5])
    s = lambda x: float(np.sum(w * np.clip(1 - x / support, 0, None)))
    half_ss = 0.5 * integrate.quad(lambda x: s(x) ** 2, 0, support[-1], points=support[:-1])[0]
    sU = sum(wi * oracles.s_dU_exponential(t, smp.observations) for wi, t in zip(w, support))
    assert qn(support, w, proc) == pytest.approx(half_ss - sU, abs=1e-12)


def test_second_primitive():
    knots = np.array([0.0, 0.5, 1.2, 3.0])
    values = np.array([1.0, 0.6, 0.3, 0.0])
    x = np.linspace(-0.5, 4.0, 19)
    fine = np.linspace(0.0, 4.0, 400001)
    s = np.interp(fine, knots, values)
    S1 = integrate.cumulative_trapezoid(s, fine, initial=0)
    S2 = integrate.cumulative_trapezoid(S1, fine, initial=0)
    ref = np.where(x > 0, np.interp(x, fine, S2), 0.0)
    np.testing.assert_allclose(second_primitive(knots, values, x), ref, atol=1e-9)


def test_fit_properties(truth, exponential):
    smp = sample(truth, exponential, 40, 8)
    proc_recip = recip_for(exponential, smp)
    fit = fit_lse(smp, proc_recip, tol=1e-10)
    assert fit.converged
    assert fit.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(fit.weights > 0)
    assert np.all(np.isin(fit.support, smp.observations))
    assert np.all(np.diff(fit.history) < 0)
    x = np.linspace(0, smp.observations[-1] + 1, 301)
    s = fit.survival(x)
    assert s[0] == 1.0 and np.all(np.diff(s) <= 1e-15)
    assert np.all(np.diff(s, 2) >= -1e-12)
    assert fit.char_table.value.min() >= -1e-8
    assert np.max(np.abs(fit.char_table.at_kinks())) <= 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_matches_active_set_oracle(seed, truth, exponential, uniform01):
    kernel, ref_fn = (exponential, oracles.s_dU_exponential) if seed % 2 else (uniform01, oracles.s_dU_uniform)
    smp = sample(truth, kernel, 6, 70 + seed)
    theta, w_ref, obj_ref = oracles.lse_active_set(smp.observations, ref_fn)
    fit = fit_lse(smp, recip_for(kernel, smp))
    w = np.zeros(theta.size)
    w[np.searchsorted(theta, fit.support)] = fit.weights
    np.testing.assert_allclose(w, w_ref, atol=1e-9)
    assert fit.objective == pytest.approx(obj_ref, abs=1e-12)


def test_alternate_starts_agree(truth, triangular):
    smp = sample(truth, triangular, 20, 12)
    recip = recip_for(triangular, smp)
    ref = fit_lse(smp, recip)
    for start in smp.observations[::4]:
        other = fit_lse(smp, recip, start=start)
        np.testing.assert_array_equal(other.support, ref.support)
        np.testing.assert_allclose(other.weights, ref.weights, atol=1e-10)


def test_not_converged(truth, exponential):
    smp = sample(truth, exponential, 200, 1)
    recip = recip_for(exponential, smp)
    with pytest.raises(NotConverged) as info:
        fit_lse(smp, recip, max_iter=1)
    assert info.value.fit is not None and not info.value.fit.converged


def test_horizon_too_short(truth, triangular):
    smp = sample(truth, triangular, 20, 3)
    recip = solve_reciprocal(triangular, h=1e-3, T=float(smp.observations[-1]) / 2)
    with pytest.raises(OutOfHorizon):
        fit_lse(smp, recip)


def test_perturbed_weights_violate_characterization(truth, exponential):
    smp = sample(truth, exponential, 10, 42)
    fit = fit_lse(smp, recip_for(exponential, smp))
    proc = UnProcess(smp, recip_for(exponential, smp))
    same = lse_char_weights(fit.support, fit.weights, proc)
    np.testing.assert_allclose(same.value, fit.char_table.value, atol=1e-15)
    w = fit.weights.copy()
    w[0] += 0.05
    w[-1] -= 0.05
    bad = lse_char_weights(fit.support, w, proc)
    assert bad.value.min() < -1e-8 or np.max(np.abs(bad.at_kinks())) > 1e-8


def test_characterization_between_observations(truth, exponential):
    smp = sample(truth, exponential, 30, 21)
    recip = recip_for(exponential, smp)
    fit = fit_lse(smp, recip)
    grid = np.linspace(0, smp.observations[-1], 2001)[1:]
    tab = lse_char_weights(fit.support, fit.weights, UnProcess(smp, recip), extra_grid=grid)
    assert tab.value.min() >= -1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 80), tri=st.booleans())
def test_characterization_property(seed, n, tri, truth, exponential, triangular):
    kernel = triangular if tri else exponential
    smp = sample(truth, kernel, n, seed)
    fit = fit_lse(smp, recip_for(kernel, smp, h=2e-3))
    assert fit.char_table.value.min() >= -1e-8
    assert np.max(np.abs(fit.char_table.at_kinks())) <= 1e-8
    assert abs(fit.weights.sum() - 1.0) <= 1e-14


def test_permutation_invariance(truth, exponential):
    smp = sample(truth, exponential, 30, 13)
    recip = recip_for(exponential, smp)
    a = fit_lse(smp, recip)
    b = fit_lse(Sample(smp.observations[::-1].copy()), recip)
    np.testing.assert_array_equal(a.support, b.support)
    np.testing.assert_array_equal(a.weights, b.weights)
