import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concavedeconv import RateStudyConfig, fit_lse, fit_mle, make_custom, solve_reciprocal
from concavedeconv import formats
from concavedeconv.asymptotics import RateStudyResult

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_sample_round_trip(tmp_path, small_sample):
    path = tmp_path / "s.txt"
    formats.write_sample(path, small_sample, {"kernel": "exponential", "n": 10, "seed": 42})
    back, header = formats.read_sample(path)
    assert np.array_equal(back.observations, small_sample.observations)
    assert header == {"kernel": "exponential", "n": "10", "seed": "42"}
    assert back.seed == 42
    assert len(path.read_text().splitlines()) == 10


def test_sample_without_header(tmp_path):
    path = tmp_path / "plain.txt"
    path.write_text("# comment\n2.5\n\n1.0\n")
    smp, header = formats.read_sample(path)
    assert header == {} and smp.observations.tolist() == [1.0, 2.5]


def test_sample_parse_error(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1.0\nabc\n")
    with pytest.raises(ValueError, match="bad.txt:2"):
        formats.read_sample(path)


def test_fit_round_trip(tmp_path, small_sample, exponential):
    mle = fit_mle(small_sample, exponential)
    recip = solve_reciprocal(exponential)
    lse = fit_lse(small_sample, recip)
    for fit, params in ((mle, None), (lse, {"h": 1e-3, "T": 10.0})):
        path = tmp_path / "fit.json"
        formats.write_fit(path, fit, exponential, params)
        d = formats.read_fit(path)
        assert np.array_equal(d["support"], fit.support)
        assert np.array_equal(d["weights"], fit.weights)
        assert np.array_equal(d["observations"], small_sample.observations)
        table = fit.slack if d["estimator"] == "mle" else fit.char_table
        assert np.array_equal(d["char_table"].value, table.value)
        assert np.array_equal(d["char_table"].kink, table.kink)
        assert d["iteration_log"] == fit.log
    assert d["objective"] == lse.objective and d["reciprocal"] == {"h": 1e-3, "T": 10.0}


def test_read_fit_requires_fields(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"estimator": "mle"}))
    with pytest.raises(ValueError, match="missing field"):
        formats.read_fit(path)


def test_custom_kernel_dict_round_trip():
    x = np.linspace(0.0, 1.0, 5)
    kernel = make_custom(x, np.full(5, 2.0), 2.0)
    back = formats.kernel_from_dict(json.loads(json.dumps(formats.kernel_to_dict(kernel))))
    z = np.linspace(0, 1.2, 13)
    assert np.array_equal(back.k(z), kernel.k(z))
    assert formats.kernel_from_dict({"name": "triangular"}).k0 == 2.0


@settings(max_examples=50, deadline=None)
@given(xy=st.lists(st.tuples(finite, finite), min_size=1, max_size=30))
def test_curve_round_trip(tmp_path_factory, xy):
    path = tmp_path_factory.mktemp("c") / "c.tsv"
    x, y = np.array(xy).T
    formats.write_curve(path, x, y)
    bx, by = formats.read_curve(path)
    assert np.array_equal(bx, x) and np.array_equal(by, y)


def test_rate_table_round_trip(tmp_path):
    res = RateStudyResult(
        config=RateStudyConfig(replications=5),
        n=np.array([200.0, 800.0]),
        median_value_error=np.array([0.1 / 3, 0.02]),
        median_deriv_error=np.array([0.2, np.pi / 20]),
        failures=np.array([0, 1]),
        value_slope=-0.4123456789,
        deriv_slope=-0.2,
        value_ci=(-0.5, -0.3),
        deriv_ci=(-0.3, -0.1),
    )
    path = tmp_path / "r.tsv"
    formats.write_rate_table(path, res)
    rows, summary = formats.read_rate_table(path)
    assert rows == list(res.rows())
    assert summary["slope_value"] == res.value_slope and summary["deriv_ci"] == res.deriv_ci


def test_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# experiment\nkernel = triangular\nn = 25  # inline\ntol_lse = 1e-9\n")
    assert formats.read_config(path) == {"kernel": "triangular", "n": 25, "tol_lse": 1e-9}
    path.write_text("colour = red\n")
    with pytest.raises(ValueError, match="unknown config key"):
        formats.read_config(path)
    path.write_text("n = ten\n")
    with pytest.raises(ValueError, match="bad value"):
        formats.read_config(path)


def test_atomic_write_keeps_old_file_on_failure(tmp_path):
    path = tmp_path / "x.txt"
    formats.write_atomic(path, "old\n")
    with pytest.raises(TypeError):
        formats.write_atomic(path, b"bytes into text mode")
    assert path.read_text() == "old\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.txt"]
