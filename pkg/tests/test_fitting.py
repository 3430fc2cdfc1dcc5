import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import TWO_PI, pipeline_fit, rabi_data, truth_params, truth_system
from sapasim import fitting, model

WR = model.REF_OMEGA_R
KAPPA = model.REF_KAPPA


@pytest.mark.parametrize("method", ["simplex", "gauss_newton"])
def test_convex_quadratic(method):
    c = np.array([1.5, -0.3, 2.0])
    if method == "gauss_newton":
        res = fitting.minimize(lambda x: x - c, np.zeros(3), method=method)
    else:
        res = fitting.minimize(lambda x: float(np.sum((x - c) ** 2)), np.zeros(3), method=method)
    np.testing.assert_allclose(res.values, c, atol=1e-8)
    assert res.converged


@pytest.mark.parametrize("method", ["simplex", "gauss_newton"])
def test_rosenbrock(method):
    resid = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    obj = resid if method == "gauss_newton" else (lambda x: float(resid(x) @ resid(x)))
    res = fitting.minimize(obj, [-1.2, 1.0], method=method, max_iter=5000)
    np.testing.assert_allclose(res.values, [1.0, 1.0], atol=1e-4)


@pytest.mark.parametrize("method", ["simplex", "gauss_newton"])
def test_bound_clipped_quadratic(method):
    c = np.array([1.0, -2.0])
    f = (lambda x: x - c) if method == "gauss_newton" else (lambda x: float(np.sum((x - c) ** 2)))
    res = fitting.minimize(f, [0.5, 0.5], bounds=([-5, -0.5], [5, 5]), method=method)
    np.testing.assert_allclose(res.values, [1.0, -0.5], atol=1e-6)
    assert res.active_bounds == [False, True]


def test_nan_objective_names_parameters():
    with pytest.raises(FloatingPointError, match=r"parameters \[.*0\.25"):
        fitting.minimize(lambda x: np.nan * x, [0.25, 1.0], method="gauss_newton")


def test_minimize_argument_errors():
    with pytest.raises(ValueError, match="outside"):
        fitting.minimize(lambda x: x, [3.0], bounds=([0.0], [1.0]))
    with pytest.raises(ValueError, match="method"):
        fitting.minimize(lambda x: x, [0.1], method="newton")


@pytest.mark.parametrize("method", ["simplex", "gauss_newton"])
def test_objective_never_increases(method):
    resid = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0], 0.1 * x[1]])  # noqa: E731
    x0 = np.array([-1.2, 1.0])
    obj = resid if method == "gauss_newton" else (lambda x: float(resid(x) @ resid(x)))
    res = fitting.minimize(obj, x0, method=method, max_iter=5000)
    assert np.sum(resid(res.values) ** 2) <= np.sum(resid(x0) ** 2)


def lorentz_data(noise=0.0, seed=0, span=40e6, n=201):
    w = WR + TWO_PI * np.linspace(-span, span, n)
    amp = fitting.lorentzian_amplitude(w, WR, KAPPA, 1.0)
    return w, amp + noise * np.random.default_rng(seed).normal(size=n)


def test_lorentzian_noiseless():
    res = fitting.fit_lorentzian(*lorentz_data())
    assert res["omega_r"] == pytest.approx(WR, rel=1e-6)
    assert res["kappa"] == pytest.approx(KAPPA, rel=1e-6)
    assert res["scale"] == pytest.approx(1.0, rel=1e-6)
    assert not res.warnings


def test_lorentzian_noisy_median():
    errs = [abs(fitting.fit_lorentzian(*lorentz_data(0.01, seed))["kappa"] / KAPPA - 1) for seed in range(100)]
    assert np.median(errs) < 0.05


def test_lorentzian_narrow_span_flagged():
    w, amp = lorentz_data(0.01, 1, span=0.2 * 14e6, n=41)
    wide = fitting.fit_lorentzian(*lorentz_data(0.01, 1))
    with pytest.warns(fitting.FitConditioningWarning):
        res = fitting.fit_lorentzian(w, amp)
    k = res.names.index("kappa")
    assert res.stderr[k] / res.values[k] > 5 * wide.stderr[k] / wide.values[k]
    assert any("linewidths" in m for m in res.warnings)


def test_lorentzian_needs_points():
    with pytest.raises(ValueError, match="5"):
        fitting.fit_lorentzian([1, 2, 3], [1, 2, 3])


def test_coupled_noiseless_pipeline():
    system = truth_system()
    truth = truth_params(system)
    res = pipeline_fit(*rabi_data(system))
    for name in ("g_c", "gamma_2", "t_c"):
        assert res[name] == pytest.approx(truth[name], rel=1e-6)
    assert res.condition_number < fitting.CONDITION_LIMIT


def test_coupled_noisy_recovery():
    system = truth_system()
    truth = truth_params(system)
    res = pipeline_fit(*rabi_data(system, noise=0.01, seed=4))
    assert res["g_c"] == pytest.approx(truth["g_c"], rel=0.05)
    assert res["gamma_2"] == pytest.approx(truth["gamma_2"], rel=0.05)


def test_coupled_zero_coupling():
    system = truth_system().with_dqd(0, g_c=0.0)
    w, eps, amp, far = rabi_data(system, n_freq=41, n_eps=21, noise=0.01, seed=2)
    init = truth_params(truth_system()) | {"g_c": TWO_PI * 10e6}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fitting.FitConditioningWarning)
        res = fitting.fit_coupled(w[None, :], eps[:, None], amp, init, fixed=("omega_r", "kappa", "t_c"))
    # g below the resolution set by 1% amplitude noise on the qubit-induced dip
    assert res["g_c"] < TWO_PI * 5e6


def test_scale_only_is_linear_least_squares():
    system = truth_system()
    w, eps, amp, _ = rabi_data(system, n_freq=31, n_eps=11, noise=0.01, seed=3)
    truth = truth_params(system)
    res = fitting.fit_coupled(w[None, :], eps[:, None], amp, truth, fixed=[n for n in truth if n != "scale"])
    basis = fitting.coupled_amplitude(w[None, :], eps[:, None], *[truth[n] for n in fitting.COUPLED_NAMES]).ravel()
    expected, *_ = np.linalg.lstsq(basis[:, None], amp.ravel(), rcond=None)
    assert res["scale"] == pytest.approx(expected[0], rel=1e-10)


def test_coupled_matches_linear_response():
    system = truth_system().with_dqd(0, epsilon=model.uev_to_joule(3.0))
    w = WR + TWO_PI * np.linspace(-30e6, 30e6, 13)
    from sapasim import scans

    expected = np.abs(scans.linear_response_transmission(w, system)) / scans.reference_amplitude(system)
    truth = truth_params(system)
    got = fitting.coupled_amplitude(w, system.dqds[0].epsilon, *[truth[n] for n in fitting.COUPLED_NAMES])
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_single_cut_degeneracy_flagged():
    system = truth_system()
    w = WR + TWO_PI * np.linspace(-40e6, 40e6, 61)
    eps = model.uev_to_joule(15.0)
    amp = fitting.coupled_amplitude(w, eps, *[truth_params(system)[n] for n in fitting.COUPLED_NAMES])
    with pytest.warns(fitting.FitConditioningWarning):
        fitting.fit_coupled(w, eps, amp, truth_params(system), fixed=())


def test_fit_deterministic():
    data = rabi_data(truth_system(), n_freq=31, n_eps=11, noise=0.01, seed=9)
    a, b = pipeline_fit(*data), pipeline_fit(*data)
    assert a.to_json() == b.to_json()


def test_fit_argument_errors():
    init = truth_params(truth_system())
    with pytest.raises(ValueError, match="missing"):
        fitting.fit_coupled([1.0] * 5, 0.0, [1.0] * 5, {"g_c": 1.0})
    with pytest.raises(ValueError, match="unknown"):
        fitting.fit_coupled([1.0] * 5, 0.0, [1.0] * 5, init, fixed=("g",))
    with pytest.raises(ValueError, match="no free"):
        fitting.fit_coupled([1.0] * 5, 0.0, [1.0] * 5, init, fixed=fitting.COUPLED_NAMES)


def test_result_json_round_trip():
    import json

    res = fitting.fit_lorentzian(*lorentz_data())
    d = json.loads(res.to_json())
    assert [p["name"] for p in d["parameters"]] == ["omega_r", "kappa", "scale"]
    assert d["parameters"][1]["unit"] == "rad/s"


def test_read_spectrum_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# comment\nfrequency_hz,amplitude,epsilon_uev\n5.198e9,0.5,1.0\n5.199e9,0.6,-1.0\n")
    data = fitting.read_spectrum_csv(p)
    np.testing.assert_allclose(data.omega, TWO_PI * np.array([5.198e9, 5.199e9]))
    np.testing.assert_allclose(data.amplitude, [0.5, 0.6])
    np.testing.assert_allclose(data.epsilon, [model.uev_to_joule(1.0), model.uev_to_joule(-1.0)])
    q = tmp_path / "t.csv"
    q.write_text("frequency_hz,amplitude\n1.0,2.0\n")
    assert fitting.read_spectrum_csv(q).epsilon is None


def test_read_spectrum_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("freq,amplitude\n1,2\n")
    with pytest.raises(ValueError, match="frequency_hz"):
        fitting.read_spectrum_csv(p)
    p.write_text("frequency_hz,amplitude\n1,abc\n")
    with pytest.raises(ValueError, match="row 2"):
        fitting.read_spectrum_csv(p)
    p.write_text("frequency_hz,amplitude\n")
    with pytest.raises(ValueError, match="no data"):
        fitting.read_spectrum_csv(p)


@given(st.floats(5e6, 30e6), st.floats(0.2, 5.0), st.floats(-5e6, 5e6))
def test_lorentzian_round_trip_property(kappa_hz, scale, shift_hz):
    w = WR + TWO_PI * np.linspace(-60e6, 60e6, 121)
    truth = (WR + TWO_PI * shift_hz, TWO_PI * kappa_hz, scale)
    res = fitting.fit_lorentzian(w, fitting.lorentzian_amplitude(w, *truth))
    np.testing.assert_allclose(res.values, truth, rtol=1e-6)
