"""Tests for the model registry and the damped least-squares engine."""

import numpy as np
import pytest

import purcell as pc
from purcell.errors import DomainError, GuessError, RankDeficientError
from purcell.fitting import C_NM_THZ, MODELS


def random_params(name, rng):
    """Draw an admissible parameter set for a model."""
    if name == "lorentzian":
        return {"amplitude": rng.uniform(0.1, 10), "offset": rng.uniform(-1, 1),
                "center_nm": rng.uniform(1278, 1281),
                "fwhm_nm": rng.uniform(0.05, 2.0)}
    if name in ("airy", "airy_lorentzian"):
        p = {"amplitude": rng.uniform(0.1, 10),
             "refl_1": rng.uniform(0.05, 0.95),
             "refl_2": rng.uniform(0.05, 0.95),
             "nu0_thz": rng.uniform(234.0, 234.6),
             "fsr_thz": rng.uniform(0.01, 0.2)}
        if name == "airy_lorentzian":
            p.update({"lor_amplitude": rng.uniform(0.1, 10),
                      "offset": rng.uniform(-1, 1),
                      "center_nm": rng.uniform(1278, 1281),
                      "fwhm_nm": rng.uniform(0.05, 2.0)})
        return p
    if name == "monoexp":
        return {"amplitude": rng.uniform(0.1, 100), "t0_ns": rng.uniform(0, 5),
                "offset": rng.uniform(0, 5), "tau_ns": rng.uniform(0.5, 20)}
    if name == "g2":
        return {"amplitude": rng.uniform(0.5, 2), "g2_zero": rng.uniform(0, 0.5),
                "bunching": rng.uniform(0, 1), "t_shift_ns": rng.uniform(-2, 2),
                "tau1_ns": rng.uniform(1, 5), "tau2_ns": rng.uniform(6, 20)}
    if name == "saturation":
        return {"i_inf": rng.uniform(1e3, 1e5), "p_sat": rng.uniform(1, 50)}
    raise AssertionError(name)


def model_grid(name, rng):
    if name in ("lorentzian", "airy", "airy_lorentzian"):
        return np.linspace(1278.0, 1281.0, 60)
    if name == "monoexp":
        return np.linspace(0.0, 40.0, 60)
    if name == "g2":
        # keep grid points away from the kink at t = t_shift so central
        # differences stay valid
        return np.linspace(-40.0, 40.0, 61) + 2.3456
    if name == "saturation":
        return np.linspace(0.5, 120.0, 60)
    raise AssertionError(name)


def _fd_scale(p, key):
    """Characteristic scale of a parameter for finite-difference steps.

    Location parameters (line centers, phase references) vary the model on
    the scale of the corresponding width, not of their own magnitude.
    """
    widths = {"center_nm": "fwhm_nm", "nu0_thz": "fsr_thz",
              "fsr_thz": "fsr_thz", "t0_ns": "tau_ns",
              "t_shift_ns": "tau1_ns"}
    ref = p[widths[key]] if key in widths else p[key]
    return max(abs(ref), 1e-3)


def jacobian_max_rel_error(name, p, x, h=1e-6):
    jac = pc.jacobian(name, p, x)
    worst = 0.0
    scale = np.max(np.abs(pc.eval_model(name, p, x))) + 1e-12
    for j, key in enumerate(MODELS[name].param_names):
        step = h * _fd_scale(p, key)
        hi = dict(p, **{key: p[key] + step})
        lo = dict(p, **{key: p[key] - step})
        fd = (pc.eval_model(name, hi, x) - pc.eval_model(name, lo, x)) / (2 * step)
        denom = max(np.max(np.abs(fd)), scale)
        worst = max(worst, np.max(np.abs(jac[:, j] - fd)) / denom)
    return worst


@pytest.mark.parametrize("name", sorted(MODELS))
def test_jacobian_against_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    x = model_grid(name, rng)
    for _ in range(10):
        p = random_params(name, rng)
        if name == "g2":
            p["t_shift_ns"] = round(p["t_shift_ns"], 1) + 0.05  # off-grid kink
        assert jacobian_max_rel_error(name, p, x) < 1e-5


def test_lorentzian_noiseless_recovery():
    true = {"amplitude": 2.5, "offset": 0.3, "center_nm": 1279.747,
            "fwhm_nm": 0.3436}
    x = np.linspace(1278.5, 1281.0, 300)
    y = pc.eval_model("lorentzian", true, x)
    res = pc.fit("lorentzian", pc.CurveData(x, y))
    assert res.converged
    for k, v in true.items():
        assert res.params[k] == pytest.approx(v, rel=1e-8, abs=1e-10)


def test_lorentzian_translation_invariance():
    true = {"amplitude": 2.5, "offset": 0.3, "center_nm": 1279.747,
            "fwhm_nm": 0.3436}
    x = np.linspace(1278.5, 1281.0, 300)
    rng = np.random.default_rng(4)
    noise = 0.01 * rng.standard_normal(x.size)
    y = pc.eval_model("lorentzian", true, x) + noise
    r1 = pc.fit("lorentzian", pc.CurveData(x, y))
    shifted = dict(true, center_nm=true["center_nm"] + 5.0)
    y2 = pc.eval_model("lorentzian", shifted, x + 5.0) + noise
    r2 = pc.fit("lorentzian", pc.CurveData(x + 5.0, y2))
    assert r2.params["center_nm"] - r1.params["center_nm"] == pytest.approx(
        5.0, abs=1e-9)
    assert r2.params["fwhm_nm"] == pytest.approx(r1.params["fwhm_nm"], rel=1e-9)


def test_monoexp_recovery_and_chi2():
    rng = np.random.default_rng(5)
    true = {"amplitude": 5000.0, "t0_ns": 0.1, "offset": 20.0, "tau_ns": 6.09}
    x = np.arange(0.1, 25.0, 0.2)
    mean = pc.eval_model("monoexp", true, x)
    y = rng.poisson(mean).astype(float)
    res = pc.fit("monoexp", pc.CurveData(x, y, np.sqrt(np.maximum(y, 1.0))),
                 fixed={"t0_ns": 0.1})
    assert res.converged
    assert res.params["tau_ns"] == pytest.approx(6.09, rel=0.02)
    assert 0.6 < res.chi2_reduced < 1.5


def test_monoexp_amp_t0_degeneracy_raises():
    # amplitude and t0 only enter through amp*exp(t0/tau): not identifiable
    true = {"amplitude": 100.0, "t0_ns": 0.0, "offset": 0.0, "tau_ns": 5.0}
    x = np.linspace(0.0, 30.0, 100)
    y = pc.eval_model("monoexp", true, x)
    with pytest.raises(RankDeficientError):
        pc.fit("monoexp", pc.CurveData(x, y), init=true, fixed={"offset": 0.0})


def test_g2_noiseless_recovery():
    true = {"amplitude": 1.0, "g2_zero": 0.03, "bunching": 0.4,
            "t_shift_ns": 0.2, "tau1_ns": 3.16, "tau2_ns": 9.05}
    x = np.arange(-60.0, 60.0, 0.2) + 0.1
    y = pc.eval_model("g2", true, x)
    res = pc.fit("g2", pc.CurveData(x, y))
    assert res.converged
    for k, v in true.items():
        assert res.params[k] == pytest.approx(v, rel=1e-6, abs=1e-8), k


def test_airy_recovery_tied_mirrors():
    true = {"amplitude": 4.0, "refl_1": 0.4, "refl_2": 0.4,
            "nu0_thz": C_NM_THZ / 1279.5, "fsr_thz": 0.0275}
    x = np.linspace(1278.5, 1280.5, 900)
    y = pc.eval_model("airy", true, x)
    res = pc.fit("airy", pc.CurveData(x, y))
    assert res.converged
    assert res.metadata["r1_r2_tied"]
    assert res.params["refl_1"] == res.params["refl_2"]
    assert res.params["fsr_thz"] == pytest.approx(0.0275, rel=1e-6)
    got = pc.eval_model("airy", res.params, x)
    assert np.max(np.abs(got - y)) < 1e-8 * np.max(y)


def test_saturation_recovery():
    rng = np.random.default_rng(6)
    x = np.linspace(1.0, 120.0, 20)
    mean = 93000.0 * x / (x + 28.0)
    y = rng.poisson(mean).astype(float)
    res = pc.fit("saturation", pc.CurveData(x, y, np.sqrt(y)))
    assert res.converged
    assert res.params["i_inf"] == pytest.approx(93000.0, rel=0.03)
    assert res.params["p_sat"] == pytest.approx(28.0, rel=0.05)
    assert res.sigma["p_sat"] > 0


def test_guess_rejects_flat_data():
    x = np.linspace(0, 10, 50)
    with pytest.raises(GuessError):
        pc.initial_guess("lorentzian", pc.CurveData(x, np.ones(50)))


def test_parameter_validation():
    with pytest.raises(DomainError):
        pc.eval_model("nope", {}, np.zeros(3))
    with pytest.raises(DomainError):
        pc.eval_model("lorentzian", {"amplitude": 1.0}, np.zeros(3))
    with pytest.raises(DomainError):
        pc.eval_model("saturation", {"i_inf": -1.0, "p_sat": 1.0}, np.ones(3))
    with pytest.raises(DomainError):
        pc.eval_model("airy", {"amplitude": 1, "refl_1": 1.5, "refl_2": 0.5,
                               "nu0_thz": 234.0, "fsr_thz": 0.03}, np.ones(3))


def test_fixed_parameters_stay_fixed():
    true = {"amplitude": 2.0, "offset": 0.5, "center_nm": 1279.0,
            "fwhm_nm": 0.4}
    x = np.linspace(1278, 1280, 200)
    y = pc.eval_model("lorentzian", true, x)
    res = pc.fit("lorentzian", pc.CurveData(x, y), fixed={"offset": 0.5})
    assert res.params["offset"] == 0.5
    assert res.sigma["offset"] == 0.0
    assert "offset" in res.metadata["fixed"]


def test_quality_factor():
    res = pc.FitResult("lorentzian", {"center_nm": 1279.747, "fwhm_nm": 0.3436},
                       {}, 1.0, 1, True)
    assert pc.quality_factor(res) == pytest.approx(1279.747 / 0.3436)
    with pytest.raises(DomainError):
        pc.quality_factor(pc.FitResult("saturation", {}, {}, 1.0, 1, True))
