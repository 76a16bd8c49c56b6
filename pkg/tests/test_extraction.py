"""Tests for detuning bookkeeping, flux-based Purcell, and the QE bound."""

import numpy as np
import pytest

import purcell as pc
from purcell.errors import DomainError, EnhancementWarning

# the four published tuning states: (cavity, sigma, zpl, sigma) -> delta
TUNING_STATES = [
    ("thermal_on", 1279.747, 0.002, 1279.850, 0.004, -0.103, 0.004),
    ("thermal_off", 1279.057, 0.001, 1279.781, 0.001, -0.724, 0.001),
    ("gas_on", 1279.354, 0.002, 1279.277, 0.001, 0.077, 0.002),
    ("gas_off", 1278.976, 0.001, 1279.4587, 0.0003, -0.483, 0.001),
]


@pytest.mark.parametrize("label,lc,sc,lz,sz,d,sd", TUNING_STATES)
def test_published_detunings(label, lc, sc, lz, sz, d, sd):
    rec = pc.TuningRecord(label, lc, sc, lz, sz)
    delta, sigma = pc.detuning(rec)
    assert round(delta, 3) == pytest.approx(d, abs=1e-12)
    assert round(sigma, 3) == pytest.approx(sd, abs=1e-12)


def test_detuning_mc_agrees_with_quadrature():
    rec = pc.TuningRecord("x", 1279.354, 0.002, 1279.277, 0.001)
    d, s = pc.detuning(rec)
    d_mc, s_mc = pc.detuning_mc(rec, n=200_000, seed=1)
    assert d_mc == pytest.approx(d, abs=5 * s / np.sqrt(200_000))
    assert s_mc == pytest.approx(s, rel=0.05)


def test_purcell_from_flux():
    f, s = pc.purcell_from_flux(6.078, 0.218)
    assert f == pytest.approx(5.078)
    assert s == pytest.approx(0.218)
    with pytest.warns(EnhancementWarning):
        pc.purcell_from_flux(0.9)
    with pytest.raises(DomainError):
        pc.purcell_from_flux(-1.0)


def test_qe_upper_bound_value():
    inp = pc.QEBoundInput(tau_off=6.09, sigma_off=0.25, flux_ratio=6.078,
                          f_dw=0.15)
    bound, _ = pc.qe_upper_bound(inp)
    # independent evaluation of the chain
    tau_th = 6.09 - 3 * 0.25
    expect = (6.09 / tau_th - 1.0) / ((6.078 - 1.0) * 0.15)
    assert bound == pytest.approx(expect, rel=1e-14)
    assert bound == pytest.approx(0.1844, abs=5e-4)


def test_qe_upper_bound_propagates_flux_sigma():
    inp = pc.QEBoundInput(6.09, 0.25, 6.078, sigma_ratio=0.218, f_dw=0.15)
    bound, sigma = pc.qe_upper_bound(inp)
    assert sigma == pytest.approx(bound * 0.218 / 5.078, rel=1e-12)


def test_qe_upper_bound_monotonicity():
    base = dict(tau_off=6.09, sigma_off=0.25, flux_ratio=6.078, f_dw=0.15)
    b0, _ = pc.qe_upper_bound(pc.QEBoundInput(**base))
    # a larger flux ratio, smaller lifetime error, or larger DW factor all
    # tighten the bound
    for key, val in (("flux_ratio", 8.0), ("sigma_off", 0.1), ("f_dw", 0.3)):
        b, _ = pc.qe_upper_bound(pc.QEBoundInput(**dict(base, **{key: val})))
        assert b < b0, key


def test_qe_upper_bound_covers_true_qe():
    # construct consistent ground truth and confirm the bound lies above it
    rng = np.random.default_rng(7)
    for _ in range(50):
        qe = rng.uniform(0.01, 0.5)
        f_dw = rng.uniform(0.05, 0.5)
        f_p = rng.uniform(1.0, 10.0)
        tau_off = rng.uniform(2.0, 10.0)
        ratio = tau_off / (tau_off / (1.0 + f_p * f_dw * qe))  # tau_off/tau_on
        # actual lifetime change implies sigma_off large enough to hide it
        sigma_off = (tau_off - tau_off / ratio) / 3.0
        inp = pc.QEBoundInput(tau_off, sigma_off, 1.0 + f_p, f_dw=f_dw)
        bound, _ = pc.qe_upper_bound(inp)
        assert bound >= qe * (1.0 - 1e-9)


def test_qe_upper_bound_domain():
    with pytest.raises(DomainError):
        pc.qe_upper_bound(pc.QEBoundInput(0.6, 0.25, 6.078, f_dw=0.15))
    with pytest.raises(DomainError):
        pc.qe_upper_bound(pc.QEBoundInput(6.09, 0.25, 0.9, f_dw=0.15))


def test_gas_shift_estimate():
    # solid-CO2 cladding (n=1.4) with ~5% modal overlap shifts a 1279 nm
    # cavity by ~10 nm in the infinite-thickness limit
    shift = pc.gas_shift_estimate(n_gas=1.4, overlap_fraction=0.049,
                                  lambda_c=1279.0, n_eff=2.5)
    assert shift == pytest.approx(1279.0 * 0.049 * 0.4 / 2.5, rel=1e-14)
    assert 8.0 < shift < 12.0
    with pytest.raises(DomainError):
        pc.gas_shift_estimate(0.5, 0.049, 1279.0)
    with pytest.raises(DomainError):
        pc.gas_shift_estimate(1.4, 1.5, 1279.0)


def test_enhancement_report():
    on = pc.TuningRecord("on", 1279.354, 0.002, 1279.277, 0.001,
                         pl_flux=6078.0, sigma_flux=100.0)
    off = pc.TuningRecord("off", 1278.976, 0.001, 1279.4587, 0.0003,
                          pl_flux=1000.0, sigma_flux=30.0)
    rep = pc.enhancement_report(on, off)
    assert rep["flux_ratio"][0] == pytest.approx(6.078)
    assert rep["f_p"][0] == pytest.approx(5.078)
    rel = np.hypot(100.0 / 6078.0, 30.0 / 1000.0)
    assert rep["flux_ratio"][1] == pytest.approx(6.078 * rel, rel=1e-12)
    assert rep["delta_on"][0] == pytest.approx(0.077)
    with pytest.raises(DomainError):
        pc.enhancement_report(on, pc.TuningRecord("z", 1.0, 0, 1.0, 0))
