"""Closed-form photophysics of a cavity-coupled three-level emitter.

Units are fixed package-wide: rates in 1/ns, times in ns, wavelengths in nm.
All functions here are pure and safe to call concurrently.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _require(cond, msg):
    if not cond:
        raise DomainError(msg)


@dataclass(frozen=True)
class CavityMode:
    """A single cavity resonance: wavelength (nm), quality factor, mode
    volume in (lambda/n)^3 units, and collection efficiency into the
    target mode."""

    lambda_c: float
    q_factor: float
    v_norm: float
    eta: float = 1.0

    def __post_init__(self):
        _require(math.isfinite(self.lambda_c) and self.lambda_c > 0,
                 "lambda_c must be positive")
        _require(math.isfinite(self.q_factor) and self.q_factor > 0,
                 "q_factor must be positive")
        _require(math.isfinite(self.v_norm) and self.v_norm > 0,
                 "v_norm must be positive")
        _require(0.0 <= self.eta <= 1.0, "eta must be in [0, 1]")


@dataclass(frozen=True)
class EmitterModel:
    """Three-level emitter: ground and excited singlets plus a metastable
    triplet shelf.

    gamma_r  -- radiative rate of the direct (zero-phonon) transition
    gamma_0  -- sum of all other radiative and non-radiative decay rates
    f_dw     -- Debye-Waller factor, fraction of radiative emission in the ZPL
    k_isc    -- excited singlet -> triplet intersystem-crossing rate
    k_t      -- triplet -> ground decay rate
    k_pump   -- ground -> excited excitation rate
    """

    lambda_zpl: float
    gamma_r: float
    gamma_0: float
    f_dw: float = 1.0
    k_isc: float = 0.0
    k_t: float = 0.0
    k_pump: float = 0.0

    def __post_init__(self):
        _require(self.lambda_zpl > 0, "lambda_zpl must be positive")
        for name in ("gamma_r", "gamma_0", "k_isc", "k_t", "k_pump"):
            v = getattr(self, name)
            _require(math.isfinite(v) and v >= 0, f"{name} must be >= 0")
        _require(0.0 < self.f_dw <= 1.0, "f_dw must be in (0, 1]")


@dataclass(frozen=True)
class CouplingState:
    """Peak Purcell factor plus the cavity-emitter detuning (nm)."""

    f_p: float
    delta: float = 0.0

    def __post_init__(self):
        _require(math.isfinite(self.f_p) and self.f_p >= 0,
                 "f_p must be >= 0")


@dataclass(frozen=True)
class G2Params:
    """Parameters of the analytic three-level autocorrelation curve."""

    a: float          # uncorrelated-limit amplitude
    b: float          # value at zero delay (after normalization)
    c: float          # bunching amplitude
    t_shift: float    # delay offset, ns
    tau1: float       # fast (antibunching) timescale, ns
    tau2: float       # slow (bunching) timescale, ns

    def __post_init__(self):
        _require(self.a > 0, "a must be positive")
        _require(self.tau1 > 0 and self.tau2 > 0, "tau1, tau2 must be positive")


@dataclass(frozen=True)
class SaturationParams:
    """Two-level saturation curve: asymptotic intensity and half-saturation
    power."""

    i_inf: float      # counts/min
    p_sat: float      # uW

    def __post_init__(self):
        _require(self.i_inf > 0, "i_inf must be positive")
        _require(self.p_sat > 0, "p_sat must be positive")


def purcell_peak(cavity):
    """Resonant Purcell factor 3*Q / (4*pi^2*V) for perfect coupling.

    The wavelength cancels because the mode volume is expressed in
    (lambda/n)^3 units.
    """
    q, v = cavity.q_factor, cavity.v_norm
    if not (math.isfinite(q) and q > 0 and math.isfinite(v) and v > 0):
        raise DomainError("q_factor and v_norm must be finite and positive")
    return 3.0 * q / (4.0 * math.pi**2 * v)


def purcell_detuned(coupling, cavity):
    """Purcell factor reduced by Lorentzian spectral overlap with the
    cavity line of FWHM lambda_c/Q; the emitter linewidth is neglected."""
    x = 2.0 * cavity.q_factor * coupling.delta / cavity.lambda_c
    return coupling.f_p / (1.0 + x * x)


def beta_fraction(f_p, gamma_r, gamma_0):
    """Fraction of total decay emitted into the enhanced channel:
    (1+F)g_R / ((1+F)g_R + g_0)."""
    enhanced = (1.0 + f_p) * gamma_r
    total = enhanced + gamma_0
    if total <= 0:
        raise DomainError("gamma_r + gamma_0 must be positive")
    return enhanced / total


def rates_on_off(emitter, f_p, eta):
    """On/off-resonance total lifetimes and collected photon fluxes.

    tau_on  = 1/(g_R(1+F) + g_0)     tau_off  = 1/(g_R + g_0)
    flux_on = eta*g_R*(1+F)          flux_off = eta*g_R
    """
    gr, g0 = emitter.gamma_r, emitter.gamma_0
    if gr + g0 <= 0:
        raise DomainError("total decay rate must be positive")
    return {
        "tau_on": 1.0 / (gr * (1.0 + f_p) + g0),
        "tau_off": 1.0 / (gr + g0),
        "flux_on": eta * gr * (1.0 + f_p),
        "flux_off": eta * gr,
    }


def quantum_efficiency(emitter):
    """QE = g_R/(g_R+g_0) / F_DW.

    May exceed 1 for mutually inconsistent inputs; the value is reported
    as-is so the inconsistency stays visible.
    """
    gr, g0 = emitter.gamma_r, emitter.gamma_0
    if gr + g0 <= 0:
        raise DomainError("total decay rate must be positive")
    if emitter.f_dw <= 0:
        raise DomainError("f_dw must be positive")
    return gr / (gr + g0) / emitter.f_dw


def tau_ratio(f_p, f_dw, qe):
    """Lifetime ratio tau_off/tau_on = 1 + F_P * F_DW * QE."""
    if f_p < 0 or f_dw < 0 or qe < 0:
        raise DomainError("inputs must be >= 0")
    return 1.0 + f_p * f_dw * qe


def saturation_intensity(p, params):
    """Two-level saturation curve I(P) = I_inf * P / (P + P_sat)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise DomainError("power must be >= 0")
    out = params.i_inf * p / (p + params.p_sat)
    return float(out) if out.ndim == 0 else out


def g2_analytic(t, params):
    """Analytic three-level autocorrelation

    g2(t) = a*[1 - (1-b)*((1+c)*exp(-|t-ts|/tau1) - c*exp(-|t-ts|/tau2))]

    so g2(t_shift) = a*b and g2 -> a for large |t|.
    """
    t = np.asarray(t, dtype=float)
    u = np.abs(t - params.t_shift)
    g = (1.0 + params.c) * np.exp(-u / params.tau1) \
        - params.c * np.exp(-u / params.tau2)
    out = params.a * (1.0 - (1.0 - params.b) * g)
    return float(out) if out.ndim == 0 else out


def steady_state(emitter, f_p=0.0):
    """Steady-state populations of (ground, excited, triplet).

    Solves the linear rate balance with excited-state exit rate
    g_R(1+F) + g_0 + k_isc and triplet decay k_t.  Populations sum to 1.
    """
    gd = emitter.gamma_r * (1.0 + f_p) + emitter.gamma_0
    k_exit = gd + emitter.k_isc
    kp, ki, kt = emitter.k_pump, emitter.k_isc, emitter.k_t
    if kp + k_exit + kt <= 0:
        raise DomainError("all rates are zero")
    if kp == 0:
        return {"p1": 1.0, "p2": 0.0, "p3": 0.0}
    if k_exit == 0:
        # excited state is absorbing
        return {"p1": 0.0, "p2": 1.0, "p3": 0.0}
    if ki > 0 and kt == 0:
        # triplet is absorbing
        return {"p1": 0.0, "p2": 0.0, "p3": 1.0}
    r2 = kp / k_exit                       # p2/p1
    r3 = r2 * ki / kt if ki > 0 else 0.0   # p3/p1
    p1 = 1.0 / (1.0 + r2 + r3)
    return {"p1": p1, "p2": r2 * p1, "p3": r3 * p1}


def steady_state_photon_rate(emitter, f_p=0.0):
    """Steady-state ZPL photon emission rate p2 * g_R * (1+F), in 1/ns."""
    pops = steady_state(emitter, f_p)
    return pops["p2"] * emitter.gamma_r * (1.0 + f_p)
