"""Physics extraction: detuning bookkeeping, flux-based Purcell factors,
the quantum-efficiency upper bound, and the gas-tuning shift estimate.

Uncertainties propagate to first order in quadrature and are returned as
(value, sigma) pairs; a Monte Carlo propagation mode exists for
validation.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EnhancementWarning


@dataclass(frozen=True)
class TuningRecord:
    """One tuning state: cavity and emitter wavelengths, cavity Q, and the
    collected PL flux, each with a 1-sigma uncertainty."""

    label: str
    lambda_cav: float
    sigma_cav: float
    lambda_zpl: float
    sigma_zpl: float
    q_factor: float = 0.0
    sigma_q: float = 0.0
    pl_flux: float = 0.0
    sigma_flux: float = 0.0

    def __post_init__(self):
        if self.lambda_cav <= 0 or self.lambda_zpl <= 0:
            raise DomainError("wavelengths must be positive")
        for name in ("sigma_cav", "sigma_zpl", "sigma_q", "sigma_flux"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")


@dataclass(frozen=True)
class QEBoundInput:
    tau_off: float        # ns
    sigma_off: float      # ns
    flux_ratio: float
    sigma_ratio: float = 0.0
    f_dw: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.f_dw <= 1.0:
            raise DomainError("f_dw must be in (0, 1]")
        if self.sigma_off < 0 or self.sigma_ratio < 0:
            raise DomainError("uncertainties must be >= 0")


def detuning(record):
    """Cavity-emitter detuning lambda_cav - lambda_zpl with quadrature
    uncertainty."""
    delta = record.lambda_cav - record.lambda_zpl
    sigma = math.hypot(record.sigma_cav, record.sigma_zpl)
    return delta, sigma


def detuning_mc(record, n=100_000, seed=0):
    """Monte Carlo propagation of the detuning uncertainty, for validating
    the quadrature formula."""
    rng = np.random.default_rng(seed)
    cav = rng.normal(record.lambda_cav, record.sigma_cav, n)
    zpl = rng.normal(record.lambda_zpl, record.sigma_zpl, n)
    d = cav - zpl
    return float(d.mean()), float(d.std(ddof=1))


def purcell_from_flux(flux_ratio, sigma=0.0):
    """Purcell factor from the on/off photon-flux ratio: F_P = ratio - 1.

    The uncertainty passes through unchanged.  A ratio <= 1 means no
    enhancement and triggers EnhancementWarning.
    """
    if flux_ratio <= 0:
        raise DomainError("flux_ratio must be positive")
    if flux_ratio <= 1.0:
        warnings.warn("flux ratio <= 1: no cavity enhancement",
                      EnhancementWarning, stacklevel=2)
    return flux_ratio - 1.0, sigma


def qe_upper_bound(inp, sigma_multiplier=3.0):
    """Upper bound on the quantum efficiency from unresolved lifetime
    change:

        QE < (tau_off/tau_off_th - 1) / ((flux_ratio - 1) * F_DW)

    with tau_off_th = tau_off - sigma_multiplier*sigma_off, the longest
    lifetime change hidden by the off-resonance measurement error.  Only
    the flux-ratio uncertainty is propagated; sigma_off enters the bound
    itself.
    """
    tau_th = inp.tau_off - sigma_multiplier * inp.sigma_off
    if tau_th <= 0:
        raise DomainError("tau_off must exceed the sigma threshold")
    if inp.flux_ratio <= 1.0:
        raise DomainError("flux_ratio must exceed 1")
    f_p = inp.flux_ratio - 1.0
    margin = inp.tau_off / tau_th - 1.0
    bound = margin / (f_p * inp.f_dw)
    sigma = bound * inp.sigma_ratio / f_p
    return bound, sigma


def gas_shift_estimate(n_gas, overlap_fraction, lambda_c, n_eff=2.5):
    """First-order perturbative redshift of the cavity resonance from a
    gas cladding layer:

        dlambda = lambda_c * overlap_fraction * (n_gas - 1) / n_eff

    The modal overlap is treated as calibration data, not physics.
    """
    if n_gas < 1.0:
        raise DomainError("n_gas must be >= 1")
    if not 0.0 <= overlap_fraction <= 1.0:
        raise DomainError("overlap_fraction must be in [0, 1]")
    if lambda_c <= 0 or n_eff <= 0:
        raise DomainError("lambda_c and n_eff must be positive")
    return lambda_c * overlap_fraction * (n_gas - 1.0) / n_eff


def enhancement_report(on, off):
    """Flux ratio, Purcell factor, and detunings for an on/off record pair."""
    if off.pl_flux <= 0:
        raise DomainError("off-resonance flux must be positive")
    ratio = on.pl_flux / off.pl_flux
    rel = 0.0
    if on.pl_flux > 0:
        rel = math.hypot(on.sigma_flux / on.pl_flux,
                         off.sigma_flux / off.pl_flux)
    sigma_ratio = ratio * rel
    f_p, sigma_fp = purcell_from_flux(ratio, sigma_ratio)
    return {
        "flux_ratio": (ratio, sigma_ratio),
        "f_p": (f_p, sigma_fp),
        "delta_on": detuning(on),
        "delta_off": detuning(off),
    }
