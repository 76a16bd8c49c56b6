"""Simulation and analysis toolkit for cavity-coupled single quantum
emitters: Purcell-enhanced photophysics, kinetic Monte Carlo photon
streams, coincidence correlation, model fitting, and physics extraction.
"""

from .photophysics import (
    CavityMode, EmitterModel, CouplingState, G2Params, SaturationParams,
    purcell_peak, purcell_detuned, beta_fraction, rates_on_off,
    quantum_efficiency, tau_ratio, saturation_intensity, g2_analytic,
    steady_state, steady_state_photon_rate,
)
from .kinetics import (
    CW, Pulsed, SimConfig, DetectorChain, TimeTagStream, EmissionEvents,
    simulate_emission, apply_detection, simulate_pulsed_with_sync,
)
from .correlate import (
    Histogram, G2Curve, cross_correlate, normalize_g2, lifetime_histogram,
)
from .fitting import (
    CurveData, FitResult, MODELS, eval_model, jacobian, initial_guess, fit,
    quality_factor,
)
from .extraction import (
    TuningRecord, QEBoundInput, detuning, detuning_mc, purcell_from_flux,
    qe_upper_bound, gas_shift_estimate, enhancement_report,
)

__version__ = "0.1.0"
