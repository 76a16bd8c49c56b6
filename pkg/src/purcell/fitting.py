"""Nonlinear least-squares fitting of the spectral and temporal models.

Six models are provided, each with an analytic Jacobian and an
initial-guess heuristic:

  lorentzian        B/((x-x0)^2 + (G/2)^2) + C                 (x in nm)
  airy              A(1-R1)^2 R2 / ((1-s)^2 + 4 s sin^2 phi)   (x in nm)
  airy_lorentzian   product of the two above
  monoexp           amp * exp(-(t-t0)/tau) + offset            (t in ns)
  g2                three-level autocorrelation                (t in ns)
  saturation        i_inf * p / (p + p_sat)                    (p in uW)

with s = sqrt(R1 R2) and phi = pi*(nu - nu0)/nu_fsr, nu = c/lambda
evaluated exactly (no small-detuning linearization).

The engine is a damped (Levenberg-Marquardt) iteration with positivity
and (0,1) constraints enforced by smooth log/logistic reparameterization,
so every reported parameter set is admissible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GuessError, RankDeficientError

C_NM_THZ = 299792.458  # speed of light, nm*THz


@dataclass
class CurveData:
    x: np.ndarray
    y: np.ndarray
    sigma_y: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise DomainError("x and y must have equal length")
        if self.sigma_y is not None:
            self.sigma_y = np.asarray(self.sigma_y, dtype=float)
            if self.sigma_y.shape != self.y.shape:
                raise DomainError("sigma_y must match y")
            if np.any(self.sigma_y <= 0):
                raise DomainError("sigma_y must be positive")


@dataclass
class FitResult:
    model: str
    params: dict
    sigma: dict
    chi2_reduced: float
    n_iter: int
    converged: bool
    message: str = ""
    jacobian_mode: str = "analytic"
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# model definitions
# ---------------------------------------------------------------------------

def _lorentzian_eval(p, x):
    d = x - p["center_nm"]
    return p["amplitude"] / (d * d + (p["fwhm_nm"] / 2.0) ** 2) + p["offset"]


def _lorentzian_jac(p, x):
    d = x - p["center_nm"]
    den = d * d + (p["fwhm_nm"] / 2.0) ** 2
    inv = 1.0 / den
    inv2 = inv * inv
    return np.column_stack([
        inv,                                        # amplitude
        np.ones_like(x),                            # offset
        p["amplitude"] * 2.0 * d * inv2,            # center_nm
        -p["amplitude"] * (p["fwhm_nm"] / 2.0) * inv2,  # fwhm_nm
    ])


def _airy_terms(p, x):
    s = math.sqrt(p["refl_1"] * p["refl_2"])
    nu = C_NM_THZ / x
    phi = math.pi * (nu - p["nu0_thz"]) / p["fsr_thz"]
    num = p["amplitude"] * (1.0 - p["refl_1"]) ** 2 * p["refl_2"]
    den = (1.0 - s) ** 2 + 4.0 * s * np.sin(phi) ** 2
    return s, nu, phi, num, den


def _airy_eval(p, x):
    _, _, _, num, den = _airy_terms(p, x)
    return num / den


def _airy_jac(p, x):
    s, nu, phi, num, den = _airy_terms(p, x)
    r1, r2 = p["refl_1"], p["refl_2"]
    f = num / den
    dden_ds = -2.0 * (1.0 - s) + 4.0 * np.sin(phi) ** 2
    sin2phi = np.sin(2.0 * phi)
    dden_dphi = 4.0 * s * sin2phi
    inv_den = 1.0 / den
    d_amp = (1.0 - r1) ** 2 * r2 * inv_den
    dnum_dr1 = -2.0 * p["amplitude"] * (1.0 - r1) * r2
    dnum_dr2 = p["amplitude"] * (1.0 - r1) ** 2
    ds_dr1 = r2 / (2.0 * s)
    ds_dr2 = r1 / (2.0 * s)
    d_r1 = (dnum_dr1 - f * dden_ds * ds_dr1) * inv_den
    d_r2 = (dnum_dr2 - f * dden_ds * ds_dr2) * inv_den
    d_nu0 = -f * dden_dphi * (-math.pi / p["fsr_thz"]) * inv_den
    d_fsr = -f * dden_dphi * (-phi / p["fsr_thz"]) * inv_den
    return np.column_stack([d_amp, d_r1, d_r2, d_nu0, d_fsr])


def _airy_lorentzian_eval(p, x):
    return _airy_eval(p, x) * _lorentzian_eval(p, x)


def _airy_lorentzian_jac(p, x):
    fa = _airy_eval(p, x)
    fl = _lorentzian_eval(p, x)
    ja = _airy_jac(p, x) * fl[:, None]
    jl = _lorentzian_jac(p, x) * fa[:, None]
    return np.column_stack([ja, jl])


def _monoexp_eval(p, x):
    return p["amplitude"] * np.exp(-(x - p["t0_ns"]) / p["tau_ns"]) + p["offset"]


def _monoexp_jac(p, x):
    e = np.exp(-(x - p["t0_ns"]) / p["tau_ns"])
    return np.column_stack([
        e,                                                   # amplitude
        p["amplitude"] * e / p["tau_ns"],                    # t0_ns
        np.ones_like(x),                                     # offset
        p["amplitude"] * e * (x - p["t0_ns"]) / p["tau_ns"] ** 2,  # tau_ns
    ])


def _g2_eval(p, x):
    u = np.abs(x - p["t_shift_ns"])
    g = (1.0 + p["bunching"]) * np.exp(-u / p["tau1_ns"]) \
        - p["bunching"] * np.exp(-u / p["tau2_ns"])
    return p["amplitude"] * (1.0 - (1.0 - p["g2_zero"]) * g)


def _g2_jac(p, x):
    a, b, c = p["amplitude"], p["g2_zero"], p["bunching"]
    dt = x - p["t_shift_ns"]
    u = np.abs(dt)
    sgn = np.sign(dt)
    e1 = np.exp(-u / p["tau1_ns"])
    e2 = np.exp(-u / p["tau2_ns"])
    g = (1.0 + c) * e1 - c * e2
    dg_dts = sgn * ((1.0 + c) * e1 / p["tau1_ns"] - c * e2 / p["tau2_ns"])
    return np.column_stack([
        1.0 - (1.0 - b) * g,                       # amplitude
        a * g,                                     # g2_zero
        -a * (1.0 - b) * (e1 - e2),                # bunching
        -a * (1.0 - b) * dg_dts,                   # t_shift_ns
        -a * (1.0 - b) * (1.0 + c) * e1 * u / p["tau1_ns"] ** 2,  # tau1_ns
        a * (1.0 - b) * c * e2 * u / p["tau2_ns"] ** 2,           # tau2_ns
    ])


def _saturation_eval(p, x):
    return p["i_inf"] * x / (x + p["p_sat"])


def _saturation_jac(p, x):
    den = x + p["p_sat"]
    return np.column_stack([
        x / den,                                  # i_inf
        -p["i_inf"] * x / (den * den),            # p_sat
    ])


# ---------------------------------------------------------------------------
# initial guesses
# ---------------------------------------------------------------------------

def _edge_median(y, frac=0.1):
    k = max(int(len(y) * frac), 1)
    return float(np.median(np.concatenate([y[:k], y[-k:]])))


def _check_nondegenerate(y):
    if np.ptp(y) <= 1e-12 * max(abs(float(np.mean(y))), 1e-300):
        raise GuessError("flat data: cannot form an initial guess")


def _half_width(x, y, i0, baseline):
    """FWHM estimate from half-maximum crossings around index i0."""
    half = baseline + (y[i0] - baseline) / 2.0
    left = right = None
    for i in range(i0, -1, -1):
        if y[i] < half:
            left = x[i]
            break
    for i in range(i0, len(y)):
        if y[i] < half:
            right = x[i]
            break
    if left is not None and right is not None:
        return abs(right - left)
    span = abs(x[-1] - x[0])
    return span / 10.0 if span > 0 else 1.0


def _guess_lorentzian(x, y):
    i0 = int(np.argmax(y))
    offset = _edge_median(y)
    fwhm = _half_width(x, y, i0, offset)
    height = max(y[i0] - offset, 1e-12 * max(abs(y[i0]), 1.0))
    return {
        "amplitude": height * (fwhm / 2.0) ** 2,
        "offset": offset,
        "center_nm": float(x[i0]),
        "fwhm_nm": fwhm,
    }


def _guess_monoexp(x, y):
    offset = float(np.median(y[-max(len(y) // 10, 1):]))
    i0 = int(np.argmax(y))
    amp = max(y[i0] - offset, 1e-12)
    # log-linear regression over the first decade of decay past the peak
    rel = y[i0:] - offset
    sel = rel > amp / 10.0
    xs, ys = x[i0:][sel], rel[sel]
    if xs.size >= 2:
        slope = np.polyfit(xs, np.log(ys), 1)[0]
        tau = -1.0 / slope if slope < 0 else abs(x[-1] - x[i0]) / 3.0
    else:
        tau = abs(x[-1] - x[i0]) / 3.0 or 1.0
    return {"amplitude": amp, "t0_ns": float(x[i0]), "offset": offset,
            "tau_ns": max(tau, 1e-9)}


def _guess_g2(x, y):
    i0 = int(np.argmin(y))
    k = max(len(y) // 5, 1)
    a = float(np.mean(np.concatenate([y[:k], y[-k:]])))
    a = max(a, 1e-12)
    b = max(y[i0] / a, 0.0)
    # recovery time to (1 - 1/e) of the dip depth
    target = a - (a - y[i0]) / math.e
    tau1 = None
    for i in range(i0, len(y)):
        if y[i] >= target:
            tau1 = abs(x[i] - x[i0])
            break
    if not tau1:
        tau1 = abs(x[-1] - x[i0]) / 5.0 or 1.0
    return {"amplitude": a, "g2_zero": min(b, 0.9), "bunching": 0.05,
            "t_shift_ns": float(x[i0]), "tau1_ns": tau1, "tau2_ns": 3.0 * tau1}


def _guess_saturation(x, y):
    i_inf = float(np.max(y))
    half = i_inf / 2.0
    above = np.nonzero(y >= half)[0]
    p_sat = float(x[above[0]]) if above.size else float(np.median(x))
    return {"i_inf": max(i_inf, 1e-12), "p_sat": max(p_sat, 1e-12)}


def _moving_average(y, win):
    win = max(int(win) | 1, 3)  # odd
    pad = win // 2
    yp = np.concatenate([np.full(pad, y[0]), y, np.full(pad, y[-1])])
    return np.convolve(yp, np.ones(win) / win, mode="valid")


def _oscillation_period(x, osc):
    """Dominant oscillation period from the autocorrelation of a detrended
    residual, in x units."""
    osc = osc - osc.mean()
    if np.ptp(osc) == 0:
        raise GuessError("no oscillation present")
    ac = np.correlate(osc, osc, mode="full")[osc.size - 1:]
    # first local maximum after the central peak has decayed
    below = np.nonzero(ac < 0)[0]
    start = below[0] if below.size else max(osc.size // 20, 1)
    if start >= ac.size - 1:
        raise GuessError("no oscillation present")
    lag = start + int(np.argmax(ac[start:]))
    dx = abs(float(x[1] - x[0]))
    return max(lag, 1) * dx


def _airy_shape(r, phi):
    s = r  # tied mirrors: R1 = R2 = s
    return (1.0 - s) ** 2 * s / ((1.0 - s) ** 2 + 4.0 * s * np.sin(phi) ** 2)


def _guess_airy_params(x, rel, lambda_ref):
    """Airy parameters for an oscillation `rel` (values around 1) on the
    wavelength grid x."""
    period_nm = _oscillation_period(x, rel)
    fsr = C_NM_THZ * period_nm / lambda_ref**2
    ratio = max(float(np.max(rel)) / max(float(np.min(rel)), 1e-12), 1.0 + 1e-6)
    q = math.sqrt(ratio)
    s = min(max((q - 1.0) / (q + 1.0), 1e-3), 0.99)
    nu = C_NM_THZ / x
    # phase scan over one FSR: pick the offset that best matches the data
    best = None
    for frac in np.linspace(0.0, 1.0, 16, endpoint=False):
        nu0 = float(nu.mean()) + frac * fsr
        phi = math.pi * (nu - nu0) / fsr
        shape = _airy_shape(s, phi)
        scale = float(np.mean(rel)) / float(np.mean(shape))
        sse = float(np.sum((scale * shape - rel) ** 2))
        if best is None or sse < best[0]:
            best = (sse, nu0, scale)
    _, nu0, scale = best
    # with tied mirrors the model equals amplitude * shape
    return {"amplitude": scale, "refl_1": s, "refl_2": s,
            "nu0_thz": nu0, "fsr_thz": fsr}


def _guess_airy(x, y):
    base = _moving_average(y, len(y) // 8)
    rel = y / np.maximum(base, 1e-300)
    try:
        p = _guess_airy_params(x, rel, float(np.mean(x)))
    except GuessError:
        p = _guess_airy_params(x, y / max(float(np.mean(y)), 1e-300),
                               float(np.mean(x)))
    # rescale amplitude so the model mean matches the data mean
    p["amplitude"] *= float(np.mean(y)) / max(float(np.mean(_airy_eval(p, x))), 1e-300)
    return p


def _guess_airy_lorentzian(x, y):
    lor = _guess_lorentzian(x, _moving_average(y, len(y) // 16))
    envelope = _lorentzian_eval(lor, x)
    rel = y / np.maximum(envelope, 1e-300)
    airy = _guess_airy_params(x, rel, lor["center_nm"])
    p = dict(airy)
    p["lor_amplitude"] = lor["amplitude"]
    p["offset"] = lor["offset"]
    p["center_nm"] = lor["center_nm"]
    p["fwhm_nm"] = lor["fwhm_nm"]
    # pull the airy factor back to mean 1 so the lorentzian keeps the scale
    mean_airy = float(np.mean(_airy_eval(airy, x)))
    p["amplitude"] /= max(mean_airy, 1e-300)
    return p


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelDef:
    name: str
    param_names: tuple
    transforms: dict          # param -> 'log' | 'logit' | None
    evaluate: callable
    jacobian: callable
    guess: callable


MODELS = {
    "lorentzian": ModelDef(
        "lorentzian",
        ("amplitude", "offset", "center_nm", "fwhm_nm"),
        {"fwhm_nm": "log"},
        _lorentzian_eval, _lorentzian_jac, _guess_lorentzian),
    "airy": ModelDef(
        "airy",
        ("amplitude", "refl_1", "refl_2", "nu0_thz", "fsr_thz"),
        {"refl_1": "logit", "refl_2": "logit", "fsr_thz": "log"},
        _airy_eval, _airy_jac, _guess_airy),
    "airy_lorentzian": ModelDef(
        "airy_lorentzian",
        ("amplitude", "refl_1", "refl_2", "nu0_thz", "fsr_thz",
         "lor_amplitude", "offset", "center_nm", "fwhm_nm"),
        {"refl_1": "logit", "refl_2": "logit", "fsr_thz": "log",
         "fwhm_nm": "log"},
        None, None, _guess_airy_lorentzian),
    "monoexp": ModelDef(
        "monoexp",
        ("amplitude", "t0_ns", "offset", "tau_ns"),
        {"tau_ns": "log"},
        _monoexp_eval, _monoexp_jac, _guess_monoexp),
    "g2": ModelDef(
        "g2",
        ("amplitude", "g2_zero", "bunching", "t_shift_ns", "tau1_ns", "tau2_ns"),
        {"amplitude": "log", "tau1_ns": "log", "tau2_ns": "log"},
        _g2_eval, _g2_jac, _guess_g2),
    "saturation": ModelDef(
        "saturation",
        ("i_inf", "p_sat"),
        {"i_inf": "log", "p_sat": "log"},
        _saturation_eval, _saturation_jac, _guess_saturation),
}


def _split_product_params(p):
    """Map the airy_lorentzian parameter names onto the two sub-models."""
    airy = {"amplitude": p["amplitude"], "refl_1": p["refl_1"],
            "refl_2": p["refl_2"], "nu0_thz": p["nu0_thz"],
            "fsr_thz": p["fsr_thz"]}
    lor = {"amplitude": p["lor_amplitude"], "offset": p["offset"],
           "center_nm": p["center_nm"], "fwhm_nm": p["fwhm_nm"]}
    return airy, lor


def eval_model(model, params, x):
    """Pointwise evaluation of a named model."""
    m = _model(model)
    x = np.asarray(x, dtype=float)
    _validate_params(m, params)
    if m.name == "airy_lorentzian":
        pa, pl = _split_product_params(params)
        return _airy_eval(pa, x) * _lorentzian_eval(pl, x)
    return m.evaluate(params, x)


def jacobian(model, params, x):
    """Analytic Jacobian dy/dparams, columns ordered as m.param_names."""
    m = _model(model)
    x = np.asarray(x, dtype=float)
    _validate_params(m, params)
    if m.name == "airy_lorentzian":
        pa, pl = _split_product_params(params)
        fa = _airy_eval(pa, x)
        fl = _lorentzian_eval(pl, x)
        return np.column_stack([_airy_jac(pa, x) * fl[:, None],
                                _lorentzian_jac(pl, x) * fa[:, None]])
    return m.jacobian(params, x)


def initial_guess(model, data):
    """Heuristic starting parameters for a fit."""
    m = _model(model)
    data = data if isinstance(data, CurveData) else CurveData(*data)
    _check_nondegenerate(data.y)
    return m.guess(data.x, data.y)


def _model(model):
    if isinstance(model, ModelDef):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise DomainError(f"unknown model {model!r}") from None


def _validate_params(m, params):
    missing = [k for k in m.param_names if k not in params]
    if missing:
        raise DomainError(f"missing parameters for {m.name}: {missing}")
    for k, mode in m.transforms.items():
        v = params[k]
        if mode == "log" and v <= 0:
            raise DomainError(f"{k} must be positive")
        if mode == "logit" and not 0.0 < v < 1.0:
            raise DomainError(f"{k} must be in (0, 1)")


# ---------------------------------------------------------------------------
# transforms and the damped least-squares engine
# ---------------------------------------------------------------------------

def _to_internal(v, mode):
    if mode == "log":
        return math.log(v)
    if mode == "logit":
        return math.log(v / (1.0 - v))
    return v


def _to_external(z, mode):
    if mode == "log":
        return math.exp(z)
    if mode == "logit":
        return 1.0 / (1.0 + math.exp(-z))
    return z


def _dext_dint(theta, mode):
    if mode == "log":
        return theta
    if mode == "logit":
        return theta * (1.0 - theta)
    return 1.0


def fit(model, data, init=None, fixed=None, max_iter=500,
        ftol=1e-10, xtol=1e-12, split_reflectivities=False):
    """Levenberg-Marquardt fit of `model` to `data`.

    `init` overrides the heuristic initial guess per parameter; `fixed`
    pins parameters at given values.  The damped step rule guarantees a
    monotone non-increasing cost over accepted steps; convergence is
    declared when the relative cost change drops below `ftol` or the
    step norm below `xtol`.

    For the airy models a single spectrum only constrains the product
    R1*R2, so by default refl_2 is tied to refl_1; pass
    split_reflectivities=True to fit them independently.  In the
    airy_lorentzian product the airy prefactor trades off exactly against
    the lorentzian scale, so it is pinned at its starting value unless
    passed in `fixed` explicitly.

    Raises RankDeficientError when the normal equations are singular at
    the solution (unidentifiable parameter combinations).
    """
    m = _model(model)
    data = data if isinstance(data, CurveData) else CurveData(*data)
    fixed = dict(fixed or {})
    init = dict(init or {})
    given = set(init) | set(fixed)
    if all(k in given for k in m.param_names):
        params = {}
    else:
        params = initial_guess(m, data)
    params.update(init)
    params.update(fixed)
    tied = {}
    if "refl_2" in m.param_names and not split_reflectivities \
            and "refl_2" not in fixed:
        tied["refl_2"] = "refl_1"
        params["refl_2"] = params["refl_1"]
    if m.name == "airy_lorentzian" and "amplitude" not in fixed:
        # the product only constrains the overall scale, so the airy
        # prefactor is pinned and the lorentzian carries the amplitude
        fixed["amplitude"] = params["amplitude"]
    _validate_params(m, params)
    free = [k for k in m.param_names if k not in fixed and k not in tied]
    if data.y.size < len(free) + 1:
        raise DomainError("not enough data points for the free parameters")
    w = 1.0 / data.sigma_y if data.sigma_y is not None else np.ones_like(data.y)

    modes = [m.transforms.get(k) for k in free]
    z = np.array([_to_internal(params[k], mo) for k, mo in zip(free, modes)])

    def unpack(zv):
        p = dict(params)
        for k, mo, zi in zip(free, modes, zv):
            p[k] = _to_external(zi, mo)
        for k, src in tied.items():
            p[k] = p[src]
        return p

    def residuals(p):
        return (data.y - eval_model(m, p, data.x)) * w

    def weighted_jac(p):
        full = jacobian(m, p, data.x)
        cols = {k: full[:, i] for i, k in enumerate(m.param_names)}
        for k, src in tied.items():
            cols[src] = cols[src] + cols[k]   # dR2/dR1 = 1 when tied
        j = np.column_stack([cols[k] for k in free])
        scale = np.array([_dext_dint(p[k], mo) for k, mo in zip(free, modes)])
        return j * scale[None, :] * w[:, None]

    p = unpack(z)
    r = residuals(p)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    converged = False
    message = "max_iter reached"
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        J = weighted_jac(p)
        if not np.all(np.isfinite(J)):
            message = "non-finite Jacobian"
            break
        H = J.T @ J
        g = J.T @ r
        step = None
        while lam < 1e14:
            try:
                A = H + lam * np.diag(np.maximum(np.diag(H), 1e-30))
                step = np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            z_try = z + step
            p_try = unpack(z_try)
            r_try = residuals(p_try)
            cost_try = 0.5 * float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                break
            lam *= 10.0
            step = None
        if step is None:
            message = "damping exhausted without cost decrease"
            break
        drop = cost - cost_try
        z, p, r = z_try, p_try, r_try
        cost_prev, cost = cost, cost_try
        lam = max(lam / 3.0, 1e-12)
        if drop <= ftol * max(cost_prev, 1e-300) \
                or np.linalg.norm(step) <= xtol * (np.linalg.norm(z) + xtol):
            converged = True
            message = "converged"
            break

    dof = max(data.y.size - len(free), 1)
    chi2_reduced = 2.0 * cost / dof
    sigma = {k: 0.0 for k in m.param_names}
    if converged:
        J = weighted_jac(p)
        H = J.T @ J
        if np.linalg.matrix_rank(H) < len(free):
            raise RankDeficientError(
                f"rank-deficient normal equations for {m.name}; "
                "parameters are not jointly identifiable")
        try:
            cov_z = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            raise RankDeficientError(
                f"singular normal equations for {m.name}; "
                "parameters are not jointly identifiable") from None
        if np.any(np.diag(cov_z) < 0) or not np.all(np.isfinite(cov_z)):
            raise RankDeficientError(
                f"ill-conditioned normal equations for {m.name}")
        if data.sigma_y is None:
            cov_z = cov_z * chi2_reduced
        dz = np.sqrt(np.diag(cov_z))
        for k, mo, s in zip(free, modes, dz):
            sigma[k] = float(s * abs(_dext_dint(p[k], mo)))
        for k, src in tied.items():
            sigma[k] = sigma[src]
    return FitResult(
        model=m.name,
        params={k: float(p[k]) for k in m.param_names},
        sigma=sigma,
        chi2_reduced=float(chi2_reduced),
        n_iter=n_iter,
        converged=converged,
        message=message,
        metadata={"fixed": sorted(fixed), "r1_r2_tied": bool(tied)},
    )


def quality_factor(result):
    """Q = center/FWHM from a lorentzian or airy_lorentzian fit."""
    p = result.params
    if "center_nm" not in p or "fwhm_nm" not in p:
        raise DomainError("fit result carries no lorentzian line")
    return p["center_nm"] / p["fwhm_nm"]
