"""Kinetic Monte Carlo photon-stream generation for the three-level emitter.

Emission is simulated with exact exponential waiting times (Gillespie
scheme) and passed through a detector chain (splitter, per-channel
efficiency, Gaussian jitter, dead time, dark counts).  Timestamps are
quantized to 1 ps.  All randomness derives from a master seed through
counter-based Philox streams keyed per purpose, so results are
reproducible and independent of batching.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .photophysics import EmitterModel  # noqa: F401  (re-exported for configs)

PS_PER_NS = 1000

# purpose keys for the per-purpose random streams
_KINETICS = 0x6b696e
_ROUTING = 0x726f75
_JITTER = 0x6a6974
_DARKS = 0x646172

_BATCH = 1 << 16


def _rng(seed, purpose):
    return np.random.Generator(np.random.Philox(key=[int(seed), purpose]))


@dataclass(frozen=True)
class CW:
    """Continuous-wave excitation at rate k_pump (1/ns)."""
    k_pump: float


@dataclass(frozen=True)
class Pulsed:
    """Instantaneous excitation attempts at multiples of `period` (ns),
    each succeeding with probability `excite_prob` when the emitter is in
    the ground state."""
    period: float
    excite_prob: float

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError("pulse period must be positive")
        if not 0.0 <= self.excite_prob <= 1.0:
            raise ConfigError("excite_prob must be in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    emitter: EmitterModel
    f_p: float
    excitation: object          # CW or Pulsed
    duration: float             # ns
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if not isinstance(self.excitation, (CW, Pulsed)):
            raise ConfigError("excitation must be CW or Pulsed")


@dataclass(frozen=True)
class DetectorChain:
    splitter_ratio: float = 0.5
    efficiency: tuple = (1.0, 1.0)
    jitter_sigma: float = 0.0       # ps
    dead_time: float = 0.0          # ps
    dark_rate: tuple = (0.0, 0.0)   # 1/ns per channel

    def __post_init__(self):
        if not 0.0 <= self.splitter_ratio <= 1.0:
            raise ConfigError("splitter_ratio must be in [0, 1]")
        for e in self.efficiency:
            if not 0.0 <= e <= 1.0:
                raise ConfigError("efficiency must be in [0, 1]")
        if self.dead_time < 0:
            raise ConfigError("dead_time must be >= 0")
        for d in self.dark_rate:
            if d < 0:
                raise ConfigError("dark_rate must be >= 0")


@dataclass
class TimeTagStream:
    """Strictly increasing photon timestamps (ps) on one channel."""
    channel: int
    tags: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint64))

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.uint64)
        if self.tags.size > 1 and not np.all(np.diff(self.tags.astype(np.int64)) > 0):
            raise ConfigError("tags must be strictly increasing")

    def rate(self, duration_ns):
        """Mean count rate in 1/ns."""
        return self.tags.size / duration_ns


@dataclass
class EmissionEvents:
    """Raw emission times (ps) with a ZPL/other tag per event."""
    times_ps: np.ndarray
    is_zpl: np.ndarray

    @property
    def zpl_times(self):
        return self.times_ps[self.is_zpl]


def _exp_wait(rng, rate, n):
    if rate <= 0:
        return np.full(n, np.inf)
    return rng.exponential(1.0 / rate, n)


def simulate_emission(config):
    """Generate the emission event list for a SimConfig.

    From the excited state the exit channels are {ZPL at g_R(1+F),
    other at g_0, ISC at k_isc} with exponential competition; the triplet
    decays at k_t; the ground state re-excites per the excitation mode.
    Only events are emitted (the triplet crossing is dark).  Deterministic
    for a fixed seed.
    """
    e = config.emitter
    g_zpl = e.gamma_r * (1.0 + config.f_p)
    g_other = e.gamma_0
    k_exit = g_zpl + g_other + e.k_isc
    if k_exit <= 0:
        raise ConfigError("excited state has no exit channel")
    rng = _rng(config.seed, _KINETICS)
    if isinstance(config.excitation, CW):
        times, is_zpl = _simulate_cw(config, rng, g_zpl, g_other, k_exit)
    else:
        times, is_zpl = _simulate_pulsed(config, rng, g_zpl, g_other, k_exit)
    ps = np.rint(times * PS_PER_NS).astype(np.uint64)
    keep = ps <= round(config.duration * PS_PER_NS)
    return EmissionEvents(ps[keep], is_zpl[keep])


def _simulate_cw(config, rng, g_zpl, g_other, k_exit):
    e = config.emitter
    kp = config.excitation.k_pump
    if kp <= 0:
        return np.empty(0), np.empty(0, bool)
    p_isc = e.k_isc / k_exit
    times, tags = [], []
    t0 = 0.0
    while t0 < config.duration:
        t_ground = rng.exponential(1.0 / kp, _BATCH)
        t_excited = rng.exponential(1.0 / k_exit, _BATCH)
        u = rng.random(_BATCH)
        isc = u >= (g_zpl + g_other) / k_exit
        zpl = u < g_zpl / k_exit
        t_triplet = np.zeros(_BATCH)
        n_isc = int(isc.sum())
        if n_isc:
            t_triplet[isc] = _exp_wait(rng, e.k_t, n_isc)
        cycle = t_ground + t_excited + t_triplet
        start = t0 + np.concatenate(([0.0], np.cumsum(cycle)[:-1]))
        emit = start + t_ground + t_excited
        ok = ~isc & (emit <= config.duration) & np.isfinite(emit)
        times.append(emit[ok])
        tags.append(zpl[ok])
        last = start[-1] + cycle[-1]
        if not math.isfinite(last):
            break
        t0 = last
    if not times:
        return np.empty(0), np.empty(0, bool)
    return np.concatenate(times), np.concatenate(tags)


def _simulate_pulsed(config, rng, g_zpl, g_other, k_exit):
    e = config.emitter
    exc = config.excitation
    n = int(math.floor(config.duration / exc.period))
    if n == 0 or exc.excite_prob == 0:
        return np.empty(0), np.empty(0, bool)
    # pre-draw one variate per pulse per purpose; unused draws are simply
    # skipped, which keeps the stream layout independent of the kinetics
    u_exc = rng.random(n)
    t_excited = rng.exponential(1.0 / k_exit, n)
    u_chan = rng.random(n)
    t_triplet = _exp_wait(rng, e.k_t, n)
    period = exc.period
    p_emit = (g_zpl + g_other) / k_exit
    p_zpl = g_zpl / k_exit
    times = np.empty(n)
    zpl = np.empty(n, bool)
    m = 0
    busy_until = -1.0
    for k in range(n):
        t_edge = k * period
        if t_edge < busy_until or u_exc[k] >= exc.excite_prob:
            continue
        t_emit = t_edge + t_excited[k]
        if u_chan[k] < p_emit:
            times[m] = t_emit
            zpl[m] = u_chan[k] < p_zpl
            m += 1
            busy_until = t_emit
        else:
            busy_until = t_emit + t_triplet[k]
    return times[:m], zpl[:m]


def _dead_time_filter(tags, dead_time_ps):
    """Keep tags so that consecutive accepted tags differ by more than
    `dead_time_ps` (and are strictly increasing)."""
    if tags.size == 0:
        return tags
    gap = max(int(math.ceil(dead_time_ps)), 1)
    t = tags.astype(np.int64)
    keep = np.empty(t.size, bool)
    keep[0] = True
    last = t[0]
    for i in range(1, t.size):
        if t[i] - last >= gap:
            keep[i] = True
            last = t[i]
        else:
            keep[i] = False
    return tags[keep]


def apply_detection(photon_times_ps, chain, seed, duration_ns):
    """Route photons through an HBT detector pair.

    Bernoulli splitter routing, per-channel efficiency thinning, Gaussian
    timing jitter, per-channel dead-time filtering, and Poisson dark
    counts, in that order.  Returns two sorted TimeTagStream.
    """
    photons = np.asarray(photon_times_ps, dtype=np.uint64)
    route_rng = _rng(seed, _ROUTING)
    jitter_rng = _rng(seed, _JITTER)
    dark_rng = _rng(seed, _DARKS)
    to_a = route_rng.random(photons.size) < chain.splitter_ratio
    duration_ps = round(duration_ns * PS_PER_NS)
    streams = []
    for ch, mask in enumerate((to_a, ~to_a)):
        t = photons[mask].astype(np.float64)
        eff = chain.efficiency[ch]
        if eff < 1.0:
            t = t[route_rng.random(t.size) < eff]
        if chain.jitter_sigma > 0 and t.size:
            t = t + jitter_rng.normal(0.0, chain.jitter_sigma, t.size)
        t = np.rint(t)
        t = t[(t >= 0) & (t <= duration_ps)]
        t = np.unique(t.astype(np.uint64))   # sorted, strictly increasing
        t = _dead_time_filter(t, chain.dead_time)
        rate = chain.dark_rate[ch]
        if rate > 0:
            n_dark = dark_rng.poisson(rate * duration_ns)
            darks = np.rint(dark_rng.uniform(0, duration_ps, n_dark))
            t = np.unique(np.concatenate([t, darks.astype(np.uint64)]))
        streams.append(TimeTagStream(ch, t))
    return streams[0], streams[1]


def simulate_pulsed_with_sync(config, chain=None, seed=None):
    """Pulsed run returning a sync stream (one tag per pulse edge) plus the
    detected photon stream (both detector channels merged)."""
    if not isinstance(config.excitation, Pulsed):
        raise ConfigError("simulate_pulsed_with_sync requires Pulsed excitation")
    chain = chain or DetectorChain(splitter_ratio=1.0)
    seed = config.seed if seed is None else seed
    n = int(math.floor(config.duration / config.excitation.period))
    edges = np.rint(np.arange(n) * config.excitation.period * PS_PER_NS)
    sync = TimeTagStream(channel=-1, tags=edges.astype(np.uint64))
    events = simulate_emission(config)
    ch_a, ch_b = apply_detection(events.zpl_times, chain, seed, config.duration)
    merged = np.unique(np.concatenate([ch_a.tags, ch_b.tags]))
    return {"sync": sync, "photons": TimeTagStream(0, merged)}
