"""Streaming coincidence counting and histogramming.

Cross-correlation histograms use bin 0 centered on zero delay
(half-open bins [k*bw - bw//2, k*bw + bw//2)) and count pairs with
delay t_b - t_a in [-max_delay, +max_delay).  All binning is integer
arithmetic on picosecond tags, so chunked evaluation is bit-exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

PS_PER_NS = 1000


@dataclass
class Histogram:
    bin_width: int        # ps
    t_min: int            # ps, left edge of first bin
    t_max: int            # ps, right edge of last bin
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if (self.t_max - self.t_min) % self.bin_width != 0:
            raise DomainError("(t_max - t_min) must be divisible by bin_width")
        if (self.t_max - self.t_min) // self.bin_width != self.counts.size:
            raise DomainError("counts length does not match bin range")

    def centers(self):
        """Bin centers in ps."""
        return (self.t_min + self.bin_width * (np.arange(self.counts.size) + 0.5))


@dataclass
class G2Curve:
    delays: np.ndarray        # ns
    values: np.ndarray
    normalization: float      # expected counts/bin for uncorrelated streams
    mode: str = "analytic"


def _check_sorted(tags, name):
    t = np.asarray(tags)
    if t.size > 1 and np.any(np.diff(t.astype(np.int64)) < 0):
        raise DataError(f"{name} tags are not sorted")


def cross_correlate(a, b, bin_width, max_delay, chunk=1 << 18):
    """Histogram of all pair delays t_b - t_a within +-max_delay.

    Runs in O(N log N + pairs) using a searchsorted sliding window over
    the sorted streams; `chunk` bounds peak memory and does not affect
    the result.
    """
    if bin_width <= 0:
        raise DomainError("bin_width must be positive")
    if max_delay % bin_width != 0:
        raise DomainError("max_delay must be a multiple of bin_width")
    ta = np.asarray(getattr(a, "tags", a), dtype=np.int64)
    tb = np.asarray(getattr(b, "tags", b), dtype=np.int64)
    _check_sorted(ta, "stream a")
    _check_sorted(tb, "stream b")
    m = max_delay // bin_width
    nbins = 2 * m + 1
    half = bin_width // 2
    counts = np.zeros(nbins, dtype=np.int64)
    for i0 in range(0, max(ta.size, 1), chunk):
        sub = ta[i0:i0 + chunk]
        if sub.size == 0:
            break
        lo = np.searchsorted(tb, sub - max_delay, side="left")
        hi = np.searchsorted(tb, sub + max_delay, side="left")
        n_pair = hi - lo
        total = int(n_pair.sum())
        if total == 0:
            continue
        # flat indices of all windows [lo_i, hi_i)
        starts = np.repeat(hi - np.cumsum(n_pair), n_pair)
        idx = starts + np.arange(total)
        delays = tb[idx] - np.repeat(sub, n_pair)
        k = (delays + half) // bin_width
        counts += np.bincount((k + m).astype(np.intp), minlength=nbins)
    t_min = int(-m * bin_width - half)
    t_max = int(t_min + nbins * bin_width)
    return Histogram(int(bin_width), t_min, t_max, counts)


def normalize_g2(h, rate_a, rate_b, duration, mode="analytic", tail_start=None):
    """Normalize a coincidence histogram to g2 values.

    'analytic' divides by the uncorrelated expectation
    rate_a*rate_b*duration*bin_width (rates in 1/ns, duration in ns);
    'tail' divides by the mean counts at |delay| >= tail_start (ps).
    """
    if rate_a <= 0 or rate_b <= 0:
        raise DomainError("rates must be positive")
    if duration <= 0:
        raise DomainError("duration must be positive")
    if mode == "analytic":
        norm = rate_a * rate_b * duration * (h.bin_width / PS_PER_NS)
    elif mode == "tail":
        if tail_start is None:
            raise DomainError("tail mode requires tail_start")
        centers = h.centers()
        sel = np.abs(centers) >= tail_start
        if not np.any(sel):
            raise DomainError("tail_start excludes every bin")
        norm = float(h.counts[sel].mean())
        if norm <= 0:
            raise DomainError("tail normalization is zero")
    else:
        raise DomainError(f"unknown normalization mode {mode!r}")
    delays = h.centers() / PS_PER_NS
    return G2Curve(delays, h.counts / norm, norm, mode)


def lifetime_histogram(sync, photons, bin_width):
    """Histogram of photon arrival times relative to the most recent sync
    tag, over one pulse period.

    Photons before the first sync tag (or beyond the period after the
    last one) are skipped; the skip count is returned alongside.
    """
    ts = np.asarray(getattr(sync, "tags", sync), dtype=np.int64)
    tp = np.asarray(getattr(photons, "tags", photons), dtype=np.int64)
    _check_sorted(ts, "sync")
    _check_sorted(tp, "photons")
    if ts.size == 0:
        raise DataError("sync stream is empty")
    if bin_width <= 0:
        raise DomainError("bin_width must be positive")
    idx = np.searchsorted(ts, tp, side="right") - 1
    skipped = int(np.count_nonzero(idx < 0))
    valid = idx >= 0
    delays = tp[valid] - ts[idx[valid]]
    if ts.size > 1:
        period = int(np.diff(ts).min())
    else:
        period = int(delays.max()) + bin_width if delays.size else bin_width
    nbins = max((period + bin_width - 1) // bin_width, 1)
    inside = delays < nbins * bin_width
    skipped += int(np.count_nonzero(~inside))
    counts = np.bincount((delays[inside] // bin_width).astype(np.intp),
                         minlength=nbins)
    hist = Histogram(int(bin_width), 0, int(nbins * bin_width), counts)
    return hist, skipped
