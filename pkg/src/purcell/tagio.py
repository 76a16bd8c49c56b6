"""File formats: binary/CSV time tags, histogram and spectrum CSVs, fit
JSON, and the flat key-value config format.

Binary time-tag layout: magic b'TTAG', version byte 0x01, channel byte,
then little-endian unsigned 64-bit picosecond timestamps.  Text outputs
carry '#'-prefixed header lines with the tool version, config hash, and
seed so reruns are byte-identical.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .correlate import Histogram
from .errors import ConfigError, DataError
from .kinetics import TimeTagStream

TOOL_VERSION = "0.1.0"
_MAGIC = b"TTAG"
_VERSION = 1


def header_lines(config_hash="", seed=""):
    return [f"# purcell {TOOL_VERSION}",
            f"# config_hash {config_hash}",
            f"# seed {seed}"]


def config_hash(text):
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# time tags
# ---------------------------------------------------------------------------

def write_tags(path, stream, fmt="bin", meta=None):
    path = Path(path)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(bytes([_VERSION, stream.channel & 0xFF]))
            fh.write(stream.tags.astype("<u8").tobytes())
    elif fmt == "csv":
        lines = header_lines(**(meta or {}))
        lines.append("channel,timestamp_ps")
        lines.extend(f"{stream.channel},{t}" for t in stream.tags)
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ConfigError(f"unknown tag format {fmt!r}")


def read_tags(path):
    """Read a time-tag file, auto-detecting binary vs CSV by the magic
    bytes.  Raises DataError (with the offending byte offset) when the
    tags are not strictly increasing."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == _MAGIC:
        return _read_tags_bin(path, raw)
    return _read_tags_csv(path, raw)


def _read_tags_bin(path, raw):
    if len(raw) < 6 or raw[4] != _VERSION:
        raise DataError(f"{path}: bad TTAG header")
    channel = raw[5]
    body = raw[6:]
    if len(body) % 8:
        raise DataError(f"{path}: truncated record at byte offset {6 + len(body) // 8 * 8}")
    tags = np.frombuffer(body, dtype="<u8")
    _check_strict(path, tags, lambda i: 6 + 8 * i)
    return TimeTagStream(channel, tags.copy())


def _read_tags_csv(path, raw):
    text = raw.decode()
    tags, channel = [], 0
    offset = 0
    data_offsets = []
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        start = offset
        offset += len(line)
        if not stripped or stripped.startswith("#") \
                or stripped.startswith("channel"):
            continue
        try:
            ch, t = stripped.split(",")
            channel = int(ch)
            tags.append(int(t))
        except ValueError:
            raise DataError(f"{path}: bad tag line at byte offset {start}") from None
        data_offsets.append(start)
    tags = np.asarray(tags, dtype=np.uint64)
    _check_strict(path, tags, lambda i: data_offsets[i])
    return TimeTagStream(channel, tags)


def _check_strict(path, tags, offset_of):
    if tags.size < 2:
        return
    bad = np.nonzero(np.diff(tags.astype(np.int64)) <= 0)[0]
    if bad.size:
        i = int(bad[0]) + 1
        raise DataError(
            f"{path}: tags not strictly increasing at byte offset {offset_of(i)}")


# ---------------------------------------------------------------------------
# histograms, curves, spectra
# ---------------------------------------------------------------------------

def write_histogram_csv(path, hist, meta=None, extra=None):
    lines = header_lines(**(meta or {}))
    lines.append(f"# bin_width_ps {hist.bin_width}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {v}")
    lines.append("delay_ps,counts")
    centers = hist.centers()
    for c, n in zip(centers, hist.counts):
        lines.append(f"{c:.1f},{n}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_g2_csv(path, curve, meta=None):
    lines = header_lines(**(meta or {}))
    lines.append(f"# normalization_mode {curve.mode}")
    lines.append(f"# normalization {curve.normalization!r}")
    lines.append("delay_ns,g2")
    for d, v in zip(curve.delays, curve.values):
        lines.append(f"{d:.6f},{v:.8f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_histogram_csv(path):
    x, y = read_xy_csv(path)
    bw = int(round(x[1] - x[0])) if x.size > 1 else 1
    t_min = int(round(x[0] - bw / 2))
    return Histogram(bw, t_min, t_min + bw * x.size, y.astype(np.int64))


def read_xy_csv(path):
    """Two-column numeric CSV with '#' comments and an optional header row."""
    xs, ys = [], []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split(",")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except (ValueError, IndexError):
            if xs:
                raise DataError(f"{path}: bad data line {s!r}") from None
            continue  # header row
    if not xs:
        raise DataError(f"{path}: no data rows")
    return np.asarray(xs), np.asarray(ys)


def write_xy_csv(path, x, y, columns, meta=None):
    lines = header_lines(**(meta or {}))
    lines.append(columns)
    lines.extend(f"{a!r},{b!r}" for a, b in zip(np.asarray(x).tolist(),
                                                np.asarray(y).tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# tuning-record tables
# ---------------------------------------------------------------------------

def read_tuning_records(path):
    """CSV of tuning records:
    label,lambda_cav,sig,lambda_zpl,sig,q,sig,flux,sig"""
    from .extraction import TuningRecord
    records = {}
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s or s.startswith("#") or s.startswith("label"):
            continue
        parts = [p.strip() for p in s.split(",")]
        if len(parts) != 9:
            raise DataError(f"{path}: expected 9 columns, got {len(parts)}")
        try:
            rec = TuningRecord(parts[0], *map(float, parts[1:]))
        except ValueError:
            raise DataError(f"{path}: bad record line {s!r}") from None
        records[rec.label] = rec
    if not records:
        raise DataError(f"{path}: no records")
    return records


# ---------------------------------------------------------------------------
# flat key-value configs
# ---------------------------------------------------------------------------

def parse_config(path):
    """Flat `key = value` text config with '#' comments; keys carry unit
    suffixes (e.g. tau_off_ns).  Returns the key->string map plus the
    hash of the raw text."""
    text = Path(path).read_text()
    cfg = {}
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, _, value = s.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg, config_hash(text)


_MISSING = object()


def cfg_get(cfg, key, cast=str, default=_MISSING):
    if key not in cfg:
        if default is not _MISSING:
            return default
        raise ConfigError(f"missing config key {key!r}")
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"invalid value for config key {key!r}: "
                          f"{cfg[key]!r}") from None
