"""Flight-log handling: CSV ingest, low-pass filtering and excitation synthesis.

Logs are uniformly sampled multi-channel records. State channels follow the
13-state naming used by :mod:`heliid.model`; the four control channels are
``delta_lat``, ``delta_lon``, ``delta_ped`` and ``delta_col``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as _sig

STATE_NAMES = ("u", "v", "p", "q", "phi", "theta", "a", "b", "w", "r", "r_fb", "c", "d")
CONTROL_NAMES = ("delta_lat", "delta_lon", "delta_ped", "delta_col")
UNMEASURED_STATES = ("r_fb", "c", "d")
AXES = ("lat", "lon", "ped", "col")

# Relative spread of sample intervals tolerated before a log is rejected.
DT_TOLERANCE = 0.01


class LogParseError(ValueError):
    """Raised when a CSV log is malformed; message carries the line number."""


@dataclass
class TimeSeriesLog:
    """Uniformly sampled multi-channel record.

    ``mask`` names the channels that were actually measured (state channels);
    control channels are inputs and never masked.  ``divergent`` is set by the
    simulator when a trajectory hit the magnitude guard and was truncated.
    """

    sample_rate_hz: float
    channels: dict[str, np.ndarray]
    mask: frozenset[str] = field(default_factory=frozenset)
    divergent: bool = False

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not self.channels:
            raise ValueError("log needs at least one channel")
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) != 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        if min(lengths) < 2:
            raise ValueError("channels must hold at least 2 samples")
        self.mask = frozenset(self.mask)
        unknown = self.mask - set(self.channels)
        if unknown:
            raise ValueError(f"mask names absent channels: {sorted(unknown)}")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def control_matrix(self) -> np.ndarray:
        """The (n, 4) matrix of control inputs; missing channels read as 0."""
        n = self.n_samples
        cols = [self.channels.get(c, np.zeros(n)) for c in CONTROL_NAMES]
        return np.column_stack(cols)

    def slice(self, start: int, stop: int) -> "TimeSeriesLog":
        return TimeSeriesLog(
            sample_rate_hz=self.sample_rate_hz,
            channels={k: v[start:stop].copy() for k, v in self.channels.items()},
            mask=self.mask,
            divergent=self.divergent,
        )


def _canonical_order(names) -> list[str]:
    """States in Eq.-order first, then controls, then anything else sorted."""
    names = set(names)
    ordered = [n for n in STATE_NAMES if n in names]
    ordered += [n for n in CONTROL_NAMES if n in names]
    ordered += sorted(names - set(ordered))
    return ordered


def load_log(source, sample_rate_hz: float | None = None) -> TimeSeriesLog:
    """Parse a CSV flight log into a validated :class:`TimeSeriesLog`.

    ``source`` is a path or an open text stream.  A ``t`` column (seconds)
    implies the sample rate; otherwise ``sample_rate_hz`` must be given.
    State channels present in the file become the measured mask.
    """
    if hasattr(source, "read"):
        return _parse_csv(source, sample_rate_hz)
    with open(source, "r", newline="", encoding="utf-8") as fh:
        return _parse_csv(fh, sample_rate_hz)


def _parse_csv(stream, sample_rate_hz):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise LogParseError("line 1: empty file") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise LogParseError("line 1: duplicate column names")

    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise LogParseError(
                f"line {lineno}: expected {len(header)} cells, got {len(row)}"
            )
        parsed = []
        for col, cell in zip(header, row):
            try:
                value = float(cell)
            except ValueError:
                raise LogParseError(
                    f"line {lineno}: column '{col}': non-numeric cell {cell!r}"
                ) from None
            if not np.isfinite(value):
                raise LogParseError(
                    f"line {lineno}: column '{col}': non-finite value {cell!r}"
                )
            parsed.append(value)
        rows.append(parsed)

    if len(rows) < 2:
        raise LogParseError(f"line {len(rows) + 1}: need at least 2 data rows")
    data = np.asarray(rows, dtype=float)
    columns = dict(zip(header, data.T))

    if "t" in columns:
        t = columns.pop("t")
        dts = np.diff(t)
        if np.any(dts <= 0):
            bad = int(np.argmax(dts <= 0))
            raise LogParseError(f"line {bad + 3}: time column not strictly increasing")
        dt = float(np.median(dts))
        if np.max(np.abs(dts - dt)) > DT_TOLERANCE * dt:
            bad = int(np.argmax(np.abs(dts - dt)))
            raise LogParseError(
                f"line {bad + 3}: irregular sampling interval "
                f"{dts[bad]:.6g} s vs median {dt:.6g} s"
            )
        rate = 1.0 / dt
    elif sample_rate_hz is not None:
        rate = float(sample_rate_hz)
    else:
        raise LogParseError("line 1: no 't' column and no sample rate declared")

    mask = frozenset(set(columns) & set(STATE_NAMES))
    return TimeSeriesLog(sample_rate_hz=rate, channels=columns, mask=mask)


def save_log(log: TimeSeriesLog, dest) -> None:
    """Write a log as CSV with a ``t`` column; values round-trip bit-exactly."""
    names = _canonical_order(log.channels)
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        t = log.times()
        cols = [log.channels[n] for n in names]
        for i in range(log.n_samples):
            writer.writerow([repr(float(t[i]))] + [repr(float(c[i])) for c in cols])
    finally:
        if own:
            fh.close()


def butterworth_filter(
    log: TimeSeriesLog,
    cutoff_hz: float,
    order: int = 2,
    zero_phase: bool = True,
) -> TimeSeriesLog:
    """Low-pass the masked channels with a Butterworth filter.

    Zero-phase (forward-backward) by default so the filtering adds no lag;
    ``zero_phase=False`` gives the plain causal single-pass response.
    """
    nyquist = log.sample_rate_hz / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz")
    b, a = _sig.butter(order, cutoff_hz / nyquist)
    out = {}
    for name, values in log.channels.items():
        if name in log.mask:
            if zero_phase:
                padlen = min(3 * (max(len(a), len(b)) - 1), len(values) - 1)
                out[name] = _sig.filtfilt(b, a, values, padlen=padlen)
            else:
                out[name] = _sig.lfilter(b, a, values)
        else:
            out[name] = values.copy()
    return TimeSeriesLog(log.sample_rate_hz, out, log.mask, log.divergent)


DEFAULT_3211 = ((+1.0, 3.0), (-1.0, 2.0), (+1.0, 1.0), (-1.0, 1.0))


@dataclass(frozen=True)
class ExcitationSpec:
    """A piecewise-constant stick sequence on one control axis."""

    axis: str
    amplitude: float
    durations: tuple = DEFAULT_3211
    lead_in: float = 1.0
    tail: float = 1.0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not self.durations or any(d <= 0 for _, d in self.durations):
            raise ValueError("durations must be non-empty with positive seconds")
        if self.lead_in < 0 or self.tail < 0:
            raise ValueError("lead_in and tail must be non-negative")


def excitation_samples(spec: ExcitationSpec, sample_rate_hz: float) -> np.ndarray:
    """The excited-axis sample sequence (without the other three channels)."""
    segs = [(0.0, spec.lead_in)] + [
        (s * spec.amplitude, d) for s, d in spec.durations
    ] + [(0.0, spec.tail)]
    parts = [np.full(int(round(d * sample_rate_hz)), v) for v, d in segs]
    return np.concatenate(parts)


def generate_3211(spec: ExcitationSpec, sample_rate_hz: float) -> TimeSeriesLog:
    """Build a four-channel control log with a 3-2-1-1 burst on one axis."""
    seq = excitation_samples(spec, sample_rate_hz)
    channels = {c: np.zeros(len(seq)) for c in CONTROL_NAMES}
    channels[f"delta_{spec.axis}"] = seq
    return TimeSeriesLog(sample_rate_hz, channels, frozenset())


def split_train_validate(
    log: TimeSeriesLog, fraction: float
) -> tuple[TimeSeriesLog, TimeSeriesLog]:
    """Contiguous prefix/suffix split; both halves keep rate and mask."""
    n = log.n_samples
    if n < 4:
        raise ValueError("log too short to split")
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    k = int(round(n * fraction))
    if k < 2 or n - k < 2:
        raise ValueError(f"fraction {fraction} leaves a half shorter than 2 samples")
    return log.slice(0, k), log.slice(k, n)


def add_measurement_noise(
    log: TimeSeriesLog, noise_fraction: float, rng: np.random.Generator
) -> TimeSeriesLog:
    """Add white noise to masked channels, sigma = fraction of channel RMS."""
    out = {}
    for name, values in log.channels.items():
        if name in log.mask and noise_fraction > 0:
            rms = float(np.sqrt(np.mean(values**2)))
            out[name] = values + rng.normal(0.0, noise_fraction * rms, len(values))
        else:
            out[name] = values.copy()
    return TimeSeriesLog(log.sample_rate_hz, out, log.mask, log.divergent)


def concat_logs(first: TimeSeriesLog, second: TimeSeriesLog) -> TimeSeriesLog:
    """Rejoin two logs produced by :func:`split_train_validate`."""
    if first.sample_rate_hz != second.sample_rate_hz:
        raise ValueError("sample rates differ")
    if set(first.channels) != set(second.channels):
        raise ValueError("channel sets differ")
    channels = {
        k: np.concatenate([first.channels[k], second.channels[k]])
        for k in first.channels
    }
    return TimeSeriesLog(first.sample_rate_hz, channels, first.mask)


def log_to_csv_bytes(log: TimeSeriesLog) -> bytes:
    buf = io.StringIO()
    save_log(log, buf)
    return buf.getvalue().encode("utf-8")
