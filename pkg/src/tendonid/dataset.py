"""Time-series data model, CSV ingestion/export, filtering, splitting.

The on-disk format is a plain CSV with header ``t,u1..up,y1..yq``: one row
per sample, time in seconds, forces in newtons, angles in radians. The time
column must be uniformly spaced (1% relative tolerance).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel signal.

    values has shape (m, c): m samples, c channels.
    """

    sample_time_s: float
    values: np.ndarray
    channel_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.sample_time_s <= 0:
            raise DataError(f"sample_time_s must be positive, got {self.sample_time_s}")
        if self.values.shape[0] < 2:
            raise DataError(f"need at least 2 samples, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("time series contains NaN or Inf")
        if not self.channel_names:
            self.channel_names = [f"ch{i + 1}" for i in range(self.values.shape[1])]
        if len(self.channel_names) != self.values.shape[1]:
            raise DataError("channel_names length does not match channel count")

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.sample_time_s


@dataclass
class Dataset:
    """Paired input/output record: tendon forces (N) -> joint angles (rad)."""

    inputs: TimeSeries
    outputs: TimeSeries

    def __post_init__(self):
        if self.inputs.num_samples != self.outputs.num_samples:
            raise DataError(
                "inputs and outputs must have the same sample count "
                f"({self.inputs.num_samples} vs {self.outputs.num_samples})"
            )
        if not math.isclose(self.inputs.sample_time_s, self.outputs.sample_time_s,
                            rel_tol=1e-12):
            raise DataError("inputs and outputs must share the sample time")

    @property
    def num_samples(self) -> int:
        return self.inputs.num_samples

    @property
    def sample_time_s(self) -> float:
        return self.inputs.sample_time_s

    @property
    def num_inputs(self) -> int:
        return self.inputs.num_channels

    @property
    def num_outputs(self) -> int:
        return self.outputs.num_channels


def load_csv(path) -> Dataset:
    """Read a ``t,u*,y*`` CSV into a Dataset.

    The sample time is inferred from the time column, which must be strictly
    increasing and uniform within 1% relative tolerance.
    """
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    header = [h.strip() for h in header]
    if not header or header[0] != "t":
        raise DataError(f"{path}: first column must be 't', got {header[:1]}")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u")]
    y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not u_cols or not y_cols:
        raise DataError(f"{path}: need at least one 'u*' and one 'y*' column")
    known = {0} | set(u_cols) | set(y_cols)
    unknown = [header[i] for i in range(len(header)) if i not in known]
    if unknown:
        raise DataError(f"{path}: unrecognized columns {unknown}")

    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")
    data = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {r + 2}") from None
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: NaN or Inf in data")

    t = data[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise DataError(f"{path}: time column must be strictly increasing")
    med = float(np.median(dt))
    if np.any(np.abs(dt - med) > 0.01 * med):
        raise DataError(f"{path}: non-uniform time grid (median step {med:g})")
    # the first step, not the median: for a grid written as k*dt from t=0
    # this recovers dt bit for bit, so a load/save cycle is byte-stable
    dt0 = float(t[1] - t[0])

    inputs = TimeSeries(dt0, data[:, u_cols], [header[i] for i in u_cols])
    outputs = TimeSeries(dt0, data[:, y_cols], [header[i] for i in y_cols])
    return Dataset(inputs=inputs, outputs=outputs)


def save_csv(ds: Dataset, path) -> None:
    """Write a Dataset as a parseable CSV (17 significant digits)."""
    header = ["t"] + list(ds.inputs.channel_names) + list(ds.outputs.channel_names)
    t = ds.inputs.time
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for k in range(ds.num_samples):
                row = [format(t[k], ".17g")]
                row += [format(v, ".17g") for v in ds.inputs.values[k]]
                row += [format(v, ".17g") for v in ds.outputs.values[k]]
                writer.writerow(row)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def lowpass_filter(ts: TimeSeries, cutoff_rad_per_sample: float) -> TimeSeries:
    """Zero-phase low-pass: forward then reversed backward pass of a
    first-order recursion whose -3 dB point sits at the given normalized
    angular frequency (rad/sample).
    """
    wc = float(cutoff_rad_per_sample)
    if not 0 < wc < math.pi:
        raise DataError(f"cutoff must be in (0, pi), got {wc}")
    # Pole location giving |H(e^{j wc})|^2 = 1/2 for y_k = (1-a) x_k + a y_{k-1}.
    c = 2.0 - math.cos(wc)
    a = c - math.sqrt(c * c - 1.0)

    def one_pass(x):
        y = np.empty_like(x)
        y[0] = x[0]
        for k in range(1, len(x)):
            y[k] = (1.0 - a) * x[k] + a * y[k - 1]
        return y

    out = np.empty_like(ts.values)
    for ch in range(ts.num_channels):
        fwd = one_pass(ts.values[:, ch])
        out[:, ch] = one_pass(fwd[::-1])[::-1]
    return TimeSeries(ts.sample_time_s, out, list(ts.channel_names))


def split(ds: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """Contiguous prefix/suffix split (no shuffling: identification needs
    unbroken trajectories). Both parts must keep >= 2 samples."""
    m = ds.num_samples
    n_train = int(math.floor(train_fraction * m))
    if n_train < 2 or m - n_train < 2:
        raise DataError(
            f"train_fraction={train_fraction} leaves parts of {n_train} and "
            f"{m - n_train} samples; both need >= 2"
        )
    dt = ds.sample_time_s

    def part(sl):
        return Dataset(
            inputs=TimeSeries(dt, ds.inputs.values[sl], list(ds.inputs.channel_names)),
            outputs=TimeSeries(dt, ds.outputs.values[sl], list(ds.outputs.channel_names)),
        )

    return part(slice(0, n_train)), part(slice(n_train, m))


def concat(parts: list[Dataset]) -> Dataset:
    """Concatenate datasets recorded back to back at the same rate."""
    if not parts:
        raise DataError("nothing to concatenate")
    dt = parts[0].sample_time_s
    for p in parts[1:]:
        if not math.isclose(p.sample_time_s, dt, rel_tol=1e-12):
            raise DataError("sample times differ across parts")
    u = np.vstack([p.inputs.values for p in parts])
    y = np.vstack([p.outputs.values for p in parts])
    return Dataset(
        inputs=TimeSeries(dt, u, list(parts[0].inputs.channel_names)),
        outputs=TimeSeries(dt, y, list(parts[0].outputs.channel_names)),
    )
