"""Dataset ingestion, chronological splitting, normalization and windowing.

File formats:
  * data file: comma-delimited UTF-8 with a header row; column 1 holds
    ISO-8601 or integer-epoch timestamps, remaining columns are channels
    in schema order.
  * schema sidecar: one ``name,role`` line per channel, role in
    {biz-kpi, it-event}.

Splits are chronological (train before val before test) and normalizer
statistics come from the training split only; a guard object makes
accidental reads of the test split during training a hard error.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SchemaError, UsageError

ROLES = ("biz-kpi", "it-event")


@dataclass(frozen=True)
class Channel:
    name: str
    role: str


class ChannelSchema:
    """Ordered channel descriptors with role labels."""

    def __init__(self, channels):
        self.channels = list(channels)
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate channel names in schema")
        for c in self.channels:
            if c.role not in ROLES:
                raise SchemaError(f"channel {c.name!r} has unknown role {c.role!r}")

    def __len__(self):
        return len(self.channels)

    @property
    def names(self):
        return [c.name for c in self.channels]

    def mask(self, role):
        """Indices of channels with the given role."""
        return [i for i, c in enumerate(self.channels) if c.role == role]

    @property
    def kpi_mask(self):
        return self.mask("biz-kpi")

    @property
    def event_mask(self):
        return self.mask("it-event")

    @classmethod
    def load(cls, path):
        channels = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 2:
                    raise SchemaError(f"{path}:{lineno}: expected 'name,role'")
                channels.append(Channel(parts[0], parts[1]))
        return cls(channels)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for c in self.channels:
                fh.write(f"{c.name},{c.role}\n")


class BizITObsFrame:
    """Timestamped multivariate series aligned to a schema."""

    def __init__(self, timestamps, values, schema):
        timestamps = np.asarray(timestamps, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != timestamps.shape[0]:
            raise DataError("values must be (time, channels) aligned with timestamps")
        if values.shape[1] != len(schema):
            raise SchemaError(
                f"frame has {values.shape[1]} channels, schema lists {len(schema)}")
        if len(timestamps) > 1:
            deltas = np.diff(timestamps)
            if np.any(deltas <= 0):
                bad = int(np.argmax(deltas <= 0)) + 1
                raise DataError(f"timestamps not strictly increasing at row {bad}")
            step = np.median(deltas)
            if np.any(np.abs(deltas - step) > 0.01 * step):
                raise DataError("timestamps not equally spaced (tolerance 1%)")
        if not np.all(np.isfinite(values)):
            raise DataError("frame contains NaN or Inf values")
        self.timestamps = timestamps
        self.values = values
        self.schema = schema

    def __len__(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]

    def slice(self, start, stop):
        return BizITObsFrame(self.timestamps[start:stop],
                             self.values[start:stop], self.schema)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp"] + self.schema.names)
            for t, row in zip(self.timestamps, self.values):
                writer.writerow([f"{t:.6f}".rstrip("0").rstrip(".")]
                                + [repr(float(v)) for v in row])


def _parse_timestamp(text, path, row):
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return _dt.datetime.fromisoformat(text).timestamp()
    except ValueError:
        raise DataError(f"{path}: row {row}: bad timestamp {text!r}") from None


def load_frame(data_path, schema_path):
    """Load and validate a delimited data file against its schema sidecar."""
    schema = ChannelSchema.load(schema_path)
    timestamps, rows = [], []
    with open(data_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{data_path}: empty file") from None
        cols = [c.strip() for c in header[1:]]
        if cols != schema.names:
            unknown = [c for c in cols if c not in schema.names]
            raise DataError(
                f"{data_path}: header columns do not match schema "
                f"(unknown or misordered: {unknown or cols})")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(schema) + 1:
                raise DataError(f"{data_path}: row {rowno}: expected "
                                f"{len(schema) + 1} fields, got {len(row)}")
            timestamps.append(_parse_timestamp(row[0], data_path, rowno))
            vals = []
            for colno, cell in enumerate(row[1:], start=2):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{data_path}: row {rowno}, column {colno}: "
                        f"non-numeric value {cell!r}") from None
            rows.append(vals)
    return BizITObsFrame(np.array(timestamps), np.array(rows), schema)


def chronological_split(frame, ratios=(0.6, 0.2, 0.2), min_window=48):
    """Contiguous train/val/test segments; remainder rows go to test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    n = len(frame)
    if n < 3 * min_window:
        raise DataError(
            f"frame too short to split: {n} rows < minimum {3 * min_window}")
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    return (frame.slice(0, n_train),
            frame.slice(n_train, n_train + n_val),
            frame.slice(n_train + n_val, n))


class Normalizer:
    """Per-channel standardization fitted on the training split only."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, frame):
        mean = frame.values.mean(axis=0)
        std = frame.values.std(axis=0)
        constant = np.where(std == 0)[0]
        if constant.size:
            names = [frame.schema.names[i] for i in constant]
            raise DataError(f"constant channel(s) {names}: cannot normalize")
        return cls(mean, std)

    def apply(self, values):
        return (np.asarray(values) - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values) * self.std + self.mean

    def apply_frame(self, frame):
        return BizITObsFrame(frame.timestamps, self.apply(frame.values), frame.schema)


def fit_apply_normalizer(train, *others):
    """Fit on train, standardize all splits; returns frames plus the Normalizer."""
    norm = Normalizer.fit(train)
    frames = [norm.apply_frame(train)] + [norm.apply_frame(f) for f in others]
    return (*frames, norm)


@dataclass
class WindowSample:
    x: np.ndarray        # (sl, C) history
    y: np.ndarray        # (fl, C) target
    origin: int          # index of the first history row in the source frame


def make_windows(frame_or_values, sl, fl, stride=1):
    """Supervised (history, target) pairs; count = floor((len-sl-fl)/stride)+1."""
    values = (frame_or_values.values
              if isinstance(frame_or_values, BizITObsFrame) else
              np.asarray(frame_or_values))
    n = values.shape[0]
    if n < sl + fl:
        return []
    return [
        WindowSample(values[start:start + sl],
                     values[start + sl:start + sl + fl], start)
        for start in range(0, n - sl - fl + 1, stride)
    ]


def event_labels(y_raw, schema):
    """Binary occurrence label per event channel: 1 iff any value > 0 in the window.

    ``y_raw`` must be in raw (pre-normalization) units.
    """
    y_raw = np.asarray(y_raw)
    return (y_raw[:, schema.event_mask] > 0).any(axis=0).astype(np.float64)


class GuardedFrame:
    """Wrapper that refuses access until explicitly unlocked.

    Wraps the test split during training so any code path that touches
    test data before checkpoint selection trips immediately.
    """

    def __init__(self, frame, label="test"):
        self._frame = frame
        self._label = label
        self._unlocked = False

    def unlock(self):
        self._unlocked = True
        return self._frame

    def __getattr__(self, attr):
        if not self.__dict__.get("_unlocked", False):
            raise UsageError(
                f"access to the {self._label} split before evaluation phase")
        return getattr(self._frame, attr)
