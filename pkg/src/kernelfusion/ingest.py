"""Frame files: loading, validation and reproducible train/test splits.

A frame file is a flat CSV with one frame per row::

    id,label,s_0_ax0,s_1_ax0,...,s_{L-1}_ax0,s_0_ax1,...,s_{L-1}_ax{A-1}

Samples are stored axis-major: all ``L`` timesteps of axis 0, then axis 1 and
so on.  The frame length ``L`` and axis count ``A`` are read from the header.
"""

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ConfigError, ParseError, SchemaError
from .rng import XorShift64Star

_SAMPLE_COLUMN = re.compile(r"^s_(\d+)_ax(\d+)$")


@dataclass(frozen=True)
class Frame:
    id: int
    label: int
    samples: np.ndarray  # (L, A)

    @property
    def length(self):
        return self.samples.shape[0]

    @property
    def axes(self):
        return self.samples.shape[1]


@dataclass
class Dataset:
    frames: list
    class_count: int
    axis_count: int
    frame_length: int

    def __len__(self):
        return len(self.frames)

    @property
    def labels(self):
        return np.array([f.label for f in self.frames], dtype=np.int64)

    @property
    def ids(self):
        return np.array([f.id for f in self.frames], dtype=np.int64)

    def samples(self, indices=None):
        """Stack frame samples into an ``(N, L, A)`` array."""
        frames = self.frames if indices is None else [self.frames[i] for i in indices]
        if not frames:
            return np.zeros((0, self.frame_length, self.axis_count))
        return np.stack([f.samples for f in frames])

    def subset(self, indices):
        return Dataset(
            frames=[self.frames[i] for i in indices],
            class_count=self.class_count,
            axis_count=self.axis_count,
            frame_length=self.frame_length,
        )


@dataclass(frozen=True)
class Split:
    train_indices: list
    test_indices: list
    seed: int
    train_fraction: float = field(default=0.8)


def sample_header(frame_length, axis_count):
    cols = ["id", "label"]
    for a in range(axis_count):
        cols.extend(f"s_{t}_ax{a}" for t in range(frame_length))
    return cols


def _parse_header(header, path):
    if len(header) < 3 or header[0].strip() != "id" or header[1].strip() != "label":
        raise SchemaError(f"{path}: header must start with 'id,label,s_0_ax0'")
    positions = []
    for name in header[2:]:
        m = _SAMPLE_COLUMN.match(name.strip())
        if m is None:
            raise SchemaError(f"{path}: unrecognised sample column {name!r}")
        positions.append((int(m.group(2)), int(m.group(1))))
    axis_count = max(a for a, _ in positions) + 1
    if len(positions) % axis_count:
        raise SchemaError(f"{path}: sample columns do not form an L x A grid")
    frame_length = len(positions) // axis_count
    expected = [(a, t) for a in range(axis_count) for t in range(frame_length)]
    if positions != expected:
        raise SchemaError(f"{path}: sample columns must be axis-major s_t_axa in order")
    return frame_length, axis_count


def load_dataset(path) -> Dataset:
    """Read and validate a frame CSV file.

    Rows keep their file order.  Raises :class:`ParseError` (with the line
    number) for unparseable rows, :class:`SchemaError` for frames whose sample
    count disagrees with the header, and :class:`DataError` for non-finite
    samples, duplicate ids or missing classes.
    """
    path = Path(path)
    frames = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        frame_length, axis_count = _parse_header(header, path)
        width = 2 + frame_length * axis_count
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                frame_id = int(row[0])
                label = int(row[1])
            except (ValueError, IndexError):
                raise ParseError("id and label must be integers", line) from None
            if len(row) != width:
                raise SchemaError(
                    f"{path}: frame id {frame_id} has {len(row) - 2} samples, "
                    f"expected {width - 2} (L={frame_length}, A={axis_count})"
                )
            try:
                values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}: frame id {frame_id} has non-finite samples (line {line})")
            if label < 0:
                raise DataError(f"{path}: frame id {frame_id} has negative label (line {line})")
            if frame_id in seen:
                raise DataError(f"{path}: duplicate frame id {frame_id} (line {line})")
            seen.add(frame_id)
            samples = values.reshape(axis_count, frame_length).T.copy()
            samples.setflags(write=False)
            frames.append(Frame(frame_id, label, samples))

    class_count = max((f.label for f in frames), default=-1) + 1
    missing = sorted(set(range(class_count)) - {f.label for f in frames})
    if missing:
        raise DataError(f"{path}: classes {missing} have no frames")
    return Dataset(frames, class_count, axis_count, frame_length)


def write_dataset(path, frames, frame_length=None, axis_count=None):
    """Write frames in the CSV layout read by :func:`load_dataset`."""
    frames = list(frames)
    if frames:
        frame_length, axis_count = frames[0].samples.shape
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(sample_header(frame_length, axis_count))
        for f in frames:
            writer.writerow([f.id, f.label, *(repr(float(v)) for v in f.samples.T.ravel())])


def split_dataset(ds: Dataset, train_fraction: float, seed: int) -> Split:
    """Uniform random train/test split driven only by ``seed``.

    The permutation comes from :class:`~kernelfusion.rng.XorShift64Star`; the
    first ``floor(train_fraction * N)`` permuted frames form the training side.
    Both index lists are returned sorted so Gram rows follow file order.
    """
    n = len(ds)
    if n == 0:
        raise ConfigError("cannot split an empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = math.floor(train_fraction * n + 1e-9)
    if n_train == 0 or n_train == n:
        raise ConfigError(
            f"train_fraction {train_fraction} leaves an empty side for {n} frames"
        )
    order = XorShift64Star(seed).permutation(n)
    train = sorted(order[:n_train])
    test = sorted(order[n_train:])
    absent = set(range(ds.class_count)) - {ds.frames[i].label for i in train}
    if absent:
        warnings.warn(f"classes {sorted(absent)} are absent from the training split")
    return Split(train, test, seed, train_fraction)
