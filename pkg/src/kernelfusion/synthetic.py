"""Synthetic multi-axis activity-like frames for smoke runs and acceptance tests.

Each class is a noisy 3-axis oscillation whose frequency, amplitude and
cross-axis coupling are drawn around class-specific centres.  The centres
overlap enough that no single statistic separates the classes cleanly:

* frequency centres sit 0.1 Hz apart, below the 0.2 Hz DFT resolution of a
  5 s frame, so they mostly show up through waveform alignment in the
  max-shift correlation kernel,
* amplitude drives the spread statistics of the statistics kernel,
* the phase lag between axes sets how strongly the magnitude series
  oscillates, which the time-delay shape kernel sees; amplitude and lag are
  ordered so their effects on the magnitude reinforce.
"""

import numpy as np

from .ingest import Dataset, Frame

# per class: (frequency Hz, amplitude, axis phase lag in radians)
CLASS_CENTRES = (
    (1.8, 1.0, 2.1),
    (1.9, 1.3, 1.05),
    (2.0, 1.6, 0.0),
)


def make_frame(rng, label, length=500, sampling_rate=100.0, centres=CLASS_CENTRES,
               jitter=(0.04, 0.15, 0.3), noise=0.3):
    f0, a0, lag0 = centres[label]
    freq = f0 + jitter[0] * rng.standard_normal()
    amp = a0 * np.exp(jitter[1] * rng.standard_normal())
    lag = lag0 + jitter[2] * rng.standard_normal()
    t = np.arange(length) / sampling_rate
    phase = rng.uniform(0, 2 * np.pi)
    base = 2 * np.pi * freq * t + phase
    harmonic = 0.3 * rng.standard_normal()
    x = np.empty((length, 3))
    for a in range(3):
        theta = base - a * lag
        x[:, a] = amp * (np.sin(theta) + harmonic * np.sin(2 * theta))
    x += noise * rng.standard_normal((length, 3))
    x[:, 2] += 1.0  # gravity on the vertical axis
    return x


def make_dataset(n_frames=600, n_classes=3, length=500, seed=0, **kwargs) -> Dataset:
    """Balanced synthetic dataset with labels cycling ``0, 1, ..., C-1``."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        label = i % n_classes
        samples = make_frame(rng, label, length, **kwargs)
        samples.setflags(write=False)
        frames.append(Frame(i, label, samples))
    return Dataset(frames, n_classes, 3, length)
