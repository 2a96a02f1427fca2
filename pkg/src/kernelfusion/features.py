"""Per-frame representations behind the three base kernels.

* statistics: ``7 * A + 1`` scalar features per frame,
* shape: histogram of pairwise distances between points of the 3-D PCA
  projection of a time-delay embedding,
* correlation: the raw samples themselves (see :mod:`kernelfusion.kernels`).

Statistics layout, repeated for every axis ``a`` in order::

    mean, median, std, kurtosis, skewness, mean_crossing_rate, dominant_frequency

followed by one trailing ``total_acceleration`` column (mean Euclidean norm of
the per-timestep sample vector).
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DimensionError
from .linalg import pca_fit, pca_transform

STAT_NAMES = (
    "mean",
    "median",
    "std",
    "kurtosis",
    "skewness",
    "mean_crossing_rate",
    "dominant_frequency",
)
DEFAULT_TAU = 10
DEFAULT_DIM = 8
DEFAULT_BINS = 16


def stat_feature_names(axis_count):
    names = [f"ax{a}_{n}" for a in range(axis_count) for n in STAT_NAMES]
    return names + ["total_acceleration"]


def _degenerate(centered, x):
    scale = max(np.abs(x).max(initial=0.0), 1.0)
    return np.abs(centered).max(initial=0.0) <= 1e-12 * scale


def mean_crossing_rate(x):
    """Fraction of consecutive sample pairs that straddle the mean."""
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    if len(x) < 2 or _degenerate(d, x):
        return 0.0
    signs = np.sign(d)
    signs = signs[signs != 0]
    return float(np.count_nonzero(signs[1:] != signs[:-1])) / (len(x) - 1)


def dominant_frequency(x, sampling_rate):
    """Frequency (Hz) of the largest non-DC DFT magnitude of the mean-removed signal.

    Ties resolve to the lower frequency; a constant signal gives 0.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    if len(x) < 2 or _degenerate(d, x):
        return 0.0
    mag = np.abs(np.fft.rfft(d))
    mag[0] = 0.0
    k = int(np.argmax(mag))
    return k * sampling_rate / len(x)


def _moments(x):
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if _degenerate(d, x) or m2 == 0.0:
        return 0.0, 0.0, 0.0
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return float(np.sqrt(m2)), float(m3 / m2**1.5), float(m4 / m2**2 - 3.0)


def stat_features(samples, sampling_rate=100.0):
    """Statistics feature vector of one frame (``samples`` is ``(L, A)``).

    Standard deviation is the population value; skewness is the standardized
    third moment; kurtosis is excess kurtosis.  Zero-variance axes give zero
    skewness and kurtosis.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    length, axes = samples.shape
    if length < 4:
        raise DimensionError(f"statistics features need at least 4 samples, got {length}")
    out = np.empty(7 * axes + 1)
    for a in range(axes):
        x = samples[:, a]
        std, skew, kurt = _moments(x)
        out[7 * a : 7 * a + 7] = (
            x.mean(),
            np.median(x),
            std,
            kurt,
            skew,
            mean_crossing_rate(x),
            dominant_frequency(x, sampling_rate),
        )
    out[-1] = magnitude(samples).mean()
    return out


def magnitude(samples):
    """Per-timestep Euclidean norm across axes (total acceleration series)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        return np.abs(samples)
    return np.sqrt(np.sum(samples * samples, axis=1))


@dataclass(frozen=True)
class DelayEmbedding:
    O: np.ndarray  # (m, n); row t = [x_t, x_{t+tau}, ..., x_{t+(n-1)tau}]
    tau: int
    n: int

    @property
    def m(self):
        return self.O.shape[0]


def delay_embed(x, tau=DEFAULT_TAU, n=DEFAULT_DIM) -> DelayEmbedding:
    x = np.asarray(x, dtype=np.float64).ravel()
    if tau < 1 or n < 1:
        raise DimensionError(f"tau and n must be positive, got tau={tau}, n={n}")
    m = len(x) - (n - 1) * tau
    if m <= 0:
        raise DimensionError(
            f"series of length {len(x)} too short for tau={tau}, n={n}"
        )
    idx = np.arange(m)[:, None] + tau * np.arange(n)[None, :]
    return DelayEmbedding(x[idx], tau, n)


def project_3d(emb: DelayEmbedding, return_model=False):
    """Project centered delay vectors onto their top three principal directions.

    If the delay vectors span fewer than three directions, the missing
    coordinates are zero and the returned model's ``rank`` is below 3.
    """
    O = emb.O if isinstance(emb, DelayEmbedding) else np.asarray(emb, dtype=np.float64)
    m, n = O.shape
    if m < 3:
        raise DimensionError(f"need at least 3 delay vectors, got {m}")
    d = min(3, n)
    model = pca_fit(O, d)
    coords = pca_transform(model, O)
    if d < 3:
        coords = np.hstack([coords, np.zeros((m, 3 - d))])
    return (coords, model) if return_model else coords


def pair_distances(points):
    """All ``m (m - 1) / 2`` Euclidean distances between rows."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        raise DimensionError("need at least two points")
    return pdist(points)


def histogram_edges(distance_sets, bins=DEFAULT_BINS):
    """Equal-width bin edges spanning the global min/max over ``distance_sets``."""
    lo = min(float(np.min(d)) for d in distance_sets)
    hi = max(float(np.max(d)) for d in distance_sets)
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def distance_histogram(distances, edges):
    """L1-normalized histogram with out-of-range values clipped to the end bins.

    Bins are half-open ``[e_k, e_{k+1})`` except the last, which is closed.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise DimensionError("bin edges must be a strictly increasing vector")
    bins = len(edges) - 1
    idx = np.searchsorted(edges, distances, side="right") - 1
    idx = np.clip(idx, 0, bins - 1)
    h = np.bincount(idx, minlength=bins).astype(np.float64)
    return h / h.sum()


def shape_histogram(points, edges):
    return distance_histogram(pair_distances(points), edges)


def shape_distances(samples, tau=DEFAULT_TAU, n=DEFAULT_DIM):
    """TDE of the magnitude series, 3-D projection, then pair distances."""
    return pair_distances(project_3d(delay_embed(magnitude(samples), tau, n)))


def stat_matrix(frames_samples, sampling_rate=100.0):
    """Statistics features of every frame in an ``(N, L, A)`` stack."""
    rows = [stat_features(s, sampling_rate) for s in frames_samples]
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


class Standardizer:
    """Per-column z-scoring with statistics frozen from the training rows."""

    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            return x.reshape(0, len(self.mean))
        return (x - self.mean) / self.scale
