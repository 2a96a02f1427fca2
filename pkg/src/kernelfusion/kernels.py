"""Base Gram matrices, spectral PSD correction and sum-composition kernels."""

import csv
import itertools
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, DimensionError, NumericalError, ParameterError, VersionError
from .linalg import sym_eig
from .rng import XorShift64Star

KINDS = ("statistics", "shape", "correlation", "composition")
BASE_KINDS = KINDS[:3]
PSD_RTOL = 1e-8
DEFAULT_MAX_SHIFT = 50


@dataclass
class GramMatrix:
    K: np.ndarray
    kind: str
    psd_checked: bool = False
    source_ids: np.ndarray = None
    subset: tuple = ()  # 0-based base-kernel indices

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def mask(self):
        return sum(1 << i for i in self.subset)

    @property
    def label(self):
        return "+".join(str(i + 1) for i in self.subset) or self.kind


@dataclass
class KernelSet:
    members: list = field(default_factory=list)  # [(subset, GramMatrix)]
    M: int = 0

    @property
    def M_tilde(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, i):
        return self.members[i]


@dataclass(frozen=True)
class GaussianParams:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0 or not np.isfinite(self.gamma):
            raise ParameterError(f"gamma must be a positive finite number, got {self.gamma}")


def _symmetrize(k):
    return 0.5 * (k + k.T)


def min_eigenvalue_ok(K, rtol=PSD_RTOL, method="lapack"):
    w = sym_eig(K, method=method).eigenvalues
    return w[-1] >= -rtol * max(w[0], 0.0)


# --- Gaussian -----------------------------------------------------------------

def gaussian_block(X, Y, gamma):
    gamma = gamma.gamma if isinstance(gamma, GaussianParams) else float(gamma)
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    if X.shape[1] != Y.shape[1]:
        raise ConfigError(f"feature widths differ: {X.shape[1]} vs {Y.shape[1]}")
    return np.exp(-gamma * cdist(X, Y, "sqeuclidean"))


def gaussian_kernel(X, gamma, source_ids=None) -> GramMatrix:
    """``K_ij = exp(-gamma ||x_i - x_j||^2)`` on standardized features."""
    K = _symmetrize(gaussian_block(X, X, gamma))
    np.fill_diagonal(K, 1.0)
    return GramMatrix(K, "statistics", psd_checked=True, source_ids=source_ids)


def median_heuristic(X):
    """``1 / median`` of the nonzero pairwise squared distances."""
    d2 = cdist(X, X, "sqeuclidean")[np.triu_indices(len(X), 1)]
    d2 = d2[d2 > 0]
    return 1.0 / float(np.median(d2)) if d2.size else 1.0


def gamma_grid(X, exponents=range(-3, 4)):
    g0 = median_heuristic(X)
    return [g0 * 2.0**k for k in exponents]


def kfold_indices(n, folds, seed=0):
    order = XorShift64Star(seed).permutation(n)
    return [sorted(order[f::folds]) for f in range(folds)]


def centroid_accuracy(K_val_train, K_val_diag, K_train, y_train, y_val):
    """Accuracy of nearest-class-mean classification in the kernel feature space.

    Squared distance from ``phi(x)`` to the mean of class ``c`` is
    ``k(x, x) - 2 mean_i k(x, x_i) + mean_ij k(x_i, x_j)`` over class members.
    """
    classes = np.unique(y_train)
    dist = np.empty((len(y_val), len(classes)))
    for j, c in enumerate(classes):
        sel = y_train == c
        dist[:, j] = (
            K_val_diag
            - 2.0 * K_val_train[:, sel].mean(axis=1)
            + K_train[np.ix_(sel, sel)].mean()
        )
    pred = classes[np.argmin(dist, axis=1)]
    return float(np.mean(pred == y_val))


def select_gamma(X_train, y_train, grid=None, folds=5, seed=0) -> GaussianParams:
    """Pick the grid value with the best mean k-fold kernel-centroid accuracy.

    Ties go to the smaller gamma.  ``grid`` defaults to the median heuristic
    times ``2**k`` for ``k = -3..3``.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    if folds < 2:
        raise ParameterError(f"folds must be at least 2, got {folds}")
    grid = sorted(gamma_grid(X_train) if grid is None else grid)
    if not grid:
        raise ParameterError("gamma grid is empty")
    if len(grid) == 1:
        return GaussianParams(grid[0])
    splits = kfold_indices(len(X_train), folds, seed)
    best, best_score = grid[0], -np.inf
    for gamma in grid:
        K = gaussian_block(X_train, X_train, gamma)
        scores = []
        for val in splits:
            if not val:
                continue
            train = np.setdiff1d(np.arange(len(X_train)), val)
            scores.append(
                centroid_accuracy(
                    K[np.ix_(val, train)], np.ones(len(val)),
                    K[np.ix_(train, train)], y_train[train], y_train[val],
                )
            )
        score = float(np.mean(scores))
        if score > best_score:
            best, best_score = gamma, score
    return GaussianParams(best)


# --- Histogram intersection -------------------------------------------------------

def intersection_block(H, G):
    H = np.asarray(H, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if (H < 0).any() or (G < 0).any():
        raise DataError("histograms must be nonnegative")
    if H.shape[0] and G.shape[0] and H.shape[1] != G.shape[1]:
        raise ConfigError(f"histogram bin counts differ: {H.shape[1]} vs {G.shape[1]}")
    out = np.zeros((H.shape[0], G.shape[0]))
    for b in range(H.shape[1] if H.ndim == 2 else 0):
        out += np.minimum.outer(H[:, b], G[:, b])
    return out


def intersection_kernel(H, source_ids=None) -> GramMatrix:
    """``K_ij = sum_b min(H_ib, H_jb)``."""
    K = _symmetrize(intersection_block(H, H))
    return GramMatrix(K, "shape", psd_checked=True, source_ids=source_ids)


# --- Max-shift correlation -------------------------------------------------------

def _segment_stats(x, start, count):
    """Mean and centered norm of ``x[:, start:start+count]`` for every row."""
    seg = x[:, start : start + count]
    mean = seg.mean(axis=1)
    centered = seg - mean[:, None]
    return centered, np.sqrt(np.sum(centered * centered, axis=1))


def _max_abs_pearson(A, B, max_shift):
    """``max_s |corr(A_i shifted, B_j)|`` for 1-axis stacks ``A`` (P, L), ``B`` (Q, L).

    For shift ``s >= 0``, ``A_i[t + s]`` is paired with ``B_j[t]``; negative
    shifts pair ``A_i[t]`` with ``B_j[t - s]``.  Overlaps with zero variance
    contribute 0.
    """
    L = A.shape[1]
    best = np.zeros((A.shape[0], B.shape[0]))
    for s in range(-max_shift, max_shift + 1):
        count = L - abs(s)
        if count < 2:
            continue
        a_start, b_start = (s, 0) if s >= 0 else (0, -s)
        ac, an = _segment_stats(A, a_start, count)
        bc, bn = _segment_stats(B, b_start, count)
        denom = np.outer(an, bn)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(ac @ bc.T) / denom
        r[~(denom > 1e-12 * max(denom.max(initial=0.0), 1e-300))] = 0.0
        np.minimum(r, 1.0, out=r)
        np.maximum(best, r, out=best)
    return best


def correlation_block(X, Y, max_shift=DEFAULT_MAX_SHIFT):
    """Axis-averaged max-shift absolute Pearson correlation between frame stacks."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    if X.shape[1:] != Y.shape[1:]:
        raise ConfigError(f"frame shapes differ: {X.shape[1:]} vs {Y.shape[1:]}")
    L, A = X.shape[1], X.shape[2]
    if not 0 <= max_shift < L:
        raise ParameterError(f"max_shift must lie in [0, {L}), got {max_shift}")
    total = np.zeros((X.shape[0], Y.shape[0]))
    for a in range(A):
        total += _max_abs_pearson(X[:, :, a], Y[:, :, a], max_shift)
    return total / A


def correlation_matrix(X, max_shift=DEFAULT_MAX_SHIFT):
    """Uncorrected square correlation matrix ``R`` (unit diagonal for non-constant frames)."""
    X = np.asarray(X, dtype=np.float64)
    R = _symmetrize(correlation_block(X, X, max_shift))
    centered = X - X.mean(axis=1, keepdims=True)
    live = np.abs(centered).max(axis=1) > 0  # (N, A)
    np.fill_diagonal(R, live.mean(axis=1))
    return R


def correlation_kernel(X, max_shift=DEFAULT_MAX_SHIFT, source_ids=None, method="lapack") -> GramMatrix:
    """Max-shift correlation matrix followed by :func:`psd_correct`."""
    g = psd_correct(correlation_matrix(X, max_shift), method=method)
    return replace(g, source_ids=source_ids)


def psd_correct(R, kind="correlation", method="lapack") -> GramMatrix:
    """Zero the negative eigenvalues of a symmetric matrix and reconstruct it."""
    eig = sym_eig(R, method=method)
    lam = np.maximum(eig.eigenvalues, 0.0)
    K = eig.reconstruct(lam)
    K = _symmetrize(K)
    check = sym_eig(K, method=method).eigenvalues
    if check[-1] < -PSD_RTOL * max(check[0], 0.0):
        raise NumericalError(
            f"PSD correction left eigenvalue {check[-1]:.3e} (largest {check[0]:.3e})"
        )
    return GramMatrix(K, kind, psd_checked=True)


# --- Compositions and cross kernels ------------------------------------------------

def subsets(M):
    """Nonempty subsets of ``range(M)`` ordered by size, then lexicographically."""
    return [c for size in range(1, M + 1) for c in itertools.combinations(range(M), size)]


def compose(blocks, subset):
    out = np.array(blocks[subset[0]], dtype=np.float64, copy=True)
    for i in subset[1:]:
        out += blocks[i]
    return out


def enumerate_compositions(bases) -> KernelSet:
    """All ``2**M - 1`` elementwise sums of nonempty subsets of ``bases``."""
    bases = list(bases)
    if not bases:
        raise DimensionError("need at least one base kernel")
    n = bases[0].K.shape
    for g in bases:
        if g.K.shape != n:
            raise DimensionError(f"base kernel shapes differ: {g.K.shape} vs {n}")
    mats = [g.K for g in bases]
    members = []
    for sub in subsets(len(bases)):
        if len(sub) == 1:
            g = replace(bases[sub[0]], subset=sub)
        else:
            g = GramMatrix(compose(mats, sub), "composition",
                           psd_checked=all(bases[i].psd_checked for i in sub),
                           source_ids=bases[0].source_ids, subset=sub)
        members.append((sub, g))
    return KernelSet(members, len(bases))


def cross_kernel(train_side, test_side, kind, gamma=None, max_shift=DEFAULT_MAX_SHIFT):
    """Rectangular ``(N_test, N_train)`` block ``k(x_test_t, x_train_i)``.

    Representations are standardized statistics features, histograms, or
    ``(N, L, A)`` frame stacks depending on ``kind``.  Correlation blocks are not
    PSD-corrected.
    """
    if kind == "statistics":
        if gamma is None:
            raise ConfigError("statistics cross kernel needs gamma")
        return gaussian_block(test_side, train_side, gamma)
    if kind == "shape":
        return intersection_block(test_side, train_side)
    if kind == "correlation":
        return correlation_block(test_side, train_side, max_shift)
    raise ConfigError(f"unknown kernel kind {kind!r}")


# --- On-disk format ----------------------------------------------------------------

GRAM_MAGIC = b"KFGM"
GRAM_VERSION = 1
_HEADER = struct.Struct("<4sIQQII")  # magic, version, rows, cols, kind, subset mask


def write_gram(path, K, kind, mask):
    """Binary Gram file: little-endian header then row-major float64 values."""
    K = np.ascontiguousarray(K, dtype="<f8")
    rows, cols = K.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(GRAM_MAGIC, GRAM_VERSION, rows, cols, KINDS.index(kind), mask))
        fh.write(K.tobytes())


def read_gram(path):
    """Return ``(K, kind, mask)`` from a file written by :func:`write_gram`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated Gram header")
    magic, version, rows, cols, kind, mask = _HEADER.unpack_from(data)
    if magic != GRAM_MAGIC:
        raise DataError(f"{path}: not a Gram matrix file")
    if version != GRAM_VERSION:
        raise VersionError(f"{path}: Gram format version {version}, expected {GRAM_VERSION}")
    body = data[_HEADER.size :]
    if len(body) != rows * cols * 8:
        raise DataError(f"{path}: expected {rows}x{cols} values, found {len(body) // 8}")
    K = np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return K, KINDS[kind], mask


def export_gram_csv(path, K):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(K):
            writer.writerow(repr(float(v)) for v in row)
