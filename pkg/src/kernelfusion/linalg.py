"""Dense symmetric eigendecomposition and PCA.

Two eigensolvers are provided behind :func:`sym_eig`:

``"jacobi"``
    Cyclic Jacobi with round-robin (Brent-Luk) pair ordering.  Each round
    rotates ``n // 2`` disjoint index pairs at once, so a sweep is ``n - 1``
    vectorised updates instead of ``n (n - 1) / 2`` scalar ones.
``"lapack"``
    ``numpy.linalg.eigh`` (divide and conquer).  This is the default for the
    pipeline because Gram matrices reach a few thousand rows.

Both routes return eigenvalues in descending order and apply the same sign
convention: the largest-magnitude entry of every eigenvector is positive
(first such entry on ties).
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, VersionError

EIG_METHODS = ("lapack", "jacobi")
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns

    def reconstruct(self, eigenvalues=None):
        lam = self.eigenvalues if eigenvalues is None else eigenvalues
        q = self.eigenvectors
        out = (q * lam) @ q.T
        return 0.5 * (out + out.T)


def _check_symmetric(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix contains non-finite entries")
    scale = np.abs(a).max(initial=0.0)
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_RTOL * max(scale, 1.0):
        raise DimensionError("matrix is not symmetric")
    return a


def _round_robin(n):
    """Pair schedule covering every (p, q) once per sweep; ``-1`` marks a bye."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            p, q = np.array(pairs, dtype=np.intp).T
            rounds.append((p, q))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _off_norm(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return np.linalg.norm(off)


def jacobi_eig(a, tol=1e-15, max_sweeps=60):
    """Unsorted eigenpairs of a symmetric matrix by parallel-ordered Jacobi."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return np.diag(a).copy(), v
    rounds = _round_robin(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = _off_norm(a)
        if off <= tol * norm:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            app = a[p, p]
            aqq = a[q, q]
            with np.errstate(over="ignore", divide="ignore"):
                theta = (aqq - app) / (2.0 * np.where(active, apq, 1.0))
                t = 1.0 / (np.abs(theta) + np.hypot(1.0, theta))
            t = np.where(theta < 0.0, -t, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cols_p = a[:, p]
            cols_q = a[:, q]
            a[:, p] = cols_p * c - cols_q * s
            a[:, q] = cols_p * s + cols_q * c
            rows_p = a[p, :]
            rows_q = a[q, :]
            a[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            a[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    else:
        off = _off_norm(a)
        if off > tol * norm * 1e3:
            raise NumericalError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3e}, matrix norm {norm:.3e})"
            )
    return np.diag(a).copy(), v


def _canonical_signs(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(a, method="lapack") -> EigenDecomposition:
    """Eigendecomposition ``A = Q diag(w) Q^T`` with ``w`` descending.

    Raises :class:`NumericalError` if the solver fails to converge; the message
    carries the matrix condition estimate.
    """
    a = _check_symmetric(a)
    a = 0.5 * (a + a.T)
    if method == "jacobi":
        w, q = jacobi_eig(a)
    elif method == "lapack":
        try:
            w, q = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"eigensolver failed ({exc}); condition estimate {np.linalg.cond(a):.3e}"
            ) from exc
    else:
        raise ValueError(f"unknown eigen method {method!r}, expected one of {EIG_METHODS}")
    order = np.argsort(-w, kind="stable")
    w = w[order]
    q = _canonical_signs(q[:, order])
    return EigenDecomposition(w, q)


@dataclass
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (D, d)
    explained: np.ndarray  # (d,)
    rank: int

    @property
    def dim(self):
        return self.components.shape[1]

    @property
    def full_rank(self):
        return self.rank >= self.dim

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, mean=self.mean, components=self.components,
                 explained=self.explained, rank=np.array(self.rank))
        return PCA_MAGIC + struct.pack("<I", PCA_VERSION) + buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PcaModel":
        if blob[:4] != PCA_MAGIC:
            raise VersionError("not a PCA model blob")
        (version,) = struct.unpack("<I", blob[4:8])
        if version != PCA_VERSION:
            raise VersionError(f"PCA blob version {version} unsupported (expected {PCA_VERSION})")
        with np.load(io.BytesIO(blob[8:])) as z:
            return cls(z["mean"], z["components"], z["explained"], int(z["rank"]))


PCA_MAGIC = b"KFPC"
PCA_VERSION = 1


def pca_fit(x, d, method="lapack", rank_tol=1e-10) -> PcaModel:
    """Fit PCA with the 1/(N-1) sample covariance.

    When fewer than ``d`` directions carry variance (eigenvalue above
    ``rank_tol`` times the largest), the remaining components and their
    explained variances are zero and ``rank`` records how many are real.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D data matrix, got shape {x.shape}")
    n, dim = x.shape
    if n < 2:
        raise DimensionError("PCA needs at least two rows")
    if not 1 <= d <= min(n, dim):
        raise DimensionError(f"target dimension {d} outside [1, {min(n, dim)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    eig = sym_eig(0.5 * (cov + cov.T), method=method)
    w = eig.eigenvalues[:d]
    comps = eig.eigenvectors[:, :d].copy()
    top = max(eig.eigenvalues[0], 0.0)
    keep = w > rank_tol * top if top > 0 else np.zeros(d, dtype=bool)
    rank = int(keep.sum())
    comps[:, rank:] = 0.0
    explained = np.where(keep, w, 0.0)
    return PcaModel(mean, comps, explained, rank)


def pca_transform(model: PcaModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.mean.shape[0]:
        raise DimensionError(
            f"expected data of width {model.mean.shape[0]}, got shape {x.shape}"
        )
    return (x - model.mean) @ model.components
