"""Dense embeddings from kernel columns.

Sample ``j`` of the training set is represented by column ``j`` of its Gram
matrix, i.e. its similarities to every training sample.  A PCA fitted on those
training columns maps them to ``d`` dimensions.  A test sample's vector is its
row of the cross kernel (similarities *to* the training samples), projected
through the same PCA.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import PcaModel, pca_fit, pca_transform

DEFAULT_EMBED_DIM = 500


@dataclass
class EmbeddingMatrix:
    Z: np.ndarray  # (N, d)
    kernel_id: int  # subset mask
    pca: PcaModel = None

    @property
    def dim(self):
        return self.Z.shape[1]


def embed_train(K, d=DEFAULT_EMBED_DIM, kernel_id=0, method="lapack"):
    """Fit PCA on the training Gram columns; returns ``(EmbeddingMatrix, PcaModel)``."""
    K = getattr(K, "K", K)
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"training Gram must be square, got {K.shape}")
    n = K.shape[0]
    if d > n:
        warnings.warn(f"embedding dimension {d} clipped to the {n} training samples")
        d = n
    columns = K.T
    pca = pca_fit(columns, d, method=method)
    return EmbeddingMatrix(pca_transform(pca, columns), kernel_id, pca), pca


def embed_test(C, pca: PcaModel, kernel_id=0) -> EmbeddingMatrix:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise DimensionError(f"cross kernel must be 2-D, got {C.shape}")
    if C.shape[0] == 0:
        return EmbeddingMatrix(np.zeros((0, pca.dim)), kernel_id, pca)
    if C.shape[1] != pca.mean.shape[0]:
        raise DimensionError(
            f"cross kernel has {C.shape[1]} columns, PCA expects {pca.mean.shape[0]}"
        )
    return EmbeddingMatrix(pca_transform(pca, C), kernel_id, pca)
