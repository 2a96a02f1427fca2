"""Multiple-kernel fusion with dense kernel-column embeddings and kernel dropout."""

from .embedding import embed_test, embed_train
from .fusion import FusionModel, evaluate, fusion_forward, train
from .ingest import Dataset, Frame, load_dataset, split_dataset
from .kernels import (correlation_kernel, cross_kernel, enumerate_compositions, gaussian_kernel,
                      intersection_kernel, psd_correct, select_gamma)
from .linalg import pca_fit, pca_transform, sym_eig

__version__ = "0.1.0"
