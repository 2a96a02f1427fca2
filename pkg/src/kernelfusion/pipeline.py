"""End-to-end orchestration: frames -> features -> kernels -> embeddings -> model."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig
from .embedding import embed_test, embed_train
from .errors import ConfigError, DataError, NumericalError
from .features import (Standardizer, distance_histogram, histogram_edges, shape_distances,
                       stat_matrix)
from .fusion import FusionModel, evaluate, train
from .ingest import Dataset, Split, split_dataset
from .kernels import (BASE_KINDS, GramMatrix, KernelSet, compose, correlation_kernel,
                      cross_kernel, enumerate_compositions, gaussian_kernel,
                      intersection_kernel, min_eigenvalue_ok, read_gram, select_gamma,
                      write_gram)
from .linalg import PcaModel

log = logging.getLogger(__name__)


@dataclass
class FrameFeatures:
    """Split-independent per-frame features: raw statistics and TDE pair distances."""

    stats: np.ndarray  # (N, 7A + 1)
    distances: list  # N arrays of pair distances


def compute_frame_features(ds: Dataset, cfg: RunConfig) -> FrameFeatures:
    samples = ds.samples()
    stats = stat_matrix(samples, cfg.sampling_rate)
    distances = [shape_distances(s, cfg.tau, cfg.tde_dim) for s in samples]
    return FrameFeatures(stats, distances)


@dataclass
class Preprocessor:
    """Everything needed to turn new frames into cross-kernel rows."""

    standardizer: Standardizer
    edges: np.ndarray
    gamma: float
    max_shift: int
    tau: int
    tde_dim: int
    sampling_rate: float
    train_stats: np.ndarray  # standardized
    train_hist: np.ndarray
    train_frames: np.ndarray  # (N_train, L, A)
    train_ids: np.ndarray

    def representations(self, samples, features: FrameFeatures = None):
        """Standardized statistics and shape histograms for an ``(N, L, A)`` stack."""
        if len(samples) == 0:
            return np.zeros((0, self.train_stats.shape[1])), np.zeros((0, len(self.edges) - 1))
        if features is None:
            raw = stat_matrix(samples, self.sampling_rate)
            dists = [shape_distances(s, self.tau, self.tde_dim) for s in samples]
        else:
            raw, dists = features.stats, features.distances
        stats = self.standardizer.transform(raw)
        hist = np.vstack([distance_histogram(d, self.edges) for d in dists])
        return stats, hist

    def cross_blocks(self, samples, features=None):
        """Base-kernel blocks ``(N_new, N_train)`` in statistics/shape/correlation order."""
        stats, hist = self.representations(samples, features)
        return [
            cross_kernel(self.train_stats, stats, "statistics", gamma=self.gamma),
            cross_kernel(self.train_hist, hist, "shape"),
            cross_kernel(self.train_frames, np.asarray(samples, dtype=np.float64).reshape(
                len(samples), *self.train_frames.shape[1:]), "correlation",
                max_shift=self.max_shift),
        ]

    def arrays(self):
        return {
            "prep.std_mean": self.standardizer.mean, "prep.std_scale": self.standardizer.scale,
            "prep.edges": self.edges, "prep.train_stats": self.train_stats,
            "prep.train_hist": self.train_hist, "prep.train_frames": self.train_frames,
            "prep.train_ids": self.train_ids,
        }

    def meta(self):
        return {"gamma": self.gamma, "max_shift": self.max_shift, "tau": self.tau,
                "tde_dim": self.tde_dim, "sampling_rate": self.sampling_rate}

    @classmethod
    def from_arrays(cls, arrays, meta):
        return cls(Standardizer(arrays["prep.std_mean"], arrays["prep.std_scale"]),
                   arrays["prep.edges"], meta["gamma"], meta["max_shift"], meta["tau"],
                   meta["tde_dim"], meta["sampling_rate"], arrays["prep.train_stats"],
                   arrays["prep.train_hist"], arrays["prep.train_frames"], arrays["prep.train_ids"])


@dataclass
class PreparedKernels:
    dataset: Dataset
    split: Split
    prep: Preprocessor
    kernel_set: KernelSet  # training Gram matrices, base kernels first
    cross: list  # (N_test, N_train) blocks aligned with kernel_set
    test_hist: np.ndarray = None
    test_stats: np.ndarray = None
    _embeddings: dict = field(default_factory=dict, repr=False)

    @property
    def y_train(self):
        return self.dataset.labels[self.split.train_indices]

    @property
    def y_test(self):
        return self.dataset.labels[self.split.test_indices]

    @property
    def class_count(self):
        return self.dataset.class_count

    def member_index(self, subset):
        for i, (sub, _) in enumerate(self.kernel_set):
            if tuple(sub) == tuple(subset):
                return i
        raise ConfigError(f"no kernel with subset {subset}")

    def embedding(self, i, d, method="lapack"):
        """Cached ``(Z_train, Z_test, pca)`` for kernel-set member ``i``."""
        key = (i, d, method)
        if key not in self._embeddings:
            sub, g = self.kernel_set[i]
            emb, pca = embed_train(g, d, kernel_id=g.mask, method=method)
            test = embed_test(self.cross[i], pca, kernel_id=g.mask)
            self._embeddings[key] = (emb.Z, test.Z, pca)
        return self._embeddings[key]


def prepare(ds: Dataset, cfg: RunConfig, features: FrameFeatures = None) -> PreparedKernels:
    """Split, featurize, select gamma and build every training and cross kernel."""
    split = split_dataset(ds, cfg.train_fraction, cfg.seed)
    if features is None:
        features = compute_frame_features(ds, cfg)
    tr, te = split.train_indices, split.test_indices
    y = ds.labels
    standardizer = Standardizer.fit(features.stats[tr])
    train_stats = standardizer.transform(features.stats[tr])
    test_stats = standardizer.transform(features.stats[te])
    edges = histogram_edges([features.distances[i] for i in tr], cfg.bins)
    hist = np.vstack([distance_histogram(d, edges) for d in features.distances])
    gamma = select_gamma(train_stats, y[tr], cfg.gamma_grid, cfg.gamma_folds, seed=cfg.seed)
    samples = ds.samples()
    ids = ds.ids
    prep = Preprocessor(standardizer, edges, gamma.gamma, cfg.max_shift, cfg.tau, cfg.tde_dim,
                        cfg.sampling_rate, train_stats, hist[tr], samples[tr], ids[tr])
    log.info("gamma=%.4g edges=[%.4g, %.4g]", gamma.gamma, edges[0], edges[-1])
    bases = [
        gaussian_kernel(train_stats, gamma, source_ids=ids[tr]),
        intersection_kernel(hist[tr], source_ids=ids[tr]),
        correlation_kernel(samples[tr], cfg.max_shift, source_ids=ids[tr], method=cfg.eig_method),
    ]
    cross = [
        cross_kernel(train_stats, test_stats, "statistics", gamma=gamma),
        cross_kernel(hist[tr], hist[te], "shape"),
        cross_kernel(samples[tr], samples[te], "correlation", max_shift=cfg.max_shift),
    ]
    kset = enumerate_compositions(bases)
    check_psd(kset, cfg.eig_method)
    cross_set = [compose(cross, sub) for sub, _ in kset]
    return PreparedKernels(ds, split, prep, kset, cross_set, hist[te], test_stats)


def check_psd(kset, method="lapack"):
    for sub, g in kset:
        if not min_eigenvalue_ok(g.K, method=method):
            raise NumericalError(f"kernel {g.label} failed the PSD check")


# --- persistence of prepared kernels ------------------------------------------------

def data_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def kernel_filename(i, sub):
    return f"k{i + 1:02d}_{'+'.join(str(j + 1) for j in sub)}"


def save_prepared(pk: PreparedKernels, directory, cfg: RunConfig, digest=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, ((sub, g), c) in enumerate(zip(pk.kernel_set, pk.cross)):
        stem = kernel_filename(i, sub)
        write_gram(directory / f"{stem}.gram", g.K, g.kind, g.mask)
        write_gram(directory / f"{stem}.cross", c, g.kind, g.mask)
        entries.append({"file": f"{stem}.gram", "cross": f"{stem}.cross", "kind": g.kind,
                        "subset": [j + 1 for j in sub], "mask": g.mask})
    manifest = {
        "format": 1,
        "M": pk.kernel_set.M,
        "M_tilde": pk.kernel_set.M_tilde,
        "kernels": entries,
        "fingerprint": cfg.feature_fingerprint(),
        "data_sha256": digest,
        "train_indices": list(map(int, pk.split.train_indices)),
        "test_indices": list(map(int, pk.split.test_indices)),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    checkpoint.save(directory / "preprocess.kfc", pk.prep.arrays(), pk.prep.meta())


def load_prepared(directory, ds: Dataset, cfg: RunConfig, digest=None) -> PreparedKernels:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest["fingerprint"] != cfg.feature_fingerprint() or (
        digest is not None and manifest["data_sha256"] not in (None, digest)
    ):
        raise ConfigError(f"{directory}: kernels were built with different data or settings; "
                          "re-run `kernelfusion kernels`")
    arrays, meta = checkpoint.load(directory / "preprocess.kfc")
    prep = Preprocessor.from_arrays(arrays, meta)
    split = Split(manifest["train_indices"], manifest["test_indices"], cfg.seed, cfg.train_fraction)
    members, cross = [], []
    for e in manifest["kernels"]:
        K, kind, mask = read_gram(directory / e["file"])
        C, _, _ = read_gram(directory / e["cross"])
        sub = tuple(j - 1 for j in e["subset"])
        members.append((sub, GramMatrix(K, kind, True, prep.train_ids, sub)))
        cross.append(C)
    return PreparedKernels(ds, split, prep, KernelSet(members, manifest["M"]), cross)


# --- variants --------------------------------------------------------------------

def resolve_single(name):
    """``single:statistics`` / ``single:2`` -> base index."""
    key = name.split(":", 1)[1]
    if key.isdigit():
        idx = int(key) - 1
    elif key in BASE_KINDS:
        idx = BASE_KINDS.index(key)
    else:
        raise ConfigError(f"unknown single kernel {key!r}; use one of {BASE_KINDS} or 1..3")
    if not 0 <= idx < len(BASE_KINDS):
        raise ConfigError(f"single kernel index {key} out of range")
    return idx


def variant_plan(variant, pk: PreparedKernels, cfg: RunConfig):
    """``(member indices, use_pca, kernel_keep_prob)`` for a named variant.

    ``a``: base kernels on raw Gram columns; ``b``: base kernels, PCA
    embeddings; ``c``: every composition kernel, PCA; ``proposed``: ``c`` plus
    kernel dropout; ``uniform``: the all-kernel sum alone through one tower (an
    in-repo stand-in for a uniform-weight MKL baseline); ``single:<k>``: one
    base kernel through one tower.
    """
    M = pk.kernel_set.M
    base = [pk.member_index((i,)) for i in range(M)]
    everything = list(range(pk.kernel_set.M_tilde))
    if variant == "a":
        return base, False, 1.0
    if variant == "b":
        return base, True, 1.0
    if variant == "c":
        return everything, True, 1.0
    if variant == "proposed":
        return everything, True, cfg.kernel_keep_prob
    if variant == "uniform":
        return [pk.member_index(tuple(range(M)))], True, 1.0
    if variant.startswith("single:"):
        return [base[resolve_single(variant)]], True, 1.0
    raise ConfigError(f"unknown variant {variant!r}")


@dataclass
class VariantResult:
    variant: str
    model: FusionModel
    report: object
    metrics: object
    members: list
    use_pca: bool


def variant_blocks(pk, members, use_pca, cfg):
    train_blocks, test_blocks, pcas = [], [], []
    for i in members:
        if use_pca:
            z_tr, z_te, pca = pk.embedding(i, cfg.embedding_dim, cfg.eig_method)
        else:
            z_tr, z_te, pca = pk.kernel_set[i][1].K, pk.cross[i], None
        train_blocks.append(z_tr)
        test_blocks.append(z_te)
        pcas.append(pca)
    return train_blocks, test_blocks, pcas


def run_variant(pk: PreparedKernels, cfg: RunConfig, variant=None, log_epoch=None) -> VariantResult:
    variant = variant or cfg.variant
    members, use_pca, keep = variant_plan(variant, pk, cfg)
    train_blocks, test_blocks, pcas = variant_blocks(pk, members, use_pca, cfg)
    labels = [pk.kernel_set[i][1].label for i in members]
    model = FusionModel([b.shape[1] for b in train_blocks], pk.class_count, cfg.tower,
                        kernel_keep_prob=keep, merge=cfg.merge, seed=cfg.seed, kernel_labels=labels)
    model.pcas = pcas
    report = train(model, train_blocks, pk.y_train, epochs=cfg.epochs, batch_size=cfg.batch_size,
                   seed=cfg.seed, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps,
                   pretrain_epochs=cfg.pretrain_epochs, log=log_epoch)
    metrics = evaluate(model, test_blocks, pk.y_test)
    report.test = metrics
    log.info("variant %s: balanced accuracy %.4f (%.1fs)", variant, metrics.balanced_accuracy,
             report.wall_time)
    return VariantResult(variant, model, report, metrics, members, use_pca)


def ablation_variants(M, include_uniform=False):
    rows = [f"single:{BASE_KINDS[i]}" for i in range(M)] + ["a", "b", "c", "proposed"]
    return rows + (["uniform"] if include_uniform else [])


def run_ablation(pk: PreparedKernels, cfg: RunConfig, include_uniform=False, variants=None):
    """Train every comparison variant on one split and seed.

    Returns a list of ``{"variant", "balanced_accuracy", "accuracy"}`` rows:
    the single base kernels, then (a), (b), (c) and the proposed model.
    """
    rows = []
    for v in variants or ablation_variants(pk.kernel_set.M, include_uniform):
        res = run_variant(pk, cfg, v)
        rows.append({"variant": v, "balanced_accuracy": res.metrics.balanced_accuracy,
                     "accuracy": res.metrics.accuracy})
    return rows


# --- model checkpoints -----------------------------------------------------------

def save_model(path, result: VariantResult, pk: PreparedKernels, cfg: RunConfig):
    model = result.model
    arrays = {f"model.{k}": v for k, v in model.state().items()}
    arrays.update(pk.prep.arrays())
    for m, pca in enumerate(model.pcas):
        if pca is not None:
            arrays[f"pca.{m}"] = np.frombuffer(pca.to_bytes(), dtype=np.uint8)
    meta = {
        "config": cfg.to_dict(),
        "variant": result.variant,
        "members": [list(pk.kernel_set[i][0]) for i in result.members],
        "use_pca": result.use_pca,
        "input_dims": model.input_dims,
        "n_classes": model.n_classes,
        "kernel_keep_prob": model.kernel_keep_prob,
        "kernel_labels": model.kernel_labels,
        "train_indices": list(map(int, pk.split.train_indices)),
        "test_indices": list(map(int, pk.split.test_indices)),
        "prep": pk.prep.meta(),
    }
    checkpoint.save(path, arrays, meta)


@dataclass
class LoadedModel:
    model: FusionModel
    prep: Preprocessor
    members: list
    use_pca: bool
    config: RunConfig
    meta: dict

    def blocks(self, samples):
        base = self.prep.cross_blocks(samples)
        blocks = []
        for m, sub in enumerate(self.members):
            c = compose(base, sub)
            blocks.append(embed_test(c, self.model.pcas[m]).Z if self.use_pca else c)
        return blocks


def load_model(path) -> LoadedModel:
    arrays, meta = checkpoint.load(path)
    cfg = RunConfig.from_dict(meta["config"])
    model = FusionModel(meta["input_dims"], meta["n_classes"], cfg.tower,
                        kernel_keep_prob=meta["kernel_keep_prob"], merge=cfg.merge,
                        seed=cfg.seed, kernel_labels=meta["kernel_labels"])
    model.load_state({k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")})
    model.pcas = [PcaModel.from_bytes(arrays[f"pca.{m}"].tobytes()) if f"pca.{m}" in arrays else None
                  for m in range(len(meta["input_dims"]))]
    prep = Preprocessor.from_arrays(arrays, meta["prep"])
    return LoadedModel(model, prep, [tuple(s) for s in meta["members"]], meta["use_pca"], cfg, meta)


def evaluate_checkpoint(path, ds: Dataset, split="test"):
    """Inference-only metrics of a saved model on ``ds`` (its test split, or every frame)."""
    lm = load_model(path)
    if split == "test":
        idx = lm.meta["test_indices"]
        if idx and max(idx) >= len(ds):
            raise DataError("dataset is smaller than the checkpoint's split; use --split all")
    elif split == "all":
        idx = list(range(len(ds)))
    else:
        raise ConfigError(f"split must be 'test' or 'all', got {split!r}")
    samples = ds.samples(idx)
    labels = ds.labels[idx] if idx else np.zeros(0, dtype=np.int64)
    if len(idx) == 0:
        return evaluate(lm.model, [], labels)
    return evaluate(lm.model, lm.blocks(samples), labels)
