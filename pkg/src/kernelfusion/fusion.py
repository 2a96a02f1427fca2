"""Per-kernel towers fused by a softmax layer with kernel dropout.

In training, each kernel's tower output ``r_m`` is kept with probability ``p``
(``t_m ~ Bernoulli(p)``), kept outputs are scaled by ``1 / p`` and dropped
ones are zero-filled, so the concatenated fusion input keeps a fixed width.
Masks with every kernel dropped are redrawn.  Inference uses every kernel
unscaled.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError
from .net import Adam, Dense, TowerConfig, build_tower, softmax, softmax_xent

MERGE_MODES = ("concat", "sum", "mean")


def draw_kernel_mask(rng, count, keep_prob):
    """Bernoulli(keep_prob) flags for ``count`` kernels, redrawn while all zero."""
    if keep_prob >= 1.0:
        return np.ones(count, dtype=bool)
    while True:
        t = rng.random(count) < keep_prob
        if t.any():
            return t


class FusionModel:
    """One tower per kernel embedding plus a dense softmax fusion layer.

    Parameters
    ----------
    input_dims : sequence of int
        Embedding width of each kernel, in kernel-set order.
    n_classes : int
    tower : TowerConfig
    kernel_keep_prob : float
        Probability ``p`` that a kernel's representation survives a training step.
    merge : {"concat", "sum", "mean"}
    seed : int
        Seeds the weight initialisation.
    """

    def __init__(self, input_dims, n_classes, tower=None, kernel_keep_prob=0.6,
                 merge="concat", seed=0, kernel_labels=None):
        tower = tower or TowerConfig()
        if not 0.0 < kernel_keep_prob <= 1.0:
            raise ConfigError(f"kernel_keep_prob must lie in (0, 1], got {kernel_keep_prob}")
        if merge not in MERGE_MODES:
            raise ConfigError(f"merge must be one of {MERGE_MODES}, got {merge!r}")
        self.input_dims = [int(d) for d in input_dims]
        self.n_classes = int(n_classes)
        self.tower_config = tower
        self.kernel_keep_prob = float(kernel_keep_prob)
        self.merge = merge
        self.seed = seed
        self.kernel_labels = list(kernel_labels or [str(i) for i in range(len(self.input_dims))])
        init_rng = np.random.default_rng([seed, 0])
        self.towers = [
            build_tower(d, tower, init_rng, name=f"tower[{self.kernel_labels[m]}]")
            for m, d in enumerate(self.input_dims)
        ]
        width = tower.sizes[-1]
        fused = width * len(self.towers) if merge == "concat" else width
        self.head = Dense(fused, self.n_classes, init_rng, name="fusion")
        self.pcas = []

    @property
    def M_tilde(self):
        return len(self.towers)

    @property
    def fusion_width(self):
        return self.head.W.shape[1]

    def parameters(self):
        params = [p for t in self.towers for _, _, p in t.parameters()]
        return params + [self.head.W, self.head.b]

    def _check_blocks(self, blocks):
        if len(blocks) != self.M_tilde:
            raise DimensionError(f"expected {self.M_tilde} embedding blocks, got {len(blocks)}")
        n = blocks[0].shape[0]
        for m, (b, d) in enumerate(zip(blocks, self.input_dims)):
            if b.shape != (n, d):
                raise DimensionError(
                    f"kernel {self.kernel_labels[m]}: expected block ({n}, {d}), got {b.shape}"
                )
        return n

    def forward(self, blocks, train=False, rng=None, mask=None):
        """Logits and a backward cache.

        ``mask`` overrides the kernel-dropout draw (boolean, one flag per kernel).
        Towers whose flag is off are skipped and contribute zeros.
        """
        n = self._check_blocks(blocks)
        if mask is None:
            mask = (draw_kernel_mask(rng, self.M_tilde, self.kernel_keep_prob)
                    if train else np.ones(self.M_tilde, dtype=bool))
        mask = np.asarray(mask, dtype=bool)
        scale = 1.0 / self.kernel_keep_prob if train else 1.0
        width = self.tower_config.sizes[-1]
        reps, caches = [], []
        for m, tower in enumerate(self.towers):
            if not mask[m]:
                reps.append(np.zeros((n, width)))
                caches.append(None)
                continue
            r, cache = tower.forward(blocks[m], train, rng)
            reps.append(r * scale if scale != 1.0 else r)
            caches.append(cache)
        if self.merge == "concat":
            fused = np.concatenate(reps, axis=1)
        else:
            fused = np.sum(reps, axis=0)
            if self.merge == "mean":
                fused = fused / self.M_tilde
        logits, head_cache = self.head.forward(fused)
        if not np.all(np.isfinite(logits)):
            bad = [self.kernel_labels[m] for m, r in enumerate(reps) if not np.all(np.isfinite(r))]
            raise NumericalError(f"non-finite fusion logits (kernels {bad or 'none'} non-finite)")
        return logits, (mask, scale, caches, head_cache)

    def backward(self, cache, dlogits):
        """Gradients in :meth:`parameters` order; dropped towers get zeros."""
        mask, scale, caches, head_cache = cache
        dfused, head_grads = self.head.backward(head_cache, dlogits)
        width = self.tower_config.sizes[-1]
        grads = []
        for m, tower in enumerate(self.towers):
            if not mask[m]:
                grads.extend(np.zeros_like(p) for _, _, p in tower.parameters())
                continue
            if self.merge == "concat":
                dr = dfused[:, m * width : (m + 1) * width]
            else:
                dr = dfused / self.M_tilde if self.merge == "mean" else dfused
            _, layer_grads = tower.backward(caches[m], dr * scale)
            grads.extend(g[k] for g, layer in zip(layer_grads, tower.layers) for k in layer.params)
        return grads + [head_grads["W"], head_grads["b"]]

    def predict_proba(self, blocks, batch_size=1024):
        n = self._check_blocks(blocks) if blocks else 0
        if n == 0:
            return np.zeros((0, self.n_classes))
        out = []
        for s in range(0, n, batch_size):
            logits, _ = self.forward([b[s : s + batch_size] for b in blocks], train=False)
            out.append(softmax(logits))
        return np.vstack(out)

    def state(self):
        out = {}
        for m, tower in enumerate(self.towers):
            out.update(tower.state(f"tower{m}"))
        out["head.W"] = self.head.W
        out["head.b"] = self.head.b
        return out

    def load_state(self, state):
        for m, tower in enumerate(self.towers):
            tower.load_state(f"tower{m}", state)
        self.head.W[...] = state["head.W"]
        self.head.b[...] = state["head.b"]


def fusion_forward(model, blocks, train=False, rng=None, mask=None):
    """Class probabilities from one forward pass."""
    logits, _ = model.forward(blocks, train=train, rng=rng, mask=mask)
    return softmax(logits)


@dataclass
class Metrics:
    balanced_accuracy: float
    accuracy: float
    per_class_recall: list
    confusion: np.ndarray
    absent_classes: list
    n: int

    def as_dict(self):
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "accuracy": self.accuracy,
            "n": self.n,
            "absent_classes": self.absent_classes,
            "per_class_recall": self.per_class_recall,
        }


def confusion_matrix(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.intp), np.asarray(y_pred, dtype=np.intp)), 1)
    return cm


def score(y_true, y_pred, n_classes) -> Metrics:
    """Balanced accuracy: mean recall over the classes present in ``y_true``."""
    cm = confusion_matrix(y_true, y_pred, n_classes)
    support = cm.sum(axis=1)
    present = support > 0
    recall = [float(cm[c, c] / support[c]) if present[c] else float("nan") for c in range(n_classes)]
    n = int(support.sum())
    balanced = float(np.mean([r for r, p in zip(recall, present) if p])) if n else float("nan")
    accuracy = float(np.trace(cm) / n) if n else float("nan")
    absent = [c for c in range(n_classes) if not present[c]]
    return Metrics(balanced, accuracy, recall, cm, absent, n)


def evaluate(model, blocks, labels) -> Metrics:
    """Inference-mode metrics (no dropout of any kind, batch-norm running stats)."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        return score(labels, labels, model.n_classes)
    pred = np.argmax(model.predict_proba(blocks), axis=1)
    return score(labels, pred, model.n_classes)


@dataclass
class TrainReport:
    """Per-epoch history; row 0 is the untrained model."""

    epochs: list = field(default_factory=list)  # dicts: epoch, loss, accuracy, batch_loss
    wall_time: float = 0.0
    test: Metrics = None

    @property
    def losses(self):
        return [e["loss"] for e in self.epochs]

    @property
    def confusion(self):
        return None if self.test is None else self.test.confusion


def _pretrain_towers(model, blocks, labels, epochs, batch_size, rng, lr):
    """Fit each tower with its own throwaway softmax head before joint training."""
    n = len(labels)
    for m, tower in enumerate(model.towers):
        head = Dense(model.tower_config.sizes[-1], model.n_classes, rng, name="pretrain")
        params = [p for _, _, p in tower.parameters()] + [head.W, head.b]
        opt = Adam(lr=lr)
        for _ in range(epochs):
            order = rng.permutation(n)
            for s in range(0, n, batch_size):
                idx = order[s : s + batch_size]
                r, caches = tower.forward(blocks[m][idx], True, rng)
                logits, hc = head.forward(r)
                _, dlogits = softmax_xent(logits, labels[idx])
                dr, hg = head.backward(hc, dlogits)
                _, layer_grads = tower.backward(caches, dr)
                grads = [g[k] for g, layer in zip(layer_grads, tower.layers) for k in layer.params]
                opt.step(params, grads + [hg["W"], hg["b"]])


def train(model, blocks, labels, epochs=100, batch_size=128, seed=0, lr=1e-3,
          betas=(0.9, 0.999), eps=1e-8, pretrain_epochs=0, log=None) -> TrainReport:
    """Joint mini-batch Adam training of every tower and the fusion layer.

    Mini-batches are reshuffled each epoch from ``seed``.  Each report row's
    ``loss``/``accuracy`` are the full training set's cross-entropy and
    accuracy in inference mode after that epoch (row 0: before training);
    ``batch_loss`` is the sample-weighted mean over the epoch's
    training-mode mini-batches, dropout included.
    """
    labels = np.asarray(labels, dtype=np.intp)
    blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
    n = model._check_blocks(blocks)
    rng = np.random.default_rng([seed, 1])
    report = TrainReport()
    start = time.perf_counter()

    def inference_row(epoch, batch_loss):
        probs = model.predict_proba(blocks)
        loss = -float(np.mean(np.log(np.maximum(probs[np.arange(n), labels], 1e-300))))
        return {"epoch": epoch, "loss": loss, "accuracy": float(np.mean(probs.argmax(axis=1) == labels)),
                "batch_loss": batch_loss}

    report.epochs.append(inference_row(0, float("nan")))
    if pretrain_epochs:
        _pretrain_towers(model, blocks, labels, pretrain_epochs, batch_size, rng, lr)

    opt = Adam(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
    params = model.parameters()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        for s in range(0, n, batch_size):
            idx = order[s : s + batch_size]
            logits, cache = model.forward([b[idx] for b in blocks], train=True, rng=rng)
            loss, dlogits = softmax_xent(logits, labels[idx])
            if not np.isfinite(loss):
                raise NumericalError(
                    f"training diverged at epoch {epoch}, batch starting {s}: loss {loss}"
                )
            opt.step(params, model.backward(cache, dlogits))
            total_loss += loss * len(idx)
        row = inference_row(epoch, total_loss / n)
        report.epochs.append(row)
        if log is not None:
            log(row)
    report.wall_time = time.perf_counter() - start
    return report
