"""Online training, evaluation, grid search, and fold splitting.

Updates are strictly per example: forward, backward, clip, step, in
shuffle order, one document at a time.  Model selection keeps the
parameters of the epoch with the best dev accuracy.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, backward, cross_entropy
from .errors import ConfigError, DataError
from .optim import clip_gradient_norm, make_optimizer
from .rng import SeededRng

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    optimizer: str = "adam"
    clip_threshold: float = 5.0
    epochs: int = 30
    patience: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.clip_threshold <= 0.0:
            raise ConfigError(f"clip threshold must be positive, got {self.clip_threshold}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.patience < 0:
            raise ConfigError(f"patience must be non-negative, got {self.patience}")
        if self.optimizer.lower() not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; use sgd or adam")


@dataclass
class Metrics:
    """Evaluation counts plus, after training, the per-epoch curve."""

    accuracy: float
    correct: int
    count: int
    skipped: int = 0
    best_epoch: int = 0
    per_class: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "correct": self.correct,
            "count": self.count,
            "skipped": self.skipped,
            "best_epoch": self.best_epoch,
            "per_class": self.per_class,
            "curve": self.curve,
        }


def evaluate(model, docs) -> Metrics:
    """Accuracy of argmax predictions; deterministic, no dropout."""
    docs = list(docs)
    if not docs:
        raise ValueError("cannot evaluate on an empty dataset")
    per_class = {lab: {"gold": 0, "predicted": 0, "correct": 0} for lab in model.labels}
    correct = 0
    for doc in docs:
        problems = doc.validate(labels=model.label_index)
        if problems:
            raise DataError(f"document {doc.doc_id!r}: " + "; ".join(problems))
        predicted, _ = model.predict(doc)
        per_class[doc.label]["gold"] += 1
        per_class[predicted]["predicted"] += 1
        if predicted == doc.label:
            per_class[predicted]["correct"] += 1
            correct += 1
    return Metrics(accuracy=correct / len(docs), correct=correct,
                   count=len(docs), per_class=per_class)


def train_one_example(model, doc, optimizer, rng, clip_threshold: float = 5.0) -> float:
    """One online update: forward, cross-entropy, backward, clip, step."""
    tape = Tape()
    probs, _ = model.forward(doc, tape, training=True, rng=rng)
    loss = cross_entropy(tape, probs, model.label_index[doc.label])
    backward(tape, loss)
    clip_gradient_norm(model.params, clip_threshold)
    optimizer.step(model.params)
    return float(loss.data)


def train(model, train_docs, dev_docs, config: TrainingConfig) -> Metrics:
    """Online training with per-epoch selection on dev accuracy.

    The model is left holding the parameters of the best epoch.  Training
    stops early once `patience` consecutive epochs fail to improve dev
    accuracy; patience 0 therefore stops after the first epoch.  Invalid
    training documents are skipped with a warning and counted.
    """
    config.validate()
    train_docs, dev_docs = list(train_docs), list(dev_docs)
    if not train_docs:
        raise ValueError("cannot train on an empty training set")
    if not dev_docs:
        raise ValueError("cannot train without a dev set")
    usable = []
    skipped = 0
    for doc in train_docs:
        problems = doc.validate(labels=model.label_index)
        if problems:
            log.warning("skipping document %r: %s", doc.doc_id, "; ".join(problems))
            skipped += 1
        else:
            usable.append(doc)
    if not usable:
        raise ValueError("no usable training documents")

    run_rng = SeededRng(config.seed)
    shuffle_rng = run_rng.derive("shuffle")
    dropout_rng = run_rng.derive("dropout")
    optimizer = make_optimizer(config.optimizer, config.learning_rate)

    best_metrics = None
    best_snapshot = None
    best_epoch = 0
    curve = []
    without_improvement = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(usable))
        losses = [train_one_example(model, usable[int(i)], optimizer, dropout_rng,
                                    config.clip_threshold)
                  for i in order]
        train_accuracy = evaluate(model, usable).accuracy
        dev_metrics = evaluate(model, dev_docs)
        curve.append({"epoch": epoch,
                      "mean_loss": float(np.mean(losses)),
                      "train_accuracy": train_accuracy,
                      "dev_accuracy": dev_metrics.accuracy})
        if best_metrics is None or dev_metrics.accuracy > best_metrics.accuracy:
            best_metrics = dev_metrics
            best_snapshot = model.params.snapshot()
            best_epoch = epoch
            without_improvement = 0
        else:
            without_improvement += 1
        if without_improvement >= config.patience:
            break
    model.params.restore(best_snapshot)
    best_metrics.curve = curve
    best_metrics.skipped = skipped
    best_metrics.best_epoch = best_epoch
    return best_metrics


DEFAULT_GRID = {
    "word_dim": [32, 48, 64, 128, 256],
    "hidden_dim": [32, 48, 64, 128, 256],
    "learning_rate": [0.1, 0.01, 0.001],
    "optimizer": ["sgd", "adam"],
}


def grid_search(build_model, train_docs, dev_docs, config: TrainingConfig,
                grid=None, master_seed: int = 0):
    """Train one model per grid cell and rank cells by dev accuracy.

    build_model(word_dim, hidden_dim, rng) must return a fresh model.
    Each cell's seed is derived from the master seed and the cell's own
    hyperparameters, never from its position, so reordering or pruning
    the grid cannot change any cell's result.  A cell that raises is
    recorded with its error and ranked last.  Ties break toward smaller
    hidden_dim, then smaller word_dim, then enumeration order.

    Returns (results ranked best first, best model, best model's metrics).
    """
    spec = dict(DEFAULT_GRID)
    if grid:
        unknown = sorted(set(grid) - set(spec))
        if unknown:
            raise ConfigError(f"unknown grid keys {unknown}")
        for key, values in grid.items():
            if not isinstance(values, (list, tuple)):
                raise ConfigError(f"grid key {key!r} must be a list of values")
        spec.update({k: list(v) for k, v in grid.items()})
    for key, values in spec.items():
        if not values:
            raise ConfigError(f"grid key {key!r} has no values")
    cells = list(itertools.product(spec["word_dim"], spec["hidden_dim"],
                                   spec["learning_rate"], spec["optimizer"]))
    master = SeededRng(master_seed)
    results = []
    best = None  # (sort key, model, metrics)
    for position, (word_dim, hidden_dim, lr, optimizer) in enumerate(cells):
        cell_rng = master.derive("grid", f"d={word_dim}", f"h={hidden_dim}",
                                 f"lr={lr!r}", f"opt={optimizer}")
        cell_config = replace(config, learning_rate=lr, optimizer=optimizer,
                              seed=cell_rng.derive("train").seed)
        entry = {"word_dim": word_dim, "hidden_dim": hidden_dim,
                 "learning_rate": lr, "optimizer": optimizer,
                 "dev_accuracy": None, "epochs_run": 0, "error": None}
        try:
            cell_model = build_model(word_dim, hidden_dim, cell_rng.derive("model"))
            metrics = train(cell_model, train_docs, dev_docs, cell_config)
            entry["dev_accuracy"] = metrics.accuracy
            entry["epochs_run"] = len(metrics.curve)
            key = (-metrics.accuracy, hidden_dim, word_dim, position)
            if best is None or key < best[0]:
                best = (key, cell_model, metrics)
        except (ConfigError, DataError, ValueError) as exc:
            log.warning("grid cell d=%s h=%s lr=%s %s failed: %s",
                        word_dim, hidden_dim, lr, optimizer, exc)
            entry["error"] = str(exc)
        results.append(entry)

    def rank(pair):
        position, entry = pair
        if entry["error"] is not None:
            return (1, 0.0, entry["hidden_dim"], entry["word_dim"], position)
        return (0, -entry["dev_accuracy"], entry["hidden_dim"], entry["word_dim"], position)

    ranked = [entry for _, entry in sorted(enumerate(results), key=rank)]
    if best is None:
        raise ConfigError("every grid cell failed")
    return ranked, best[1], best[2]


def kfold_split(docs, k: int, seed: int = 0) -> list:
    """Shuffle once with the seed, then cut k near-equal contiguous folds.

    Returns [(train_docs, test_docs), ...], one pair per fold.  Every
    document appears in exactly one test fold, and fold sizes differ by
    at most one.
    """
    docs = list(docs)
    n = len(docs)
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the dataset size {n}")
    order = [docs[int(i)] for i in SeededRng(seed).derive("kfold").permutation(n)]
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[start:start + size])
        start += size
    return [(list(itertools.chain(*(folds[:i] + folds[i + 1:]))), folds[i])
            for i in range(k)]
