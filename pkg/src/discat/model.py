"""The document model: recursive composition over a dependency discourse tree.

Four variants share one EDU encoder and one softmax classifier:

  full       bottom-up composition with a relation-specific matrix and a
             per-arc gate on every child
  unlabeled  the same composition with the relation matrices dropped
  root       the root EDU's encoder vector stands for the document
  additive   the unweighted mean of all EDU vectors; structure is ignored

The per-arc gate is a sigmoid of a bilinear score between the parent's
encoder vector and the child's subtree vector, so the weight on one arc
never depends on the node's other children and the weights on siblings
need not sum to one.  A normalized mode replaces the gates of a node's
children with a softmax over their bilinear scores.
"""

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, add, average, default_dtype, dot, dropout_mask,
                       matvec, mul, pick, scale, set_default_dtype, sigmoid,
                       softmax, stack_scalars, tanh)
from .encoder import LstmParams, encode_edu, init_lstm_arrays, uniform_init
from .errors import ConfigError, DataError
from .optim import ParameterStore
from . import textprep
from .textprep import Vocabulary
from .trees import RelationVocabulary

VARIANTS = ("full", "unlabeled", "root", "additive")
ATTENTION_MODES = ("unnormalized", "normalized")

CHECKPOINT_FORMAT = "discourse-document-model"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "full"
    attention: str = "unnormalized"
    word_dim: int = 32
    hidden_dim: int = 32
    dropout: float = 0.3
    freeze_embeddings: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(
                f"unknown attention mode {self.attention!r}; choose from {ATTENTION_MODES}")
        if self.word_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("word_dim and hidden_dim must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class AttentionRecord:
    """One composed arc: child fed into parent with this gate weight."""

    parent: int
    child: int
    relation: str
    weight: float


def attention_weight(tape, parent_e, child_t, attention_w):
    """Per-arc gate in (0, 1): sigmoid of the bilinear score e' W t."""
    return sigmoid(tape, dot(tape, parent_e, matvec(tape, attention_w, child_t)))


def normalized_attention(tape, parent_e, child_ts, attention_w):
    """Softmax over the children's bilinear scores t' (W e); sums to one."""
    if not child_ts:
        raise ValueError("no children to attend over")
    projected = matvec(tape, attention_w, parent_e)
    scores = stack_scalars(tape, [dot(tape, t, projected) for t in child_ts])
    return softmax(tape, scores)


def compose_full(tape, parent_e, children, relation_ws):
    """tanh of the parent vector plus gated, relation-transformed children.

    children is a list of (child_vector, relation_index, gate) triples.
    """
    acc = parent_e
    for child_t, rel_idx, gate in children:
        if not 0 <= rel_idx < len(relation_ws):
            raise LookupError(f"no composition matrix for relation index {rel_idx}")
        acc = add(tape, acc, scale(tape, gate, matvec(tape, relation_ws[rel_idx], child_t)))
    return tanh(tape, acc)


def compose_unlabeled(tape, parent_e, children):
    """tanh of the parent vector plus gated children, no relation matrices.

    children is a list of (child_vector, gate) pairs.
    """
    acc = parent_e
    for child_t, gate in children:
        acc = add(tape, acc, scale(tape, gate, child_t))
    return tanh(tape, acc)


def _postorder(children, root):
    order = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for child in reversed(children[node]):
            stack.append((child, False))
    return order


class _FrozenRows:
    """Embedding rows served as constants, kept out of the gradient."""

    def __init__(self, matrix):
        self.matrix = matrix

    def row(self, tape, idx):
        return Tensor(self.matrix[idx])


class DiscourseModel:
    """Encoder, composition, and classifier over dependency discourse trees."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 relations: RelationVocabulary, labels, rng, embeddings=None):
        config.validate()
        labels = list(labels)
        if not labels:
            raise ConfigError("the model needs at least one label")
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate labels")
        arrays = _initial_arrays(config, len(vocab), len(relations), len(labels),
                                 rng, embeddings)
        self._wire(config, vocab, relations, labels, arrays)

    @classmethod
    def from_arrays(cls, config, vocab, relations, labels, arrays):
        model = cls.__new__(cls)
        model._wire(config, vocab, relations, list(labels), arrays)
        return model

    def _wire(self, config, vocab, relations, labels, arrays) -> None:
        self.config = config
        self.vocab = vocab
        self.relations = relations
        self.labels = labels
        self.label_index = {lab: i for i, lab in enumerate(labels)}
        self.params = ParameterStore()
        self._frozen_embeddings = None
        if config.freeze_embeddings:
            self._frozen_embeddings = np.asarray(arrays["embeddings"], dtype=default_dtype())
            self.embeddings = None
        else:
            self.embeddings = self.params.register("embeddings", arrays["embeddings"])
        self.lstm_fwd = LstmParams(self.params.register("lstm_fwd_w", arrays["lstm_fwd_w"]),
                                   self.params.register("lstm_fwd_u", arrays["lstm_fwd_u"]),
                                   self.params.register("lstm_fwd_b", arrays["lstm_fwd_b"]))
        self.lstm_bwd = LstmParams(self.params.register("lstm_bwd_w", arrays["lstm_bwd_w"]),
                                   self.params.register("lstm_bwd_u", arrays["lstm_bwd_u"]),
                                   self.params.register("lstm_bwd_b", arrays["lstm_bwd_b"]))
        self.attention_w = None
        self.relation_ws = []
        if config.variant in ("full", "unlabeled"):
            self.attention_w = self.params.register("attention_w", arrays["attention_w"])
        if config.variant == "full":
            self.relation_ws = [self.params.register(f"relation_w_{i}", arrays[f"relation_w_{i}"])
                                for i in range(len(relations))]
        self.classifier_w = self.params.register("classifier_w", arrays["classifier_w"])
        self.classifier_b = self.params.register("classifier_b", arrays["classifier_b"])

    # ----- forward ---------------------------------------------------

    def _embedding_rows(self):
        if self.embeddings is not None:
            return self.embeddings
        return _FrozenRows(self._frozen_embeddings)

    def forward(self, doc, tape=None, training: bool = False, rng=None):
        """Class probabilities and per-arc gate records for one document."""
        problems = doc.validate(require_label=False)
        if problems:
            raise DataError(f"document {doc.doc_id!r}: " + "; ".join(problems))
        cfg = self.config
        rows = self._embedding_rows()
        e = [encode_edu(tape, textprep.encode(tokens, self.vocab), rows,
                        self.lstm_fwd, self.lstm_bwd,
                        dropout_p=cfg.dropout, rng=rng, training=training)
             for tokens in doc.edus]
        t_root, records = self._document_vector(tape, doc, e)
        probs = self._classify(tape, t_root, training, rng)
        return probs, records

    def _document_vector(self, tape, doc, e):
        cfg = self.config
        tree = doc.dependency()
        root = tree.root
        if cfg.variant == "root":
            return e[root], []
        if cfg.variant == "additive":
            return average(tape, e), []
        children = tree.children()
        rel_index = [None if rel is None else self.relations.index_for(rel)
                     for rel in doc.relations]
        t = [None] * len(e)
        records = []
        for i in _postorder(children, root):
            kids = children[i]
            if kids and cfg.attention == "normalized":
                gates_vec = normalized_attention(tape, e[i], [t[j] for j in kids],
                                                 self.attention_w)
                gates = [pick(tape, gates_vec, k) for k in range(len(kids))]
            else:
                gates = [attention_weight(tape, e[i], t[j], self.attention_w)
                         for j in kids]
            if cfg.variant == "full":
                t[i] = compose_full(tape, e[i],
                                    [(t[j], rel_index[j], g) for j, g in zip(kids, gates)],
                                    self.relation_ws)
            else:
                t[i] = compose_unlabeled(tape, e[i],
                                         [(t[j], g) for j, g in zip(kids, gates)])
            records.extend(AttentionRecord(parent=i, child=j, relation=doc.relations[j],
                                           weight=float(g.data))
                           for j, g in zip(kids, gates))
        return t[root], records

    def _classify(self, tape, t_root, training, rng):
        if training and self.config.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            t_root = mul(tape, t_root, dropout_mask(rng, t_root.shape, self.config.dropout))
        logits = add(tape, matvec(tape, self.classifier_w, t_root), self.classifier_b)
        return softmax(tape, logits)

    def predict(self, doc):
        """Most probable label and the probability vector, evaluation mode."""
        probs, _ = self.forward(doc)
        return self.labels[int(np.argmax(probs.data))], probs.data.copy()

    def parameter_count(self) -> int:
        return self.params.size()

    # ----- persistence ----------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {name: t.data for name, t in self.params.items()}
        if self._frozen_embeddings is not None:
            arrays = {"embeddings": self._frozen_embeddings, **arrays}
        return arrays

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": {
                "variant": cfg.variant,
                "attention": cfg.attention,
                "word_dim": cfg.word_dim,
                "hidden_dim": cfg.hidden_dim,
                "dropout": cfg.dropout,
                "freeze_embeddings": cfg.freeze_embeddings,
                "precision": np.dtype(default_dtype()).name,
            },
            "labels": self.labels,
            "vocab": self.vocab.to_dict(),
            "relations": self.relations.to_dict(),
            "tensors": {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                        for name, arr in self.state_arrays().items()},
        }

    def save(self, path) -> None:
        """Write a checkpoint that reproduces evaluation bit for bit.

        Values are serialized through repr, which round-trips floats
        exactly, so a reloaded model scores identically.
        """
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, payload: dict) -> "DiscourseModel":
        if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
            raise DataError("not a model checkpoint (bad or missing format marker)")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {payload.get('version')!r}")
        try:
            raw_cfg = dict(payload["config"])
            precision = raw_cfg.pop("precision", "float64")
            config = ModelConfig(**raw_cfg)
            labels = list(payload["labels"])
            vocab = Vocabulary.from_dict(payload["vocab"])
            relations = RelationVocabulary.from_dict(payload["relations"])
            tensors = payload["tensors"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed checkpoint: {exc}") from None
        config.validate()
        set_default_dtype(precision)
        expected = _expected_tensor_names(config, len(relations))
        missing = expected - set(tensors)
        extra = set(tensors) - expected
        if missing or extra:
            raise DataError(f"checkpoint tensors do not match the config "
                            f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
        arrays = {}
        for name in sorted(expected):
            entry = tensors[name]
            shape = tuple(entry["shape"])
            data = np.asarray(entry["data"], dtype=default_dtype())
            if data.size != int(np.prod(shape, dtype=np.int64)):
                raise DataError(f"checkpoint tensor {name!r} has {data.size} values "
                                f"for shape {shape}")
            arrays[name] = data.reshape(shape)
        model = cls.from_arrays(config, vocab, relations, labels, arrays)
        _check_dims(model, arrays)
        return model

    @classmethod
    def load(cls, path) -> "DiscourseModel":
        """Read a checkpoint; switches the default dtype to its precision."""
        with open(path, encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
        try:
            return cls.from_dict(payload)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None


def _expected_tensor_names(config: ModelConfig, n_relations: int) -> set:
    names = {"embeddings", "lstm_fwd_w", "lstm_fwd_u", "lstm_fwd_b",
             "lstm_bwd_w", "lstm_bwd_u", "lstm_bwd_b",
             "classifier_w", "classifier_b"}
    if config.variant in ("full", "unlabeled"):
        names.add("attention_w")
    if config.variant == "full":
        names.update(f"relation_w_{i}" for i in range(n_relations))
    return names


def _check_dims(model: DiscourseModel, arrays: dict) -> None:
    cfg = model.config
    two_h = 2 * cfg.hidden_dim
    checks = {
        "embeddings": (len(model.vocab), cfg.word_dim),
        "lstm_fwd_w": (4 * cfg.hidden_dim, cfg.word_dim),
        "classifier_w": (len(model.labels), two_h),
    }
    for name, shape in checks.items():
        if arrays[name].shape != shape:
            raise DataError(f"checkpoint tensor {name!r} has shape "
                            f"{arrays[name].shape}, expected {shape}")


def _initial_arrays(config: ModelConfig, vocab_size: int, n_relations: int,
                    n_labels: int, rng, embeddings) -> dict:
    """Seeded initial values, derived per parameter name.

    Substream derivation by name means two models built from the same
    seed get identical values for every parameter group they share,
    regardless of which other groups each variant adds.
    """
    if rng is None:
        raise ConfigError("building a model needs an rng")
    cfg = config
    arrays = {}
    if embeddings is not None:
        vectors = np.asarray(embeddings.vectors, dtype=default_dtype())
        if vectors.shape != (vocab_size, cfg.word_dim):
            raise ConfigError(f"embedding table shape {vectors.shape} does not match "
                              f"vocabulary size {vocab_size} and word_dim {cfg.word_dim}")
        arrays["embeddings"] = vectors.copy()
    else:
        arrays["embeddings"] = rng.derive("init", "embeddings").uniform(
            -0.1, 0.1, (vocab_size, cfg.word_dim))
    for prefix in ("lstm_fwd", "lstm_bwd"):
        w, u, b = init_lstm_arrays(cfg.word_dim, cfg.hidden_dim, rng.derive("init", prefix))
        arrays[f"{prefix}_w"] = w
        arrays[f"{prefix}_u"] = u
        arrays[f"{prefix}_b"] = b
    two_h = 2 * cfg.hidden_dim
    if cfg.variant in ("full", "unlabeled"):
        arrays["attention_w"] = uniform_init(rng.derive("init", "attention_w"), two_h, two_h)
    if cfg.variant == "full":
        for i in range(n_relations):
            name = f"relation_w_{i}"
            arrays[name] = uniform_init(rng.derive("init", name), two_h, two_h)
    arrays["classifier_w"] = uniform_init(rng.derive("init", "classifier_w"), n_labels, two_h)
    arrays["classifier_b"] = np.zeros(n_labels)
    return arrays
