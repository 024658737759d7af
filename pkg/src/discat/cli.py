"""Command line interface.

Commands: build-vocab, convert-trees, train, evaluate, predict,
inspect-attention.  Exit codes: 0 success, 1 usage or configuration
error, 2 malformed data, 3 missing file or record.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import textprep
from .autodiff import set_default_dtype
from .corpus import DocumentRecord, read_corpus, write_corpus
from .errors import ConfigError, DataError, NotFoundError
from .model import ATTENTION_MODES, VARIANTS, DiscourseModel, ModelConfig
from .rng import SeededRng
from .training import TrainingConfig, evaluate, grid_search, train
from .trees import RelationVocabulary, parse_rst_many, rst_to_dependency, validate_dependency

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MISSING = 3

SEED_ENV_VAR = "DISCAT_SEED"
DEFAULT_SEED = 0

_EPILOG = """\
file formats:
  corpus       one JSON object per line:
               {"id": str, "label": str, "edus": [[token, ...], ...],
                "heads": [int, ...], "relations": [str or null, ...],
                "rst": str}
               heads holds one entry per EDU, -1 marking the root;
               relations carries null exactly at the root; label may be
               omitted for prediction and rst holds an optional
               bracketed source tree for convert-trees.
  trees        bracketed constituents: (Label (N <node>) (S <node>) ...)
               with leaves (edu K), K the 0-based left-to-right EDU
               position; children are marked N (nucleus) or S (satellite)
  vocabulary   token<TAB>count per line; line order assigns ids and the
               first two lines are the reserved unknown and number tokens
  embeddings   word v1 ... vd per line, whitespace separated

environment:
  DISCAT_SEED  default master seed when the config file has no "seed"

exit codes: 0 success, 1 usage or configuration error, 2 malformed data,
3 missing file or record
"""


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures reported on exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discat",
                     description="Text categorization over discourse dependency trees.",
                     epilog=_EPILOG,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a corpus")
    p.add_argument("corpus", help="corpus file (one JSON record per line)")
    p.add_argument("--out", required=True, help="vocabulary file to write")
    p.add_argument("--unk-rate", type=float, default=0.05,
                   help="target unknown-token rate (default 0.05)")
    p.add_argument("--normalize", action="store_true",
                   help="normalize tokens before counting")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("convert-trees",
                       help="convert bracketed constituency trees to dependency records")
    p.add_argument("inputs", nargs="+",
                   help="bracketed tree files, or corpus files whose records carry 'rst'")
    p.add_argument("--out", help="output corpus file (default: stdout)")
    p.set_defaults(func=cmd_convert_trees)

    p = sub.add_parser("train", help="train a model from a JSON config file")
    p.add_argument("config", help="JSON configuration file")
    p.add_argument("--variant", choices=VARIANTS,
                   help="override the config's model variant")
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled corpus")
    p.add_argument("checkpoint", help="model checkpoint file")
    p.add_argument("corpus", help="labeled corpus file")
    p.add_argument("--out", help="write a metrics JSON file")
    p.add_argument("--normalize", action="store_true",
                   help="normalize corpus tokens before scoring")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="label a corpus with a checkpoint")
    p.add_argument("checkpoint", help="model checkpoint file")
    p.add_argument("corpus", help="corpus file; records may omit 'label'")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--normalize", action="store_true",
                   help="normalize corpus tokens before predicting")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect-attention",
                       help="show the per-arc gate weights for one document")
    p.add_argument("checkpoint", help="model checkpoint file")
    p.add_argument("corpus", help="corpus file containing the document")
    p.add_argument("doc_id", help="id of the document to inspect")
    p.add_argument("--json", dest="json_out", help="also write the weights as JSON")
    p.add_argument("--normalize", action="store_true",
                   help="normalize corpus tokens first")
    p.set_defaults(func=cmd_inspect_attention)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"discat: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotFoundError as exc:
        print(f"discat: not found: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"discat: not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except DataError as exc:
        print(f"discat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


# ----- shared helpers ---------------------------------------------------


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise NotFoundError(f"{what} {path}")
    return p


def _load_checkpoint(path) -> DiscourseModel:
    _require_file(path, "checkpoint file")
    return DiscourseModel.load(path)


def _read_corpus_checked(path, normalize: bool) -> list:
    _require_file(path, "corpus file")
    return read_corpus(path, normalize=normalize)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2))
        f.write("\n")


# ----- build-vocab ------------------------------------------------------


def cmd_build_vocab(args) -> int:
    records = _read_corpus_checked(args.corpus, args.normalize)
    if not records:
        raise DataError(f"{args.corpus}: corpus contains no documents")
    if not 0.0 <= args.unk_rate < 1.0:
        raise ConfigError(f"--unk-rate must be in [0, 1), got {args.unk_rate}")
    vocab = textprep.build_vocabulary(
        (edu for rec in records for edu in rec.edus), target_unk_rate=args.unk_rate)
    vocab.save(args.out)
    print(f"wrote {args.out}: {len(vocab)} tokens (2 reserved), "
          f"unknown rate {vocab.unk_rate:.4f} (target {args.unk_rate})")
    return EXIT_OK


# ----- convert-trees ----------------------------------------------------


def _convert_bracket_file(path: Path) -> list:
    trees = parse_rst_many(path.read_text(encoding="utf-8"))
    records = []
    for k, tree in enumerate(trees):
        dep = rst_to_dependency(tree)
        doc_id = path.stem if len(trees) == 1 else f"{path.stem}#{k}"
        records.append(DocumentRecord(doc_id=doc_id, edus=[[] for _ in dep.heads],
                                      heads=dep.heads, relations=dep.relations))
    return records


def _convert_corpus_file(path: Path) -> list:
    out = []
    for rec in read_corpus(path):
        if rec.rst is None:
            raise DataError(f"{path}: record {rec.doc_id!r} has no 'rst' tree to convert")
        try:
            trees = parse_rst_many(rec.rst)
        except DataError as exc:
            raise DataError(f"{path}: record {rec.doc_id!r}: {exc}") from None
        if len(trees) != 1:
            raise DataError(f"{path}: record {rec.doc_id!r} must carry exactly one tree")
        dep = rst_to_dependency(trees[0])
        if rec.edus and len(rec.edus) != len(dep.heads):
            raise DataError(f"{path}: record {rec.doc_id!r} has {len(rec.edus)} EDUs "
                            f"but its tree covers {len(dep.heads)}")
        edus = rec.edus if rec.edus else [[] for _ in dep.heads]
        out.append(DocumentRecord(doc_id=rec.doc_id, edus=edus, heads=dep.heads,
                                  relations=dep.relations, label=rec.label, rst=rec.rst))
    return out


def cmd_convert_trees(args) -> int:
    records = []
    for raw in args.inputs:
        path = _require_file(raw, "input file")
        text = path.read_text(encoding="utf-8")
        if text.lstrip().startswith("("):
            converted = _convert_bracket_file(path)
        else:
            converted = _convert_corpus_file(path)
        for rec in converted:
            bad = validate_dependency(rec.dependency())
            if bad:
                raise DataError(f"{path}: record {rec.doc_id!r} converted to an "
                                f"invalid tree: " + "; ".join(bad))
        records.extend(converted)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            write_corpus(records, f)
        print(f"wrote {args.out}: {len(records)} records")
    else:
        write_corpus(records, sys.stdout)
    return EXIT_OK


# ----- train ------------------------------------------------------------


_CONFIG_SPEC = {
    # key: (type, default); PATH marks entries resolved against the config dir
    "corpus": (str, None),
    "dev_corpus": (str, None),
    "dev_fraction": (float, 0.1),
    "vocab": (str, None),
    "unk_rate": (float, 0.05),
    "embeddings": (str, None),
    "freeze_embeddings": (bool, False),
    "normalize": (bool, False),
    "variant": (str, "full"),
    "attention": (str, "unnormalized"),
    "d": (int, None),
    "h": (int, None),
    "dropout": (float, 0.3),
    "learning_rate": (float, 0.001),
    "optimizer": (str, "adam"),
    "clip_threshold": (float, 5.0),
    "epochs": (int, 30),
    "patience": (int, 5),
    "seed": (int, None),
    "precision": (str, "float64"),
    "checkpoint_out": (str, "checkpoint.json"),
    "metrics_out": (str, "metrics.json"),
    "grid": (dict, None),
    "grid_out": (str, "grid.json"),
}

_REQUIRED_KEYS = ("corpus", "d", "h")
_PATH_KEYS = ("corpus", "dev_corpus", "vocab", "embeddings",
              "checkpoint_out", "metrics_out", "grid_out")


def load_run_config(path) -> dict:
    """Read and check a training config; unknown keys are rejected."""
    p = _require_file(path, "config file")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(obj) - set(_CONFIG_SPEC))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise ConfigError(f'{path}: missing config key "{key}"')
    settings = {}
    for key, (want, default) in _CONFIG_SPEC.items():
        value = obj.get(key, default)
        if value is not None:
            if want is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, want) or (want in (int, float) and isinstance(value, bool)):
                raise ConfigError(
                    f"{path}: config key {key!r} must be {want.__name__}, "
                    f"got {type(value).__name__}")
        settings[key] = value
    if settings["seed"] is None:
        settings["seed"] = int(os.environ.get(SEED_ENV_VAR, DEFAULT_SEED))
    base = p.parent
    for key in _PATH_KEYS:
        if settings[key] is not None:
            settings[key] = str((base / settings[key]))
    if not 0.0 <= settings["dev_fraction"] < 1.0:
        raise ConfigError(f"{path}: dev_fraction must be in [0, 1)")
    return settings


def _split_dev(records, fraction: float, rng: SeededRng):
    """Seeded shuffle, then carve off the dev share.

    A zero fraction monitors on the training set itself.
    """
    if fraction == 0.0:
        return records, list(records)
    order = rng.permutation(len(records))
    n_dev = max(1, round(len(records) * fraction))
    if n_dev >= len(records):
        raise ConfigError(f"dev_fraction {fraction} leaves no training documents")
    dev_idx = set(int(i) for i in order[:n_dev])
    train_part = [rec for i, rec in enumerate(records) if i not in dev_idx]
    dev_part = [records[int(i)] for i in order[:n_dev]]
    return train_part, dev_part


def cmd_train(args) -> int:
    settings = load_run_config(args.config)
    if args.variant:
        settings["variant"] = args.variant
    if args.seed is not None:
        settings["seed"] = args.seed
    set_default_dtype(settings["precision"])

    train_docs = _read_corpus_checked(settings["corpus"], settings["normalize"])
    if not train_docs:
        raise DataError(f"{settings['corpus']}: corpus contains no documents")
    rng = SeededRng(settings["seed"])
    if settings["dev_corpus"]:
        dev_docs = _read_corpus_checked(settings["dev_corpus"], settings["normalize"])
        if not dev_docs:
            raise DataError(f"{settings['dev_corpus']}: corpus contains no documents")
    else:
        train_docs, dev_docs = _split_dev(train_docs, settings["dev_fraction"],
                                          rng.derive("devsplit"))

    labels = sorted({doc.label for doc in train_docs if doc.label is not None})
    if not labels:
        raise DataError(f"{settings['corpus']}: no labeled documents to train on")

    if settings["vocab"]:
        _require_file(settings["vocab"], "vocabulary file")
        vocab = textprep.Vocabulary.load(settings["vocab"])
    else:
        vocab = textprep.build_vocabulary(
            (edu for rec in train_docs for edu in rec.edus),
            target_unk_rate=settings["unk_rate"])
    relations = RelationVocabulary.from_records(train_docs)

    if settings["embeddings"]:
        _require_file(settings["embeddings"], "embedding file")
        table = textprep.load_embeddings(settings["embeddings"], vocab, settings["d"],
                                         rng.derive("embeddings"))
    else:
        table = None

    model_config = ModelConfig(variant=settings["variant"], attention=settings["attention"],
                               word_dim=settings["d"], hidden_dim=settings["h"],
                               dropout=settings["dropout"],
                               freeze_embeddings=settings["freeze_embeddings"])
    model_config.validate()
    train_config = TrainingConfig(learning_rate=settings["learning_rate"],
                                  optimizer=settings["optimizer"],
                                  clip_threshold=settings["clip_threshold"],
                                  epochs=settings["epochs"], patience=settings["patience"],
                                  seed=rng.derive("train").seed)
    train_config.validate()

    try:
        if settings["grid"] is not None:
            if table is not None:
                for d in settings["grid"].get("word_dim", [settings["d"]]):
                    if d != table.dim:
                        raise ConfigError(
                            "grid search over word_dim is incompatible with a "
                            f"fixed embedding file of dimension {table.dim}")

            def build(word_dim, hidden_dim, build_rng):
                cfg = ModelConfig(variant=settings["variant"], attention=settings["attention"],
                                  word_dim=word_dim, hidden_dim=hidden_dim,
                                  dropout=settings["dropout"],
                                  freeze_embeddings=settings["freeze_embeddings"])
                return DiscourseModel(cfg, vocab, relations, labels, build_rng, table)

            grid_spec = dict(settings["grid"])
            grid_spec.setdefault("word_dim", [settings["d"]])
            grid_spec.setdefault("hidden_dim", [settings["h"]])
            grid_spec.setdefault("learning_rate", [settings["learning_rate"]])
            grid_spec.setdefault("optimizer", [settings["optimizer"]])
            results, model, metrics = grid_search(build, train_docs, dev_docs,
                                                  train_config, grid_spec,
                                                  master_seed=settings["seed"])
            _write_json(settings["grid_out"], results)
            print(f"grid search: {len(results)} cells, best dev accuracy "
                  f"{metrics.accuracy:.4f}, results in {settings['grid_out']}")
        else:
            model = DiscourseModel(model_config, vocab, relations, labels,
                                   rng.derive("model"), table)
            metrics = train(model, train_docs, dev_docs, train_config)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    model.save(settings["checkpoint_out"])
    _write_json(settings["metrics_out"], metrics.to_dict())
    print(f"trained {settings['variant']} model: dev accuracy {metrics.accuracy:.4f} "
          f"(best epoch {metrics.best_epoch}), checkpoint {settings['checkpoint_out']}, "
          f"metrics {settings['metrics_out']}")
    return EXIT_OK


# ----- evaluate ---------------------------------------------------------


def cmd_evaluate(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    docs = _read_corpus_checked(args.corpus, args.normalize)
    if not docs:
        raise DataError(f"{args.corpus}: corpus contains no documents")
    metrics = evaluate(model, docs)
    if args.out:
        _write_json(args.out, metrics.to_dict())
    print(f"accuracy {metrics.accuracy:.4f} ({metrics.correct}/{metrics.count})")
    return EXIT_OK


# ----- predict ----------------------------------------------------------


def cmd_predict(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    docs = _read_corpus_checked(args.corpus, args.normalize)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for doc in docs:
            label, probs = model.predict(doc)
            out.write(json.dumps({"id": doc.doc_id, "label": label,
                                  "probabilities": [float(p) for p in probs]},
                                 ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"wrote {args.out}: {len(docs)} predictions "
              f"(probabilities follow the label order {model.labels})")
    return EXIT_OK


# ----- inspect-attention ------------------------------------------------


def cmd_inspect_attention(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    if model.config.variant not in ("full", "unlabeled"):
        raise ConfigError(
            f"the {model.config.variant} variant has no per-arc weights to inspect; "
            "only full and unlabeled models compose over arcs")
    docs = _read_corpus_checked(args.corpus, args.normalize)
    doc = next((d for d in docs if d.doc_id == args.doc_id), None)
    if doc is None:
        raise NotFoundError(f"document id {args.doc_id!r} in {args.corpus}")
    probs, records = model.forward(doc)
    predicted = model.labels[int(np.argmax(probs.data))]
    weights = {(r.parent, r.child): r for r in records}
    tree = doc.dependency()
    children = tree.children()

    def text_of(i):
        return " ".join(doc.edus[i]) if doc.edus[i] else "(no tokens)"

    print(f"document {doc.doc_id}  predicted {predicted} "
          f"(p={float(np.max(probs.data)):.4f})")
    stack = [(tree.root, 0)]
    while stack:
        i, depth = stack.pop()
        pad = "  " * depth
        if depth == 0:
            print(f"{pad}[{i}] {text_of(i)}")
        else:
            rec = weights[(tree.heads[i], i)]
            rel = rec.relation if rec.relation is not None else "-"
            print(f"{pad}[{i}] <-{rel} gate={rec.weight:.4f}  {text_of(i)}")
        for child in reversed(children[i]):
            stack.append((child, depth + 1))
    if args.json_out:
        payload = {"id": doc.doc_id, "root": tree.root, "predicted": predicted,
                   "probabilities": [float(p) for p in probs.data],
                   "labels": list(model.labels),
                   "arcs": [{"parent": r.parent, "child": r.child,
                             "relation": r.relation, "weight": r.weight}
                            for r in records]}
        _write_json(args.json_out, payload)
        print(f"wrote {args.json_out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
