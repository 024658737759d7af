"""Token normalization, vocabulary construction, and embedding files.

Normalization lowercases, drops tokens made only of punctuation or
symbol characters, and replaces numeric tokens with a sentinel.  The
vocabulary keeps the most frequent surviving tokens, choosing the
frequency cutoff whose unknown-token rate lands closest to a target.
"""

import re
import unicodedata
from collections import Counter

import numpy as np

from .errors import DataError

UNK = "⟨unk⟩"
NUM = "⟨num⟩"
RESERVED = (UNK, NUM)

UNK_ID = 0
NUM_ID = 1

_NUMBER_RE = re.compile(r"[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d*)?%?")


def _punctuation_only(token: str) -> bool:
    return all(unicodedata.category(ch)[0] in "PS" for ch in token)


def normalize_tokens(tokens) -> list:
    """Lowercase, drop punctuation-only tokens, map numbers to the sentinel.

    Applying it twice gives the same result as applying it once, so
    already-normalized corpora pass through unchanged.
    """
    out = []
    for token in tokens:
        token = token.lower()
        if not token or _punctuation_only(token):
            continue
        if _NUMBER_RE.fullmatch(token):
            out.append(NUM)
        else:
            out.append(token)
    return out


class Vocabulary:
    """Dense token ids with reserved unknown-word and number entries first."""

    def __init__(self, tokens, counts, unk_rate=None):
        self._tokens = list(tokens)
        self._counts = [int(c) for c in counts]
        if len(self._tokens) != len(self._counts):
            raise ValueError("tokens and counts differ in length")
        if self._tokens[:2] != [UNK, NUM]:
            raise ValueError("vocabulary must start with the reserved tokens")
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ValueError("duplicate token in vocabulary")
        self.unk_rate = unk_rate

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_for(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_for(self, idx: int) -> str:
        return self._tokens[idx]

    def count_for(self, token: str) -> int:
        return self._counts[self._ids[token]]

    @property
    def tokens(self):
        return tuple(self._tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for token, count in zip(self._tokens, self._counts):
                f.write(f"{token}\t{count}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, counts = [], []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'token<TAB>count'")
                try:
                    count = int(parts[1])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: count {parts[1]!r} is not an integer") from None
                tokens.append(parts[0])
                counts.append(count)
        if tokens[:2] != [UNK, NUM]:
            raise DataError(f"{path}: first two entries must be {UNK} and {NUM}")
        try:
            return cls(tokens, counts)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {"tokens": self._tokens, "counts": self._counts, "unk_rate": self.unk_rate}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        return cls(payload["tokens"], payload["counts"], payload.get("unk_rate"))


def build_vocabulary(corpus, target_unk_rate: float = 0.05) -> Vocabulary:
    """Choose the frequency cutoff whose unknown rate is closest to the target.

    corpus is an iterable of token sequences, already normalized.  Every
    cutoff that keeps tokens seen at least c times is scored by the
    fraction of corpus occurrences it discards; the closest achievable
    rate wins, and ties go to the larger vocabulary.  Reserved tokens
    are always kept and never count as discarded.
    """
    if not 0.0 <= target_unk_rate < 1.0:
        raise ValueError(f"target unknown rate must be in [0, 1), got {target_unk_rate}")
    counts = Counter()
    total = 0
    for tokens in corpus:
        for token in tokens:
            counts[token] += 1
            total += 1
    if total == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    num_count = counts.pop(NUM, 0)
    unk_literal = counts.pop(UNK, 0)

    values = np.sort(np.fromiter(counts.values(), dtype=np.int64)) if counts else np.zeros(0, np.int64)
    prefix = np.concatenate([[0], np.cumsum(values)])
    cutoffs = sorted(set(values.tolist())) or [1]
    cutoffs.append(cutoffs[-1] + 1)

    best_cutoff, best_dist = None, None
    for cutoff in cutoffs:
        first_kept = int(np.searchsorted(values, cutoff, side="left"))
        dropped = int(prefix[first_kept]) + unk_literal
        dist = abs(dropped / total - target_unk_rate)
        if best_dist is None or dist < best_dist:
            best_cutoff, best_dist = cutoff, dist

    kept = sorted((tok for tok, c in counts.items() if c >= best_cutoff),
                  key=lambda tok: (-counts[tok], tok))
    dropped = total - num_count - sum(counts[tok] for tok in kept)
    tokens = [UNK, NUM] + kept
    freq = [dropped, num_count] + [counts[tok] for tok in kept]
    return Vocabulary(tokens, freq, unk_rate=dropped / total)


def encode(tokens, vocab: Vocabulary) -> list:
    """Token ids under the vocabulary; unseen tokens become the unknown id."""
    return [vocab.id_for(token) for token in tokens]


class EmbeddingTable:
    """A dense [vocabulary size, dim] matrix of word vectors."""

    def __init__(self, vectors, trainable: bool = True):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.trainable = trainable

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int, rng) -> EmbeddingTable:
    """Uniform vectors in [-0.1, 0.1] for every vocabulary entry."""
    return EmbeddingTable(rng.uniform(-0.1, 0.1, (len(vocab), dim)))


def load_embeddings(path, vocab: Vocabulary, dim: int, rng,
                    trainable: bool = True) -> EmbeddingTable:
    """Read whitespace-separated word vectors, one word per line.

    Words absent from the file keep a seeded uniform [-0.1, 0.1] row, so
    the result does not depend on file order.  A line whose vector is
    not exactly dim long is an error; words outside the vocabulary are
    ignored.
    """
    vectors = rng.uniform(-0.1, 0.1, (len(vocab), dim))
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            word, raw = parts[0], parts[1:]
            if len(raw) != dim:
                raise DataError(
                    f"{path}:{lineno}: expected {dim} values for {word!r}, got {len(raw)}")
            if word in vocab:
                try:
                    vectors[vocab.id_for(word)] = [float(v) for v in raw]
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric vector component") from None
    return EmbeddingTable(vectors, trainable)
