"""Bracketed discourse constituency trees and dependency conversion.

The bracketed form nests relation nodes whose children are marked N
(nucleus) or S (satellite); leaves name elementary discourse units by
0-based position.  Conversion percolates heads: a node is represented
by the head of its leftmost nucleus child, and every other child hangs
off that head under the node's relation label.
"""

import re
from dataclasses import dataclass, field

from .errors import DataError

NUCLEUS = "N"
SATELLITE = "S"
ROOT_HEAD = -1

UNK_RELATION = "⟨unk-rel⟩"

_LABEL_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*")


class TreeFormatError(DataError):
    """Bracketed tree text that cannot be parsed or breaks tree rules."""

    def __init__(self, message: str, offset=None):
        if offset is not None:
            message = f"offset {offset}: {message}"
        super().__init__(message)
        self.offset = offset


@dataclass
class Leaf:
    edu: int


@dataclass
class Internal:
    relation: str
    children: list  # (nuclearity, node) pairs


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, ch, i))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(("atom", text[i:j], i))
            i = j
    return tokens


class _TokenStream:
    def __init__(self, tokens, length):
        self.tokens = tokens
        self.pos = 0
        self.length = length

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return (None, None, self.length)

    def next(self, want=None, what=""):
        kind, text, offset = self.peek()
        if kind is None:
            raise TreeFormatError(f"unexpected end of input, expected {what or want}", offset)
        if want is not None and kind != want:
            raise TreeFormatError(f"expected {what or want}, got {text!r}", offset)
        self.pos += 1
        return kind, text, offset


def _parse_node(ts: _TokenStream):
    _, _, start = ts.next("(", "'('")
    _, head, head_off = ts.next("atom", "a relation label or 'edu'")
    if head == "edu":
        _, raw, off = ts.next("atom", "an EDU index")
        try:
            idx = int(raw)
        except ValueError:
            raise TreeFormatError(f"EDU index must be an integer, got {raw!r}", off) from None
        if idx < 0:
            raise TreeFormatError(f"EDU index must be non-negative, got {idx}", off)
        ts.next(")", "')'")
        return Leaf(idx)
    if not _LABEL_RE.fullmatch(head):
        raise TreeFormatError(f"invalid relation label {head!r}", head_off)
    children = []
    while ts.peek()[0] == "(":
        children.append(_parse_child(ts))
    ts.next(")", "')'")
    if len(children) < 2:
        raise TreeFormatError(
            f"relation {head!r} needs at least two children, got {len(children)}", start)
    if not any(nuc == NUCLEUS for nuc, _ in children):
        raise TreeFormatError(f"relation {head!r} has no nucleus child", start)
    return Internal(head, children)


def _parse_child(ts: _TokenStream):
    ts.next("(", "'('")
    kind, nuc, off = ts.next("atom", "a nuclearity marker")
    if nuc not in (NUCLEUS, SATELLITE):
        raise TreeFormatError(f"expected nuclearity {NUCLEUS} or {SATELLITE}, got {nuc!r}", off)
    node = _parse_node(ts)
    ts.next(")", "')'")
    return (nuc, node)


def _leaves(node):
    out = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Leaf):
            out.append(cur.edu)
        else:
            for _, child in reversed(cur.children):
                stack.append(child)
    return out


def _check_leaves(node):
    seen = _leaves(node)
    if seen != list(range(len(seen))):
        raise TreeFormatError(
            f"EDU indices must be 0..{len(seen) - 1} in left-to-right order, got {seen}", 0)


def parse_rst(text: str):
    """Parse one bracketed tree; reject trailing text and rule violations."""
    ts = _TokenStream(_tokenize(text), len(text))
    node = _parse_node(ts)
    kind, extra, offset = ts.peek()
    if kind is not None:
        raise TreeFormatError(f"trailing input {extra!r} after the tree", offset)
    _check_leaves(node)
    return node


def parse_rst_many(text: str) -> list:
    """Parse a sequence of bracketed trees from one string."""
    ts = _TokenStream(_tokenize(text), len(text))
    nodes = []
    while ts.peek()[0] is not None:
        node = _parse_node(ts)
        _check_leaves(node)
        nodes.append(node)
    if not nodes:
        raise TreeFormatError("no tree found in input", 0)
    return nodes


def leaf_count(node) -> int:
    return len(_leaves(node))


@dataclass
class DependencyTree:
    """Head and relation per EDU; the root has head -1 and no relation."""

    heads: list
    relations: list

    def __len__(self):
        return len(self.heads)

    @property
    def root(self) -> int:
        return self.heads.index(ROOT_HEAD)

    def children(self) -> list:
        """Child lists per EDU, each in ascending order."""
        out = [[] for _ in self.heads]
        for i, h in enumerate(self.heads):
            if h >= 0:
                out[h].append(i)
        return out


def rst_to_dependency(tree) -> DependencyTree:
    """Convert a constituency tree by leftmost-nucleus head percolation.

    Each internal node's head EDU is the head of its leftmost nucleus
    child; every other child contributes one arc from its own head to
    that EDU, labeled with the internal node's relation.
    """
    n = leaf_count(tree)
    heads = [None] * n
    relations = [None] * n
    head_of = {}
    stack = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if isinstance(node, Leaf):
            head_of[id(node)] = node.edu
            continue
        if not expanded:
            stack.append((node, True))
            for _, child in reversed(node.children):
                stack.append((child, False))
            continue
        head_pos = next(k for k, (nuc, _) in enumerate(node.children) if nuc == NUCLEUS)
        head = head_of[id(node.children[head_pos][1])]
        head_of[id(node)] = head
        for k, (_, child) in enumerate(node.children):
            if k == head_pos:
                continue
            dep = head_of[id(child)]
            heads[dep] = head
            relations[dep] = node.relation
    root = head_of[id(tree)]
    heads[root] = ROOT_HEAD
    if any(h is None for h in heads):
        raise TreeFormatError("conversion left an EDU without a head", 0)
    return DependencyTree(heads, relations)


def validate_dependency(tree: DependencyTree) -> list:
    """Every violation found in the head and relation arrays, as messages.

    An empty list means the tree is a single-rooted, acyclic, connected
    dependency structure with relations exactly on the non-root arcs.
    """
    problems = []
    heads, relations = tree.heads, tree.relations
    n = len(heads)
    if n == 0:
        return ["tree has no EDUs"]
    if len(relations) != n:
        return [f"{n} heads but {len(relations)} relations"]
    walkable = True
    roots = [i for i, h in enumerate(heads) if h == ROOT_HEAD]
    if len(roots) != 1:
        problems.append(f"expected exactly one root, found {len(roots)} (EDUs {roots})")
    for i, h in enumerate(heads):
        if not isinstance(h, int) or isinstance(h, bool):
            problems.append(f"head of EDU {i} is not an integer")
            walkable = False
        elif h != ROOT_HEAD and not 0 <= h < n:
            problems.append(f"head of EDU {i} is {h}, outside -1..{n - 1}")
            walkable = False
        elif h == i:
            problems.append(f"EDU {i} is its own head")
    for i, (h, rel) in enumerate(zip(heads, relations)):
        if not isinstance(h, int) or isinstance(h, bool):
            continue
        if h == ROOT_HEAD and rel is not None:
            problems.append(f"root EDU {i} must not carry a relation, has {rel!r}")
        if h != ROOT_HEAD and rel is None:
            problems.append(f"EDU {i} has a head but no relation")
    if not walkable:
        return problems
    # walk toward the root from every node; meeting an in-progress walk is a cycle
    state = [0] * n  # 0 unvisited, 1 in progress, 2 done
    for start in range(n):
        path = []
        cur = start
        while state[cur] == 0:
            state[cur] = 1
            path.append(cur)
            nxt = heads[cur]
            if nxt == ROOT_HEAD:
                break
            cur = nxt
        else:
            if state[cur] == 1:
                cycle = path[path.index(cur):]
                problems.append(f"cycle through EDUs {sorted(cycle)}")
        for i in path:
            state[i] = 2
    return problems


class RelationVocabulary:
    """Relation label ids with a reserved unknown entry at index 0."""

    def __init__(self, labels, counts=None, normalized: bool = False):
        labels = list(labels)
        if not labels or labels[0] != UNK_RELATION:
            labels = [UNK_RELATION] + labels
            counts = [0] + list(counts) if counts is not None else None
        self._labels = labels
        self._counts = list(counts) if counts is not None else [0] * len(labels)
        self._ids = {lab: i for i, lab in enumerate(self._labels)}
        if len(self._ids) != len(self._labels):
            raise ValueError("duplicate relation label")
        self.normalized = normalized

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return self._key(label) in self._ids

    def _key(self, label: str) -> str:
        return canonical_label(label) if self.normalized else label

    def index_for(self, label) -> int:
        if label is None:
            return 0
        return self._ids.get(self._key(label), 0)

    def label_for(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self):
        return tuple(self._labels)

    @classmethod
    def from_records(cls, records, normalized: bool = False) -> "RelationVocabulary":
        """Collect arc labels from document records, most frequent first."""
        counts = {}
        for rec in records:
            for rel in rec.relations or []:
                if rel is None:
                    continue
                key = canonical_label(rel) if normalized else rel
                counts[key] = counts.get(key, 0) + 1
        ordered = sorted(counts, key=lambda lab: (-counts[lab], lab))
        return cls([UNK_RELATION] + ordered, [0] + [counts[lab] for lab in ordered],
                   normalized=normalized)

    def to_dict(self) -> dict:
        return {"labels": self._labels, "counts": self._counts, "normalized": self.normalized}

    @classmethod
    def from_dict(cls, payload: dict) -> "RelationVocabulary":
        return cls(payload["labels"], payload["counts"], payload.get("normalized", False))


def canonical_label(label: str) -> str:
    """Case-folded label with a trailing nuclearity suffix (-n/-s/-e) removed."""
    label = label.lower()
    return re.sub(r"-[nse]$", "", label)
