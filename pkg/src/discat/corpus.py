"""Document records and the one-JSON-object-per-line corpus format."""

import json
from dataclasses import dataclass

from .errors import DataError
from .textprep import normalize_tokens
from .trees import DependencyTree, validate_dependency

_RECORD_KEYS = {"id", "label", "edus", "heads", "relations", "rst"}


@dataclass
class DocumentRecord:
    """One document: EDU token lists plus an optional dependency tree.

    heads uses -1 for the root EDU; relations carries None exactly at
    the root.  label may be absent for prediction inputs, and rst may
    carry the bracketed source tree for conversion.
    """

    doc_id: str
    edus: list
    heads: list = None
    relations: list = None
    label: str = None
    rst: str = None

    @classmethod
    def from_dict(cls, obj, where: str = "") -> "DocumentRecord":
        if not isinstance(obj, dict):
            raise DataError(f"{where}record must be a JSON object")
        unknown = sorted(set(obj) - _RECORD_KEYS)
        if unknown:
            raise DataError(f"{where}unknown record keys {unknown}")
        for key in ("id", "edus"):
            if key not in obj:
                raise DataError(f"{where}record is missing {key!r}")
        doc_id = obj["id"]
        if not isinstance(doc_id, str):
            raise DataError(f"{where}'id' must be a string")
        edus = obj["edus"]
        if (not isinstance(edus, list)
                or any(not isinstance(edu, list) for edu in edus)
                or any(not isinstance(tok, str) for edu in edus for tok in edu)):
            raise DataError(f"{where}'edus' must be a list of token string lists")
        heads = obj.get("heads")
        if heads is not None and (not isinstance(heads, list) or any(
                not isinstance(h, int) or isinstance(h, bool) for h in heads)):
            raise DataError(f"{where}'heads' must be a list of integers")
        relations = obj.get("relations")
        if relations is not None and (not isinstance(relations, list) or any(
                r is not None and not isinstance(r, str) for r in relations)):
            raise DataError(f"{where}'relations' must be a list of strings or nulls")
        label = obj.get("label")
        if label is not None and not isinstance(label, str):
            raise DataError(f"{where}'label' must be a string")
        rst = obj.get("rst")
        if rst is not None and not isinstance(rst, str):
            raise DataError(f"{where}'rst' must be a string")
        return cls(doc_id=doc_id, edus=edus, heads=heads,
                   relations=relations, label=label, rst=rst)

    def to_dict(self) -> dict:
        out = {"id": self.doc_id}
        if self.label is not None:
            out["label"] = self.label
        out["edus"] = self.edus
        if self.heads is not None:
            out["heads"] = self.heads
        if self.relations is not None:
            out["relations"] = self.relations
        if self.rst is not None:
            out["rst"] = self.rst
        return out

    def dependency(self) -> DependencyTree:
        return DependencyTree(self.heads, self.relations)

    def validate(self, labels=None, require_label: bool = True,
                 require_tree: bool = True) -> list:
        """Problems that make the record unusable; empty when fine."""
        problems = []
        if self.heads is None or self.relations is None:
            if require_tree:
                problems.append("missing dependency tree (heads/relations)")
        else:
            if len(self.heads) != len(self.edus):
                problems.append(
                    f"{len(self.edus)} EDUs but {len(self.heads)} heads")
            elif len(self.relations) != len(self.heads):
                problems.append(
                    f"{len(self.heads)} heads but {len(self.relations)} relations")
            else:
                problems.extend(validate_dependency(self.dependency()))
        if require_label:
            if self.label is None:
                problems.append("missing label")
            elif labels is not None and self.label not in labels:
                problems.append(f"label {self.label!r} is outside the model's label set")
        return problems

    def normalized(self) -> "DocumentRecord":
        """A copy with every EDU's tokens normalized."""
        return DocumentRecord(doc_id=self.doc_id,
                              edus=[normalize_tokens(edu) for edu in self.edus],
                              heads=self.heads, relations=self.relations,
                              label=self.label, rst=self.rst)


def read_corpus(path, normalize: bool = False) -> list:
    """Parse a corpus file; errors name the file and line."""
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            rec = DocumentRecord.from_dict(obj, where=f"{path}:{lineno}: ")
            if normalize:
                rec = rec.normalized()
            records.append(rec)
    return records


def write_corpus(records, stream) -> None:
    for rec in records:
        stream.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
