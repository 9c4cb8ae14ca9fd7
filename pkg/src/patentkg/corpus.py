"""Document and lexicon loading, plus dictionary-based entity extraction.

Text is normalized to lowercase tokens separated by single spaces, with
every non-alphanumeric character acting as a separator. Lexicon terms go
through the same normalization, so a multi-word term matches only a
contiguous run of whole tokens.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateIdError, ParseError

logger = logging.getLogger(__name__)

_SEPARATOR = re.compile(r"[^0-9a-z]+")
_SENTENCE_END = re.compile(r"[.!?;]+(?:\s+|$)")

REQUIRED_FIELDS = ("id", "year", "title", "abstract")


def tokenize(text: str) -> list[str]:
    return [tok for tok in _SEPARATOR.split(text.lower()) if tok]


def normalize(text: str) -> str:
    """Lowercase, turn punctuation into separators, collapse whitespace."""
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class Document:
    id: str
    year: int
    title: str
    abstract: str

    @property
    def text(self) -> str:
        return f"{self.title} {self.abstract}"

    @property
    def normalized_text(self) -> str:
        return normalize(self.text)

    def sentences(self) -> list[str]:
        """Raw sentences of title and abstract; the title counts as one."""
        out = []
        for part in (self.title, self.abstract):
            out.extend(s.strip() for s in _SENTENCE_END.split(part) if s.strip())
        return out


@dataclass(frozen=True)
class EntityMention:
    entity_id: str
    doc_id: str
    start: int
    end: int


class _TrieNode:
    __slots__ = ("children", "term")

    def __init__(self):
        self.children: dict[str, _TrieNode] = {}
        self.term: str | None = None


@dataclass
class Lexicon:
    """Normalized domain terms; each term is its own entity identifier."""

    terms: frozenset[str] = frozenset()
    duplicates: int = 0
    _root: _TrieNode = field(default_factory=_TrieNode, repr=False, compare=False)

    def __post_init__(self):
        for term in self.terms:
            node = self._root
            for tok in term.split(" "):
                node = node.children.setdefault(tok, _TrieNode())
            node.term = term

    @classmethod
    def from_terms(cls, raw_terms: Iterable[str]) -> "Lexicon":
        seen: set[str] = set()
        dups = 0
        for raw in raw_terms:
            term = normalize(raw)
            if not term:
                continue
            if term in seen:
                dups += 1
                continue
            seen.add(term)
        if dups:
            logger.warning("lexicon: collapsed %d duplicate term(s) after normalization", dups)
        return cls(frozenset(seen), dups)

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.terms

    def entity_id(self, term: str) -> str:
        return normalize(term)

    def scan(self, tokens: list[str]) -> Iterator[tuple[int, int, str]]:
        """Yield (first_token, end_token, term) matches, leftmost-longest, non-overlapping."""
        pos = 0
        n = len(tokens)
        while pos < n:
            node = self._root
            best = None
            k = pos
            while k < n:
                node = node.children.get(tokens[k])
                if node is None:
                    break
                k += 1
                if node.term is not None:
                    best = (k, node.term)
            if best is None:
                pos += 1
            else:
                yield pos, best[0], best[1]
                pos = best[0]


def _check_record(rec: dict, where: str) -> Document:
    if not isinstance(rec, dict):
        raise ParseError(f"{where}: expected an object")
    missing = [k for k in REQUIRED_FIELDS if k not in rec or rec[k] is None]
    if missing:
        raise ParseError(f"{where}: missing field(s) {', '.join(missing)}")
    try:
        year = int(rec["year"])
    except (TypeError, ValueError):
        raise ParseError(f"{where}: year {rec['year']!r} is not an integer") from None
    doc = Document(str(rec["id"]), year, str(rec["title"]), str(rec["abstract"]))
    if not doc.id:
        raise ParseError(f"{where}: empty id")
    if not doc.normalized_text:
        raise ParseError(f"{where}: document {doc.id} has no text")
    return doc


def _iter_jsonl(path: Path) -> Iterator[Document]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            yield _check_record(rec, f"{path}:{lineno}")


def _iter_csv(path: Path) -> Iterator[Document]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [k for k in REQUIRED_FIELDS if k not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}:1: header lacks {', '.join(missing)}")
        for rec in reader:
            yield _check_record(rec, f"{path}:{reader.line_num}")


def load_documents(path, format: str | None = None,
                   year_range: tuple[int, int] | None = None) -> list[Document]:
    """Read JSONL or CSV documents, sorted by (year, id).

    ``format`` defaults to the file suffix. Duplicate ids raise
    :class:`DuplicateIdError`.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "jsonl").lower()
    if fmt in ("jsonl", "json", "ndjson"):
        records = _iter_jsonl(path)
    elif fmt == "csv":
        records = _iter_csv(path)
    else:
        raise ParseError(f"unsupported document format {fmt!r}")
    docs: dict[str, Document] = {}
    for doc in records:
        if doc.id in docs:
            raise DuplicateIdError(f"duplicate document id {doc.id!r}")
        if year_range is not None and not year_range[0] <= doc.year <= year_range[1]:
            raise ParseError(f"document {doc.id}: year {doc.year} outside {year_range}")
        docs[doc.id] = doc
    return sorted(docs.values(), key=lambda d: (d.year, d.id))


def write_documents(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {"id": d.id, "year": d.year, "title": d.title, "abstract": d.abstract}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_lexicon(path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.lstrip().startswith("#")]
    return Lexicon.from_terms(lines)


def write_lexicon(lex: Lexicon, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in sorted(lex.terms):
            fh.write(term + "\n")


def find_mentions(doc: Document, lex: Lexicon) -> list[EntityMention]:
    """Mentions with character spans into ``doc.normalized_text``."""
    tokens = tokenize(doc.text)
    starts = []
    offset = 0
    for tok in tokens:
        starts.append(offset)
        offset += len(tok) + 1
    out = []
    for first, end, term in lex.scan(tokens):
        start = starts[first]
        stop = starts[end - 1] + len(tokens[end - 1])
        out.append(EntityMention(term, doc.id, start, stop))
    return out


def extract_entities(doc: Document, lex: Lexicon) -> set[str]:
    if not lex.terms:
        return set()
    return {term for _, _, term in lex.scan(tokenize(doc.text))}


def first_context_sentences(docs: Iterable[Document], lex: Lexicon,
                            entities: Iterable[str] | None = None) -> dict[str, list[str]]:
    """Map each entity to the tokens of the first corpus sentence mentioning it.

    Documents are visited by (year, id) and sentences in textual order.
    """
    wanted = None if entities is None else set(entities)
    found: dict[str, list[str]] = {}
    for doc in sorted(docs, key=lambda d: (d.year, d.id)):
        for sentence in doc.sentences():
            tokens = tokenize(sentence)
            for _, _, term in lex.scan(tokens):
                if term in found or (wanted is not None and term not in wanted):
                    continue
                found[term] = tokens
        if wanted is not None and len(found) == len(wanted):
            break
    return found
