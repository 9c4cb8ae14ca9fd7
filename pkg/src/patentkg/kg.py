"""Year-accumulative co-occurrence knowledge graph."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping

from .corpus import Document, Lexicon, extract_entities
from .errors import EntityLookupError, FormatError, RangeError

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1
RELATION = "co_occurrence"

Edge = tuple[int, int]


def canonical(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Patent:
    year: int
    entities: frozenset[int]


@dataclass
class KnowledgeGraph:
    """Entities are sorted ids; ``edges`` maps (i, j), i < j, to first-seen year.

    ``predicted`` holds edges added by link prediction (see
    :func:`patentkg.patents.augment_graph`); it is empty for graphs built
    from documents.
    """

    cutoff_year: int
    entities: tuple[str, ...] = ()
    edges: dict[Edge, int] = field(default_factory=dict)
    patents: dict[str, Patent] = field(default_factory=dict)
    predicted: frozenset[Edge] = frozenset()

    def __post_init__(self):
        self._index = {e: i for i, e in enumerate(self.entities)}
        self._adj: list[set[int]] | None = None

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    def index(self, entity_id: str) -> int:
        try:
            return self._index[entity_id]
        except KeyError:
            raise EntityLookupError(f"unknown entity {entity_id!r}") from None

    def adjacency(self) -> list[set[int]]:
        if self._adj is None:
            adj: list[set[int]] = [set() for _ in self.entities]
            for i, j in self.edges:
                adj[i].add(j)
                adj[j].add(i)
            self._adj = adj
        return self._adj

    def has_edge(self, i: int, j: int) -> bool:
        return canonical(i, j) in self.edges

    def edge_ids(self) -> set[tuple[str, str]]:
        """Edges as entity-id pairs; comparable across graphs with different indexing."""
        ents = self.entities
        return {(ents[i], ents[j]) for i, j in self.edges}

    def patent_entity_ids(self) -> dict[str, frozenset[str]]:
        ents = self.entities
        return {pid: frozenset(ents[i] for i in p.entities) for pid, p in self.patents.items()}

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (self.cutoff_year == other.cutoff_year and self.entities == other.entities
                and self.edges == other.edges and self.patents == other.patents
                and self.predicted == other.predicted)


def neighbors(kg: KnowledgeGraph, e: int) -> set[int]:
    if not 0 <= e < kg.num_entities:
        raise EntityLookupError(f"entity index {e} not in graph of {kg.num_entities}")
    return set(kg.adjacency()[e])


def _from_patent_sets(cutoff_year: int,
                      patent_sets: Mapping[str, tuple[int, frozenset[str]]]) -> KnowledgeGraph:
    entity_ids = sorted(set().union(*(ents for _, ents in patent_sets.values())))
    index = {e: i for i, e in enumerate(entity_ids)}
    edges: dict[Edge, int] = {}
    patents: dict[str, Patent] = {}
    for pid in sorted(patent_sets):
        year, ents = patent_sets[pid]
        idx = frozenset(index[e] for e in ents)
        patents[pid] = Patent(year, idx)
        for pair in combinations(sorted(idx), 2):
            prev = edges.get(pair)
            if prev is None or year < prev:
                edges[pair] = year
    return KnowledgeGraph(cutoff_year, tuple(entity_ids), edges, patents)


def build_graph(docs: Iterable[Document], lex: Lexicon, cutoff_year: int) -> KnowledgeGraph:
    """Build KG(cutoff_year) from every document filed on or before the cutoff."""
    selected = [d for d in docs if d.year <= cutoff_year]
    if not selected:
        logger.warning("kg: no documents on or before %d; graph is empty", cutoff_year)
    patent_sets = {}
    for doc in selected:
        ents = extract_entities(doc, lex)
        if ents:
            patent_sets[doc.id] = (doc.year, frozenset(ents))
    return _from_patent_sets(cutoff_year, patent_sets)


def snapshot(kg: KnowledgeGraph, year: int) -> KnowledgeGraph:
    """Restrict ``kg`` to patents filed up to ``year``; indices are re-densified."""
    if year > kg.cutoff_year:
        raise RangeError(f"snapshot year {year} is after graph cutoff {kg.cutoff_year}")
    if year == kg.cutoff_year:
        return kg
    ents = kg.entities
    patent_sets = {pid: (p.year, frozenset(ents[i] for i in p.entities))
                   for pid, p in kg.patents.items() if p.year <= year}
    # every edge comes from some patent, so rebuilding keeps first-seen years intact
    return _from_patent_sets(year, patent_sets)


def save_graph(kg: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_graph(kg))


def dumps_graph(kg: KnowledgeGraph) -> str:
    doc = {
        "version": GRAPH_FORMAT_VERSION,
        "cutoff_year": kg.cutoff_year,
        "entities": list(kg.entities),
        "edges": [[i, j, y] for (i, j), y in sorted(kg.edges.items())],
        "patents": {pid: {"year": p.year, "entity_indices": sorted(p.entities)}
                    for pid, p in sorted(kg.patents.items())},
    }
    if kg.predicted:
        doc["predicted"] = [list(e) for e in sorted(kg.predicted)]
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads_graph(text: str) -> KnowledgeGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"graph file is not JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("version") != GRAPH_FORMAT_VERSION:
        found = doc.get("version") if isinstance(doc, dict) else None
        raise FormatError(f"graph format version mismatch: expected {GRAPH_FORMAT_VERSION}, "
                          f"found {found!r}")
    try:
        entities = tuple(doc["entities"])
        n = len(entities)
        edges = {}
        for i, j, y in doc["edges"]:
            if not (0 <= i < j < n):
                raise FormatError(f"bad edge [{i}, {j}]")
            edges[(i, j)] = int(y)
        patents = {pid: Patent(int(p["year"]), frozenset(p["entity_indices"]))
                   for pid, p in doc["patents"].items()}
        predicted = frozenset((i, j) for i, j in doc.get("predicted", []))
        return KnowledgeGraph(int(doc["cutoff_year"]), entities, edges, patents, predicted)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed graph file: {exc!r}") from None


def load_graph(path) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as fh:
        return loads_graph(fh.read())


def export_triples(kg: KnowledgeGraph, path) -> None:
    """TSV view: head, relation, tail, first-seen year."""
    ents = kg.entities
    with open(path, "w", encoding="utf-8") as fh:
        for (i, j), y in sorted(kg.edges.items()):
            fh.write(f"{ents[i]}\t{RELATION}\t{ents[j]}\t{y}\n")
