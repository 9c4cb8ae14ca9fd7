"""Predicted patents: maximal cliques of the link-augmented graph."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .errors import InputError, TruncationError
from .kg import KnowledgeGraph, canonical
from .linkpred import PredictedLinkSet

DEFAULT_CLIQUE_CAP = 100_000


@dataclass(frozen=True)
class PredictedPatent:
    entities: tuple[str, ...]
    predicted_edges: tuple[tuple[str, str], ...]
    cutoff_year: int
    method: str

    def __len__(self):
        return len(self.entities)


def augment_graph(kg: KnowledgeGraph, links: PredictedLinkSet) -> KnowledgeGraph:
    """Copy of ``kg`` with predicted links added and tagged in ``predicted``."""
    if tuple(links.entities) != tuple(kg.entities):
        raise InputError("link set refers to a different entity indexing")
    edges = dict(kg.edges)
    tagged = set(kg.predicted)
    for i, j, _ in links.links:
        e = canonical(i, j)
        if i == j or not 0 <= e[0] < e[1] < kg.num_entities:
            raise InputError(f"invalid predicted link ({i}, {j})")
        if e in edges:
            raise InputError(f"predicted link {kg.entities[e[0]]!r}-{kg.entities[e[1]]!r} "
                             "is already an edge")
        edges[e] = kg.cutoff_year
        tagged.add(e)
    return KnowledgeGraph(kg.cutoff_year, kg.entities, edges, dict(kg.patents), frozenset(tagged))


def _bron_kerbosch(adj, R: set[int], P: set[int], X: set[int], out: list):
    # iterative Bron-Kerbosch with Tomita pivoting
    stack = [(R, P, X)]
    while stack:
        R, P, X = stack.pop()
        if not P and not X:
            out.append(R)
            continue
        pivot = max(P | X, key=lambda u: (len(P & adj[u]), -u))
        for v in sorted(P - adj[pivot], reverse=True):
            stack.append((R | {v}, P & adj[v], X & adj[v]))
            P = P - {v}
            X = X | {v}


def maximal_cliques_with_edge(adj, predicted: Iterable[tuple[int, int]],
                              cap: int = DEFAULT_CLIQUE_CAP) -> list[frozenset[int]]:
    """All maximal cliques containing at least one of ``predicted``.

    Each predicted edge (u, v) seeds Bron-Kerbosch with R = {u, v} and
    P = N(u) & N(v), which yields exactly the maximal cliques through that
    edge; the union is de-duplicated.
    """
    found: set[frozenset[int]] = set()
    for u, v in sorted(predicted):
        out: list[set[int]] = []
        _bron_kerbosch(adj, {u, v}, adj[u] & adj[v], set(), out)
        for c in out:
            found.add(frozenset(c))
            if len(found) > cap:
                raise TruncationError(f"more than {cap} candidate patents; raise the clique cap")
    return sorted(found, key=lambda c: sorted(c))


def enumerate_candidate_patents(aug: KnowledgeGraph, method: str = "",
                                cap: int = DEFAULT_CLIQUE_CAP) -> list[PredictedPatent]:
    adj = aug.adjacency()
    ents = aug.entities
    out = []
    for clique in maximal_cliques_with_edge(adj, aug.predicted, cap):
        members = sorted(clique)
        tagged = tuple((ents[i], ents[j]) for i, j in combinations(members, 2)
                       if (i, j) in aug.predicted)
        out.append(PredictedPatent(tuple(ents[i] for i in members), tagged,
                                   aug.cutoff_year, method))
    out.sort(key=lambda p: p.entities)
    return out


def validate_patent(p: PredictedPatent, future_patents: Mapping[str, Iterable[str]]) -> bool:
    """True iff some future patent mentions every entity of ``p``."""
    need = set(p.entities)
    return any(need <= set(ents) for ents in future_patents.values())


def future_patent_sets(kg_final: KnowledgeGraph, after_year: int,
                       until_year: int | None = None) -> dict[str, frozenset[str]]:
    """Entity-id sets of patents filed in (after_year, until_year]."""
    ents = kg_final.entities
    return {pid: frozenset(ents[i] for i in p.entities)
            for pid, p in kg_final.patents.items()
            if p.year > after_year and (until_year is None or p.year <= until_year)}


def dumps_candidates(candidates: list[PredictedPatent],
                     valid: list[bool] | None = None) -> str:
    rows = []
    for k, p in enumerate(candidates):
        row = {"entities": list(p.entities),
               "predicted_edges": [list(e) for e in p.predicted_edges]}
        if valid is not None:
            row["valid"] = bool(valid[k])
        rows.append(row)
    return json.dumps(rows, sort_keys=True) + "\n"


def loads_candidates(text: str, cutoff_year: int = 0, method: str = "") -> list[PredictedPatent]:
    return [PredictedPatent(tuple(r["entities"]), tuple(tuple(e) for e in r["predicted_edges"]),
                            cutoff_year, method)
            for r in json.loads(text)]
