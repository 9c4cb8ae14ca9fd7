"""Accuracy metrics, synthetic corpora and the temporal backtest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Document, Lexicon, first_context_sentences
from .errors import ConfigError
from .kg import KnowledgeGraph, build_graph, snapshot
from .linkpred import (METHODS, PredictedLinkSet, TrainConfig, candidate_pairs, predict_links,
                       train)
from .patents import (DEFAULT_CLIQUE_CAP, PredictedPatent, augment_graph,
                      enumerate_candidate_patents, future_patent_sets, validate_patent)

logger = logging.getLogger(__name__)

REPORT_HEADER = ("cutoff_year", "method", "new_links", "link_accuracy_pct",
                 "new_patents", "patent_accuracy_pct")


# --------------------------------------------------------------------------- metrics


def link_accuracy(predicted: PredictedLinkSet | Iterable[tuple[str, str]],
                  future_kg: KnowledgeGraph) -> float:
    """Share of predicted links that are edges of ``future_kg``; 0.0 when nothing was predicted."""
    pairs = predicted.id_pairs() if isinstance(predicted, PredictedLinkSet) else set(predicted)
    if not pairs:
        logger.info("link_accuracy: empty prediction set, reporting 0")
        return 0.0
    future = future_kg.edge_ids()
    hits = 0
    for a, b in pairs:
        if (a, b) in future or (b, a) in future:
            hits += 1
    return hits / len(pairs)


def patent_accuracy(candidates: Sequence[PredictedPatent],
                    future_patents: Mapping[str, Iterable[str]]) -> float:
    """Share of candidates contained in some future patent; 0.0 for no candidates."""
    if not candidates:
        logger.info("patent_accuracy: no candidates, reporting 0")
        return 0.0
    valid = sum(validate_patent(p, future_patents) for p in candidates)
    return valid / len(candidates)


def random_baseline_accuracy(kg: KnowledgeGraph, future_kg: KnowledgeGraph, count: int,
                             seeds: Iterable[int] = range(100), candidates: str = "2hop") -> float:
    """Mean link accuracy of ``count`` candidate pairs drawn uniformly without replacement.

    The pool is the same candidate set the trained predictors rank.
    """
    pool = candidate_pairs(kg, candidates)
    if count <= 0 or len(pool) == 0:
        return 0.0
    future = future_kg.edge_ids()
    ents = kg.entities
    hit = np.array([(ents[i], ents[j]) in future for i, j in pool.tolist()])
    count = min(count, len(pool))
    accs = [hit[np.random.default_rng(s).choice(len(pool), size=count, replace=False)].mean()
            for s in seeds]
    return float(np.mean(accs))


# --------------------------------------------------------------------------- synthetic corpus

_COMMUNITY_WORDS = ("optical", "packet", "wireless", "routing", "cipher", "spectrum",
                    "antenna", "session", "beacon", "carrier")
_FILLER = ("a", "method", "system", "apparatus", "for", "and", "with", "the", "device",
           "network", "data", "using", "comprising", "configured", "to", "of")


@dataclass(frozen=True)
class SynthConfig:
    num_communities: int = 5
    entities_per_community: int = 20
    docs_per_year: int = 80
    years: int = 6
    entities_per_doc: int = 5
    mixing: float = 0.1
    seed: int = 42
    start_year: int = 2010
    popularity_exponent: float = 0.8

    def __post_init__(self):
        ints = (self.num_communities, self.entities_per_community, self.docs_per_year,
                self.years, self.entities_per_doc)
        if min(ints) < 1:
            raise ConfigError("synthetic corpus sizes must be positive")
        if not 0.0 <= self.mixing <= 1.0:
            raise ConfigError("mixing probability must lie in [0, 1]")
        if self.entities_per_doc > self.entities_per_community and \
                (self.mixing == 0 or self.num_communities == 1):
            raise ConfigError(f"{self.entities_per_doc} entities per document cannot be drawn "
                              f"from communities of {self.entities_per_community}")
        if self.entities_per_doc > self.num_communities * self.entities_per_community:
            raise ConfigError("more entities per document than entities in total")

    def to_dict(self):
        return asdict(self)


def community_term(c: int, k: int) -> str:
    word = _COMMUNITY_WORDS[c % len(_COMMUNITY_WORDS)]
    if c >= len(_COMMUNITY_WORDS):
        word += str(c // len(_COMMUNITY_WORDS))
    return f"{word} unit{k:02d}"


def generate_synthetic_corpus(cfg: SynthConfig) -> tuple[list[Document], Lexicon, dict[str, frozenset[str]]]:
    """Seeded corpus whose documents co-mention entities from latent communities.

    Home communities are drawn from a Polya urn, so communities used early
    keep attracting documents; within a community, entities follow a
    power-law popularity, so rare entities join the graph late next to hubs
    they share neighbors with. Returns documents, lexicon and the planted
    entity set per document id.
    """
    rng = np.random.default_rng(cfg.seed)
    C, m = cfg.num_communities, cfg.entities_per_community
    terms = [[community_term(c, k) for k in range(m)] for c in range(C)]
    base_w = 1.0 / np.arange(1, m + 1) ** cfg.popularity_exponent
    urn = np.ones(C)
    docs, planted = [], {}
    for y in range(cfg.years):
        year = cfg.start_year + y
        for n in range(cfg.docs_per_year):
            home = int(rng.choice(C, p=urn / urn.sum()))
            urn[home] += 1.0
            chosen: list[tuple[int, int]] = []
            for _ in range(cfg.entities_per_doc):
                src = home
                if C > 1 and rng.random() < cfg.mixing:
                    src = int((home + 1 + rng.integers(0, C - 1)) % C)
                taken = {k for c, k in chosen if c == src}
                if len(taken) == m:
                    src = next(c for c in range(C) if sum(1 for cc, _ in chosen if cc == c) < m)
                    taken = {k for c, k in chosen if c == src}
                w = base_w.copy()
                w[list(taken)] = 0.0
                chosen.append((src, int(rng.choice(m, p=w / w.sum()))))
            ents = [terms[c][k] for c, k in chosen]
            order = rng.permutation(len(ents))
            sentences = []
            for o in order:
                lead = " ".join(rng.choice(_FILLER, size=2))
                sentences.append(f"{lead} {ents[o]} {rng.choice(_FILLER)}.")
            doc_id = f"D{year}-{n:04d}"
            title = f"System for {ents[order[0]]}"
            docs.append(Document(doc_id, year, title, " ".join(sentences).capitalize()))
            planted[doc_id] = frozenset(ents)
    lex = Lexicon.from_terms(t for row in terms for t in row)
    return docs, lex, planted


# --------------------------------------------------------------------------- backtest


@dataclass(frozen=True)
class BacktestConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    rho: float = 0.1
    zeta: int | None = None
    candidates: str = "2hop"
    horizon: int | None = None          # years after cutoff; None = through the final corpus year
    reference_year: int | None = None   # graph scored against; None = final corpus year
    clique_cap: int = DEFAULT_CLIQUE_CAP
    baseline_seeds: int = 100

    def to_dict(self):
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class BacktestRow:
    cutoff_year: int
    method: str
    num_new_links: int | None
    link_accuracy: float | None
    num_new_patents: int | None
    patent_accuracy: float | None
    config_fingerprint: str
    seed: int
    random_baseline: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def skipped(self) -> bool:
        return self.num_new_links is None

    def csv_fields(self) -> list[str]:
        if self.skipped:
            return [str(self.cutoff_year), self.method, "", "", "", ""]
        return [str(self.cutoff_year), self.method, str(self.num_new_links),
                f"{100 * self.link_accuracy:.2f}", str(self.num_new_patents),
                f"{100 * self.patent_accuracy:.2f}"]


@dataclass
class BacktestReport:
    rows: list[BacktestRow]
    config: dict
    seed: int

    def row(self, cutoff_year: int, method: str) -> BacktestRow:
        for r in self.rows:
            if r.cutoff_year == cutoff_year and r.method == method:
                return r
        raise KeyError((cutoff_year, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()

    def sidecar(self, extra: dict | None = None) -> str:
        doc = {"config": self.config, "seed": self.seed, "rows": [asdict(r) for r in self.rows]}
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _evaluate_cell(method: str, kg: KnowledgeGraph, kg_ref: KnowledgeGraph,
                   kg_final: KnowledgeGraph, docs, lex, cfg: BacktestConfig):
    notes = []
    model = None
    if method != "CNM":
        contexts = None
        if method == "CGAT":
            contexts = first_context_sentences([d for d in docs if d.year <= kg.cutoff_year],
                                               lex, kg.entities)
        model = train(method, kg, cfg.train, contexts)
    links = predict_links(method, kg, model, rho=cfg.rho, candidates=cfg.candidates,
                          zeta=cfg.zeta)
    if not links.links:
        notes.append("no predicted links")
    aug = augment_graph(kg, links)
    candidates = enumerate_candidate_patents(aug, method, cfg.clique_cap)
    until = None if cfg.horizon is None else kg.cutoff_year + cfg.horizon
    futures = future_patent_sets(kg_final, kg.cutoff_year, until)
    if not candidates:
        notes.append("no candidates")
    return links, candidates, link_accuracy(links, kg_ref), patent_accuracy(candidates, futures), notes


def backtest(docs: Sequence[Document], lex: Lexicon, cutoffs: Iterable[int],
             methods: Iterable[str], cfg: BacktestConfig | None = None) -> BacktestReport:
    """Build KG(cutoff), predict links and patents, and score against later years.

    Rows are ordered by cutoff, then by method in the order given.
    """
    cfg = cfg or BacktestConfig()
    methods = [m.upper() for m in methods]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    report = BacktestReport([], cfg.to_dict(), cfg.train.seed)
    if not methods or not docs:
        return report
    final_year = max(d.year for d in docs)
    kg_final = build_graph(docs, lex, final_year)
    ref_year = cfg.reference_year if cfg.reference_year is not None else final_year
    kg_ref = snapshot(kg_final, min(ref_year, final_year))
    fp = cfg.fingerprint()
    for cutoff in sorted(set(cutoffs)):
        if cutoff >= final_year or cutoff >= ref_year:
            logger.warning("backtest: cutoff %d leaves no later year to score; skipped", cutoff)
            for m in methods:
                report.rows.append(BacktestRow(cutoff, m, None, None, None, None, fp,
                                               cfg.train.seed, notes=["skipped: no later year"]))
            continue
        kg = snapshot(kg_final, cutoff)
        for m in methods:
            links, cands, a_link, a_pat, notes = _evaluate_cell(m, kg, kg_ref, kg_final,
                                                                docs, lex, cfg)
            baseline = random_baseline_accuracy(kg, kg_ref, len(links),
                                                range(cfg.baseline_seeds), cfg.candidates)
            report.rows.append(BacktestRow(cutoff, m, len(links), a_link, len(cands), a_pat,
                                           fp, cfg.train.seed, baseline, notes))
            logger.info("backtest %d %s: %d links (%.4f), %d patents (%.4f)",
                        cutoff, m, len(links), a_link, len(cands), a_pat)
    return report


def default_cutoffs(docs: Sequence[Document]) -> list[int]:
    years = sorted({d.year for d in docs})
    return years[:-1]


def with_train(cfg: BacktestConfig, **changes) -> BacktestConfig:
    return replace(cfg, train=replace(cfg.train, **changes))
