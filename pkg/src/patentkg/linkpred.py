"""Link prediction: common-neighbor baseline and translation-embedding models.

Three trainable methods share one objective, the margin hinge
``sum max(0, margin + d(h + r, t) - d(h' + r, t'))`` with squared L2 ``d``:

* ``TRANSE`` - raw entity embedding table,
* ``GAT``    - entities encoded by a graph-attention layer,
* ``CGAT``   - graph attention gated with a sentence context encoder.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import numcore as nc
from .encoders import Adjacency, EncoderConfig, EntityEncoder, Vocab, resolve_contexts
from .errors import ConfigError, FormatError, InputError, NumericError, SamplingError
from .kg import KnowledgeGraph
from .numcore import ParamStore, Tensor

logger = logging.getLogger(__name__)

METHODS = ("CNM", "TRANSE", "GAT", "CGAT")
TRAINED_METHODS = ("TRANSE", "GAT", "CGAT")
LINKS_FORMAT_VERSION = 1


def _check_method(method: str, allowed=METHODS) -> str:
    m = method.upper()
    if m not in allowed:
        raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(allowed)}")
    return m


# --------------------------------------------------------------------------- results


@dataclass
class PredictedLinkSet:
    """Scored non-edges of a cutoff graph, best first (ties by index pair)."""

    cutoff_year: int
    method: str
    links: list[tuple[int, int, float]]
    entities: tuple[str, ...]
    policy: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.links)

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j, _ in self.links]

    def id_pairs(self) -> set[tuple[str, str]]:
        ents = self.entities
        return {(ents[i], ents[j]) for i, j, _ in self.links}

    def to_json(self) -> str:
        ents = self.entities
        doc = {
            "version": LINKS_FORMAT_VERSION,
            "cutoff_year": self.cutoff_year,
            "method": self.method,
            "rho_or_zeta": self.policy.get("rho", self.policy.get("zeta")),
            "policy": self.policy,
            "links": [[ents[i], ents[j], s] for i, j, s in self.links],
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, kg: KnowledgeGraph) -> "PredictedLinkSet":
        doc = json.loads(text)
        if doc.get("version") != LINKS_FORMAT_VERSION:
            raise FormatError(f"link file version mismatch: expected {LINKS_FORMAT_VERSION}, "
                              f"found {doc.get('version')!r}")
        links = []
        for a, b, s in doc["links"]:
            i, j = kg.index(a), kg.index(b)
            if i > j:
                i, j = j, i
            links.append((i, j, s))
        return cls(int(doc["cutoff_year"]), doc["method"], links, kg.entities,
                   doc.get("policy", {}))


def _sorted_links(links) -> list[tuple[int, int, float]]:
    return sorted(links, key=lambda t: (-t[2], t[0], t[1]))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# --------------------------------------------------------------------------- common neighbors


def adjacency_matrix(kg: KnowledgeGraph) -> sp.csr_matrix:
    n = kg.num_entities
    if not kg.edges:
        return sp.csr_matrix((n, n), dtype=np.int64)
    ij = np.array(kg.sorted_edges(), dtype=np.int64)
    rows = np.concatenate([ij[:, 0], ij[:, 1]])
    cols = np.concatenate([ij[:, 1], ij[:, 0]])
    return sp.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n, n))


def cnm_score(kg: KnowledgeGraph, x: int, y: int) -> int:
    """Number of common neighbors of ``x`` and ``y``."""
    if x == y:
        raise InputError("cnm_score needs two distinct entities")
    adj = kg.adjacency()
    for e in (x, y):
        if not 0 <= e < kg.num_entities:
            raise InputError(f"entity index {e} out of range")
    return len(adj[x] & adj[y])


def common_neighbor_pairs(kg: KnowledgeGraph) -> list[tuple[int, int, int]]:
    """Every non-adjacent pair (i < j) with at least one common neighbor, with its count."""
    A = adjacency_matrix(kg)
    C = sp.triu(A @ A, k=1).tocoo()
    out = []
    for i, j, c in zip(C.row.tolist(), C.col.tolist(), C.data.tolist()):
        if c > 0 and (i, j) not in kg.edges:
            out.append((i, j, int(c)))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def cnm_predict(kg: KnowledgeGraph, zeta: int | None = None) -> PredictedLinkSet:
    """Predict every non-adjacent pair whose common-neighbor count reaches the threshold.

    The threshold is ``zeta`` when given, else ceil(M / 2) with M the largest
    count over non-adjacent pairs. A pair needs at least one common neighbor
    in either case.
    """
    scored = common_neighbor_pairs(kg) if kg.num_entities >= 2 else []
    M = max((c for _, _, c in scored), default=0)
    threshold = zeta if zeta is not None else (M + 1) // 2
    links = [(i, j, c) for i, j, c in scored if c >= max(threshold, 1)]
    policy = {"M": M, "threshold": threshold}
    if zeta is not None:
        policy["zeta"] = zeta
    return PredictedLinkSet(kg.cutoff_year, "CNM", _sorted_links(links), kg.entities, policy)


def candidate_pairs(kg: KnowledgeGraph, policy: str = "2hop") -> np.ndarray:
    """Non-adjacent pairs (i < j) to score: within two hops, or every pair."""
    if policy == "2hop":
        pairs = [(i, j) for i, j, _ in common_neighbor_pairs(kg)]
    elif policy == "all":
        n = kg.num_entities
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in kg.edges]
    else:
        raise ConfigError(f"unknown candidate policy {policy!r}")
    return np.array(pairs, dtype=np.intp).reshape(-1, 2)


# --------------------------------------------------------------------------- translation model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    margin: float = 1.0
    batch_size: int = 128
    seed: int = 0
    dims: int = 64
    leaky_slope: float = nc.DEFAULT_LEAKY_SLOPE
    layers: int = 1
    heads: int = 1

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.dims < 1:
            raise ConfigError("epochs must be >= 0, batch_size and dims >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(F=self.dims, F_prime=self.dims, d=self.dims,
                             leaky_slope=self.leaky_slope, heads=self.heads,
                             layers=self.layers, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TransEModel:
    method: str
    store: ParamStore
    config: TrainConfig
    entities: tuple[str, ...]
    encoder: EntityEncoder | None = None
    vocab: Vocab | None = None
    contexts: dict[str, list[str]] | None = None
    loss_trace: list[float] = field(default_factory=list)

    @property
    def relation(self) -> Tensor:
        return self.store["relation"]

    def encode(self, adj: Adjacency) -> Tensor:
        if self.encoder is None:
            return self.store["entity"]
        return self.encoder.forward(adj)

    def representations(self, kg: KnowledgeGraph) -> np.ndarray:
        if tuple(kg.entities) != tuple(self.entities):
            raise InputError("model was trained on a different entity set")
        return self.encode(Adjacency.from_graph(kg)).data


def init_model(method: str, kg: KnowledgeGraph, cfg: TrainConfig,
               context_sentences: Mapping[str, Sequence[str]] | None = None) -> TransEModel:
    method = _check_method(method, TRAINED_METHODS)
    store = ParamStore(cfg.seed)
    n = kg.num_entities
    encoder = vocab = contexts = None
    if method == "TRANSE":
        store.add("entity", (n, cfg.dims))
    else:
        ids = None
        vocab_size = 1
        if method == "CGAT":
            contexts = resolve_contexts(kg.entities, context_sentences or {})
            vocab = Vocab.build(contexts)
            ids = [vocab.ids(contexts[e]) for e in kg.entities]
            vocab_size = len(vocab)
        encoder = EntityEncoder(method, cfg.encoder(), store, n, ids, vocab_size)
    store.add("relation", (cfg.dims,))
    return TransEModel(method, store, cfg, tuple(kg.entities), encoder, vocab, contexts)


def _hinge_loss(reps: Tensor, relation: Tensor, pos: np.ndarray, neg: np.ndarray,
                margin: float) -> Tensor:
    if len(pos) != len(neg):
        raise InputError(f"{len(pos)} positives but {len(neg)} negatives")
    if len(pos) == 0:
        return nc.as_tensor(0.0)
    d_pos = nc.sq_l2_distance(nc.add(nc.take(reps, pos[:, 0]), relation), nc.take(reps, pos[:, 1]))
    d_neg = nc.sq_l2_distance(nc.add(nc.take(reps, neg[:, 0]), relation), nc.take(reps, neg[:, 1]))
    return nc.sum(nc.relu(nc.add(nc.sub(d_pos, d_neg), margin)))


def _pairs(x) -> np.ndarray:
    return np.asarray(x, dtype=np.intp).reshape(-1, 2)


def transe_loss_tensor(model: TransEModel, kg: KnowledgeGraph, positives, negatives) -> Tensor:
    reps = model.encode(Adjacency.from_graph(kg))
    return _hinge_loss(reps, model.relation, _pairs(positives), _pairs(negatives),
                       model.config.margin)


def transe_loss(model: TransEModel, kg: KnowledgeGraph, positives, negatives) -> float:
    return float(transe_loss_tensor(model, kg, positives, negatives).data)


def transe_score(model: TransEModel, kg: KnowledgeGraph, head: int, tail: int) -> float:
    """``-||h + r - t||^2``; higher is more plausible."""
    reps = model.representations(kg)
    n = reps.shape[0]
    for e in (head, tail):
        if not 0 <= e < n:
            raise InputError(f"entity index {e} out of range")
    diff = reps[head] + model.relation.data - reps[tail]
    return -float(np.dot(diff, diff))


def score_pairs(reps: np.ndarray, relation: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros(0)
    diff = reps[pairs[:, 0]] + relation - reps[pairs[:, 1]]
    return -np.square(diff).sum(axis=1)


def sample_negatives(num_entities: int, positives, rng) -> np.ndarray:
    """Corrupt each positive by replacing head or tail (fair coin) with another entity.

    The replacement is uniform over all entities except the one being
    replaced; corrupted pairs are not filtered against the graph.
    """
    if num_entities < 2:
        raise SamplingError("negative sampling needs at least two entities")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pos = _pairs(positives)
    side = rng.integers(0, 2, size=len(pos))
    draw = rng.integers(0, num_entities - 1, size=len(pos))
    neg = pos.copy()
    rows = np.arange(len(pos))
    replaced = pos[rows, side]
    neg[rows, side] = draw + (draw >= replaced)
    return neg


def _renormalize(store: ParamStore):
    emb = store["entity"].data
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb /= np.where(norms > 0, norms, 1.0)


def train(method: str, kg: KnowledgeGraph, cfg: TrainConfig | None = None,
          context_sentences: Mapping[str, Sequence[str]] | None = None) -> TransEModel:
    """Minimize the margin loss over the cutoff graph's edges with plain SGD.

    ``loss_trace[0]`` is the loss at initialization and ``loss_trace[k]`` the
    loss after epoch k, both measured on one fixed negative sample so the
    values are comparable.
    """
    cfg = cfg or TrainConfig()
    model = init_model(method, kg, cfg, context_sentences)
    store = model.store
    positives = np.array(kg.sorted_edges(), dtype=np.intp).reshape(-1, 2)
    if cfg.epochs == 0 or len(positives) == 0:
        return model
    adj = Adjacency.from_graph(kg)
    n = kg.num_entities
    eval_neg = sample_negatives(n, positives, np.random.default_rng([cfg.seed, 0]))
    rng = np.random.default_rng([cfg.seed, 1])

    def eval_loss():
        reps = model.encode(adj)
        return float(_hinge_loss(reps, model.relation, positives, eval_neg, cfg.margin).data)

    model.loss_trace.append(eval_loss())
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(positives))
        pos = positives[order]
        neg = sample_negatives(n, pos, rng)
        for b, start in enumerate(range(0, len(pos), cfg.batch_size)):
            store.zero_grad()
            stop = start + cfg.batch_size
            try:
                loss = _hinge_loss(model.encode(adj), model.relation, pos[start:stop],
                                   neg[start:stop], cfg.margin)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch}, batch {b}: {exc}") from None
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            nc.backward(loss, store)
            store.sgd_step(cfg.learning_rate)
        _renormalize(store)
        value = eval_loss()
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss after epoch {epoch}")
        model.loss_trace.append(value)
    store.zero_grad()
    return model


def predict_links(method: str, kg: KnowledgeGraph, model: TransEModel | None = None,
                  rho: float = 0.1, candidates: str = "2hop", top_k: int | None = None,
                  zeta: int | None = None) -> PredictedLinkSet:
    """Predicted links for ``kg``.

    CNM uses the common-neighbor threshold rule. Trained methods score the
    candidate pairs and keep the top ``K = round(rho * |edges|)`` (or
    ``top_k`` when given).
    """
    method = _check_method(method)
    if method == "CNM":
        return cnm_predict(kg, zeta)
    if model is None:
        raise InputError(f"{method} prediction needs a trained model")
    if model.method != method:
        raise InputError(f"model was trained with {model.method}, not {method}")
    pairs = candidate_pairs(kg, candidates)
    k = top_k if top_k is not None else _round_half_up(rho * len(kg.edges))
    policy = {"rho": rho, "k": k, "candidates": candidates}
    if top_k is not None:
        policy = {"top_k": top_k, "k": k, "candidates": candidates}
    if k > len(pairs):
        logger.warning("linkpred: K=%d exceeds %d candidates; emitting all", k, len(pairs))
    if len(pairs) == 0 or k <= 0:
        return PredictedLinkSet(kg.cutoff_year, method, [], kg.entities, policy)
    scores = score_pairs(model.representations(kg), model.relation.data, pairs)
    # lexsort: last key is primary
    order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))[:k]
    links = [(int(pairs[o, 0]), int(pairs[o, 1]), float(scores[o])) for o in order]
    return PredictedLinkSet(kg.cutoff_year, method, links, kg.entities, policy)


# --------------------------------------------------------------------------- checkpoints


def save_model(model: TransEModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def dumps_model(model: TransEModel) -> str:
    meta = {
        "method": model.method,
        "config": model.config.to_dict(),
        "entities": list(model.entities),
        "contexts": model.contexts,
        "vocab": list(model.vocab.tokens) if model.vocab else None,
        "loss_trace": model.loss_trace,
    }
    return nc.dumps_params(model.store, meta)


def load_model(path) -> TransEModel:
    with open(path, encoding="utf-8") as fh:
        store, meta = nc.loads_params(fh.read())
    try:
        cfg = TrainConfig(**meta["config"])
        method = meta["method"]
        entities = tuple(meta["entities"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint lacks model metadata: {exc!r}") from None
    encoder = vocab = None
    contexts = meta.get("contexts")
    if method in ("GAT", "CGAT"):
        ids = None
        if method == "CGAT":
            vocab = Vocab(tuple(meta["vocab"]))
            ids = [vocab.ids(contexts[e]) for e in entities]
        encoder = EntityEncoder(method, cfg.encoder(), store, len(entities), ids,
                                len(vocab) if vocab else 1)
    return TransEModel(method, store, cfg, entities, encoder, vocab, contexts,
                       list(meta.get("loss_trace", [])))

