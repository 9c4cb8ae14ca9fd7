"""Graph-attention, bilinear context attention and gated fusion encoders.

All row-vector conventions: a feature matrix is N x F and a weight matrix
W_s of shape F x F' maps it to N x F'.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numcore as nc
from .errors import ConfigError, ShapeError
from .numcore import ParamStore, Tensor

UNK = "<unk>"


@dataclass(frozen=True)
class EncoderConfig:
    F: int = 64
    F_prime: int = 64
    d: int = 64
    leaky_slope: float = nc.DEFAULT_LEAKY_SLOPE
    heads: int = 1
    layers: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.F, self.F_prime, self.d, self.layers) < 1:
            raise ConfigError("encoder dimensions and layer count must be positive")
        if self.heads != 1:
            raise ConfigError("only single-head attention is supported")
        if not 0 < self.leaky_slope < 1:
            raise ConfigError("leaky_slope must lie in (0, 1)")

    def to_dict(self):
        return {"F": self.F, "F_prime": self.F_prime, "d": self.d,
                "leaky_slope": self.leaky_slope, "heads": self.heads,
                "layers": self.layers, "seed": self.seed}


@dataclass
class GatLayer:
    W_s: Tensor
    a: Tensor
    slope: float = nc.DEFAULT_LEAKY_SLOPE

    @property
    def out_dim(self) -> int:
        return self.W_s.shape[1]


@dataclass
class ContextEncoder:
    tokens: Tensor       # |vocab| x d, row 0 reserved for unknown tokens
    W_f: Tensor          # F x d bilinear matrix; query is the entity base embedding
    projection: Tensor   # d x F'


@dataclass
class GateParams:
    gate: Tensor         # N x F'


@dataclass(frozen=True)
class Adjacency:
    """Neighbor lists with self-loops, flattened and grouped by center node.

    ``center[k]``/``nbr[k]`` is the k-th (i, j) pair; pairs for node i are
    contiguous starting at ``offsets[i]`` with j ascending.
    """

    center: np.ndarray
    nbr: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_lists(cls, neighbor_lists: Sequence[Sequence[int] | set]) -> "Adjacency":
        center, nbr, offsets = [], [], []
        for i, nbrs in enumerate(neighbor_lists):
            offsets.append(len(nbr))
            for j in sorted(set(nbrs) | {i}):
                center.append(i)
                nbr.append(j)
        return cls(np.array(center, dtype=np.intp), np.array(nbr, dtype=np.intp),
                   np.array(offsets, dtype=np.intp))

    @classmethod
    def from_graph(cls, kg) -> "Adjacency":
        return cls.from_lists(kg.adjacency())

    def groups(self):
        bounds = list(self.offsets) + [len(self.nbr)]
        return [(bounds[i], bounds[i + 1]) for i in range(len(self.offsets))]


@dataclass
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, sentences: Mapping[str, Sequence[str]]) -> "Vocab":
        toks = sorted({t for s in sentences.values() for t in s} - {UNK})
        return cls((UNK, *toks))

    def ids(self, sentence: Sequence[str]) -> list[int]:
        return [self._index.get(t, 0) for t in sentence]

    def __len__(self):
        return len(self.tokens)


def gat_forward(layer: GatLayer, features, adj: Adjacency,
                return_attention: bool = False):
    """One single-head attention layer with sigmoid aggregation.

    s_ij = LeakyReLU(a . [W h_i ++ W h_j]) over j in N(i) + {i};
    out_i = sigmoid(sum_j softmax(s_i.)_j W h_j).
    """
    h = nc.as_tensor(features)
    if h.data.ndim != 2 or h.shape[1] != layer.W_s.shape[0]:
        raise ShapeError(f"gat_forward: features {h.shape} do not fit W_s {layer.W_s.shape}")
    if len(adj.offsets) != h.shape[0]:
        raise ShapeError("gat_forward: adjacency covers a different number of nodes")
    fp = layer.out_dim
    if layer.a.shape != (2 * fp,):
        raise ShapeError(f"gat_forward: attention vector must have length {2 * fp}")
    wh = nc.matmul(h, layer.W_s)
    a_center = nc.slice_(layer.a, 0, fp)
    a_nbr = nc.slice_(layer.a, fp, 2 * fp)
    score_center = nc.reshape(nc.matmul(wh, _col(a_center)), -1)
    score_nbr = nc.reshape(nc.matmul(wh, _col(a_nbr)), -1)
    s = nc.add(nc.take(score_center, adj.center), nc.take(score_nbr, adj.nbr))
    s = nc.leaky_relu(s, layer.slope)
    alpha = nc.segment_softmax(s, adj.offsets)
    weighted = nc.mul(nc.take(wh, adj.nbr), _col(alpha))
    out = nc.sigmoid(nc.segment_sum(weighted, adj.offsets))
    if return_attention:
        return out, alpha.data
    return out


def _col(v: Tensor) -> Tensor:
    return nc.reshape(v, (-1, 1))


def context_forward(enc: ContextEncoder, entity_vec, tokens: Sequence[int]) -> Tensor:
    """Context vector of one entity from the token ids of its sentence."""
    if len(tokens) == 0:
        raise ShapeError("context_forward: empty token list")
    e = nc.as_tensor(entity_vec)
    H = nc.take(enc.tokens, np.asarray(tokens, dtype=np.intp))
    query = nc.matmul(e, enc.W_f)
    mu = nc.softmax(nc.reshape(nc.matmul(H, _col(query)), -1))
    pooled = nc.sum(nc.mul(H, _col(mu)), axis=0)
    return nc.matmul(pooled, enc.projection)


def context_forward_batch(enc: ContextEncoder, base, token_ids: np.ndarray,
                          offsets: np.ndarray) -> Tensor:
    """Context vectors for every entity at once; entity i owns tokens[offsets[i]:offsets[i+1]]."""
    base = nc.as_tensor(base)
    lengths = np.diff(np.append(offsets, len(token_ids)))
    owner = np.repeat(np.arange(len(offsets)), lengths)
    H = nc.take(enc.tokens, token_ids)
    query = nc.take(nc.matmul(base, enc.W_f), owner)
    mu = nc.segment_softmax(nc.sum(nc.mul(query, H), axis=1), offsets)
    pooled = nc.segment_sum(nc.mul(H, _col(mu)), offsets)
    return nc.matmul(pooled, enc.projection)


def gate_fuse(gate: GateParams, entity: int, h_graph, e_ctx) -> Tensor:
    h, e = nc.as_tensor(h_graph), nc.as_tensor(e_ctx)
    if h.shape != e.shape or h.shape != gate.gate.shape[1:]:
        raise ShapeError(f"gate_fuse: shapes {h.shape}, {e.shape}, gate {gate.gate.shape[1:]}")
    g = nc.sigmoid(nc.reshape(nc.take(gate.gate, [entity]), -1))
    return nc.add(e, nc.mul(g, nc.sub(h, e)))


def gate_fuse_batch(gate: GateParams, h_graph, e_ctx) -> Tensor:
    h, e = nc.as_tensor(h_graph), nc.as_tensor(e_ctx)
    if h.shape != e.shape or h.shape != gate.gate.shape:
        raise ShapeError(f"gate_fuse: shapes {h.shape}, {e.shape}, gate {gate.gate.shape}")
    g = nc.sigmoid(gate.gate)
    return nc.add(e, nc.mul(g, nc.sub(h, e)))


class EntityEncoder:
    """Parameter layout and forward pass for the GAT and CGAT encoders.

    Parameters live in a shared :class:`ParamStore` under the names
    ``entity``, ``gat{k}.W``, ``gat{k}.a`` and, for CGAT, ``ctx.tokens``,
    ``ctx.W_f``, ``ctx.proj`` and ``gate``.
    """

    def __init__(self, mode: str, cfg: EncoderConfig, store: ParamStore, num_entities: int,
                 contexts: Sequence[Sequence[int]] | None = None, vocab_size: int = 1):
        mode = mode.upper()
        if mode not in ("GAT", "CGAT"):
            raise ConfigError(f"unknown encoder mode {mode!r}")
        self.mode = mode
        self.cfg = cfg
        self.store = store
        self.num_entities = num_entities
        if "entity" not in store:
            store.add("entity", (num_entities, cfg.F))
        self.layers = []
        dim_in = cfg.F
        for k in range(cfg.layers):
            if f"gat{k}.W" not in store:
                store.add(f"gat{k}.W", (dim_in, cfg.F_prime), dim=dim_in)
                store.add(f"gat{k}.a", (2 * cfg.F_prime,), dim=2 * cfg.F_prime)
            self.layers.append(GatLayer(store[f"gat{k}.W"], store[f"gat{k}.a"], cfg.leaky_slope))
            dim_in = cfg.F_prime
        self.context = None
        self.gate = None
        if mode == "CGAT":
            if contexts is None or len(contexts) != num_entities:
                raise ConfigError("CGAT needs one context sentence per entity")
            if any(len(c) == 0 for c in contexts):
                raise ShapeError("CGAT: empty context sentence")
            if "ctx.tokens" not in store:
                store.add("ctx.tokens", (vocab_size, cfg.d))
                store.add("ctx.W_f", (cfg.F, cfg.d), dim=cfg.F)
                store.add("ctx.proj", (cfg.d, cfg.F_prime), dim=cfg.d)
                store.add("gate", (num_entities, cfg.F_prime))
            self.context = ContextEncoder(store["ctx.tokens"], store["ctx.W_f"], store["ctx.proj"])
            self.gate = GateParams(store["gate"])
            self.token_ids = np.array([t for c in contexts for t in c], dtype=np.intp)
            self.token_offsets = np.cumsum([0] + [len(c) for c in contexts[:-1]]).astype(np.intp)

    @property
    def base(self) -> Tensor:
        return self.store["entity"]

    def graph_forward(self, adj: Adjacency) -> Tensor:
        h = self.base
        for layer in self.layers:
            h = gat_forward(layer, h, adj)
        return h

    def forward(self, adj: Adjacency) -> Tensor:
        h = self.graph_forward(adj)
        if self.mode == "GAT":
            return h
        ctx = context_forward_batch(self.context, self.base, self.token_ids, self.token_offsets)
        return gate_fuse_batch(self.gate, h, ctx)


def encode_entities(mode: str, kg, store: ParamStore, cfg: EncoderConfig,
                    context_sentences: Mapping[str, Sequence[str]] | None = None,
                    vocab: Vocab | None = None) -> np.ndarray:
    """Encoded N x F' representation for every entity in ``kg``.

    In CGAT mode an entity with no sentence falls back to the tokens of its
    own lexicon term (its id).
    """
    contexts = None
    vocab_size = 1
    if mode.upper() == "CGAT":
        sentences = resolve_contexts(kg.entities, context_sentences or {})
        vocab = vocab or Vocab.build(sentences)
        contexts = [vocab.ids(sentences[e]) for e in kg.entities]
        vocab_size = len(vocab)
    enc = EntityEncoder(mode, cfg, store, kg.num_entities, contexts, vocab_size)
    return enc.forward(Adjacency.from_graph(kg)).data


def resolve_contexts(entities: Sequence[str],
                     context_sentences: Mapping[str, Sequence[str]]) -> dict[str, list[str]]:
    out = {}
    for e in entities:
        sent = context_sentences.get(e)
        out[e] = list(sent) if sent else e.split(" ")
    return out
