"""Shared fixtures and brute-force oracles.

The oracles here deliberately avoid the package's own data structures so
they stay independent of the code paths they check.
"""

import math
from itertools import combinations

import numpy as np
import pytest

from patentkg.corpus import Document, Lexicon
from patentkg.kg import KnowledgeGraph

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


# --------------------------------------------------------------------------- graph helpers


def graph_from_edges(n, edges, cutoff_year=2010):
    """KnowledgeGraph with entities e00..e{n-1} and the given index edges."""
    ents = tuple(f"e{k:02d}" for k in range(n))
    return KnowledgeGraph(cutoff_year, ents, {(min(i, j), max(i, j)): cutoff_year
                                              for i, j in edges})


def random_edges(rng, n, p):
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def doc(pid, year, text):
    return Document(pid, year, text, "")


@pytest.fixture
def abc_lexicon():
    return Lexicon.from_terms(["alpha", "beta", "gamma", "delta"])


# --------------------------------------------------------------------------- oracles


def brute_force_matches(tokens, terms):
    """Every (start, end) token span equal to a term, then leftmost-longest greedy resolution."""
    spans = []
    for s in range(len(tokens)):
        for e in range(s + 1, len(tokens) + 1):
            if " ".join(tokens[s:e]) in terms:
                spans.append((s, e))
    spans.sort(key=lambda se: (se[0], -(se[1] - se[0])))
    out, pos = [], 0
    for s, e in spans:
        if s >= pos:
            out.append(" ".join(tokens[s:e]))
            pos = e
    return out


def brute_common_neighbors(n, edges):
    nb = {i: set() for i in range(n)}
    for i, j in edges:
        nb[i].add(j)
        nb[j].add(i)
    scores = {}
    for i in range(n):
        for j in range(i + 1, n):
            if j not in nb[i]:
                scores[(i, j)] = len(nb[i].intersection(nb[j]))
    return nb, scores


def brute_cnm_rule(n, edges):
    """Pairs meeting m >= ceil(M/2) (and m >= 1) among non-adjacent pairs."""
    _, scores = brute_common_neighbors(n, edges)
    M = max(scores.values(), default=0)
    thr = math.ceil(M / 2)
    return {p for p, m in scores.items() if m >= thr and m >= 1}


def brute_maximal_cliques_with_tag(n, edges, tagged):
    es = {frozenset(e) for e in edges}
    tagged = {frozenset(e) for e in tagged}
    out = set()
    for mask in range(1, 1 << n):
        S = [v for v in range(n) if mask >> v & 1]
        if len(S) < 2:
            continue
        if not all(frozenset(p) in es for p in combinations(S, 2)):
            continue
        if any(all(frozenset((v, u)) in es for u in S) for v in range(n) if v not in S):
            continue
        if any(frozenset(p) in tagged for p in combinations(S, 2)):
            out.add(frozenset(S))
    return out


def scalar_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_gat(h, W, a, nbrs, slope=0.2):
    """Node-by-node evaluation with plain Python loops; ``nbrs`` excludes self."""
    N, F = len(h), len(h[0])
    Fp = len(W[0])
    Wh = [[sum(h[i][f] * W[f][k] for f in range(F)) for k in range(Fp)] for i in range(N)]
    out, attn = [], []
    for i in range(N):
        js = sorted(set(nbrs[i]) | {i})
        s = []
        for j in js:
            z = sum(a[k] * Wh[i][k] for k in range(Fp)) + sum(a[Fp + k] * Wh[j][k] for k in range(Fp))
            s.append(z if z >= 0 else slope * z)
        mx = max(s)
        ex = [math.exp(v - mx) for v in s]
        tot = sum(ex)
        alpha = [v / tot for v in ex]
        attn.append(alpha)
        out.append([scalar_sigmoid(sum(alpha[t] * Wh[j][k] for t, j in enumerate(js)))
                    for k in range(Fp)])
    return out, attn


def scalar_context(e, W_f, H, P):
    """Bilinear token attention for one entity; H is the list of token vectors."""
    F, d = len(W_f), len(W_f[0])
    mu = [sum(e[f] * W_f[f][k] * Hi[k] for f in range(F) for k in range(d)) for Hi in H]
    mx = max(mu)
    ex = [math.exp(m - mx) for m in mu]
    tot = sum(ex)
    w = [v / tot for v in ex]
    pooled = [sum(w[t] * H[t][k] for t in range(len(H))) for k in range(d)]
    return [sum(pooled[k] * P[k][q] for k in range(d)) for q in range(len(P[0]))]


def scalar_gate(g_bar, h, e):
    g = [scalar_sigmoid(x) for x in g_bar]
    return [g[k] * h[k] + (1 - g[k]) * e[k] for k in range(len(h))]


def to_lists(a):
    return np.asarray(a).tolist()
