"""Decomposable (chordal) graphs over the responses.

Graphs are stored as one neighbour bitmask per node.  Chordality is checked
with maximum cardinality search (MCS, ties broken by lowest node index); the
MCS visiting order is a perfect sequence, i.e. the earlier neighbours of every
node form a clique, and it doubles as the ordering of the prime components.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _masks_from_adjacency(adjacency) -> tuple[int, ...]:
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be a square matrix")
    adj = adj.astype(bool)
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(adj)):
        raise ValueError("adjacency must have a zero diagonal")
    return tuple(sum(1 << int(j) for j in np.flatnonzero(row)) for row in adj)


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _mcs(masks: tuple[int, ...]) -> tuple[list[int], list[int]]:
    """Maximum cardinality search.  Returns (order, earlier-neighbour masks)."""
    s = len(masks)
    weight = [0] * s
    visited = 0
    order: list[int] = []
    parents: list[int] = [0] * s
    for _ in range(s):
        best, best_w = -1, -1
        for v in range(s):
            if not visited >> v & 1 and weight[v] > best_w:
                best, best_w = v, weight[v]
        parents[best] = masks[best] & visited
        visited |= 1 << best
        order.append(best)
        for u in _bits(masks[best] & ~visited):
            weight[u] += 1
    return order, parents


def _is_clique(mask: int, masks: tuple[int, ...]) -> bool:
    for x in _bits(mask):
        if (mask & ~(1 << x)) & ~masks[x]:
            return False
    return True


@lru_cache(maxsize=200_000)
def _chordal(masks: tuple[int, ...]) -> bool:
    order, parents = _mcs(masks)
    return all(_is_clique(parents[v], masks) for v in order)


class DecomposableGraph:
    """Immutable chordal graph with its prime-component decomposition.

    Attributes
    ----------
    s : number of nodes
    adjacency : read-only boolean s x s matrix
    order : perfect sequence of the nodes (earlier neighbours form a clique)
    cliques : maximal cliques in running-intersection order
    separators : separator of each clique with the union of the previous ones
        (the first is empty)
    residuals : clique minus separator, listed in ``order``; every node lies
        in exactly one residual
    parents : for each node, its earlier neighbours under ``order``
    """

    __slots__ = ("s", "masks", "adjacency", "order", "cliques", "separators",
                 "residuals", "parents", "_edges")

    def __init__(self, adjacency=None, *, masks: tuple[int, ...] | None = None):
        if masks is None:
            masks = _masks_from_adjacency(adjacency)
        masks = tuple(int(m) for m in masks)
        info = _decomposition(masks)
        if info is None:
            raise ValueError("graph is not decomposable")
        self.s = len(masks)
        self.masks = masks
        self.order, self.cliques, self.separators, self.residuals, self.parents = info
        adj = np.zeros((self.s, self.s), dtype=bool)
        for v, m in enumerate(masks):
            adj[v, _bits(m)] = True
        adj.setflags(write=False)
        self.adjacency = adj
        self._edges = None

    @classmethod
    def empty(cls, s: int) -> "DecomposableGraph":
        return cls(masks=(0,) * s)

    @classmethod
    def complete(cls, s: int) -> "DecomposableGraph":
        full = (1 << s) - 1
        return cls(masks=tuple(full & ~(1 << v) for v in range(s)))

    @classmethod
    def from_edges(cls, s: int, edges) -> "DecomposableGraph":
        masks = [0] * s
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("self-loops are not allowed")
            masks[a] |= 1 << b
            masks[b] |= 1 << a
        return cls(masks=tuple(masks))

    @property
    def key(self) -> tuple[int, ...]:
        return self.masks

    @property
    def n_components(self) -> int:
        """Number of prime components Q."""
        return len(self.cliques)

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.masks[a] >> b & 1)

    def edges(self) -> list[tuple[int, int]]:
        if self._edges is None:
            self._edges = [(a, b) for a in range(self.s) for b in _bits(self.masks[a]) if b > a]
        return list(self._edges)

    def flipped(self, a: int, b: int) -> "DecomposableGraph":
        """Graph with edge (a, b) toggled; raises ValueError if not decomposable."""
        masks = list(self.masks)
        masks[a] ^= 1 << b
        masks[b] ^= 1 << a
        return DecomposableGraph(masks=tuple(masks))

    def __eq__(self, other):
        return isinstance(other, DecomposableGraph) and self.masks == other.masks

    def __hash__(self):
        return hash(self.masks)

    def __repr__(self):
        return f"DecomposableGraph(s={self.s}, edges={self.edges()})"


@lru_cache(maxsize=100_000)
def _decomposition(masks: tuple[int, ...]):
    order, parent_masks = _mcs(masks)
    if not all(_is_clique(parent_masks[v], masks) for v in order):
        return None
    cliques: list[tuple[int, ...]] = []
    separators: list[tuple[int, ...]] = []
    residuals: list[list[int]] = []
    current = 0
    prev_count = -1
    for v in order:
        pa = parent_masks[v]
        count = pa.bit_count()
        # MCS: the clique continues iff the parent count grew by exactly one
        # and the parents are the whole current clique
        if residuals and count == prev_count + 1 and pa == current:
            current |= 1 << v
            residuals[-1].append(v)
        else:
            if residuals:
                cliques.append(tuple(_bits(current)))
            separators.append(tuple(_bits(pa)))
            residuals.append([v])
            current = pa | (1 << v)
        prev_count = count
    cliques.append(tuple(_bits(current)))
    parents = tuple(tuple(_bits(parent_masks[v])) for v in range(len(masks)))
    return (tuple(order), tuple(cliques), tuple(separators),
            tuple(tuple(r) for r in residuals), parents)


def is_decomposable(adjacency) -> bool:
    """True iff the (symmetric, zero-diagonal) adjacency matrix is chordal."""
    return _chordal(_masks_from_adjacency(adjacency))


def decompose(adjacency) -> DecomposableGraph:
    """Decomposition into prime components; ValueError if not chordal."""
    return DecomposableGraph(adjacency)


def edge_count(g: DecomposableGraph) -> int:
    return sum(m.bit_count() for m in g.masks) // 2


def enumerate_edges(g: DecomposableGraph) -> list[tuple[int, int]]:
    return g.edges()


@lru_cache(maxsize=200_000)
def _legal_flips(masks: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    s = len(masks)
    out = []
    for a in range(s):
        for b in range(a + 1, s):
            trial = list(masks)
            trial[a] ^= 1 << b
            trial[b] ^= 1 << a
            if _chordal(tuple(trial)):
                out.append((a, b))
    return tuple(out)


def legal_flips(g: DecomposableGraph) -> list[tuple[int, int]]:
    """All single-edge toggles that keep ``g`` decomposable."""
    return list(_legal_flips(g.masks))


def propose_edge_flip(g: DecomposableGraph, rng: np.random.Generator):
    """Uniform proposal over decomposability-preserving single-edge flips.

    Returns ``(g_new, edge, log_ratio)`` where ``log_ratio`` is
    log q(g | g_new) - log q(g_new | g).
    """
    if g.s < 2:
        return g, None, 0.0
    forward = _legal_flips(g.masks)
    a, b = forward[rng.integers(len(forward))]
    g_new = g.flipped(a, b)
    backward = _legal_flips(g_new.masks)
    return g_new, (a, b), float(np.log(len(forward)) - np.log(len(backward)))
