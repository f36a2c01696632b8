"""Attention-weighted neighbour aggregation over the background graph.

A message for edge (u -> v) is ``W_r [h_u; e_uv; h_v]`` with ``e_uv`` the
relation embedding of the edge. Messages are weighted by a softmax over the
neighbourhood of ``LeakyReLU(w . [h_v; m_uv])`` and summed, and a self-loop
term ``W_loop h_v`` is added. Two rounds with shared weights let 2-hop
information reach each entity.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ContractError, VocabularyError
from .kg_data import EmbeddingStore, NeighborGraph


class EntityEncoding:
    """Updated embeddings for a sorted set of entity ids."""

    def __init__(self, ids: np.ndarray, table: nx.Tensor):
        self.ids = ids
        self.table = table

    def rows(self, entity_ids) -> nx.Tensor:
        entity_ids = np.asarray(entity_ids, dtype=np.int64)
        loc = np.searchsorted(self.ids, entity_ids)
        if np.any(loc >= len(self.ids)) or np.any(self.ids[np.minimum(loc, len(self.ids) - 1)] != entity_ids):
            raise VocabularyError("entity not covered by this encoding")
        return nx.take_rows(self.table, loc)


class GlobalAggregator:
    def __init__(self, registry: nx.ParamRegistry, dim: int, layers: int = 2,
                 slope: float = 0.01, prefix: str = "aggregator"):
        self.dim = dim
        self.layers = layers
        self.slope = slope
        self.W_r = registry.create(f"{prefix}.W_r", (dim, 3 * dim))
        self.w = registry.create(f"{prefix}.w", (1, 2 * dim))
        self.W_loop = registry.create(f"{prefix}.W_loop", (dim, dim))

    # single-entity forms ---------------------------------------------------
    def compute_messages(self, v: int, graph: NeighborGraph, store: EmbeddingStore,
                         table: nx.Tensor | None = None) -> nx.Tensor:
        table = store.entity if table is None else table
        edges = graph.edges(v)
        if not edges:
            return nx.Tensor(np.zeros((0, self.dim)))
        rel = np.array([r for r, _ in edges])
        nbr = np.array([u for _, u in edges])
        h_u = nx.take_rows(table, nbr)
        e_uv = nx.take_rows(store.relation, rel)
        h_v = nx.take_rows(table, np.full(len(edges), v))
        return nx.linear(nx.concat([h_u, e_uv, h_v], axis=-1), self.W_r)

    def attention_coefficients(self, v: int, messages: nx.Tensor, store: EmbeddingStore,
                               table: nx.Tensor | None = None) -> nx.Tensor:
        if messages.shape[0] == 0:
            raise ContractError(f"entity {v} has no neighbours; attention is undefined")
        table = store.entity if table is None else table
        h_v = nx.take_rows(table, np.full(messages.shape[0], v))
        logits = nx.leaky_relu(nx.linear(nx.concat([h_v, messages], axis=-1), self.w), self.slope)
        return nx.softmax(logits.reshape(-1), axis=0)

    def aggregate_entity(self, v: int, graph: NeighborGraph, store: EmbeddingStore,
                         table: nx.Tensor | None = None) -> nx.Tensor:
        table = store.entity if table is None else table
        h_v = nx.take_rows(table, [v]).reshape(self.dim)
        out = nx.linear(h_v, self.W_loop)
        msgs = self.compute_messages(v, graph, store, table)
        if msgs.shape[0]:
            alpha = self.attention_coefficients(v, msgs, store, table)
            out = out + (alpha.reshape(-1, 1) * msgs).sum(axis=0)
        return out

    # vectorised ------------------------------------------------------------
    def layer(self, H_prev: nx.Tensor, prev_ids: np.ndarray, targets: np.ndarray,
              graph: NeighborGraph, store: EmbeddingStore) -> nx.Tensor:
        """One aggregation round for ``targets`` given embeddings of ``prev_ids``.

        ``prev_ids`` is sorted and must contain every target and neighbour.
        """
        seg, rel, nbr = graph.gather(targets)
        tloc = np.searchsorted(prev_ids, targets)
        h_self = nx.take_rows(H_prev, tloc)
        h_u = nx.take_rows(H_prev, np.searchsorted(prev_ids, nbr))
        h_v = nx.take_rows(H_prev, tloc[seg])
        e_uv = nx.take_rows(store.relation, rel)
        msgs = nx.linear(nx.concat([h_u, e_uv, h_v], axis=-1), self.W_r)
        logits = nx.leaky_relu(nx.linear(nx.concat([h_v, msgs], axis=-1), self.w), self.slope)
        alpha = nx.segment_softmax(logits.reshape(-1), seg, len(targets))
        agg = nx.segment_sum(alpha.reshape(-1, 1) * msgs, seg, len(targets))
        return agg + nx.linear(h_self, self.W_loop)

    def encode_entities(self, entity_ids, graph: NeighborGraph, store: EmbeddingStore) -> EntityEncoding:
        ids = np.unique(np.asarray(entity_ids, dtype=np.int64))
        if len(ids) and (ids[0] < 0 or ids[-1] >= graph.num_entities):
            raise VocabularyError(f"entity id out of range 0..{graph.num_entities - 1}")
        levels = [ids]
        for _ in range(self.layers):
            levels.append(graph.neighborhood(levels[-1]))
        H = nx.take_rows(store.entity, levels[-1])
        for depth in range(self.layers, 0, -1):
            H = self.layer(H, levels[depth], levels[depth - 1], graph, store)
        return EntityEncoding(ids, H)

    def encode_triples(self, triples, graph: NeighborGraph, store: EmbeddingStore,
                       encoding: EntityEncoding | None = None) -> nx.Tensor:
        """Rows ``[h'_head; h'_tail]`` in input order, shape (n, 2d)."""
        arr = np.asarray([tuple(t) for t in triples], dtype=np.int64).reshape(-1, 3)
        if len(arr) == 0:
            raise ContractError("encode_triples needs at least one triple")
        if encoding is None:
            encoding = self.encode_entities(np.concatenate([arr[:, 0], arr[:, 2]]), graph, store)
        return nx.concat([encoding.rows(arr[:, 0]), encoding.rows(arr[:, 2])], axis=-1)
