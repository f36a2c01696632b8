"""The composed model: aggregator -> relation learner -> diffusion -> pooler -> scorer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffusion as dm
from .. import numerics as nx
from ..aggregator import EntityEncoding, GlobalAggregator
from ..errors import ContractError, DivergenceError
from ..kg_data import Dataset, EmbeddingStore, EpisodeTask, NeighborGraph
from ..pooler import AttentionPooler, mean_pool, pool_pos_neg
from ..relation_learner import RelationLearner
from ..scorer import margin_loss, project_entities, score, total_loss
from .config import RunConfig


@dataclass
class EpisodeOutput:
    pos_scores: nx.Tensor
    neg_scores: nx.Tensor
    margin: nx.Tensor
    mse: nx.Tensor
    total: nx.Tensor
    trace: dict = field(default_factory=dict)


@dataclass
class SupportState:
    """Per-episode quantities reused across every candidate scoring."""

    encoding: EntityEncoding
    relation: nx.Tensor  # (batch, d)
    latent: nx.Tensor  # (batch, latent width)
    z0: nx.Tensor
    z0_hat: nx.Tensor
    mse: nx.Tensor | None


class ReCDAP:
    def __init__(self, config: RunConfig, num_entities: int, num_relations: int,
                 graph: NeighborGraph, store: EmbeddingStore | None = None):
        self.config = config
        self.graph = graph
        d = config.dim
        self.registry = nx.ParamRegistry(seed=config.seed)
        if store is None:
            store = EmbeddingStore.random(num_entities, num_relations, d, seed=config.seed)
        if store.dim != d:
            raise ContractError(f"embedding dimension {store.dim} != configured dim {d}")
        self.store = store.register(self.registry, trainable=not config.freeze_embeddings)
        self.aggregator = GlobalAggregator(self.registry, d, layers=config.agg_layers)
        self.relation_learner = RelationLearner(self.registry, 2 * d, config.hidden_size, d)
        self.schedule = dm.build_schedule(config.t_steps, config.beta_start, config.beta_end)
        if config.no_recd:
            self.predictor = None
            self.recd_W1 = self.registry.create("recd_mlp.W1", (2 * d, 2 * d))
            self.recd_b1 = self.registry.create("recd_mlp.b1", (2 * d,))
            self.recd_W2 = self.registry.create("recd_mlp.W2", (2 * d, 2 * d))
            self.recd_b2 = self.registry.create("recd_mlp.b2", (2 * d,))
        else:
            self.predictor = dm.NoisePredictor(
                self.registry, 2 * d, 3 * d + 2, channels=config.unet_channels,
                time_width=config.time_width, embed_width=config.embed_width,
            )
        self.single_pool = config.no_support_neg or config.no_posneg_sep
        if config.no_attnpool:
            self.pos_pool = self.neg_pool = mean_pool
        elif self.single_pool:
            self.pos_pool = self.neg_pool = AttentionPooler(self.registry, 2 * d, prefix="pooler")
        else:
            self.pos_pool = AttentionPooler(self.registry, 2 * d, prefix="pooler.pos")
            self.neg_pool = AttentionPooler(self.registry, 2 * d, prefix="pooler.neg")
        self.latent_width = 2 * d if self.single_pool else 4 * d
        self.W_h = self.registry.create("scorer.W_h", (d, self.latent_width))
        self.W_t = self.registry.create("scorer.W_t", (d, self.latent_width))
        self.hooks: list = []

    @classmethod
    def for_dataset(cls, config: RunConfig, dataset: Dataset, graph: NeighborGraph,
                    store: EmbeddingStore | None = None) -> ReCDAP:
        return cls(config, dataset.num_entities, dataset.num_relations, graph, store)

    def _emit(self, event: str, **payload):
        for hook in self.hooks:
            hook(event, payload)

    # support side ----------------------------------------------------------
    def _extended(self, task: EpisodeTask):
        if self.config.no_support_neg:
            return list(task.support_pos)
        return task.extended_support

    def _labels(self, k: int, n: int):
        if self.config.no_posneg_sep:
            return None
        return np.array([1] * k + [0] * (n - k))

    def _recd_mlp(self, z0):
        h = nx.leaky_relu(nx.linear(z0, self.recd_W1, self.recd_b1), 0.01)
        return nx.linear(h, self.recd_W2, self.recd_b2)

    def support(self, tasks: list[EpisodeTask], rng: np.random.Generator, train: bool,
                extra_entities=()) -> SupportState:
        k = tasks[0].k
        if any(t.k != k for t in tasks):
            raise ContractError("all episodes in a batch need the same k")
        ext = [self._extended(t) for t in tasks]
        n = len(ext[0])
        flat = np.array([tuple(tr) for rows in ext for tr in rows], dtype=np.int64)
        entities = np.concatenate([flat[:, 0], flat[:, 2], np.asarray(extra_entities, dtype=np.int64)])
        enc = self.aggregator.encode_entities(entities, self.graph, self.store)
        bsz = len(tasks)
        z0 = self.aggregator.encode_triples(flat, self.graph, self.store, enc).reshape(bsz, n, -1)
        rel = self.relation_learner(z0[:, :k, :])
        mse = None
        if self.predictor is None:
            z0_hat = self._recd_mlp(z0)
            cond_rows = 0
        else:
            cond = dm.build_condition(rel, z0, self._labels(k, n))
            cond_rows = cond.shape[1]
            self._emit("condition", rows=cond_rows, width=cond.shape[2], labels=cond.data[..., -2:].copy())
            if train:
                out = dm.diffusion_loss(z0, cond, self.schedule, rng, self.predictor)
                z0_hat, mse = out.z0_hat, out.loss
            else:
                length = dm.padded_length(n)
                condp = np.pad(cond.data, ((0, 0), (0, length - n), (0, 0)))
                z0_hat = nx.Tensor(dm.sample((bsz, length, z0.shape[2]), condp, self.schedule, rng,
                                             self.predictor, n_rows=n))
        if self.single_pool:
            latent = self.pos_pool(z0_hat)
        else:
            latent = pool_pos_neg(z0_hat, k, self.pos_pool, self.neg_pool)
        self._emit("latent", width=latent.shape[-1], extended_rows=n, condition_rows=cond_rows)
        return SupportState(enc, rel, latent, z0, z0_hat, mse)

    # query side -------------------------------------------------------------
    def score_pairs(self, state: SupportState, heads: np.ndarray, tails: np.ndarray) -> nx.Tensor:
        """Scores for (batch, q) head/tail id arrays."""
        bsz, nq = heads.shape
        h = state.encoding.rows(heads.reshape(-1)).reshape(bsz, nq, -1)
        t = state.encoding.rows(tails.reshape(-1)).reshape(bsz, nq, -1)
        hp, tp = project_entities(h, t, state.latent, self.W_h, self.W_t)
        return score(hp, state.relation.reshape(bsz, 1, -1), tp)

    def score_candidates(self, state: SupportState, heads, candidates) -> np.ndarray:
        """Score matrix (queries, candidates) for a single-episode state."""
        heads = np.asarray(heads, dtype=np.int64)
        candidates = np.asarray(candidates, dtype=np.int64)
        with nx.no_grad():
            h = state.encoding.rows(heads)
            t = state.encoding.rows(candidates)
            hp, tp = project_entities(h, t, state.latent[0], self.W_h, self.W_t)
            diff = hp.data[:, None, :] + state.relation.data[0][None, None, :] - tp.data[None, :, :]
        return -np.sqrt((diff * diff).sum(axis=-1))

    def forward_episode(self, tasks: list[EpisodeTask], rng: np.random.Generator,
                        train: bool = True) -> EpisodeOutput:
        qpos = np.array([[tuple(q) for q in t.query_pos] for t in tasks], dtype=np.int64)
        qneg = np.array([[tuple(q) for q in t.query_neg] for t in tasks], dtype=np.int64)
        extra = np.concatenate([qpos[..., [0, 2]].reshape(-1), qneg[..., 2].reshape(-1)])
        state = self.support(tasks, rng, train=train, extra_entities=extra)
        pos = self.score_pairs(state, qpos[..., 0], qpos[..., 2])
        neg = self.score_pairs(state, qneg[..., 0], qneg[..., 2])
        margin = margin_loss(pos, neg, self.config.margin)
        mse = state.mse if state.mse is not None else nx.Tensor(0.0)
        if not (np.isfinite(margin.item()) and np.isfinite(mse.item())):
            raise DivergenceError(f"non-finite loss: margin={margin.item()}, mse={mse.item()}")
        trace = {
            "latent_width": state.latent.shape[-1],
            "extended_rows": state.z0.shape[1],
        }
        return EpisodeOutput(pos, neg, margin, mse, total_loss(margin, mse), trace)
