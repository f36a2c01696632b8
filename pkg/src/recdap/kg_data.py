"""Few-shot KG datasets: loading, neighbour graphs, corruption and episodes.

On-disk layout (the usual few-shot KGC convention)::

    path_graph            background triples, ``head<TAB>relation<TAB>tail``
    train_tasks.json      {relation: [[head, relation, tail], ...]}
    dev_tasks.json        validation split, same schema
    test_tasks.json
    rel2candidates.json   optional {relation: [entity, ...]}
    ent2ids, relation2ids optional {name: id}; fixes vocabulary order
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, EpisodeError, LoadError, SamplingError, VocabularyError
from .numerics import ParamRegistry, Tensor, uniform_init

log = logging.getLogger(__name__)

SPLIT_FILES = {"train": "train_tasks.json", "valid": "dev_tasks.json", "test": "test_tasks.json"}
BACKGROUND_FILE = "path_graph"
CANDIDATE_FILE = "rel2candidates.json"


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def type_prefix(name: str) -> str | None:
    return name.rsplit(":", 1)[0] if ":" in name else None


@dataclass
class Dataset:
    entities: list[str]
    relations: list[str]
    background: np.ndarray  # (n, 3) int64
    tasks: dict[str, dict[int, list[Triple]]]
    candidates: dict[int, np.ndarray]
    root: Path | None = None
    entity_index: dict[str, int] = field(init=False, repr=False)
    relation_index: dict[str, int] = field(init=False, repr=False)
    _known: dict[tuple[int, int], set[int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.entity_index = {n: i for i, n in enumerate(self.entities)}
        self.relation_index = {n: i for i, n in enumerate(self.relations)}
        seen: dict[int, str] = {}
        for split, rels in self.tasks.items():
            for r in rels:
                if r in seen:
                    raise LoadError(
                        f"relation {self.relations[r]!r} appears in both {seen[r]} and {split}"
                    )
                seen[r] = split
        self._known = {}
        for h, r, t in self.background.tolist():
            self._known.setdefault((h, r), set()).add(t)
        for rels in self.tasks.values():
            for triples in rels.values():
                for h, r, t in triples:
                    self._known.setdefault((h, r), set()).add(t)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def split_relations(self, split: str) -> list[int]:
        return list(self.tasks.get(split, {}))

    def relation_triples(self, relation: int) -> list[Triple]:
        for rels in self.tasks.values():
            if relation in rels:
                return rels[relation]
        raise VocabularyError(f"relation id {relation} is not a task relation")

    def true_tails(self, head: int, relation: int) -> set[int]:
        return self._known.get((head, relation), set())

    def is_true(self, triple) -> bool:
        return triple[2] in self.true_tails(triple[0], triple[1])

    def candidate_pool(self, relation: int) -> np.ndarray:
        return self.candidates[relation]

    def counts(self) -> dict:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "background_triples": len(self.background),
            "splits": {s: len(self.tasks.get(s, {})) for s in SPLIT_FILES},
        }


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise LoadError(f"missing dataset file: {path}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed JSON in {path}: {exc}") from None


def _read_background(path: Path) -> list[tuple[str, str, str]]:
    if not path.exists():
        raise LoadError(f"missing dataset file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LoadError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def _id_file(path: Path) -> list[str] | None:
    if not path.exists():
        return None
    mapping = _read_json(path)
    names = sorted(mapping, key=lambda n: mapping[n])
    if [mapping[n] for n in names] != list(range(len(names))):
        raise LoadError(f"{path}: ids must be a permutation of 0..{len(names) - 1}")
    return names


def load_dataset(root) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise LoadError(f"dataset directory not found: {root}")
    raw_background = _read_background(root / BACKGROUND_FILE)
    raw_tasks = {split: _read_json(root / fname) for split, fname in SPLIT_FILES.items()}
    cand_path = root / CANDIDATE_FILE
    raw_candidates = _read_json(cand_path) if cand_path.exists() else {}

    ent_names = _id_file(root / "ent2ids")
    rel_names = _id_file(root / "relation2ids")
    fixed_entities = ent_names is not None
    if ent_names is None:
        names = set()
        for h, _, t in raw_background:
            names.update((h, t))
        for rels in raw_tasks.values():
            for triples in rels.values():
                for h, _, t in triples:
                    names.update((h, t))
        for cands in raw_candidates.values():
            names.update(cands)
        ent_names = sorted(names)
    if rel_names is None:
        rels = {r for _, r, _ in raw_background}
        for split_rels in raw_tasks.values():
            rels.update(split_rels)
        rel_names = sorted(rels)
    ent_index = {n: i for i, n in enumerate(ent_names)}
    rel_index = {n: i for i, n in enumerate(rel_names)}

    def ent(name, where):
        try:
            return ent_index[name]
        except KeyError:
            raise VocabularyError(f"unknown entity {name!r} in {where}") from None

    def rel(name, where):
        try:
            return rel_index[name]
        except KeyError:
            raise VocabularyError(f"unknown relation {name!r} in {where}") from None

    background = np.array(
        [(ent(h, BACKGROUND_FILE), rel(r, BACKGROUND_FILE), ent(t, BACKGROUND_FILE))
         for h, r, t in raw_background],
        dtype=np.int64,
    ).reshape(-1, 3)
    tasks: dict[str, dict[int, list[Triple]]] = {}
    for split, rels in raw_tasks.items():
        fname = SPLIT_FILES[split]
        tasks[split] = {}
        for rname, triples in rels.items():
            rid = rel(rname, fname)
            tasks[split][rid] = [Triple(ent(h, fname), rid, ent(t, fname)) for h, _, t in triples]

    candidates = {}
    for split_rels in tasks.values():
        for rid, triples in split_rels.items():
            rname = rel_names[rid]
            if rname in raw_candidates:
                ids = [ent(n, CANDIDATE_FILE) for n in raw_candidates[rname]]
            else:
                prefixes = {type_prefix(ent_names[t]) for _, _, t in triples} - {None}
                if prefixes:
                    ids = [i for i, n in enumerate(ent_names) if type_prefix(n) in prefixes]
                else:
                    ids = list(range(len(ent_names)))
            candidates[rid] = np.unique(np.asarray(ids, dtype=np.int64))

    ds = Dataset(ent_names, rel_names, background, tasks, candidates, root=root)
    log.info(
        "loaded %s: %d entities (%s), %d relations, splits %s",
        root, ds.num_entities, "ent2ids" if fixed_entities else "derived",
        ds.num_relations, ds.counts()["splits"],
    )
    return ds


# embeddings -----------------------------------------------------------------
@dataclass
class EmbeddingStore:
    entity: Tensor
    relation: Tensor
    random_entities: int = 0

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    @classmethod
    def random(cls, num_entities, num_relations, dim, seed=0) -> EmbeddingStore:
        rng = np.random.default_rng(seed)
        return cls(
            Tensor(uniform_init(rng, (num_entities, dim), dim)),
            Tensor(uniform_init(rng, (num_relations, dim), dim)),
            num_entities,
        )

    def register(self, registry: ParamRegistry, trainable: bool = True) -> EmbeddingStore:
        ent = registry.add("embeddings.entity", self.entity.data)
        rel = registry.add("embeddings.relation", self.relation.data)
        ent.requires_grad = rel.requires_grad = trainable
        return EmbeddingStore(ent, rel, self.random_entities)


def _read_vectors(path: Path) -> tuple[dict, dict | None]:
    """Return (entity-or-any vectors, relation vectors or None)."""
    if path.suffix == ".json":
        raw = _read_json(path)
        if isinstance(raw, dict) and set(raw) <= {"entity", "relation"} and raw:
            return raw.get("entity", {}), raw.get("relation", {})
        return raw, None
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            name, _, rest = line.rstrip("\n").partition("\t")
            try:
                vectors[name] = [float(v) for v in rest.replace("\t", " ").split()]
            except ValueError:
                raise LoadError(f"{path}:{lineno}: non-numeric vector entry") from None
    return vectors, None


def load_pretrained_embeddings(path, dataset: Dataset, dim: int, seed: int = 0) -> EmbeddingStore:
    """Align a name -> vector file with the dataset vocabularies.

    Entities missing from the file get the default uniform initialisation;
    relations likewise.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing embedding file: {path}")
    ent_vecs, rel_vecs = _read_vectors(path)
    if rel_vecs is None:
        rel_vecs = {k: v for k, v in ent_vecs.items() if k in dataset.relation_index}
        ent_vecs = {k: v for k, v in ent_vecs.items() if k in dataset.entity_index}
    rng = np.random.default_rng(seed)
    ent = uniform_init(rng, (dataset.num_entities, dim), dim)
    rel = uniform_init(rng, (dataset.num_relations, dim), dim)
    covered = np.zeros(dataset.num_entities, dtype=bool)
    for table, index, vecs, mark in (
        (ent, dataset.entity_index, ent_vecs, covered),
        (rel, dataset.relation_index, rel_vecs, None),
    ):
        for name, vec in vecs.items():
            if name not in index:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise LoadError(f"{path}: vector for {name!r} has dimension {vec.size}, expected {dim}")
            table[index[name]] = vec
            if mark is not None:
                mark[index[name]] = True
    missing = int((~covered).sum())
    if missing:
        log.info("%d of %d entities absent from %s; randomly initialised",
                 missing, dataset.num_entities, path)
    return EmbeddingStore(Tensor(ent), Tensor(rel), missing)


# neighbour graph -------------------------------------------------------------
@dataclass
class NeighborGraph:
    """CSR adjacency: edges of entity v are ``offsets[v]:offsets[v+1]``."""

    offsets: np.ndarray
    relations: np.ndarray
    neighbors: np.ndarray
    max_neighbors: int

    @property
    def num_entities(self) -> int:
        return len(self.offsets) - 1

    def degree(self, v) -> np.ndarray:
        v = np.asarray(v)
        return self.offsets[v + 1] - self.offsets[v]

    def edges(self, v: int) -> list[tuple[int, int]]:
        lo, hi = self.offsets[v], self.offsets[v + 1]
        return list(zip(self.relations[lo:hi].tolist(), self.neighbors[lo:hi].tolist()))

    def gather(self, targets: np.ndarray):
        """Flatten the edges of ``targets``: (segment, relation, neighbour)."""
        targets = np.asarray(targets, dtype=np.int64)
        deg = self.offsets[targets + 1] - self.offsets[targets]
        total = int(deg.sum())
        segment = np.repeat(np.arange(len(targets)), deg)
        starts = np.repeat(self.offsets[targets] - np.cumsum(deg) + deg, deg)
        pos = starts + np.arange(total)
        return segment, self.relations[pos], self.neighbors[pos]

    def neighborhood(self, entities: np.ndarray) -> np.ndarray:
        """Sorted union of ``entities`` and their neighbours."""
        _, _, nbr = self.gather(np.asarray(entities, dtype=np.int64))
        return np.union1d(entities, nbr)


def build_neighbor_graph(dataset: Dataset, max_neighbors: int = 50, seed: int = 0) -> NeighborGraph:
    if max_neighbors < 1:
        raise ConfigError("max_neighbors must be >= 1")
    n = dataset.num_entities
    bg = dataset.background
    src = np.concatenate([bg[:, 0], bg[:, 2]])
    rel = np.concatenate([bg[:, 1], bg[:, 1]])
    dst = np.concatenate([bg[:, 2], bg[:, 0]])
    order = np.argsort(src, kind="stable")
    src, rel, dst = src[order], rel[order], dst[order]
    counts = np.bincount(src, minlength=n)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    keep = np.ones(len(src), dtype=bool)
    for v in np.nonzero(counts > max_neighbors)[0]:
        lo, hi = bounds[v], bounds[v + 1]
        chosen = np.random.default_rng([seed, int(v)]).choice(hi - lo, size=max_neighbors, replace=False)
        mask = np.zeros(hi - lo, dtype=bool)
        mask[chosen] = True
        keep[lo:hi] = mask
    src, rel, dst = src[keep], rel[keep], dst[keep]
    counts = np.bincount(src, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return NeighborGraph(offsets, rel.astype(np.int64), dst.astype(np.int64), max_neighbors)


# episodes ---------------------------------------------------------------------
@dataclass
class EpisodeTask:
    relation: int
    support_pos: list[Triple]
    support_neg: list[Triple]
    query_pos: list[Triple]
    query_neg: list[Triple]
    candidates: np.ndarray

    @property
    def k(self) -> int:
        return len(self.support_pos)

    @property
    def extended_support(self) -> list[Triple]:
        return list(self.support_pos) + list(self.support_neg)


def corrupt_tail(triple: Triple, dataset: Dataset, rng: np.random.Generator) -> Triple:
    h, r, t = triple
    pool = dataset.candidate_pool(r)
    banned = np.fromiter(dataset.true_tails(h, r) | {t}, dtype=np.int64)
    valid = np.setdiff1d(pool, banned, assume_unique=False)
    if len(valid) == 0:
        raise SamplingError(
            f"no valid corruption for ({dataset.entities[h]}, {dataset.relations[r]}, "
            f"{dataset.entities[t]}): candidate pool of {len(pool)} exhausted"
        )
    return Triple(h, r, int(valid[rng.integers(len(valid))]))


def sample_episode(dataset: Dataset, relation: int, k: int, n_query: int,
                   rng: np.random.Generator) -> EpisodeTask:
    """Random support/query partition with one corrupted negative per positive.

    When fewer than ``n_query`` triples remain after the support set, the
    queries are topped up by resampling the remainder with replacement.
    """
    triples = dataset.relation_triples(relation)
    if k < 1 or len(triples) < k + 1:
        raise EpisodeError(
            f"relation {dataset.relations[relation]!r} has {len(triples)} triples; need >= {k + 1}"
        )
    perm = rng.permutation(len(triples))
    support = [triples[i] for i in perm[:k]]
    rest = perm[k:]
    if len(rest) >= n_query:
        qidx = rest[:n_query]
    else:
        qidx = np.concatenate([rest, rng.choice(rest, size=n_query - len(rest))])
    query = [triples[i] for i in qidx]
    return EpisodeTask(
        relation,
        support,
        [corrupt_tail(tr, dataset, rng) for tr in support],
        query,
        [corrupt_tail(tr, dataset, rng) for tr in query],
        dataset.candidate_pool(relation),
    )


def evaluation_episode(dataset: Dataset, relation: int, k: int, rng: np.random.Generator,
                       max_queries: int | None = None) -> EpisodeTask:
    """Fixed episode: the first k triples support, the rest are queries.

    Queries are ranked against the full candidate pool, so no query
    negatives are drawn.
    """
    triples = dataset.relation_triples(relation)
    if len(triples) < k + 1:
        raise EpisodeError(
            f"relation {dataset.relations[relation]!r} has {len(triples)} triples; need >= {k + 1}"
        )
    support = list(triples[:k])
    query = list(triples[k:])
    if max_queries is not None:
        query = query[:max_queries]
    return EpisodeTask(
        relation,
        support,
        [corrupt_tail(tr, dataset, rng) for tr in support],
        query,
        [],
        dataset.candidate_pool(relation),
    )
