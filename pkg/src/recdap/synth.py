"""Deterministic synthetic few-shot KG fixture.

Entities sit on a 3-D integer lattice; each task relation is a fixed lattice
translation, so ``tail = head + u_r`` is functional and exact. Pretrained
embeddings are an orthonormal lift of the lattice coordinates into ``dim``
dimensions plus small noise, i.e. the fixture is TransE-consistent. Noise
relations add random background edges for the neighbour aggregator.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class SynthConfig:
    entities: int = 200
    relations: int = 20
    noise_relations: int = 5
    noise_triples: int = 400
    dim: int = 100
    heads_per_relation: int = 30
    embedding_noise: float = 0.05
    scale: float = 1.0
    split: tuple[int, int, int] = (14, 3, 3)
    seed: int = 7


def _split_sizes(cfg: SynthConfig) -> tuple[int, int, int]:
    if sum(cfg.split) == cfg.relations:
        return tuple(cfg.split)
    n_valid = max(1, round(cfg.relations * 0.15))
    n_test = max(1, round(cfg.relations * 0.15))
    return cfg.relations - n_valid - n_test, n_valid, n_test


def generate(cfg: SynthConfig) -> dict:
    """Build the fixture in memory; returns a dict of file name -> content."""
    if cfg.entities < 8 or cfg.relations < 3:
        raise ConfigError("synthetic fixture needs >= 8 entities and >= 3 task relations")
    rng = np.random.default_rng(cfg.seed)
    side = int(np.ceil(cfg.entities ** (1 / 3)))
    grid = np.array(list(itertools.product(range(side), repeat=3)), dtype=np.int64)
    keep = np.sort(rng.choice(len(grid), size=cfg.entities, replace=False))
    coords = grid[keep]
    lookup = {tuple(c): i for i, c in enumerate(coords.tolist())}
    names = [f"synth:e{i:04d}" for i in range(cfg.entities)]

    offsets = [u for u in itertools.product(range(-2, 3), repeat=3) if any(u)]
    order = rng.permutation(len(offsets))
    translations = []
    task_triples = []
    for j in order:
        if len(translations) == cfg.relations:
            break
        u = np.array(offsets[j])
        pairs = [(i, lookup[tuple(c)]) for i, c in enumerate((coords + u).tolist()) if tuple(c) in lookup]
        if len(pairs) < 12:
            continue
        if len(pairs) > cfg.heads_per_relation:
            pick = np.sort(rng.choice(len(pairs), size=cfg.heads_per_relation, replace=False))
            pairs = [pairs[p] for p in pick]
        translations.append(u)
        task_triples.append(pairs)
    if len(translations) < cfg.relations:
        raise ConfigError("lattice too small for the requested number of relations")
    rel_names = [f"synth:task{r:02d}" for r in range(cfg.relations)]
    noise_names = [f"synth:noise{r:02d}" for r in range(cfg.noise_relations)]

    n_train, n_valid, n_test = _split_sizes(cfg)
    splits = {"train_tasks.json": {}, "dev_tasks.json": {}, "test_tasks.json": {}}
    bounds = [("train_tasks.json", 0, n_train), ("dev_tasks.json", n_train, n_train + n_valid),
              ("test_tasks.json", n_train + n_valid, cfg.relations)]
    candidates = {}
    for fname, lo, hi in bounds:
        for r in range(lo, hi):
            rows = [[names[h], rel_names[r], names[t]] for h, t in task_triples[r]]
            splits[fname][rel_names[r]] = rows
            candidates[rel_names[r]] = sorted({names[lookup[tuple(c)]]
                                               for c in (coords + translations[r]).tolist()
                                               if tuple(c) in lookup})

    background = []
    if cfg.noise_relations:
        heads = rng.integers(cfg.entities, size=cfg.noise_triples)
        tails = rng.integers(cfg.entities, size=cfg.noise_triples)
        rels = rng.integers(cfg.noise_relations, size=cfg.noise_triples)
        seen = set()
        for h, r, t in zip(heads.tolist(), rels.tolist(), tails.tolist()):
            if h != t and (h, r, t) not in seen:
                seen.add((h, r, t))
                background.append(f"{names[h]}\t{noise_names[r]}\t{names[t]}")

    basis = np.linalg.qr(rng.normal(size=(cfg.dim, 3)))[0]
    ent_vecs = cfg.scale * coords @ basis.T
    ent_vecs = ent_vecs - ent_vecs.mean(axis=0)
    ent_vecs += cfg.embedding_noise * rng.normal(size=ent_vecs.shape) / np.sqrt(cfg.dim) * np.sqrt(3)
    rel_vecs = {rel_names[r]: (cfg.scale * basis @ translations[r]).tolist() for r in range(cfg.relations)}
    rel_vecs.update({n: (0.1 * rng.normal(size=cfg.dim)).tolist() for n in noise_names})
    embeddings = {
        "entity": {names[i]: ent_vecs[i].tolist() for i in range(cfg.entities)},
        "relation": rel_vecs,
    }
    all_rel = rel_names + noise_names
    manifest = {
        "generator": "recdap.synth",
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
        "entities": cfg.entities,
        "relations": len(all_rel),
        "background_triples": len(background),
        "splits": {"train": n_train, "valid": n_valid, "test": n_test},
        "task_triples": {r: len(p) for r, p in zip(rel_names, task_triples)},
    }
    return {
        "path_graph": "\n".join(background) + ("\n" if background else ""),
        **{f: json.dumps(v) for f, v in splits.items()},
        "rel2candidates.json": json.dumps(candidates),
        "ent2ids": json.dumps({n: i for i, n in enumerate(names)}),
        "relation2ids": json.dumps({n: i for i, n in enumerate(all_rel)}),
        "embeddings.json": json.dumps(embeddings),
        "manifest.json": json.dumps(manifest, indent=2, sort_keys=True),
    }


def write_fixture(out_dir, cfg: SynthConfig | None = None) -> Path:
    cfg = cfg or SynthConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fname, content in generate(cfg).items():
        (out / fname).write_text(content, encoding="utf-8")
    return out
