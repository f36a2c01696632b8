import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from recdap.errors import EpisodeError, LoadError, SamplingError, VocabularyError
from recdap.kg_data import (
    Triple,
    build_neighbor_graph,
    corrupt_tail,
    evaluation_episode,
    load_dataset,
    load_pretrained_embeddings,
    sample_episode,
)

from .conftest import TINY_BACKGROUND, TINY_TASK, write_tiny


class TestLoad:
    def test_tiny_vocab_counts(self, tiny_dir):
        ds = load_dataset(tiny_dir)
        names = {n for tr in TINY_BACKGROUND for n in (tr[0], tr[2])}
        names |= {n for tr in TINY_TASK for n in (tr[0], tr[2])}
        assert len(TINY_BACKGROUND) + len(TINY_TASK) == 8
        assert ds.num_entities == len(names) == 6
        assert ds.num_relations == 2
        assert ds.counts()["splits"] == {"train": 1, "valid": 0, "test": 0}

    def test_empty_task_file(self, tiny_dir):
        ds = load_dataset(tiny_dir)
        assert ds.split_relations("valid") == [] and ds.split_relations("test") == []

    def test_missing_file_named(self, tiny_dir):
        (tiny_dir / "dev_tasks.json").unlink()
        with pytest.raises(LoadError, match="dev_tasks.json"):
            load_dataset(tiny_dir)

    def test_unknown_entity(self, tmp_path):
        root = write_tiny(tmp_path / "d", ent2ids={n: i for i, n in enumerate("abcdef")},
                          train={"rel": TINY_TASK + [["a", "rel", "zzz"]]})
        with pytest.raises(VocabularyError, match="zzz"):
            load_dataset(root)

    def test_overlapping_splits_rejected(self, tmp_path):
        root = write_tiny(tmp_path / "d", dev={"rel": TINY_TASK[:2]})
        with pytest.raises(LoadError, match="both"):
            load_dataset(root)

    def test_idempotent(self, tiny_dir):
        a, b = load_dataset(tiny_dir), load_dataset(tiny_dir)
        assert a.entities == b.entities and a.relations == b.relations
        assert a.counts() == b.counts()

    def test_candidate_fallbacks(self, tmp_path):
        root = write_tiny(tmp_path / "plain")
        ds = load_dataset(root)
        rel = ds.relation_index["rel"]
        assert len(ds.candidate_pool(rel)) == 6  # no prefixes: full entity set
        typed = write_tiny(
            tmp_path / "typed",
            train={"r": [["x:p:1", "r", "y:q:1"], ["x:p:2", "r", "y:q:2"]]},
        )
        (typed / "path_graph").write_text("y:q:3\tbg\tz:w:1\n")
        ds = load_dataset(typed)
        pool = [ds.entities[i] for i in ds.candidate_pool(ds.relation_index["r"])]
        assert pool == ["y:q:1", "y:q:2", "y:q:3"]

    def test_synthetic_manifest_counts(self, synth_dir):
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        ds = load_dataset(synth_dir)
        assert ds.num_entities == manifest["entities"]
        assert ds.num_relations == manifest["relations"]
        assert ds.counts()["splits"] == manifest["splits"]
        assert len(ds.background) == manifest["background_triples"]


class TestEmbeddings:
    def test_full_coverage(self, synth_dir):
        ds = load_dataset(synth_dir)
        store = load_pretrained_embeddings(synth_dir / "embeddings.json", ds, 16)
        assert store.random_entities == 0
        raw = json.loads((synth_dir / "embeddings.json").read_text())
        name = ds.entities[17]
        assert np.array_equal(store.entity.data[17], raw["entity"][name])

    def test_half_coverage_tsv(self, tiny_dir, caplog):
        ds = load_dataset(tiny_dir)
        path = tiny_dir / "emb.tsv"
        vecs = {n: np.arange(4.0) + i for i, n in enumerate(ds.entities[:3])}
        path.write_text("".join(f"{n}\t{' '.join(map(str, v))}\n" for n, v in vecs.items()))
        with caplog.at_level("INFO"):
            store = load_pretrained_embeddings(path, ds, 4)
        assert store.random_entities == 3
        assert "3 of 6" in caplog.text
        for n, v in vecs.items():
            assert np.array_equal(store.entity.data[ds.entity_index[n]], v)

    def test_dimension_mismatch(self, synth_dir):
        ds = load_dataset(synth_dir)
        with pytest.raises(LoadError, match="dimension"):
            load_pretrained_embeddings(synth_dir / "embeddings.json", ds, 8)


class TestNeighborGraph:
    def _dataset(self, tmp_path, background):
        root = write_tiny(tmp_path / "g")
        (root / "path_graph").write_text("".join(f"{h}\tbg\t{t}\n" for h, t in background))
        return load_dataset(root)

    def test_isolated_and_small(self, tiny_dir):
        ds = load_dataset(tiny_dir)
        g = build_neighbor_graph(ds, 50)
        assert g.edges(ds.entity_index["e"]) == []
        b = ds.entity_index["b"]
        assert sorted(u for _, u in g.edges(b)) == sorted([ds.entity_index["a"], ds.entity_index["c"]])
        bg = ds.relation_index["bg"]
        assert all(r == bg for r, _ in g.edges(b))

    def test_degree_three_kept(self, tmp_path):
        ds = self._dataset(tmp_path, [("a", "b"), ("a", "c"), ("a", "d")])
        assert len(build_neighbor_graph(ds, 50).edges(ds.entity_index["a"])) == 3

    def test_cap_deterministic(self, tmp_path):
        ds = self._dataset(tmp_path, [("hub", f"n{i}") for i in range(120)])
        hub = ds.entity_index["hub"]
        g1 = build_neighbor_graph(ds, 50, seed=3)
        g2 = build_neighbor_graph(ds, 50, seed=3)
        assert len(g1.edges(hub)) == 50
        assert g1.edges(hub) == g2.edges(hub)
        assert g1.edges(hub) != build_neighbor_graph(ds, 50, seed=4).edges(hub)


class TestCorruption:
    def test_two_pool_forced(self, tmp_path):
        root = write_tiny(tmp_path / "c", candidates={"rel": ["e", "f"]})
        ds = load_dataset(root)
        rel = ds.relation_index["rel"]
        a, e, f = (ds.entity_index[n] for n in "aef")
        rng = np.random.default_rng(0)
        assert all(corrupt_tail(Triple(a, rel, e), ds, rng) == Triple(a, rel, f) for _ in range(20))

    def test_exhausted_pool(self, tmp_path):
        root = write_tiny(tmp_path / "c", candidates={"rel": ["e", "f"]},
                          train={"rel": TINY_TASK + [["a", "rel", "f"]]})
        ds = load_dataset(root)
        rel = ds.relation_index["rel"]
        with pytest.raises(SamplingError):
            corrupt_tail(Triple(ds.entity_index["a"], rel, ds.entity_index["e"]), ds, np.random.default_rng(0))

    def test_never_true_and_uniform(self, synth):
        ds, _, _ = synth
        rel = ds.split_relations("train")[0]
        tr = ds.relation_triples(rel)[0]
        rng = np.random.default_rng(5)
        draws = [corrupt_tail(tr, ds, rng) for _ in range(10_000)]
        assert all(d.tail != tr.tail and not ds.is_true(d) for d in draws[:1000])
        valid = np.setdiff1d(ds.candidate_pool(rel), list(ds.true_tails(tr.head, rel)))
        counts = np.array([sum(1 for d in draws if d.tail == v) for v in valid])
        assert counts.sum() == 10_000
        assert stats.chisquare(counts).pvalue > 0.01


class TestEpisodes:
    def test_unique_partition(self, tmp_path):
        root = write_tiny(tmp_path / "c", candidates={"rel": list("abcdef")},
                          train={"rel": TINY_TASK[:4]})
        ds = load_dataset(root)
        rel = ds.relation_index["rel"]
        task = sample_episode(ds, rel, 3, 1, np.random.default_rng(0))
        assert set(task.support_pos) | set(task.query_pos) == set(ds.relation_triples(rel))

    def test_k5_extended_size(self, synth):
        ds, _, _ = synth
        task = sample_episode(ds, ds.split_relations("train")[0], 5, 3, np.random.default_rng(0))
        ext = task.extended_support
        assert len(ext) == 10
        assert ext[:5] == task.support_pos and ext[5:] == task.support_neg

    def test_replay(self, synth):
        ds, _, _ = synth
        rel = ds.split_relations("train")[2]
        a = sample_episode(ds, rel, 5, 3, np.random.default_rng(42))
        b = sample_episode(ds, rel, 5, 3, np.random.default_rng(42))
        assert a.support_pos == b.support_pos and a.support_neg == b.support_neg
        assert a.query_pos == b.query_pos and a.query_neg == b.query_neg

    def test_insufficient(self, tiny_dir):
        ds = load_dataset(tiny_dir)
        with pytest.raises(EpisodeError):
            sample_episode(ds, ds.relation_index["rel"], 5, 1, np.random.default_rng(0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 5))
    def test_episode_invariants(self, synth, seed, k, n_query):
        ds, _, _ = synth
        rng = np.random.default_rng(seed)
        rel = ds.split_relations("train")[seed % 14]
        task = sample_episode(ds, rel, k, n_query, rng)
        assert len(task.support_neg) == len(task.support_pos) == k
        assert not set(task.support_pos) & set(task.query_pos)
        for pos, neg in zip(task.support_pos + task.query_pos, task.support_neg + task.query_neg):
            assert (neg.head, neg.relation) == (pos.head, pos.relation)
            assert neg.tail != pos.tail and not ds.is_true(neg)

    def test_evaluation_episode_fixed(self, synth):
        ds, _, _ = synth
        rel = ds.split_relations("valid")[0]
        task = evaluation_episode(ds, rel, 5, np.random.default_rng(0))
        triples = ds.relation_triples(rel)
        assert task.support_pos == triples[:5] and task.query_pos == triples[5:]
