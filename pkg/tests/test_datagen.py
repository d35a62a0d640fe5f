"""Synthetic dataset generation: determinism, oracle path agreement,
split disjointness, and loader round trips."""

import json
import os

import numpy as np
import pytest

from navcontrast import datagen as dg
from navcontrast import oracles
from navcontrast.errors import ConfigError
from navcontrast.graphs import shortest_path
from navcontrast.text import Provenance, split_sub_instructions
from navcontrast.training import TrainConfig

SMALL = dict(n_maps_seen=2, n_maps_unseen=1, episodes_per_map=3,
             grid_seen=4, grid_unseen=5)


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    dg.write_dataset(dg.DataConfig(**SMALL), str(root))
    return str(root)


@pytest.fixture(scope="module")
def dataset(dataset_dir):
    return dg.load_dataset(dataset_dir)


class TestDataConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            dg.DataConfig(seen_types=0)
        with pytest.raises(ConfigError):
            dg.DataConfig(novel_frac=1.5)
        with pytest.raises(ConfigError):
            dg.DataConfig(landmark_types=99)
        with pytest.raises(ConfigError):
            dg.DataConfig(min_hop=3, max_hop=2)
        with pytest.raises(ConfigError):
            dg.DataConfig(chord_prob=1.5)
        with pytest.raises(ConfigError):
            dg.DataConfig(jitter=1.0, spacing=2.0)
        with pytest.raises(ConfigError):
            dg.DataConfig(n_maps_seen=0)

    def test_lexicon_covers_all_types(self):
        cfg = dg.DataConfig()
        lex = dg.build_lexicon(cfg)
        for canon, alt in dg.LANDMARK_WORDS[:cfg.landmark_types]:
            assert lex[canon] == (alt,)
        assert "walk" in lex


class TestGeneration:
    def test_file_counts_match_config(self, dataset_dir):
        files = sorted(os.listdir(os.path.join(dataset_dir, "graphs")))
        assert files == ["seen_00.json", "seen_01.json", "unseen_00.json"]
        with open(os.path.join(dataset_dir, "seen.jsonl")) as fh:
            assert sum(1 for _ in fh) == 2 * 3

    def test_same_seed_byte_identical(self, dataset_dir, tmp_path):
        other = tmp_path / "again"
        dg.write_dataset(dg.DataConfig(**SMALL), str(other))
        for name in ("meta.json", "seen.jsonl", "unseen.jsonl",
                     "lexicon.json", "graphs/seen_00.json"):
            a = open(os.path.join(dataset_dir, name), "rb").read()
            b = open(str(other / name), "rb").read()
            assert a == b, name

    def test_different_seed_differs(self, dataset_dir, tmp_path):
        other = tmp_path / "reseeded"
        dg.write_dataset(dg.DataConfig(seed=1, **SMALL), str(other))
        a = open(os.path.join(dataset_dir, "seen.jsonl"), "rb").read()
        b = open(str(other / "seen.jsonl"), "rb").read()
        assert a != b

    def test_paths_match_shortest_path_oracle(self, dataset):
        for split in ("seen", "unseen"):
            for rec in dataset.records[split]:
                g = dataset.graphs[rec["graph_id"]]
                want = shortest_path(g, rec["start"], rec["goal"])
                assert tuple(rec["path"]) == want.node_seq
                hops = oracles.bfs_hops(
                    [list(a) for a in g.adjacency], rec["start"],
                    rec["goal"])
                assert len(rec["path"]) - 1 == hops

    def test_episode_hops_inside_window(self, dataset):
        cfg = dg.DataConfig(**SMALL)
        for split in ("seen", "unseen"):
            for rec in dataset.records[split]:
                hops = len(rec["path"]) - 1
                assert cfg.min_hop <= hops <= cfg.max_hop

    def test_recorded_spans_agree_with_splitter(self, dataset):
        for split in ("seen", "unseen"):
            for rec in dataset.records[split]:
                tokens = tuple(rec["instr_tokens"])
                want = tuple(tuple(s) for s in rec["sub_spans"])
                assert split_sub_instructions(tokens).sub_spans == want

    def test_clause_structure(self, dataset):
        for split in ("seen", "unseen"):
            for rec in dataset.records[split]:
                spans = rec["sub_spans"]
                assert 2 <= len(spans) <= 5
                tokens = rec["instr_tokens"]
                last = tokens[spans[-1][0]:spans[-1][1]]
                assert last[0] == "stop"

    def test_instruction_names_landmarks_on_the_path(self, dataset):
        canon = {c for c, _ in dg.LANDMARK_WORDS}
        alt = {a for _, a in dg.LANDMARK_WORDS}
        for split, words in (("seen", canon), ("unseen", alt)):
            for rec in dataset.records[split]:
                g = dataset.graphs[rec["graph_id"]]
                path_words = {self._word(g, v, split) for v in rec["path"]}
                named = [t for t in rec["instr_tokens"] if t in (canon | alt)]
                assert named, "instruction names no landmark"
                for t in named:
                    assert t in words
                    assert t in path_words

    @staticmethod
    def _word(graph, node, split):
        t = graph.landmarks[node]
        pair = dg.LANDMARK_WORDS[t]
        return pair[0] if split == "seen" else pair[1]


class TestSplitShift:
    def test_alternate_words_held_out_of_seen(self, dataset):
        alternates = {a for _, a in dg.LANDMARK_WORDS}
        for rec in dataset.records["seen"]:
            assert not alternates & set(rec["instr_tokens"])

    def test_unseen_avoids_canonical_landmark_words(self, dataset):
        canonicals = {c for c, _ in dg.LANDMARK_WORDS}
        for rec in dataset.records["unseen"]:
            assert not canonicals & set(rec["instr_tokens"])

    def test_landmark_type_ranges(self, dataset):
        cfg = dg.DataConfig(**SMALL)
        for gid, g in dataset.graphs.items():
            if gid.startswith("seen"):
                assert all(0 <= t < cfg.seen_types for t in g.landmarks)
            else:
                assert all(0 <= t < cfg.landmark_types for t in g.landmarks)

    def test_novel_types_are_a_minority_admixture(self):
        cfg = dg.DataConfig(grid_unseen=6, novel_frac=0.25)
        counts = np.zeros(2)
        for m in range(20):
            rng = np.random.default_rng([7, m])
            g = dg.generate_map(cfg, 6, cfg.novel_frac, f"p{m}", rng)
            novel = sum(t >= cfg.seen_types for t in g.landmarks)
            counts += (novel, g.num_nodes - novel)
        frac = counts[0] / counts.sum()
        assert 0.1 < frac < 0.4
        # seen maps never touch the held-back range
        g = dg.generate_map(cfg, 6, 0.0, "s", np.random.default_rng(1))
        assert all(t < cfg.seen_types for t in g.landmarks)

    def test_unseen_maps_are_larger(self, dataset):
        seen_n = {g.num_nodes for gid, g in dataset.graphs.items()
                  if gid.startswith("seen")}
        unseen_n = {g.num_nodes for gid, g in dataset.graphs.items()
                    if gid.startswith("unseen")}
        assert max(seen_n) < min(unseen_n)


class TestMapGeometry:
    def test_positions_stay_near_lattice(self):
        cfg = dg.DataConfig()
        rng = np.random.default_rng(3)
        g = dg.generate_map(cfg, 4, 0.0, "probe", rng)
        for r in range(4):
            for c in range(4):
                p = g.positions[r * 4 + c]
                assert abs(p[0] - c * cfg.spacing) <= cfg.jitter + 1e-12
                assert abs(p[1] - r * cfg.spacing) <= cfg.jitter + 1e-12
                assert p[2] == 0.0

    def test_grid_edges_always_present(self):
        cfg = dg.DataConfig(chord_prob=0.0)
        g = dg.generate_map(cfg, 3, 0.0, "probe",
                            np.random.default_rng(0))
        assert g.num_nodes == 9
        for r in range(3):
            for c in range(3):
                i = r * 3 + c
                if c < 2:
                    assert i + 1 in g.adjacency[i]
                if r < 2:
                    assert i + 3 in g.adjacency[i]


class TestVocab:
    def test_unk_leads_and_sorted(self, dataset):
        v = dataset.vocab
        assert v[0] == "<unk>"
        assert list(v[1:]) == sorted(set(v[1:]))

    def test_vocab_covers_lexicon_closure(self, dataset):
        v = set(dataset.vocab)
        for canon, alts in dataset.lexicon.items():
            assert canon in v
            assert all(a in v for a in alts)


class TestDatasetEpisodes:
    def test_episode_objects_complete(self, dataset):
        cfg = TrainConfig(embed_dim=8)
        eps = dataset.episodes("seen", cfg)
        assert len(eps) == 6
        for ep in eps:
            assert ep.gt_traj.start == ep.start
            assert ep.gt_traj.goal == ep.goal
            assert len(ep.pos_docs) == 2
            assert len(ep.neg_docs) == 2
            assert ep.pos_docs[0].provenance is Provenance.SYNONYM
            assert ep.pos_docs[0].tokens != ep.doc.tokens
            assert ep.partition.positives or ep.partition.intra_negatives

    def test_partitions_cached_across_calls(self, dataset):
        cfg = TrainConfig(embed_dim=8)
        a = dataset.episodes("seen", cfg)
        b = dataset.episodes("seen", cfg)
        for x, y in zip(a, b):
            assert x.partition is y.partition

    def test_augment_off_leaves_docs_empty(self, dataset):
        cfg = TrainConfig(embed_dim=8)
        for ep in dataset.episodes("unseen", cfg, augment=False):
            assert ep.pos_docs == () and ep.neg_docs == ()

    def test_deterministic_augments(self, dataset):
        cfg = TrainConfig(embed_dim=8)
        a = dataset.episodes("seen", cfg)
        b = dataset.episodes("seen", cfg)
        for x, y in zip(a, b):
            assert [d.tokens for d in x.pos_docs] == \
                [d.tokens for d in y.pos_docs]
            assert [d.tokens for d in x.neg_docs] == \
                [d.tokens for d in y.neg_docs]


class TestLoader:
    def test_graph_round_trip_content(self, dataset_dir, dataset):
        raw = json.load(open(os.path.join(dataset_dir, "graphs",
                                          "seen_00.json")))
        g = dataset.graphs["seen_00"]
        assert g.graph_id == "seen_00"
        assert len(raw["nodes"]) == g.num_nodes
        for n in raw["nodes"]:
            assert g.landmarks[n["id"]] == n["landmark"]
            assert np.allclose(g.positions[n["id"]], n["pos"], atol=1e-9)

    def test_bad_format_version_rejected(self, dataset_dir, tmp_path):
        import shutil
        broken = tmp_path / "broken"
        shutil.copytree(dataset_dir, str(broken))
        meta_path = broken / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["format_version"] = 99
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(ConfigError):
            dg.load_dataset(str(broken))
