"""Synthetic dataset generation: jittered grid maps, templated
instructions with ground-truth clause spans, and JSONL episode files.

The two splits are deliberately shifted: unseen maps have fresh layouts,
sprinkle in a small fraction of landmark types that never occur in seen
maps, and their instructions name every landmark by its alternate word,
which never occurs in seen instructions.  The bundled lexicon maps
canonical words to those alternates, so synonym augmentation at training
time is what makes the alternate forms readable at all.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graphs import (NavGraph, TrajectoryPartition, default_hop_cap,
                     enumerate_alternatives, shortest_path)
from .text import InstructionDoc, AugmenterConfig, augment_positive, \
    make_intra_negative
from .training import Episode, TrainConfig, episode_partition

# canonical landmark word and its held-out alternate, one pair per type
LANDMARK_WORDS = (
    ("sofa", "couch"), ("table", "counter"), ("lamp", "light"),
    ("door", "gate"), ("window", "pane"), ("shelf", "rack"),
    ("plant", "fern"), ("mirror", "glass"), ("rug", "mat"),
    ("chair", "seat"), ("desk", "bureau"), ("bench", "stool"),
    ("sink", "basin"), ("oven", "stove"), ("piano", "organ"),
    ("ladder", "steps"), ("crate", "box"), ("statue", "figure"),
)

VERB_SYNONYMS = {"walk": ("stroll",), "go": ("move",), "head": ("proceed",)}

OPENERS = (("walk", "to", "the"), ("go", "to", "the"), ("head", "to", "the"))
MIDDLES = (("turn", "towards", "the"), ("continue", "to", "the"),
           ("go", "to", "the"), ("head", "to", "the"))
CLOSER = ("stop", "at", "the")

MAX_ALTERNATIVES = 10


@dataclass(frozen=True)
class DataConfig:
    """Dataset shape; defaults give a few-minute end-to-end corpus."""

    n_maps_seen: int = 40
    n_maps_unseen: int = 10
    grid_seen: int = 4
    grid_unseen: int = 4
    episodes_per_map: int = 5
    landmark_types: int = 18
    seen_types: int = 12
    novel_frac: float = 0.1
    min_hop: int = 3
    max_hop: int = 5
    spacing: float = 2.0
    jitter: float = 0.3
    chord_prob: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.seen_types <= self.landmark_types):
            raise ConfigError("seen_types must lie in [1, landmark_types]")
        if not (0.0 <= self.novel_frac <= 1.0):
            raise ConfigError("novel_frac must lie in [0, 1]")
        if self.landmark_types > len(LANDMARK_WORDS):
            raise ConfigError(
                f"at most {len(LANDMARK_WORDS)} landmark types available")
        if self.min_hop < 1 or self.max_hop < self.min_hop:
            raise ConfigError("need 1 <= min_hop <= max_hop")
        if self.grid_seen < 2 or self.grid_unseen < 2:
            raise ConfigError("grids need at least 2x2 nodes")
        if self.n_maps_seen < 1 or self.n_maps_unseen < 1 \
                or self.episodes_per_map < 1:
            raise ConfigError("map and episode counts must be >= 1")
        if not (0.0 <= self.chord_prob <= 1.0):
            raise ConfigError("chord_prob must lie in [0, 1]")
        if self.spacing <= 2.0 * self.jitter:
            raise ConfigError("jitter must stay below half the spacing")


def build_lexicon(cfg: DataConfig) -> dict:
    lex = {canon: (alt,)
           for canon, alt in LANDMARK_WORDS[:cfg.landmark_types]}
    lex.update(VERB_SYNONYMS)
    return lex


def _assign_landmarks(n, edges, base_hi, novel_hi, frac, rng):
    """Landmark type per node, keeping 2-hop neighborhoods type-distinct
    where the palette allows so a named landmark identifies one candidate.

    The working palette is [0, base_hi); each node independently switches
    to the rarer [base_hi, novel_hi) palette with probability frac."""
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    types = np.full(n, -1, dtype=int)
    for i in rng.permutation(n):
        palette = range(0, base_hi)
        if novel_hi > base_hi and rng.random() < frac:
            palette = range(base_hi, novel_hi)
        near = set(adj[i])
        for j in adj[i]:
            near |= adj[j]
        near.discard(i)
        taken = {int(types[j]) for j in near if types[j] >= 0}
        allowed = [t for t in palette if t not in taken]
        if not allowed:
            direct = {int(types[j]) for j in adj[i] if types[j] >= 0}
            allowed = [t for t in palette
                       if t not in direct] or list(palette)
        types[i] = allowed[int(rng.integers(0, len(allowed)))]
    return types


def generate_map(cfg: DataConfig, rows, novel_frac, graph_id,
                 rng) -> NavGraph:
    """Jittered square grid with occasional diagonal chords; landmark
    types come from the shared palette with a novel_frac admixture of
    the held-back range, 2-hop distinct where possible."""
    cols = rows
    coords, edges = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            x = c * cfg.spacing + rng.uniform(-cfg.jitter, cfg.jitter)
            y = r * cfg.spacing + rng.uniform(-cfg.jitter, cfg.jitter)
            coords.append((x, y, 0.0))
            if c < cols - 1:
                edges.append([i, i + 1])
            if r < rows - 1:
                edges.append([i, i + cols])
    for r in range(rows - 1):
        for c in range(cols - 1):
            if rng.random() < cfg.chord_prob:
                i = r * cols + c
                if rng.random() < 0.5:
                    edges.append([i, i + cols + 1])
                else:
                    edges.append([i + 1, i + cols])
    types = _assign_landmarks(rows * cols, edges, cfg.seen_types,
                              cfg.landmark_types, novel_frac, rng)
    nodes = [(i, coords[i], int(types[i])) for i in range(rows * cols)]
    return NavGraph(nodes, edges, graph_id=graph_id)


def sample_endpoints(graph: NavGraph, min_hop, max_hop, rng):
    """Uniform (start, goal) with hop distance inside [min_hop, max_hop]."""
    n = graph.num_nodes
    for _ in range(500):
        start = int(rng.integers(0, n))
        hops = graph.hop_distances(start)
        ok = [v for v in range(n) if min_hop <= hops[v] <= max_hop]
        if ok:
            return start, int(ok[int(rng.integers(0, len(ok)))])
    raise ConfigError("could not sample endpoints in the hop window")


def _clause_count(hops) -> int:
    # one clause per hop keeps every path node named; capped for long paths
    return max(2, min(5, hops))


def render_instruction(graph: NavGraph, path, words, rng):
    """Clause-per-waypoint instruction; returns (tokens, spans).

    Each clause names the landmark of its waypoint; every clause except
    the last is closed by "then", matching how the clause splitter
    attaches delimiters.  The final clause always commands the stop.
    """
    hops = len(path) - 1
    k = _clause_count(hops)
    # waypoints: k evenly spread path nodes ending at the goal
    idx = [round((j + 1) * hops / k) for j in range(k)]
    tokens, spans = [], []
    for j, pi in enumerate(idx):
        word = words[graph.landmarks[path[pi]]]
        if j == 0:
            body = OPENERS[int(rng.integers(0, len(OPENERS)))]
        elif j == k - 1:
            body = CLOSER
        else:
            body = MIDDLES[int(rng.integers(0, len(MIDDLES)))]
        clause = list(body) + [word]
        if j < k - 1:
            clause.append("then")
        spans.append((len(tokens), len(tokens) + len(clause)))
        tokens.extend(clause)
    return tuple(tokens), tuple(spans)


def _split_spec(cfg: DataConfig, split):
    if split == "seen":
        return (cfg.n_maps_seen, cfg.grid_seen, 0.0,
                tuple(c for c, _ in LANDMARK_WORDS[:cfg.landmark_types]), 0)
    if split == "unseen":
        return (cfg.n_maps_unseen, cfg.grid_unseen, cfg.novel_frac,
                tuple(a for _, a in LANDMARK_WORDS[:cfg.landmark_types]), 1)
    raise ConfigError(f"unknown split {split!r}")


def generate_split(cfg: DataConfig, split):
    """All maps and episode records of one split, deterministically."""
    n_maps, rows, frac, words, tag = _split_spec(cfg, split)
    graphs, records = [], []
    for m in range(n_maps):
        rng = np.random.default_rng([cfg.seed, tag, m])
        graph = generate_map(cfg, rows, frac, f"{split}_{m:02d}", rng)
        graphs.append(graph)
        for e in range(cfg.episodes_per_map):
            start, goal = sample_endpoints(graph, cfg.min_hop, cfg.max_hop,
                                           rng)
            path = shortest_path(graph, start, goal).node_seq
            tokens, spans = render_instruction(graph, path, words, rng)
            records.append({
                "episode_id": f"{split}_{m:02d}_{e:02d}",
                "graph_id": graph.graph_id,
                "start": start,
                "goal": goal,
                "path": list(path),
                "instr_tokens": list(tokens),
                "sub_spans": [list(s) for s in spans],
            })
    return graphs, records


def dataset_vocab(seen_records, lexicon) -> tuple:
    """Training vocabulary: every seen token plus every word the synonym
    lexicon can introduce; unseen-only words fall back to <unk>."""
    words = set()
    for rec in seen_records:
        words.update(rec["instr_tokens"])
    for canon, alts in lexicon.items():
        words.add(canon)
        words.update(alts)
    return ("<unk>",) + tuple(sorted(words))


def write_dataset(cfg: DataConfig, out_dir) -> dict:
    """Emit graphs/, one JSONL per split, lexicon and meta; returns the
    meta dict.  Byte-identical for identical (cfg, seed)."""
    os.makedirs(os.path.join(out_dir, "graphs"), exist_ok=True)
    lexicon = build_lexicon(cfg)
    meta = {
        "format_version": 1,
        "seed": cfg.seed,
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "splits": {},
    }
    all_records = {}
    for split in ("seen", "unseen"):
        graphs, records = generate_split(cfg, split)
        for g in graphs:
            g.save(os.path.join(out_dir, "graphs", f"{g.graph_id}.json"))
        path = os.path.join(out_dir, f"{split}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        meta["splits"][split] = {
            "graphs": [g.graph_id for g in graphs],
            "episodes": len(records),
            "file": f"{split}.jsonl",
        }
        all_records[split] = records
    meta["vocab"] = list(dataset_vocab(all_records["seen"], lexicon))
    with open(os.path.join(out_dir, "lexicon.json"), "w",
              encoding="utf-8") as fh:
        json.dump({k: list(v) for k, v in sorted(lexicon.items())}, fh,
                  indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta


def _stable_seed(*parts) -> int:
    h = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass
class Dataset:
    """Loaded dataset with lazily cached path-alternative partitions."""

    root: str
    meta: dict
    graphs: dict
    records: dict
    lexicon: dict
    _partitions: dict = field(default_factory=dict)

    @property
    def vocab(self) -> tuple:
        return tuple(self.meta["vocab"])

    @property
    def num_landmarks(self) -> int:
        return int(self.meta["config"]["landmark_types"])

    def _partition(self, graph, start, goal, cfg: TrainConfig):
        key = (graph.graph_id, start, goal, cfg.alpha_p, cfg.alpha_n)
        if key not in self._partitions:
            h_gt = shortest_path(graph, start, goal).hop
            alts = enumerate_alternatives(
                graph, start, goal, default_hop_cap(h_gt, cfg.alpha_n),
                MAX_ALTERNATIVES, seed=_stable_seed("alts", key))
            self._partitions[key] = episode_partition(
                graph, start, goal, alts, cfg)
        return self._partitions[key]

    def episodes(self, split, cfg: TrainConfig, augment=True,
                 n_pos=2, n_neg=2):
        """training.Episode list for a split; augmentations and negatives
        are generated here, deterministically per episode id."""
        out = []
        acfg_base = self.lexicon if augment else None
        for rec in self.records[split]:
            graph = self.graphs[rec["graph_id"]]
            doc = InstructionDoc(
                tuple(rec["instr_tokens"]),
                tuple(tuple(s) for s in rec["sub_spans"]))
            gt = graph.trajectory(rec["path"])
            part = self._partition(graph, rec["start"], rec["goal"], cfg)
            pos_docs, neg_docs = (), ()
            if augment:
                eid = rec["episode_id"]
                pos = []
                for j in range(n_pos):
                    # first variant swaps every lexicon word, later ones
                    # only some, so positives are not all identical
                    acfg = AugmenterConfig(
                        acfg_base, rng_seed=_stable_seed("pos", eid, j),
                        replace_prob=1.0 if j == 0 else 0.5)
                    pos.append(augment_positive(doc, acfg, "synonym"))
                pos_docs = tuple(pos)
                neg_docs = tuple(
                    make_intra_negative(doc, _stable_seed("neg", eid, j))
                    for j in range(n_neg))
            out.append(Episode(rec["episode_id"], graph, doc, rec["start"],
                               rec["goal"], gt, part, pos_docs, neg_docs))
        return out


def load_dataset(root) -> Dataset:
    with open(os.path.join(root, "meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != 1:
        raise ConfigError("unsupported dataset format")
    graphs = {}
    for split_info in meta["splits"].values():
        for gid in split_info["graphs"]:
            graphs[gid] = NavGraph.load(
                os.path.join(root, "graphs", f"{gid}.json"), graph_id=gid)
    records = {}
    for split, info in meta["splits"].items():
        with open(os.path.join(root, info["file"]), encoding="utf-8") as fh:
            records[split] = [json.loads(line) for line in fh
                              if line.strip()]
    with open(os.path.join(root, "lexicon.json"), encoding="utf-8") as fh:
        lexicon = {k: tuple(v) for k, v in json.load(fh).items()}
    return Dataset(root, meta, graphs, records, lexicon)
