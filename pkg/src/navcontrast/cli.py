"""Command-line surface: dataset generation, training, evaluation, the
ablation matrix, and the oracle self-check battery.

Config files are flat JSON key-value maps; every key must belong to the
training, dataset, or harness schema.  Each command materializes all
defaults into resolved_config.json next to its outputs and reports the
sha256 of that resolved form, so any artifact can be traced to the exact
configuration that produced it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import ablation, oracles
from .datagen import DataConfig, load_dataset, write_dataset
from .encoder import EncoderParams, Role, encode_instruction, grad_check
from .errors import ConfigError, NavContrastError, NonFiniteLossError
from .graphs import (NavGraph, enumerate_alternatives,
                     partition_trajectories, shortest_path)
from .kernels import available_backends
from .metrics import evaluate_episode
from .text import InstructionDoc
from .training import (TrainConfig, TRAIN_LOG_HEADER, evaluate, train_run)

TRAIN_KEYS = frozenset(TrainConfig.__dataclass_fields__) - {"seed"}
DATA_KEYS = frozenset(DataConfig.__dataclass_fields__) - {"seed"}
HARNESS_KEYS = frozenset({"data_dir", "checkpoint", "eval_every", "seeds",
                          "n_pos_augments", "n_neg_augments"})
HARNESS_DEFAULTS = {"data_dir": "", "checkpoint": "", "eval_every": 0,
                    "seeds": [0, 1, 2, 3, 4], "n_pos_augments": 2,
                    "n_neg_augments": 2}


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def resolve_config(raw: dict, seed_override=None) -> dict:
    """Validate the flat key-value map and materialize every default."""
    unknown = set(raw) - TRAIN_KEYS - DATA_KEYS - HARNESS_KEYS - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)
    train_cfg = TrainConfig(
        seed=seed, **{k: raw[k] for k in raw if k in TRAIN_KEYS})
    data_cfg = DataConfig(
        seed=seed, **{k: raw[k] for k in raw if k in DATA_KEYS})
    harness = dict(HARNESS_DEFAULTS)
    harness.update({k: raw[k] for k in raw if k in HARNESS_KEYS})
    return {
        "seed": seed,
        "train": {k: getattr(train_cfg, k)
                  for k in TrainConfig.__dataclass_fields__},
        "data": {k: getattr(data_cfg, k)
                 for k in DataConfig.__dataclass_fields__},
        "harness": harness,
    }


def config_objects(resolved):
    train_cfg = TrainConfig(**resolved["train"])
    data_cfg = DataConfig(**resolved["data"])
    return train_cfg, data_cfg, resolved["harness"]


def config_hash(resolved) -> str:
    blob = json.dumps(resolved, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def persist_resolved(resolved, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return config_hash(resolved)


def _require_dataset(harness):
    root = harness["data_dir"]
    if not root:
        raise ConfigError("data_dir must point at a generated dataset")
    if not os.path.exists(os.path.join(root, "meta.json")):
        raise ConfigError(f"no dataset found under {root!r}")
    return load_dataset(root)


def cmd_gen(args) -> int:
    resolved = resolve_config(load_config_file(args.config), args.seed)
    _, data_cfg, _ = config_objects(resolved)
    digest = persist_resolved(resolved, args.out)
    meta = write_dataset(data_cfg, args.out)
    for split, info in meta["splits"].items():
        print(f"{split}: {len(info['graphs'])} maps, "
              f"{info['episodes']} episodes")
    print(f"dataset written to {args.out}")
    print(f"config sha256 {digest}")
    return 0


def cmd_train(args) -> int:
    resolved = resolve_config(load_config_file(args.config), args.seed)
    train_cfg, _, harness = config_objects(resolved)
    dataset = _require_dataset(harness)
    digest = persist_resolved(resolved, args.out)

    episodes = dataset.episodes(
        "seen", train_cfg, augment=train_cfg.wants_contrast(),
        n_pos=harness["n_pos_augments"], n_neg=harness["n_neg_augments"])
    eval_sets = {split: dataset.episodes(split, train_cfg, augment=False)
                 for split in ("seen", "unseen")}
    history = []
    every = int(harness["eval_every"])

    def periodic(step, params, breakdown):
        if every > 0 and (step + 1) % every == 0:
            for split, eps in eval_sets.items():
                agg, _ = evaluate(params, eps, train_cfg)
                history.append(f"{step},{split},{agg.csv_row()}")

    rows = []
    try:
        params = train_run(episodes, dataset.vocab, dataset.num_landmarks,
                           train_cfg, log_rows=rows, callback=periodic)
    except NonFiniteLossError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1

    params.save(os.path.join(args.out, "checkpoint.json"))
    with open(os.path.join(args.out, "train_log.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(f"# config_sha256={digest}\n")
        fh.write(TRAIN_LOG_HEADER + "\n")
        fh.write("\n".join(rows) + "\n")
    if history:
        with open(os.path.join(args.out, "eval_history.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(f"# config_sha256={digest}\n")
            fh.write("step,split,TL,NE,SR,SPL,nDTW,CLS,SDTW\n")
            fh.write("\n".join(history) + "\n")
    for split, eps in eval_sets.items():
        agg, _ = evaluate(params, eps, train_cfg,
                          csv_path=os.path.join(args.out,
                                                f"eval_{split}.csv"))
        print(f"{split}: SR {agg.sr:.3f}  SPL {agg.spl:.3f}  "
              f"NE {agg.ne:.2f}")
    print(f"checkpoint written to {args.out}/checkpoint.json")
    print(f"config sha256 {digest}")
    return 0


def cmd_eval(args) -> int:
    resolved = resolve_config(load_config_file(args.config), args.seed)
    train_cfg, _, harness = config_objects(resolved)
    dataset = _require_dataset(harness)
    ckpt = harness["checkpoint"]
    if not ckpt:
        raise ConfigError("checkpoint must point at a saved checkpoint")
    params = EncoderParams.load(ckpt)
    digest = persist_resolved(resolved, args.out)
    episodes = dataset.episodes(args.split, train_cfg, augment=False)
    agg, _ = evaluate(params, episodes, train_cfg,
                      csv_path=os.path.join(args.out,
                                            f"eval_{args.split}.csv"))
    print(f"{args.split}: SR {agg.sr:.3f}  SPL {agg.spl:.3f}  "
          f"NE {agg.ne:.2f}  nDTW {agg.ndtw:.3f}")
    print(f"config sha256 {digest}")
    return 0


def cmd_ablate(args) -> int:
    resolved = resolve_config(load_config_file(args.config), args.seed)
    train_cfg, _, harness = config_objects(resolved)
    dataset = _require_dataset(harness)
    digest = persist_resolved(resolved, args.out)
    seeds = [int(s) for s in harness["seeds"]]
    results = ablation.run_matrix(
        dataset, train_cfg, seeds,
        progress=lambda name: print(f"training {name} ..."))
    csv_text = ablation.results_to_csv(results, config_hash=digest)
    txt = ablation.results_to_text(results, seeds, config_hash=digest)
    with open(os.path.join(args.out, "ablation.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(os.path.join(args.out, "ablation.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(txt)
    print(txt, end="")
    return 0


def _check_kernels_against_oracles(rng):
    for backend, mod in sorted(available_backends().items()):
        for _ in range(50):
            sp = rng.uniform(-1, 1, size=rng.integers(1, 6))
            sn = rng.uniform(-1, 1, size=rng.integers(1, 6))
            loss, _, _ = mod.circle_terms(sp, sn, 0.25, 4.0)
            want = oracles.circle_loss_scalar(sp.tolist(), sn.tolist(),
                                              0.25, 4.0)
            if abs(loss - want) > 1e-10:
                return f"circle[{backend}] off by {abs(loss - want):.2e}"
            loss, _, _ = mod.infonce_terms(sp, sn, 0.5)
            want = oracles.info_nce_scalar(sp.tolist(), sn.tolist(), 0.5)
            if abs(loss - want) > 1e-10:
                return f"infonce[{backend}] off by {abs(loss - want):.2e}"
            keep_p, keep_n, false_neg = mod.mine_pair_masks(sp, sn, 0.25)
            wp, wn, wf = oracles.mine_sets(sp.tolist(), sn.tolist(), 0.25)
            if (sorted(np.flatnonzero(keep_p)) != wp
                    or sorted(np.flatnonzero(keep_n)) != wn
                    or sorted(np.flatnonzero(false_neg)) != wf):
                return f"mining[{backend}] disagrees with brute force"
            cost = rng.uniform(0, 3, size=(rng.integers(1, 5),
                                           rng.integers(1, 5)))
            got = mod.dtw_cost(cost)
            want = oracles.dtw_table([list(r) for r in cost])
            if abs(got - want) > 1e-10:
                return f"dtw[{backend}] off by {abs(got - want):.2e}"
    return None


def _check_bank_fifo(rng):
    from .contrast import MemoryBank
    from .encoder import EmbeddingRecord
    bank = MemoryBank(5)
    names = [f"r{i}" for i in range(9)]
    for name in names:
        vec = rng.normal(size=4)
        vec /= np.linalg.norm(vec)
        bank.push([EmbeddingRecord(vec, Role.NEGATIVE_N, name)])
    got = [r.source_id for r in bank.snapshot()]
    want = oracles.fifo_contents(5, names)
    return None if got == want else f"bank order {got} != {want}"


def _check_enumeration():
    nodes = [(0, (0.0, 0.0, 0.0), 0), (1, (2.0, 0.0, 0.0), 1),
             (2, (2.0, 2.0, 0.0), 2), (3, (0.0, 2.0, 0.0), 0),
             (4, (1.0, 1.0, 0.0), 1)]
    edges = [[0, 1], [1, 2], [2, 3], [3, 0], [0, 4], [4, 2]]
    graph = NavGraph(nodes, edges, graph_id="enum_check")
    start, goal = 0, 2
    adjacency = [list(a) for a in graph.adjacency]
    cap = oracles.bfs_hops(adjacency, start, goal) + 2
    alts = enumerate_alternatives(graph, start, goal, cap, 10 ** 6, seed=0)
    canonical = shortest_path(graph, start, goal).node_seq
    got = sorted(t.node_seq for t in alts)
    want = sorted(tuple(p) for p in
                  oracles.all_simple_paths(adjacency, start, goal, cap)
                  if tuple(p) != canonical)
    return None if got == want else "enumeration disagrees with brute force"


def _check_metric_identity():
    nodes = [(0, (0.0, 0.0, 0.0), 0), (1, (3.0, 0.0, 0.0), 1),
             (2, (6.0, 0.0, 0.0), 2)]
    g = NavGraph(nodes, [[0, 1], [1, 2]], graph_id="check")
    traj = g.trajectory([0, 1, 2])
    rep = evaluate_episode(g, traj, traj, 3.0)
    if not (rep.sr == rep.spl == rep.ndtw == rep.cls == 1.0):
        return f"identity episode not perfect: {rep}"
    return None


def _check_gradients(rng):
    doc = InstructionDoc(("walk", "to", "the", "door"), ((0, 4),))
    vocab = ("<unk>", "door", "the", "to", "walk")
    params = EncoderParams.init(vocab, num_landmarks=3, d=5, seed=1)
    target = rng.normal(size=5)
    target /= np.linalg.norm(target)

    def closure(view):
        from . import autodiff as ad
        rec = encode_instruction(doc, view, role=Role.ANCHOR_Q)
        return ad.scale(ad.dot(rec.live(), target), -1.0)

    err, name = grad_check(params, closure)
    return None if err < 1e-4 else f"encoder gradient off ({name}: {err:.2e})"


def _check_discounted_returns(rng):
    from .training import returns_to_go
    rewards = rng.normal(size=6).tolist()
    got = returns_to_go(rewards, 0.9)
    want = oracles.discounted_returns(rewards, 0.9)
    close = np.allclose(got, want, atol=1e-12)
    return None if close else "discounted returns disagree"


def cmd_check(args) -> int:
    rng = np.random.default_rng(0)
    checks = [
        ("kernel backends vs scalar oracles",
         lambda: _check_kernels_against_oracles(rng)),
        ("memory bank FIFO vs simulation", lambda: _check_bank_fifo(rng)),
        ("metric identity episode", _check_metric_identity),
        ("encoder gradient vs finite differences",
         lambda: _check_gradients(rng)),
        ("discounted returns vs oracle",
         lambda: _check_discounted_returns(rng)),
        ("partition bands vs brute force",
         lambda: _check_partition_bands(rng)),
        ("path enumeration vs brute force", _check_enumeration),
    ]
    failures = 0
    for name, fn in checks:
        detail = fn()
        if detail is None:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {detail}")
            failures += 1
    return 1 if failures else 0


def _check_partition_bands(rng):
    hops = [int(h) for h in rng.integers(1, 15, size=40)]
    h_gt = 5
    pos, neg, mid = oracles.partition_by_hops(hops, h_gt, 1.2, 1.4)

    class _T:
        def __init__(self, hop):
            self.hop = hop

    part = partition_trajectories([_T(h) for h in hops], h_gt, 1.2, 1.4)
    got = (sorted(t.hop for t in part.positives),
           sorted(t.hop for t in part.intra_negatives),
           sorted(t.hop for t in part.discarded))
    want = tuple(sorted(hops[i] for i in idxs) for idxs in (pos, neg, mid))
    return None if got == want else f"partition {got} != {want}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navcontrast",
        description="graph navigation with contrastive "
                    "instruction-trajectory learning")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "gen": (cmd_gen, "generate a synthetic dataset"),
        "train": (cmd_train, "train a model on the seen split"),
        "eval": (cmd_eval, "evaluate a checkpoint on one split"),
        "ablate": (cmd_ablate, "run the ablation matrix"),
        "check": (cmd_check, "run oracle self-verification"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="JSON config file (flat key-value)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=os.path.join("runs", name),
                       help="output directory")
        if name == "eval":
            p.add_argument("--split", choices=("seen", "unseen"),
                           default="unseen")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NavContrastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
