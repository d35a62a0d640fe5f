"""Agent training: episode rollouts, imitation and actor-critic losses,
the weighted composite objective with the three contrast terms, SGD with
gradient clipping, and split evaluation.

Loss closures replay recorded traces under a tape view of the parameters,
so analytic gradients and central finite differences see the same frozen
action sequences, rollout-time advantages, and mined pair sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .contrast import (ContrastKind, MarginConfig, MemoryBank, assemble_loss)
from .encoder import (EncoderParams, Role, attend_and_act, encode_instruction,
                      encode_span, encode_trajectory, gradient, step_feature,
                      token_embeddings)
from .errors import ConfigError, NonFiniteLossError
from .graphs import partition_trajectories, shortest_path
from .metrics import aggregate, evaluate_episode, reports_to_csv
from .text import Provenance, sub_instruction_sets

import enum

# action slot appended after the sorted neighbor moves
STOP_ACTION = -1

TRAIN_LOG_HEADER = ("step,L_IL,L_RL,L_CT,L_CI,L_FI,total,"
                    "mined_false_neg,mined_easy")


class RolloutMode(enum.Enum):
    TEACHER_FORCED = "teacher_forced"
    SAMPLED = "sampled"
    GREEDY = "greedy"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the contrast weights, margin, bank size, and hop
    ratios default to the published operating point."""

    lambda_traj: float = 0.1
    lambda_instr: float = 0.01
    lambda_subinstr: float = 0.01
    margin: float = 0.25
    gamma: float = 32.0
    temperature: float = 0.1
    bank_capacity: int = 240
    alpha_p: float = 1.2
    alpha_n: float = 1.4
    learning_rate: float = 0.1
    batch_size: int = 4
    max_steps: int = 10
    rl_discount: float = 0.9
    value_coef: float = 0.5
    clip_norm: float = 5.0
    success_radius_m: float = 3.0
    embed_dim: int = 32
    init_scale: float = 0.1
    epochs: int = 3
    contrast_loss: str = "circle"
    use_mining: bool = True
    use_bank: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_traj", "lambda_instr", "lambda_subinstr"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if not (0.0 < self.rl_discount <= 1.0):
            raise ConfigError("rl_discount must lie in (0, 1]")
        if self.learning_rate <= 0.0 or self.clip_norm <= 0.0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if self.init_scale <= 0.0:
            raise ConfigError("init_scale must be positive")
        if self.batch_size < 1 or self.max_steps < 1 or self.epochs < 0:
            raise ConfigError("batch_size, max_steps must be >= 1, epochs >= 0")
        if self.contrast_loss not in ("circle", "nce"):
            raise ConfigError(f"unknown contrast loss {self.contrast_loss!r}")
        MarginConfig(self.margin, self.gamma)   # validates both

    @property
    def margin_cfg(self) -> MarginConfig:
        return MarginConfig(self.margin, self.gamma)

    def wants_contrast(self) -> bool:
        return (self.lambda_traj > 0.0 or self.lambda_instr > 0.0
                or self.lambda_subinstr > 0.0)


def fresh_banks(cfg: TrainConfig) -> dict:
    return {kind: MemoryBank(cfg.bank_capacity) for kind in ContrastKind}


@dataclass(frozen=True)
class Episode:
    """One navigation task: an instruction over a graph plus the canonical
    trajectory, pre-partitioned path alternatives, and pre-generated
    instruction variants."""

    episode_id: str
    graph: object
    doc: object
    start: int
    goal: int
    gt_traj: object
    partition: object
    pos_docs: tuple = ()
    neg_docs: tuple = ()

    def __post_init__(self):
        if self.gt_traj.start != self.start or self.gt_traj.goal != self.goal:
            raise ValueError("trajectory endpoints disagree with episode")


@dataclass(frozen=True)
class StepRecord:
    """One decision point of a rollout, stored detached."""

    node: int
    prev_node: Optional[int]
    candidates: tuple           # neighbor node ids then STOP_ACTION
    action_idx: int
    teacher_idx: int
    logits: np.ndarray
    value: float
    reward: float


@dataclass(frozen=True)
class EpisodeTrace:
    """Replayable record of one episode attempt."""

    episode: object             # carries graph, doc, start, goal, gt_traj
    mode: RolloutMode
    records: tuple
    walked: tuple               # node sequence actually traversed
    terminal: bool              # True when the agent chose STOP

    @property
    def final_node(self) -> int:
        return self.walked[-1]


def _cached_feature(graph, node, prev_node, frac, num_landmarks):
    """Step feature with a per-graph cache; features are static geometry."""
    cache = graph.__dict__.setdefault("_step_feature_cache", {})
    key = (node, prev_node, frac, num_landmarks)
    feat = cache.get(key)
    if feat is None:
        feat = step_feature(graph, node, prev_node, frac, num_landmarks)
        feat.setflags(write=False)
        cache[key] = feat
    return feat


def _candidate_input(graph, params, node, prev_node, frac):
    feat = _cached_feature(graph, node, prev_node, frac, params.num_landmarks)
    return ad.matmul(feat, params.step_table)


def _decision_step(graph, node, prev_node, candidates, params, x_tokens,
                   state, t, cfg):
    """Shared forward pass for rollout and replay; returns
    (logits, new_state, value) for one candidate set.

    Non-STOP candidate features go through the step table as one matrix;
    the STOP row is the learned stop embedding."""
    obs = _candidate_input(graph, params, node, prev_node, t / cfg.max_steps)
    frac = (t + 1) / cfg.max_steps
    moves = [c for c in candidates if c != STOP_ACTION]
    if not moves:
        cand_mat = ad.vstack([params.stop_vec])
    else:
        feats = np.stack([_cached_feature(graph, c, node, frac,
                                          params.num_landmarks)
                          for c in moves])
        embeds = ad.matmul(feats, params.step_table)
        if len(moves) == len(candidates):
            cand_mat = embeds
        else:
            cand_mat = ad.vstack([embeds, params.stop_vec])
    return attend_and_act(x_tokens, obs, state, cand_mat, params)


def _teacher_index(graph, node, goal, candidates):
    if node == goal:
        return len(candidates) - 1      # STOP slot
    nxt = shortest_path(graph, node, goal).node_seq[1]
    return candidates.index(nxt)


def _softmax_np(logits):
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def rollout(episode, params, cfg: TrainConfig, mode: RolloutMode,
            rng=None) -> EpisodeTrace:
    """Run one episode with frozen parameters.

    Teacher actions follow the canonical shortest path from the current
    node and STOP at the goal.  Rewards are the per-step geodesic progress
    toward the goal plus a terminal bonus of +2 / −2 for stopping inside /
    outside the success radius.  Sampled mode requires an rng.
    """
    if mode is RolloutMode.SAMPLED and rng is None:
        raise ConfigError("sampled rollouts need an rng")
    graph = episode.graph
    goal = episode.goal
    x_tokens = token_embeddings(episode.doc.tokens, params)
    state = np.zeros(params.d)
    node, prev_node = episode.start, None
    records = []
    walked = [node]
    terminal = False

    for t in range(cfg.max_steps):
        candidates = tuple(graph.neighbors(node)) + (STOP_ACTION,)
        logits, state, value = _decision_step(
            graph, node, prev_node, candidates, params, x_tokens, state, t, cfg)
        logits = np.asarray(ad.value(logits), dtype=np.float64)
        value = float(ad.value(value))
        teacher_idx = _teacher_index(graph, node, goal, candidates)

        if mode is RolloutMode.TEACHER_FORCED:
            action_idx = teacher_idx
        elif mode is RolloutMode.GREEDY:
            action_idx = int(np.argmax(logits))
        else:
            probs = _softmax_np(logits)
            if not np.all(np.isfinite(probs)):
                raise NonFiniteLossError(
                    "policy produced non-finite action probabilities")
            action_idx = int(rng.choice(len(candidates), p=probs))

        chosen = candidates[action_idx]
        if chosen == STOP_ACTION:
            inside = graph.geodesic(node, goal) <= cfg.success_radius_m
            reward = 2.0 if inside else -2.0
            terminal = True
        else:
            reward = graph.geodesic(node, goal) - graph.geodesic(chosen, goal)

        records.append(StepRecord(node, prev_node, candidates, action_idx,
                                  teacher_idx, logits.copy(), value, reward))
        if terminal:
            break
        prev_node, node = node, chosen
        walked.append(node)

    return EpisodeTrace(episode, mode, tuple(records), tuple(walked), terminal)


def replay_decisions(trace: EpisodeTrace, params, cfg: TrainConfig):
    """Recompute (logits, value) along a stored trace under params, which
    may be a tape view; the action sequence stays exactly as recorded."""
    x_tokens = token_embeddings(trace.episode.doc.tokens, params)
    state = np.zeros(params.d)
    out = []
    for t, step in enumerate(trace.records):
        logits, state, value = _decision_step(
            trace.episode.graph, step.node, step.prev_node, step.candidates,
            params, x_tokens, state, t, cfg)
        out.append((logits, value))
    return out


def il_loss(trace: EpisodeTrace, params, cfg: TrainConfig):
    """Per-step mean cross-entropy of the teacher action."""
    if not trace.records:
        return 0.0
    terms = []
    for (logits, _), step in zip(replay_decisions(trace, params, cfg),
                                 trace.records):
        logp = ad.log_softmax(logits)
        onehot = np.zeros(len(step.candidates))
        onehot[step.teacher_idx] = 1.0
        terms.append(ad.scale(ad.dot(logp, onehot), -1.0))
    return ad.scale(ad.accumulate(terms), 1.0 / len(terms))


def returns_to_go(rewards, discount):
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


def a2c_loss(trace: EpisodeTrace, params, cfg: TrainConfig):
    """Policy-gradient term weighted by frozen advantages plus the value
    regression term.

    Advantages use the value estimates recorded at rollout time, so they
    are constants of the closure; the value head is regressed onto the
    same discounted returns.
    """
    if not trace.records:
        return 0.0
    rewards = [s.reward for s in trace.records]
    gs = returns_to_go(rewards, cfg.rl_discount)
    advantages = gs - np.array([s.value for s in trace.records])
    policy_terms, value_terms = [], []
    for (logits, value), step, g, adv in zip(
            replay_decisions(trace, params, cfg), trace.records, gs,
            advantages):
        logp = ad.log_softmax(logits)
        onehot = np.zeros(len(step.candidates))
        onehot[step.action_idx] = 1.0
        policy_terms.append(
            ad.scale(ad.dot(logp, onehot), -float(adv)))
        resid = ad.add(value, ad.scalar(-float(g)))
        value_terms.append(ad.mul(resid, resid))
    return ad.add(ad.accumulate(policy_terms),
                  ad.scale(ad.accumulate(value_terms), cfg.value_coef))


def _mean_terms(terms):
    if not terms:
        return 0.0
    return ad.scale(ad.accumulate(terms), 1.0 / len(terms))


@dataclass(frozen=True)
class MinedStats:
    false_negatives: int = 0
    easy: int = 0

    def plus(self, mined) -> "MinedStats":
        return MinedStats(
            self.false_negatives + len(mined.discarded_false_negatives),
            self.easy + len(mined.discarded_easy))


def contrast_losses(batch, params, banks, cfg: TrainConfig):
    """Per-kind anchor-averaged contrast losses for a batch.

    Returns (traj, instr, sub, MinedStats); each loss is skipped entirely
    (0.0, no encoding, no bank traffic) when its weight is zero.
    """
    mcfg = cfg.margin_cfg
    stats = MinedStats()
    kw = dict(loss_kind=cfg.contrast_loss, mining=cfg.use_mining,
              temperature=cfg.temperature)

    def run(kind, q, pos, neg):
        nonlocal stats
        bank = banks[kind] if cfg.use_bank else None
        loss, mined = assemble_loss(kind, q, pos, neg, bank, mcfg, **kw)
        stats = stats.plus(mined)
        return loss

    traj_terms, instr_terms, sub_terms = [], [], []
    for ep in batch:
        sid = ep.episode_id
        if cfg.lambda_traj > 0.0:
            q = encode_trajectory(ep.gt_traj, ep.graph, params,
                                  role=Role.ANCHOR_Q, source_id=sid)
            pos = [encode_trajectory(t, ep.graph, params, source_id=sid)
                   for t in ep.partition.positives]
            neg = [encode_trajectory(t, ep.graph, params,
                                     role=Role.NEGATIVE_N, source_id=sid)
                   for t in ep.partition.intra_negatives]
            traj_terms.append(run(ContrastKind.TRAJ, q, pos, neg))
        if cfg.lambda_instr > 0.0:
            q = encode_instruction(ep.doc, params, role=Role.ANCHOR_Q,
                                   source_id=sid)
            pos = [encode_instruction(d, params, source_id=sid)
                   for d in ep.pos_docs
                   if d.provenance is not Provenance.ORIGINAL_COPY]
            neg = [encode_instruction(d, params, role=Role.NEGATIVE_N,
                                      source_id=sid)
                   for d in ep.neg_docs]
            instr_terms.append(run(ContrastKind.INSTR, q, pos, neg))
        if cfg.lambda_subinstr > 0.0:
            for q_idx in range(ep.doc.num_spans):
                sets = sub_instruction_sets(ep.doc, q_idx)
                q = encode_span(ep.doc, q_idx, params, role=Role.ANCHOR_Q,
                                source_id=sid)
                pos = [encode_span(ep.doc, i, params, source_id=sid)
                       for i in sorted(sets.positives)]
                neg = [encode_span(ep.doc, j, params, role=Role.NEGATIVE_N,
                                   source_id=sid)
                       for j in sorted(sets.intra_negatives)]
                sub_terms.append(run(ContrastKind.SUB_INSTR, q, pos, neg))

    return (_mean_terms(traj_terms), _mean_terms(instr_terms),
            _mean_terms(sub_terms), stats)


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted contributions; total is their exact float sum."""

    il: float
    rl: float
    traj: float
    instr: float
    subinstr: float
    total: float
    mined: MinedStats = field(default_factory=MinedStats)

    def csv_row(self, step) -> str:
        return (f"{step},{self.il:.6f},{self.rl:.6f},{self.traj:.6f},"
                f"{self.instr:.6f},{self.subinstr:.6f},{self.total:.6f},"
                f"{self.mined.false_negatives},{self.mined.easy}")


def composite_loss(batch, traces_il, traces_rl, params, banks,
                   cfg: TrainConfig):
    """Eq.-style weighted objective; returns (scalar, component floats,
    stats).  Contrast pipelines with zero weight never execute."""
    il = _mean_terms([il_loss(t, params, cfg) for t in traces_il])
    rl = _mean_terms([a2c_loss(t, params, cfg) for t in traces_rl])
    if cfg.wants_contrast():
        ct, ci, cf, stats = contrast_losses(batch, params, banks, cfg)
    else:
        ct, ci, cf, stats = 0.0, 0.0, 0.0, MinedStats()
    total = ad.accumulate([
        il, rl,
        ad.scale(ct, cfg.lambda_traj),
        ad.scale(ci, cfg.lambda_instr),
        ad.scale(cf, cfg.lambda_subinstr),
    ])
    parts = (float(ad.value(il)), float(ad.value(rl)),
             cfg.lambda_traj * float(ad.value(ct)),
             cfg.lambda_instr * float(ad.value(ci)),
             cfg.lambda_subinstr * float(ad.value(cf)))
    return total, parts, stats


def clip_gradients(grads: dict, clip_norm: float) -> dict:
    """Global-norm clipping across all parameter arrays."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total <= clip_norm or total == 0.0:
        return grads
    scale = clip_norm / total
    return {name: g * scale for name, g in grads.items()}


def sgd_update(params: EncoderParams, grads: dict, lr: float) -> EncoderParams:
    arrays = params.arrays()
    return params.with_arrays(
        {name: arrays[name] - lr * grads[name] for name in grads})


def train_step(batch, params, banks, cfg: TrainConfig, rng):
    """One optimization step over a batch of episodes.

    Teacher-forced traces feed the imitation term, sampled traces the
    actor-critic term; banks are consulted and then refreshed during the
    single loss evaluation.  Raises NonFiniteLossError when the loss or
    gradient goes non-finite, leaving params untouched.
    """
    traces_il = [rollout(ep, params, cfg, RolloutMode.TEACHER_FORCED)
                 for ep in batch]
    traces_rl = [rollout(ep, params, cfg, RolloutMode.SAMPLED, rng=rng)
                 for ep in batch]

    holder = {}

    def closure(view):
        total, parts, stats = composite_loss(
            batch, traces_il, traces_rl, view, banks, cfg)
        holder["parts"] = parts
        holder["stats"] = stats
        return total

    _, grads = gradient(params, closure)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(f"non-finite gradient for {name}")
    grads = clip_gradients(grads, cfg.clip_norm)
    new_params = sgd_update(params, grads, cfg.learning_rate)

    il, rl, ct, ci, cf = holder["parts"]
    breakdown = LossBreakdown(il, rl, ct, ci, cf,
                              il + rl + ct + ci + cf, holder["stats"])
    return new_params, breakdown


def evaluate(params, episodes, cfg: TrainConfig,
             mode: RolloutMode = RolloutMode.GREEDY, csv_path=None):
    """Rollout every episode without exploration and score it; returns
    (aggregate report, per-episode reports).  When csv_path is given the
    per-episode rows plus a final mean row are written there."""
    reports = []
    for ep in episodes:
        trace = rollout(ep, params, cfg, mode)
        predicted = ep.graph.trajectory(trace.walked)
        reports.append(evaluate_episode(ep.graph, predicted, ep.gt_traj,
                                        cfg.success_radius_m))
    agg = aggregate(reports)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(reports_to_csv(reports))
            fh.write(agg.csv_row() + "\n")
    return agg, reports


def train_run(episodes, vocab, num_landmarks, cfg: TrainConfig,
              log_rows: Optional[list] = None, callback=None):
    """Full training loop; returns trained parameters.

    Batches are drawn in a seeded shuffled order each epoch; the log_rows
    list, when given, collects one CSV row per step, and callback(step,
    params, breakdown) runs after each applied update.
    """
    params = EncoderParams.init(vocab, num_landmarks, d=cfg.embed_dim,
                                seed=cfg.seed, scale=cfg.init_scale)
    banks = fresh_banks(cfg)
    rng = np.random.default_rng(cfg.seed)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(episodes))
        for lo in range(0, len(order), cfg.batch_size):
            batch = [episodes[int(i)] for i in order[lo:lo + cfg.batch_size]]
            params, breakdown = train_step(batch, params, banks, cfg, rng)
            if log_rows is not None:
                log_rows.append(breakdown.csv_row(step))
            if callback is not None:
                callback(step, params, breakdown)
            step += 1
    return params


def episode_partition(graph, start, goal, alternatives, cfg: TrainConfig):
    """Partition pre-enumerated alternatives around the canonical path."""
    h_gt = shortest_path(graph, start, goal).hop
    return partition_trajectories(alternatives, h_gt, cfg.alpha_p, cfg.alpha_n)
