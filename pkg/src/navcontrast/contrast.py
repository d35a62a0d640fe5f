"""Contrastive losses over embedding records: circle loss with self-paced
logits, a multi-positive InfoNCE baseline, informative-pair mining, and
FIFO memory banks of detached embeddings.

Losses accept records in either mode: all-detached inputs run on plain
float kernels, records carrying tape nodes produce a differentiable scalar
whose backward pass uses the kernels' analytic similarity gradients.
Mining always operates on detached similarity values, so the selected
index sets are constants with respect to the parameters.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import ConfigError, NonFiniteLossError


@dataclass(frozen=True)
class MarginConfig:
    """Relaxation margin and logit scale with the derived thresholds."""

    m: float = 0.25
    gamma: float = 32.0

    def __post_init__(self):
        if not (0.0 < self.m < 1.0):
            raise ConfigError(f"margin must lie in (0, 1), got {self.m}")
        if self.gamma <= 0.0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")

    @property
    def o_p(self) -> float:
        return 1.0 + self.m

    @property
    def delta_p(self) -> float:
        return 1.0 - self.m

    @property
    def o_n(self) -> float:
        return -self.m

    @property
    def delta_n(self) -> float:
        return self.m


class ContrastKind(enum.Enum):
    TRAJ = "traj"
    INSTR = "instr"
    SUB_INSTR = "sub_instr"


class MemoryBank:
    """Bounded FIFO of detached embeddings from past batches.

    Single writer (the training loop); snapshots are immutable tuples that
    readers may hold across later pushes.
    """

    def __init__(self, capacity=240):
        if capacity < 1:
            raise ConfigError("bank capacity must be at least 1")
        self.capacity = capacity
        self._queue = deque(maxlen=capacity)

    def __len__(self):
        return len(self._queue)

    def push(self, records):
        for rec in records:
            self._queue.append(rec.detach())

    def snapshot(self, exclude_source=None) -> tuple:
        if exclude_source is None:
            return tuple(self._queue)
        return tuple(r for r in self._queue if r.source_id != exclude_source)


def cosine_sim(a, b) -> float:
    """Cosine similarity of two unit-norm records, clipped against float
    excursions just past the ends of [−1, 1]."""
    s = float(np.dot(a.vec, b.vec))
    return -1.0 if s < -1.0 else (1.0 if s > 1.0 else s)


def batch_sims(q, records) -> np.ndarray:
    """Detached cosine similarities of q against every record at once."""
    if not records:
        return np.zeros(0)
    mat = np.stack([r.vec for r in records])
    return np.clip(mat @ q.vec, -1.0, 1.0)


def _sim_vector(q, records):
    """Similarities of q against records, as a tape vector when anything
    involved is attached to the tape.

    A run of detached records at the tail (the usual bank layout) collapses
    to one matrix-vector product instead of per-record dots."""
    if not records:
        return np.zeros(0)
    live = any(not r.detached for r in records) or not q.detached
    if not live:
        return batch_sims(q, records)
    qt = q.live()
    split = len(records)
    while split > 0 and records[split - 1].detached:
        split -= 1
    head = [ad.dot(qt, r.live()) for r in records[:split]]
    if split == len(records):
        return ad.concat1d(head)
    tail_mat = np.stack([r.vec for r in records[split:]])
    tail = ad.matmul(tail_mat, qt)
    if not head:
        return tail
    return ad.concat1d(head + [tail])


def _terms_op(term_fn, sp, sn, *args):
    """Wrap a (loss, dsp, dsn) kernel as a tape-aware scalar."""
    spv = np.atleast_1d(ad.value(sp)).astype(np.float64)
    snv = np.atleast_1d(ad.value(sn)).astype(np.float64)
    if not (np.all(np.isfinite(spv)) and np.all(np.isfinite(snv))):
        raise NonFiniteLossError("non-finite similarity entering loss")
    loss, dsp, dsn = term_fn(spv, snv, *args)
    parents = []
    if ad.is_tensor(sp):
        parents.append((sp, lambda g, d=dsp: g * d))
    if ad.is_tensor(sn):
        parents.append((sn, lambda g, d=dsn: g * d))
    if not parents:
        return float(loss)
    return ad.Tensor(np.asarray(float(loss)), parents=tuple(parents))


def circle_loss(q, positives, negatives, cfg: MarginConfig):
    """log(1 + Σ_n e^{l_n} · Σ_p e^{l_p}) with self-paced clamp weights;
    an empty side makes the product vanish, giving exactly 0."""
    if not positives or not negatives:
        return 0.0
    sp = _sim_vector(q, positives)
    sn = _sim_vector(q, negatives)
    return _terms_op(kernels.circle_terms, sp, sn, cfg.m, cfg.gamma)


def info_nce_multi(q, positives, negatives, temperature):
    """Mean over positives of the one-vs-all-negatives InfoNCE term."""
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if not positives or not negatives:
        raise ValueError("InfoNCE needs at least one positive and one negative")
    sp = _sim_vector(q, positives)
    sn = _sim_vector(q, negatives)
    return _terms_op(kernels.infonce_terms, sp, sn, temperature)


@dataclass(frozen=True)
class MinedPairs:
    """Index partition of candidate pairs for one anchor.

    kept_positives / kept_negatives / discarded_false_negatives hold plain
    indices into their own side; discarded_easy holds ("p", i) / ("n", j)
    pairs since uninformative samples exist on both sides.  Together the
    four sets cover every input index exactly once.
    """

    kept_positives: frozenset
    kept_negatives: frozenset
    discarded_false_negatives: frozenset
    discarded_easy: frozenset

    @property
    def num_kept(self) -> int:
        return len(self.kept_positives) + len(self.kept_negatives)

    def covers(self, num_p, num_n) -> bool:
        """True when the four sets partition all indices exactly."""
        easy_p = {i for side, i in self.discarded_easy if side == "p"}
        easy_n = {j for side, j in self.discarded_easy if side == "n"}
        p_sets = (self.kept_positives, easy_p)
        n_sets = (self.kept_negatives, self.discarded_false_negatives, easy_n)
        p_total = sum(len(s) for s in p_sets)
        n_total = sum(len(s) for s in n_sets)
        return (set().union(*p_sets) == set(range(num_p))
                and set().union(*n_sets) == set(range(num_n))
                and p_total == num_p and n_total == num_n)


def _keep_all(num_p, num_n) -> MinedPairs:
    return MinedPairs(frozenset(range(num_p)), frozenset(range(num_n)),
                      frozenset(), frozenset())


def pair_mining(q, positives, negatives, m) -> MinedPairs:
    """Informative-pair filter on detached similarities.

    Negatives at or above 1−m are recorded as false negatives; surviving
    negatives must beat the easiest-positive floor, and positives must
    undercut the hardest kept negative's ceiling.  No kept negatives means
    the anchor is skipped entirely.
    """
    if not positives:
        raise ValueError("mining needs at least one positive")
    sp = batch_sims(q, positives)
    if not negatives:
        return MinedPairs(frozenset(), frozenset(), frozenset(),
                          frozenset(("p", i) for i in range(len(sp))))
    sn = batch_sims(q, negatives)
    keep_p, keep_n, false_neg = kernels.mine_pair_masks(sp, sn, m)
    easy = frozenset(
        [("p", int(i)) for i in np.flatnonzero(~keep_p)]
        + [("n", int(j)) for j in np.flatnonzero(~keep_n & ~false_neg)])
    return MinedPairs(
        frozenset(np.flatnonzero(keep_p).tolist()),
        frozenset(np.flatnonzero(keep_n).tolist()),
        frozenset(np.flatnonzero(false_neg).tolist()),
        easy,
    )


def bank_push(bank: MemoryBank, positives) -> MemoryBank:
    bank.push(positives)
    return bank


def assemble_loss(kind: ContrastKind, q, p_raw, n_intra, bank, cfg,
                  loss_kind="circle", mining=True, temperature=0.1):
    """Full per-anchor contrast pipeline.

    Combines intra negatives with the bank snapshot (minus entries from
    the anchor's own episode), optionally mines informative pairs, applies
    the chosen loss, then pushes the raw positives into the bank.  Returns
    (loss, MinedPairs).  Empty p_raw short-circuits to loss 0 with no push.
    """
    if not isinstance(kind, ContrastKind):
        raise ConfigError(f"unknown contrast kind {kind!r}")
    if loss_kind not in ("circle", "nce"):
        raise ConfigError(f"unknown loss kind {loss_kind!r}")
    if not p_raw:
        return 0.0, _keep_all(0, 0)

    n_full = list(n_intra)
    if bank is not None:
        n_full.extend(bank.snapshot(exclude_source=q.source_id))

    if mining:
        mined = pair_mining(q, p_raw, n_full, cfg.m)
    else:
        mined = _keep_all(len(p_raw), len(n_full))
    pos = [p_raw[i] for i in sorted(mined.kept_positives)]
    neg = [n_full[j] for j in sorted(mined.kept_negatives)]

    if not pos or not neg:
        loss = 0.0
    elif loss_kind == "circle":
        loss = circle_loss(q, pos, neg, cfg)
    else:
        loss = info_nce_multi(q, pos, neg, temperature)

    if bank is not None:
        bank_push(bank, p_raw)
    return loss, mined
