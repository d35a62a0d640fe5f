"""Toy differentiable encoders and the agent head.

Instructions and trajectories are embedded by mean-pooled table lookups
pushed through a small two-layer projection; contrast anchors get an extra
predictor affine before L2 normalization.  All forward code is written
against the functional autodiff API, so the same functions serve fast
plain-numpy inference and exact-gradient training depending on whether the
parameter container holds arrays or tape leaves.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteLossError

UNK_TOKEN = "<unk>"

# movement direction slots: +x -x +y -y +z -z, then "other" for diagonal
# moves; an all-zero block encodes "no movement" (first step)
DIRECTION_SLOTS = 7

CHECKPOINT_VERSION = 1

PARAM_FIELDS = (
    "token_table", "step_table",
    "w1", "b1", "w2", "b2",          # projection U
    "wg", "bg",                      # anchor predictor G
    "w_ctx", "b_ctx",                # attention state head
    "stop_vec", "w_val", "b_val",    # stop candidate and value head
)


class Role(enum.Enum):
    ANCHOR_Q = "anchor_q"
    POSITIVE_P = "positive_p"
    NEGATIVE_N = "negative_n"


@dataclass(frozen=True)
class EncoderParams:
    """All trainable state plus the vocabulary it is bound to."""

    vocab: tuple
    num_landmarks: int
    d: int
    token_table: object
    step_table: object
    w1: object
    b1: object
    w2: object
    b2: object
    wg: object
    bg: object
    w_ctx: object
    b_ctx: object
    stop_vec: object
    w_val: object
    b_val: object

    def __post_init__(self):
        if self.vocab[0] != UNK_TOKEN:
            raise ValueError(f"vocab slot 0 must be {UNK_TOKEN!r}")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocabulary has duplicate tokens")
        for name in PARAM_FIELDS:
            if not np.all(np.isfinite(ad.value(getattr(self, name)))):
                raise ValueError(f"non-finite values in parameter {name}")

    @property
    def feature_dim(self) -> int:
        return self.num_landmarks + DIRECTION_SLOTS + 1

    @property
    def token_ids(self) -> dict:
        ids = self.__dict__.get("_token_ids")
        if ids is None:
            ids = {tok: i for i, tok in enumerate(self.vocab)}
            object.__setattr__(self, "_token_ids", ids)
        return ids

    @classmethod
    def init(cls, vocab, num_landmarks, d=32, seed=0,
             scale=0.1) -> "EncoderParams":
        vocab = tuple(vocab)
        if not vocab or vocab[0] != UNK_TOKEN:
            vocab = (UNK_TOKEN,) + tuple(t for t in vocab if t != UNK_TOKEN)
        rng = np.random.default_rng(seed)
        feature_dim = num_landmarks + DIRECTION_SLOTS + 1

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        return cls(
            vocab=vocab, num_landmarks=num_landmarks, d=d,
            token_table=u(len(vocab), d), step_table=u(feature_dim, d),
            w1=u(d, d), b1=u(d), w2=u(d, d), b2=u(d),
            wg=u(d, d), bg=u(d),
            w_ctx=u(d, d), b_ctx=u(d),
            stop_vec=u(d), w_val=u(d), b_val=u(),
        )

    def arrays(self) -> dict:
        return {name: ad.value(getattr(self, name)) for name in PARAM_FIELDS}

    def tape_view(self):
        """Copy whose parameters are gradient leaves; returns (view, leaves)."""
        leaves = {name: ad.leaf(ad.value(getattr(self, name)))
                  for name in PARAM_FIELDS}
        return replace(self, **leaves), leaves

    def with_arrays(self, updates: dict) -> "EncoderParams":
        return replace(self, **updates)

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [np.ravel(ad.value(getattr(self, name))) for name in PARAM_FIELDS])

    def save(self, path):
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "vocab": list(self.vocab),
            "num_landmarks": self.num_landmarks,
            "d": self.d,
            "params": {name: np.ravel(ad.value(getattr(self, name))).tolist()
                       for name in PARAM_FIELDS},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EncoderParams":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {payload.get('format_version')}")
        vocab = tuple(payload["vocab"])
        num_landmarks = int(payload["num_landmarks"])
        d = int(payload["d"])
        template = cls.init(vocab, num_landmarks, d=d, seed=0)
        arrays = {}
        for name in PARAM_FIELDS:
            shape = np.shape(ad.value(getattr(template, name)))
            flat = np.asarray(payload["params"][name], dtype=np.float64)
            arrays[name] = flat.reshape(shape)
        return template.with_arrays(arrays)


@dataclass(frozen=True)
class EmbeddingRecord:
    """Unit-norm embedding plus its contrast role and sample identity.

    `node` is the live autodiff handle when the record was produced under a
    tape view; detached records have node None and carry no gradient path.
    """

    vec: np.ndarray
    role: Role
    source_id: str
    node: Optional[ad.Tensor] = None

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vec))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1")

    @property
    def detached(self) -> bool:
        return self.node is None

    def detach(self) -> "EmbeddingRecord":
        return EmbeddingRecord(self.vec.copy(), self.role, self.source_id)

    def live(self):
        """Whatever should enter the loss graph: tape node if present."""
        return self.node if self.node is not None else self.vec


def _finish_record(pooled, params, role, source_id):
    h = ad.add(ad.matmul(params.w2, ad.tanh(
        ad.add(ad.matmul(params.w1, pooled), params.b1))), params.b2)
    if role is Role.ANCHOR_Q:
        h = ad.add(ad.matmul(params.wg, h), params.bg)
    out = ad.l2_normalize(h, dim_basis=params.d)
    node = out if ad.is_tensor(out) else None
    return EmbeddingRecord(ad.value(out).copy(), role, source_id, node)


def _lookup_ids(tokens, params):
    ids = params.token_ids
    return [ids.get(tok, 0) for tok in tokens]


def token_embeddings(tokens, params):
    """Per-token embedding matrix (T, d); unknown tokens hit the UNK row."""
    if not tokens:
        raise ValueError("no tokens to embed")
    return ad.gather_rows(params.token_table, _lookup_ids(tokens, params))


def encode_instruction(doc, params, role=Role.POSITIVE_P,
                       source_id="") -> EmbeddingRecord:
    """Mean-pooled token embedding through the projection (anchors also
    pass the predictor), L2 normalized."""
    pooled = ad.mean_rows(token_embeddings(doc.tokens, params))
    return _finish_record(pooled, params, role, source_id)


def encode_span(doc, span_idx, params, role=Role.POSITIVE_P,
                source_id="") -> EmbeddingRecord:
    """Same pipeline as encode_instruction over one sub-instruction."""
    pooled = ad.mean_rows(token_embeddings(doc.span_tokens(span_idx), params))
    return _finish_record(pooled, params, role, source_id)


def direction_slot(delta) -> Optional[int]:
    """Index of the dominant axis direction, 6 for diagonal-ish moves,
    None for no movement."""
    mag = np.abs(delta)
    if float(mag.max()) == 0.0:
        return None
    order = np.argsort(mag)
    if mag[order[-1]] - mag[order[-2]] < 1e-9:
        return 6
    axis = int(order[-1])
    return axis * 2 + (0 if delta[axis] > 0 else 1)


def step_feature(graph, node, prev_node, frac, num_landmarks) -> np.ndarray:
    """[landmark one-hot | direction one-hot | progress fraction]."""
    feat = np.zeros(num_landmarks + DIRECTION_SLOTS + 1)
    landmark = graph.landmarks[node]
    if landmark >= num_landmarks:
        raise ValueError(f"landmark id {landmark} outside feature range")
    feat[landmark] = 1.0
    if prev_node is not None:
        slot = direction_slot(graph.positions[node] - graph.positions[prev_node])
        if slot is not None:
            feat[num_landmarks + slot] = 1.0
    feat[-1] = frac
    return feat


def trajectory_features(traj, graph, num_landmarks) -> np.ndarray:
    """(steps, feature_dim) matrix of per-node step features.

    Features depend only on static graph geometry, so the matrix is cached
    on the graph itself and reused across optimization steps."""
    cache = graph.__dict__.get("_traj_feature_cache")
    if cache is None:
        cache = {}
        object.__setattr__(graph, "_traj_feature_cache", cache)
    seq = traj.node_seq
    key = (seq, num_landmarks)
    feats = cache.get(key)
    if feats is None:
        denom = max(1, len(seq) - 1)
        rows = [step_feature(graph, v,
                             seq[i - 1] if i > 0 else None,
                             i / denom, num_landmarks)
                for i, v in enumerate(seq)]
        feats = np.stack(rows)
        feats.setflags(write=False)
        cache[key] = feats
    return feats


def encode_trajectory(traj, graph, params, role=Role.POSITIVE_P,
                      source_id="") -> EmbeddingRecord:
    """Step features through the step table, mean pooled, projected, and
    normalized; anchors also pass the predictor."""
    feats = trajectory_features(traj, graph, params.num_landmarks)
    pooled = ad.mean_rows(ad.matmul(feats, params.step_table))
    return _finish_record(pooled, params, role, source_id)


def attend_and_act(x_tokens, obs_feature, prev_state, candidates, params):
    """One decision step: attention over token embeddings conditioned on
    (previous state + observation), then candidate logits and a value
    estimate from the new state.

    Candidates may be a sequence of d-vectors or an equivalent (k, d)
    row matrix.  Returns (logits, state, value) in whatever mode (array
    or tape) the inputs and params are in.
    """
    if isinstance(candidates, (list, tuple)):
        if len(candidates) == 0:
            raise ValueError("need at least one candidate")
        candidates = ad.stack_rows(candidates)
    elif np.atleast_2d(ad.value(candidates)).shape[0] == 0:
        raise ValueError("need at least one candidate")
    query = ad.add(prev_state, obs_feature)
    scores = ad.scale(ad.matmul(x_tokens, query), 1.0 / np.sqrt(params.d))
    attn = ad.softmax(scores)
    ctx = ad.matmul(attn, x_tokens)
    state = ad.tanh(ad.add(ad.matmul(params.w_ctx, ctx), params.b_ctx))
    logits = ad.matmul(candidates, state)
    val = ad.add(ad.dot(params.w_val, state), params.b_val)
    return logits, state, val


def gradient(params, closure):
    """Loss value and parameter-shaped gradient of a scalar closure.

    The closure receives a tape view of params and must build its result
    from autodiff ops.  Parameters the loss never touches get zero arrays.
    """
    view, leaves = params.tape_view()
    loss = closure(view)
    loss_value = float(ad.value(loss))
    if not np.isfinite(loss_value):
        raise NonFiniteLossError(f"loss evaluated to {loss_value}")
    grads = {}
    if ad.is_tensor(loss):
        loss.backward()
    for name, tensor in leaves.items():
        g = tensor.grad
        grads[name] = (np.zeros_like(tensor.data) if g is None
                       else np.asarray(g, dtype=np.float64))
    return loss_value, grads


def finite_difference_grad(params, closure, h=1e-5):
    """Central-difference gradient of the same closure, for verification."""
    base = params.arrays()
    grads = {}
    for name in PARAM_FIELDS:
        arr = base[name].copy()
        g = np.zeros_like(arr)
        flat_a = np.atleast_1d(arr.ravel())
        flat_g = np.atleast_1d(g.ravel())
        for i in range(flat_a.size):
            keep = flat_a[i]
            flat_a[i] = keep + h
            up = float(ad.value(closure(params.with_arrays(
                {name: arr.reshape(base[name].shape)}))))
            flat_a[i] = keep - h
            dn = float(ad.value(closure(params.with_arrays(
                {name: arr.reshape(base[name].shape)}))))
            flat_a[i] = keep
            flat_g[i] = (up - dn) / (2.0 * h)
        grads[name] = g
    return grads


def grad_check(params, closure, h=1e-5, rel_tol=1e-4, abs_floor=1e-7):
    """Max relative error between analytic and central-difference gradients.

    Returns (max_rel_err, offending_name); relative error uses a small
    absolute floor so near-zero coordinates do not blow up the ratio.
    """
    _, analytic = gradient(params, closure)
    numeric = finite_difference_grad(params, closure, h=h)
    worst, worst_name = 0.0, ""
    for name in PARAM_FIELDS:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), abs_floor)
        err = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name
