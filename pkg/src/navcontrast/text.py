"""Instruction text handling: sub-instruction splitting, positive
augmentation (synonym, contextual, back-translation), intra-negative
construction, and neighbor sets over sub-instruction spans.

Augmentation never needs the network: the contextual and round-trip
clients are optional protocols with deterministic offline fallbacks, so
the full pipeline runs reproducibly from a seed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from .errors import ConfigError


class Provenance(enum.Enum):
    ORIGINAL = "original"
    SYNONYM = "synonym"
    CONTEXTUAL = "contextual"
    BACKTRANSLATED = "backtranslated"
    SHUFFLED_NEGATIVE = "shuffled_negative"
    REPEATED_NEGATIVE = "repeated_negative"
    # augmentation that touched nothing; caller may drop these
    ORIGINAL_COPY = "original_copy"


POSITIVE_METHODS = ("synonym", "contextual", "backtranslated")

_METHOD_TAG = {
    "synonym": Provenance.SYNONYM,
    "contextual": Provenance.CONTEXTUAL,
    "backtranslated": Provenance.BACKTRANSLATED,
}

# verbs that signal the start of a movement clause; used to decide whether
# "and" / "then" separate two sub-instructions or just join noun phrases
NAV_VERBS = frozenset({
    "walk", "go", "turn", "head", "continue", "proceed", "stop", "enter",
    "exit", "pass", "climb", "descend", "follow", "move", "cross", "wait",
    "approach", "leave", "reach", "stroll", "advance", "veer", "halt",
    "rotate", "pivot", "stride", "travel", "march", "keep",
})

_SPLIT_PUNCT = frozenset({",", "."})
_CONJUNCTIONS = frozenset({"and", "then"})


@dataclass(frozen=True)
class InstructionDoc:
    """Tokenized instruction plus its sub-instruction span partition."""

    tokens: tuple
    sub_spans: tuple
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("instruction has no tokens")
        for tok in self.tokens:
            if not tok or tok != tok.lower() or " " in tok:
                raise ValueError(f"bad token {tok!r}")
        if not self.sub_spans:
            raise ValueError("instruction has no sub-instruction spans")
        cursor = 0
        for start, end in self.sub_spans:
            if start != cursor or end <= start:
                raise ValueError(
                    f"spans must partition the tokens, got {self.sub_spans}")
            cursor = end
        if cursor != len(self.tokens):
            raise ValueError("spans do not cover all tokens")

    @property
    def num_spans(self) -> int:
        return len(self.sub_spans)

    def span_tokens(self, idx) -> tuple:
        start, end = self.sub_spans[idx]
        return self.tokens[start:end]

    def text(self) -> str:
        return " ".join(self.tokens)


def _spans_from_chunks(chunks):
    spans = []
    cursor = 0
    for chunk in chunks:
        spans.append((cursor, cursor + len(chunk)))
        cursor += len(chunk)
    return tuple(spans)


def _doc_from_chunks(chunks, provenance):
    tokens = tuple(tok for chunk in chunks for tok in chunk)
    return InstructionDoc(tokens, _spans_from_chunks(chunks), provenance)


def split_sub_instructions(tokens) -> InstructionDoc:
    """Chunk a token sequence into sub-instructions.

    Commas and periods split whenever tokens remain after them; "and" and
    "then" split only when both the current chunk so far and the remainder
    contain a navigation verb.  The delimiter stays with the left chunk.
    """
    toks = tuple(tokens)
    if not toks:
        raise ValueError("cannot split an empty token sequence")
    chunks = []
    start = 0
    for i, tok in enumerate(toks):
        if tok in _SPLIT_PUNCT and i + 1 < len(toks):
            chunks.append(list(toks[start:i + 1]))
            start = i + 1
        elif tok in _CONJUNCTIONS:
            left = toks[start:i]
            right = toks[i + 1:]
            if (any(t in NAV_VERBS for t in left)
                    and any(t in NAV_VERBS for t in right)):
                chunks.append(list(toks[start:i + 1]))
                start = i + 1
    if start < len(toks):
        chunks.append(list(toks[start:]))
    return _doc_from_chunks(chunks, Provenance.ORIGINAL)


@runtime_checkable
class TextClient(Protocol):
    """One-shot text rewriting service (contextual edits or a translation
    round trip).  Implementations must be deterministic to keep runs
    reproducible, and safe for concurrent calls."""

    timeout_s: float

    def rewrite(self, text: str) -> str: ...


@dataclass(frozen=True)
class AugmenterConfig:
    """Synonym table plus optional external rewrite clients."""

    synonym_lexicon: dict
    lm_client: Optional[TextClient] = None
    mt_client: Optional[TextClient] = None
    rng_seed: int = 0
    replace_prob: float = field(default=0.3, repr=False)

    def __post_init__(self):
        for word, alts in self.synonym_lexicon.items():
            if not alts:
                raise ConfigError(f"lexicon entry {word!r} has no synonyms")
            if word in alts:
                raise ConfigError(f"lexicon entry {word!r} maps to itself")
            if len(set(alts)) != len(alts):
                raise ConfigError(f"lexicon entry {word!r} has duplicates")
        if not (0.0 < self.replace_prob <= 1.0):
            raise ConfigError("replace_prob must be in (0, 1]")


def load_lexicon(path) -> dict:
    with open(path) as fh:
        table = json.load(fh)
    return {str(w): [str(s) for s in alts] for w, alts in table.items()}


def _synonym_chunk(chunk, lexicon, prob, rng):
    out = []
    for tok in chunk:
        alts = lexicon.get(tok)
        if alts and rng.random() < prob:
            out.append(alts[int(rng.integers(0, len(alts)))])
        else:
            out.append(tok)
    return out


def _normalize_chunk(chunk, lexicon):
    # first listed synonym acts as the round-trip normal form
    return [lexicon[tok][0] if tok in lexicon else tok for tok in chunk]


def _client_chunk(chunk, client):
    out = client.rewrite(" ".join(chunk)).split()
    out = [tok.lower() for tok in out if tok]
    return out if out else list(chunk)


def augment_positive(doc: InstructionDoc, cfg: AugmenterConfig,
                     method: str) -> InstructionDoc:
    """Positive view of an instruction, applied span by span so the
    sub-instruction count is preserved.

    A result identical to the input is flagged ORIGINAL_COPY so callers
    can drop it rather than contrast an instruction with itself.
    """
    if doc.provenance is not Provenance.ORIGINAL:
        raise ValueError("augmentation expects an original instruction")
    if method not in _METHOD_TAG:
        raise ConfigError(f"unknown augmentation method {method!r}")
    rng = np.random.default_rng(cfg.rng_seed)
    chunks = []
    for idx in range(doc.num_spans):
        chunk = list(doc.span_tokens(idx))
        if method == "synonym":
            chunk = _synonym_chunk(chunk, cfg.synonym_lexicon,
                                   cfg.replace_prob, rng)
        elif method == "contextual":
            if cfg.lm_client is not None:
                chunk = _client_chunk(chunk, cfg.lm_client)
            else:
                chunk = _synonym_chunk(chunk, cfg.synonym_lexicon,
                                       cfg.replace_prob, rng)
        else:
            if cfg.mt_client is not None:
                chunk = _client_chunk(chunk, cfg.mt_client)
            else:
                chunk = _normalize_chunk(chunk, cfg.synonym_lexicon)
        chunks.append(chunk)
    tag = _METHOD_TAG[method]
    out = _doc_from_chunks(chunks, tag)
    if out.tokens == doc.tokens:
        out = replace(out, provenance=Provenance.ORIGINAL_COPY)
    return out


def make_intra_negative(doc: InstructionDoc, seed: int) -> InstructionDoc:
    """Hard negative built from the instruction's own sub-instructions,
    either reordered or with one span repeated."""
    rng = np.random.default_rng(seed)
    chunks = [list(doc.span_tokens(i)) for i in range(doc.num_spans)]
    k = len(chunks)
    if k >= 2 and rng.random() < 0.5:
        perm = rng.permutation(k)
        for _ in range(10):
            if not np.array_equal(perm, np.arange(k)):
                break
            perm = rng.permutation(k)
        else:
            perm = np.arange(k)
            perm[0], perm[1] = 1, 0
        shuffled = [chunks[int(j)] for j in perm]
        out = _doc_from_chunks(shuffled, Provenance.SHUFFLED_NEGATIVE)
        if out.tokens != doc.tokens:
            return out
        # all spans identical; fall through to repetition, which at least
        # changes the length
    j = int(rng.integers(0, k))
    repeated = chunks[:j + 1] + [list(chunks[j])] + chunks[j + 1:]
    return _doc_from_chunks(repeated, Provenance.REPEATED_NEGATIVE)


@dataclass(frozen=True)
class SubInstructionSets:
    """Neighbor structure of one query span inside an instruction."""

    query_idx: int
    positives: frozenset
    intra_negatives: frozenset


def sub_instruction_sets(doc: InstructionDoc, query_idx: int) -> SubInstructionSets:
    """Immediate neighbors of the query span are positives; every other
    non-query span is an intra-negative."""
    k = doc.num_spans
    if not (0 <= query_idx < k):
        raise ValueError(f"query index {query_idx} out of range for {k} spans")
    positives = frozenset(
        i for i in (query_idx - 1, query_idx + 1) if 0 <= i < k)
    negatives = frozenset(range(k)) - positives - {query_idx}
    return SubInstructionSets(query_idx, positives, negatives)
