"""Hybrid decoding: Viterbi best path, n-best distinct word sequences, and
forced alignment.

Path score = sum_t [log P(state_t | frame_t) - log prior(state_t)]
           + lm_weight * log P_LM(tokens) + word_insertion_penalty * |words|.
HMM topology constrains legal alignments (left-to-right chains with
self-loops); transition probabilities do not contribute to the score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .corpus import TrueTaskModel, Utterance
from .errors import ConfigurationError, DecodeError, ShapeError, ValidationError
from .model import AcousticModel, log_posteriors


@dataclass
class DecodeGraph:
    """Token chains plus the bigram LM, with decode-time weights."""

    chain_len: np.ndarray  # (num_tokens,) int32
    state_offset: np.ndarray  # (num_tokens,) int32
    token_is_word: np.ndarray  # (num_tokens,) bool
    lm_init: np.ndarray  # probabilities
    lm_bigram: np.ndarray  # row-stochastic
    lm_weight: float = 1.0
    word_insertion_penalty: float = 0.0

    def __post_init__(self):
        if self.lm_weight < 0:
            raise ConfigurationError("lm_weight must be >= 0")
        if np.any(self.chain_len < 1):
            raise ConfigurationError("every token needs a state chain")
        word_rows = self.lm_bigram[self.token_is_word]
        if not np.allclose(word_rows.sum(axis=1), 1.0, atol=1e-6):
            raise ConfigurationError("LM bigram rows must be distributions")
        if not np.isclose(self.lm_init.sum(), 1.0, atol=1e-6):
            raise ConfigurationError("LM initial row must be a distribution")
        pen = np.where(self.token_is_word, self.word_insertion_penalty, 0.0)
        with np.errstate(divide="ignore"):
            self._entry0 = self.lm_weight * np.log(self.lm_init) + pen
            self._entry = self.lm_weight * np.log(self.lm_bigram) + pen[None, :]
        self._entry0 = np.ascontiguousarray(self._entry0, dtype=np.float64)
        self._entry = np.ascontiguousarray(self._entry, dtype=np.float64)
        self._token_lookup = np.repeat(
            np.arange(self.num_tokens, dtype=np.int32), self.chain_len
        )
        self._word_mask = np.ascontiguousarray(self.token_is_word, dtype=np.uint8)

    @classmethod
    def from_task(cls, task: TrueTaskModel, lm_weight: float = 1.0,
                  word_insertion_penalty: float = 0.0) -> "DecodeGraph":
        is_word = np.ones(task.num_tokens, dtype=bool)
        if task.has_silence:
            is_word[task.silence_token] = False
        return cls(
            chain_len=task.chain_lengths(),
            state_offset=task.state_offsets(),
            token_is_word=is_word,
            lm_init=task.lm_init.copy(),
            lm_bigram=task.lm_bigram.copy(),
            lm_weight=lm_weight,
            word_insertion_penalty=word_insertion_penalty,
        )

    @property
    def num_tokens(self):
        return len(self.chain_len)

    @property
    def num_states(self):
        return int(self.chain_len.sum())

    def token_of_state(self, state):
        return int(self._token_lookup[state])

    def final_state(self, token):
        return int(self.state_offset[token] + self.chain_len[token] - 1)


@dataclass
class Hypothesis:
    """A decoded word sequence with its frame alignment and score."""

    words: tuple[int, ...]
    alignment: np.ndarray  # (T,) int32 state ids
    score: float
    rank: int
    tokens: tuple[int, ...] = ()  # token sequence including silence


class ForcedAlignment(NamedTuple):
    alignment: np.ndarray
    score: float


def acoustic_scores(model: AcousticModel, graph: DecodeGraph, frames) -> np.ndarray:
    """Scaled-likelihood matrix: log posterior minus log prior, (T, S)."""
    if model.num_states != graph.num_states:
        raise ShapeError(
            f"model has {model.num_states} states but graph has {graph.num_states}"
        )
    logp = log_posteriors(model, frames)
    return logp - np.log(model.state_priors)[None, :]


def _paths_to_hypotheses(graph, scores, aligns, flags):
    hyps = []
    word_mask = graph.token_is_word
    for i in range(len(scores)):
        boundary = np.nonzero(flags[i])[0]
        toks = graph._token_lookup[aligns[i, boundary]]
        tokens = tuple(int(t) for t in toks)
        words = tuple(int(t) for t in toks[word_mask[toks]])
        hyps.append(
            Hypothesis(
                words=words,
                alignment=aligns[i].copy(),
                score=float(scores[i]),
                rank=0,
                tokens=tokens,
            )
        )
    return hyps


def _run_kernel(model, graph, utterance, k):
    frames = utterance.frames if isinstance(utterance, Utterance) else utterance
    if len(frames) == 0:
        raise ValidationError("utterance has no frames")
    am = np.ascontiguousarray(acoustic_scores(model, graph, frames), dtype=np.float64)
    return _kernels.kbest_viterbi(
        am,
        np.ascontiguousarray(graph.chain_len, dtype=np.int32),
        np.ascontiguousarray(graph.state_offset, dtype=np.int32),
        graph._entry0,
        graph._entry,
        int(k),
        graph._word_mask,
    )


def viterbi_decode(model: AcousticModel, graph: DecodeGraph, utterance) -> Hypothesis:
    """Best word sequence and alignment; ties broken by lowest state-id path."""
    scores, aligns, flags = _run_kernel(model, graph, utterance, 1)
    if len(scores) == 0:
        uid = getattr(utterance, "id", "<frames>")
        raise DecodeError(f"no complete decoding path for utterance {uid}")
    hyp = _paths_to_hypotheses(graph, scores, aligns, flags)[0]
    hyp.rank = 1
    return hyp


def nbest_decode(model: AcousticModel, graph: DecodeGraph, utterance, n: int) -> list[Hypothesis]:
    """Top-n distinct word sequences, best first.

    The kernel deduplicates by word sequence inside the trellis, so one pass
    with k=n is exact; when fewer than n distinct sequences exist, all found
    are returned.  Rank 1 equals the viterbi_decode result.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    scores, aligns, flags = _run_kernel(model, graph, utterance, n)
    if len(scores) == 0:
        uid = getattr(utterance, "id", "<frames>")
        raise DecodeError(f"no complete decoding path for utterance {uid}")
    hyps = []
    seen = set()
    for hyp in _paths_to_hypotheses(graph, scores, aligns, flags):
        if hyp.words in seen:  # hash-collision safety net
            continue
        seen.add(hyp.words)
        hyp.rank = len(hyps) + 1
        hyps.append(hyp)
    return hyps


def force_align(model: AcousticModel, graph: DecodeGraph, utterance,
                words) -> ForcedAlignment | None:
    """Viterbi-optimal frame-to-state alignment of exactly ``words``.

    When the graph has a silence token, a single optional silence is allowed
    between adjacent words and its LM cost is included, so the returned score
    matches ``viterbi_decode`` scores for the same word sequence.  Returns
    None when the utterance is too short to traverse the chain.
    """
    words = tuple(int(w) for w in words)
    if not words:
        raise ValidationError("words must be nonempty")
    word_ids = np.nonzero(graph.token_is_word)[0]
    for w in words:
        if w not in word_ids:
            raise ValidationError(f"word {w} is not in the vocabulary")

    sil = None
    non_word = np.nonzero(~graph.token_is_word)[0]
    if len(non_word):
        sil = int(non_word[0])

    # Linear position graph: word chains in order, with an optional silence
    # position between adjacent words.  cost_adv[p] = edge (p-1 -> p),
    # cost_skip[p] = edge (p-2 -> p) bypassing a silence position.
    states, cost_adv, cost_skip = [], [], []
    for i, w in enumerate(words):
        off = int(graph.state_offset[w])
        for j in range(int(graph.chain_len[w])):
            states.append(off + j)
            if j > 0:
                cost_adv.append(0.0)
                cost_skip.append(-np.inf)
            elif i == 0:
                cost_adv.append(-np.inf)
                cost_skip.append(-np.inf)
            else:
                prev_w = words[i - 1]
                if sil is not None:
                    cost_adv.append(float(graph._entry[sil, w]))
                    cost_skip.append(float(graph._entry[prev_w, w]))
                else:
                    cost_adv.append(float(graph._entry[prev_w, w]))
                    cost_skip.append(-np.inf)
        if sil is not None and i + 1 < len(words):
            states.append(graph.final_state(sil))
            cost_adv.append(float(graph._entry[w, sil]))
            cost_skip.append(-np.inf)

    frames = utterance.frames if isinstance(utterance, Utterance) else utterance
    if len(frames) == 0:
        raise ValidationError("utterance has no frames")
    am = acoustic_scores(model, graph, frames)
    t_len = am.shape[0]
    n_pos = len(states)
    state_arr = np.asarray(states, dtype=np.int32)
    cost_adv = np.asarray(cost_adv)
    cost_skip = np.asarray(cost_skip)
    am_pos = am[:, state_arr]  # (T, P)

    neg = -np.inf
    dp = np.full(n_pos, neg)
    dp[0] = graph._entry0[words[0]] + am_pos[0, 0]
    back = np.zeros((t_len, n_pos), dtype=np.int8)  # 0=self, 1=advance, 2=skip

    for t in range(1, t_len):
        shifted1 = np.full(n_pos, neg)
        shifted1[1:] = dp[:-1]
        shifted1 += cost_adv
        shifted2 = np.full(n_pos, neg)
        shifted2[2:] = dp[:-2]
        shifted2 += cost_skip
        # tie preference: earliest predecessor position (skip, advance, self)
        best = shifted2
        choice = np.full(n_pos, 2, dtype=np.int8)
        adv_better = shifted1 > best
        best = np.where(adv_better, shifted1, best)
        choice[adv_better] = 1
        self_better = dp > best
        best = np.where(self_better, dp, best)
        choice[self_better] = 0
        dp = best + am_pos[t]
        back[t] = choice

    # must end on the last word's final state (no trailing silence)
    score = float(dp[n_pos - 1])
    if not np.isfinite(score):
        return None
    alignment = np.zeros(t_len, dtype=np.int32)
    p = n_pos - 1
    for t in range(t_len - 1, -1, -1):
        alignment[t] = state_arr[p]
        if t > 0:
            p -= int(back[t, p])
    return ForcedAlignment(alignment=alignment, score=score)


def run_length_encode(alignment) -> str:
    """Compact `state:count` encoding used by the decode CLI output."""
    parts = []
    ali = np.asarray(alignment)
    start = 0
    for i in range(1, len(ali) + 1):
        if i == len(ali) or ali[i] != ali[start]:
            parts.append(f"{int(ali[start])}:{i - start}")
            start = i
    return ",".join(parts)
