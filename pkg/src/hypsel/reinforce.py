"""Reinforcement-learning weights for hypothesis-selection feedback, rival
selection strategies, and a generic enumerable-policy gradient harness.

The two-candidate update weights come in two algebraically identical forms:
a conditional closed form used in production,

    (w1, w2) = (1, -alpha)  if r = 1,   (-alpha, 1)  if r = 0,

and the symmetric baseline expansion kept for verification,

    w1 = (1+alpha) * (r - alpha/(1+alpha)),
    w2 = (1+alpha) * ((-r) - (-1)/(1+alpha)).

The (1+alpha) factor is kept inside the weights rather than folded into the
learning rate, so a configured learning rate means the same thing for every
alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ValidationError
from .feedback import Selection
from .model import FrameGradientRequest


@dataclass
class RlConfig:
    alpha: float = 0.5
    rival_strategy: str = "nth_best"  # or "previous_stage"
    rival_rank: int = 10
    skip_identical_candidates: bool = True

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must be in [0, 1]")
        if self.rival_strategy not in ("nth_best", "previous_stage"):
            raise ConfigurationError(f"unknown rival_strategy {self.rival_strategy!r}")
        if self.rival_strategy == "nth_best" and self.rival_rank < 2:
            raise ConfigurationError("rival_rank must be >= 2")


@dataclass
class CandidatePair:
    candidate1: object  # decoder.Hypothesis, rank 1
    candidate2: object  # rival hypothesis
    utterance_id: str


def _check_args(r, alpha):
    if r not in (0, 1):
        raise ValidationError(f"reward must be 0 or 1, got {r}")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")


def selection_baseline(alpha: float) -> float:
    """The implicit reinforcement baseline b = alpha / (1 + alpha)."""
    return alpha / (1.0 + alpha)


def single_candidate_weight(r: int, alpha: float) -> float:
    """Weight for the selected-system-only update: 1 if selected, -alpha else."""
    _check_args(r, alpha)
    return 1.0 if r == 1 else -alpha


def single_candidate_weight_expanded(r: int, alpha: float) -> float:
    """Literal baseline form (1+alpha)(r - alpha/(1+alpha)); for verification."""
    _check_args(r, alpha)
    return (1.0 + alpha) * (r - alpha / (1.0 + alpha))


def candidate_weights(r: int, alpha: float) -> tuple[float, float]:
    """Closed-form symmetric weights for (candidate 1, candidate 2)."""
    _check_args(r, alpha)
    return (1.0, -alpha) if r == 1 else (-alpha, 1.0)


def candidate_weights_expanded(r: int, alpha: float) -> tuple[float, float]:
    """Literal two-feedback expansion; algebraically equal to candidate_weights."""
    _check_args(r, alpha)
    w1 = (1.0 + alpha) * (r - alpha / (1.0 + alpha))
    w2 = (1.0 + alpha) * ((-r) - (-1.0) / (1.0 + alpha))
    return (w1, w2)


class RequestBuild(NamedTuple):
    requests: list[FrameGradientRequest]
    drop_reason: str | None


def build_rl_requests(pair: CandidatePair, sel: Selection, cfg: RlConfig,
                      frames, aligner=None) -> RequestBuild:
    """Turn one selected candidate pair into weighted gradient requests.

    Zero-weight requests are omitted (alpha=0 leaves only the selected
    hypothesis).  Pairs with identical word sequences are dropped when the
    skip flag is set; alignment failures drop the pair with a reason.
    """
    cfg.validate()
    c1, c2 = pair.candidate1, pair.candidate2
    if cfg.skip_identical_candidates and c1.words == c2.words:
        return RequestBuild([], "identical_candidates")

    w1, w2 = candidate_weights(sel.r, cfg.alpha)
    requests = []
    for cand, w in ((c1, w1), (c2, w2)):
        if w == 0.0:
            continue
        alignment = cand.alignment
        if alignment is None:
            if aligner is None:
                return RequestBuild([], "alignment_missing")
            forced = aligner(cand.words)
            if forced is None:
                return RequestBuild([], "alignment_failed")
            alignment = forced.alignment
        requests.append(
            FrameGradientRequest(
                frames=frames,
                labels=np.asarray(alignment, dtype=np.int64),
                weight=w,
                utterance_id=pair.utterance_id,
            )
        )
    return RequestBuild(requests, None)


def select_rival(nbest, cfg: RlConfig, model_archive=None, *, utterance=None,
                 graph=None, rng=None):
    """Pick the rival (candidate 2) hypothesis.

    nth_best: the rank-n entry, falling back to the deepest available rank.
    previous_stage: 1-best decode under a uniformly sampled archived model.
    """
    cfg.validate()
    if not nbest:
        raise ValidationError("nbest must be nonempty")
    if cfg.rival_strategy == "nth_best":
        return nbest[min(cfg.rival_rank, len(nbest)) - 1]
    if not model_archive:
        raise ConfigurationError("previous_stage rival strategy needs a nonempty model archive")
    from .decoder import viterbi_decode  # local import to avoid a cycle

    idx = int(rng.integers(len(model_archive)))
    return viterbi_decode(model_archive[idx], graph, utterance)


# ---------------------------------------------------------------------------
# Enumerable softmax policy: test harness for the generic score-function
# gradient estimator.
# ---------------------------------------------------------------------------


@dataclass
class EnumerablePolicy:
    """Softmax policy over a finite action set with a reward table.

    Action logits are ``features @ params``; with identity features the
    parameters are the logits themselves.
    """

    params: np.ndarray  # (D,)
    rewards: np.ndarray  # (A,)
    features: np.ndarray | None = None  # (A, D); identity when None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.features is None:
            self.features = np.eye(len(self.rewards))
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (len(self.rewards), len(self.params)):
            raise ConfigurationError(
                f"features shape {self.features.shape} incompatible with "
                f"{len(self.rewards)} actions and {len(self.params)} params"
            )

    @property
    def num_actions(self):
        return len(self.rewards)

    def action_probs(self) -> np.ndarray:
        logits = self.features @ self.params
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()

    def grad_log_prob(self, action: int) -> np.ndarray:
        p = self.action_probs()
        return self.features[action] - p @ self.features


def exact_policy_gradient(policy: EnumerablePolicy) -> np.ndarray:
    """Enumerated gradient of the expected reward: sum_a P(a) r(a) grad log P(a)."""
    p = policy.action_probs()
    g = np.zeros_like(policy.params)
    for a in range(policy.num_actions):
        g += p[a] * policy.rewards[a] * policy.grad_log_prob(a)
    return g


def estimate_policy_gradient(policy: EnumerablePolicy, num_samples: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo score-function estimate averaged over sampled actions."""
    if num_samples < 1:
        raise ValidationError("num_samples must be >= 1")
    p = policy.action_probs()
    actions = rng.choice(policy.num_actions, size=num_samples, p=p)
    # r(a) * grad log P(a) for each sample, computed via per-action tallies
    counts = np.bincount(actions, minlength=policy.num_actions)
    g = np.zeros_like(policy.params)
    for a in range(policy.num_actions):
        if counts[a]:
            g += counts[a] * policy.rewards[a] * policy.grad_log_prob(a)
    return g / num_samples


def estimator_standard_errors(policy: EnumerablePolicy, num_samples: int) -> np.ndarray:
    """Exact per-coordinate standard error of the Monte Carlo mean estimator."""
    p = policy.action_probs()
    mean = exact_policy_gradient(policy)
    second = np.zeros_like(policy.params)
    for a in range(policy.num_actions):
        term = policy.rewards[a] * policy.grad_log_prob(a)
        second += p[a] * term * term
    var = np.maximum(second - mean * mean, 0.0)
    return np.sqrt(var / num_samples)
