"""The reward channel: exact word error rates, oracle selection from true
WER, and noisy selection simulating user mistakes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def errors(self):
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self):
        return self.errors / self.reference_length

    def __add__(self, other):
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.reference_length + other.reference_length,
        )


@dataclass
class Selection:
    """Binary reward for a candidate pair: r=1 means candidate 1 selected."""

    r: int
    source: str  # "oracle" | "noisy" | "human"
    noise_p: float | None = None
    candidate_wers: tuple[WerBreakdown, WerBreakdown] | None = None

    def __post_init__(self):
        if self.r not in (0, 1):
            raise ValidationError(f"reward must be 0 or 1, got {self.r}")


def word_error_rate(hyp, ref) -> WerBreakdown:
    """Minimum-edit-distance WER with unit costs.

    When costs tie, the alignment prefers substitution over insertion over
    deletion, making the S/I/D breakdown deterministic.
    """
    hyp = tuple(hyp)
    ref = tuple(ref)
    if not ref:
        raise ValidationError("reference must be nonempty")

    n_h, n_r = len(hyp), len(ref)
    # cell = (cost, subs, ins, dels); ops resolved with the stated preference
    prev = [(j, 0, 0, j) for j in range(n_r + 1)]
    for i in range(1, n_h + 1):
        cur = [(i, 0, i, 0)]
        hi = hyp[i - 1]
        for j in range(1, n_r + 1):
            diag = prev[j - 1]
            if hi == ref[j - 1]:
                best = (diag[0], diag[1], diag[2], diag[3])
            else:
                best = (diag[0] + 1, diag[1] + 1, diag[2], diag[3])
            up = prev[j]  # consume hyp word: insertion
            cand = (up[0] + 1, up[1], up[2] + 1, up[3])
            if cand[0] < best[0]:
                best = cand
            left = cur[j - 1]  # consume ref word: deletion
            cand = (left[0] + 1, left[1], left[2], left[3] + 1)
            if cand[0] < best[0]:
                best = cand
            cur.append(best)
        prev = cur
    cost, subs, ins, dels = prev[n_r]
    assert cost == subs + ins + dels
    return WerBreakdown(subs, ins, dels, n_r)


def oracle_select(h1, h2, ref) -> Selection:
    """r=1 iff WER(h1) < WER(h2); exact ties select candidate 1."""
    w1 = word_error_rate(h1.words, ref)
    w2 = word_error_rate(h2.words, ref)
    r = 1 if w1.wer <= w2.wer else 0
    return Selection(r=r, source="oracle", candidate_wers=(w1, w2))


def noisy_select(sel: Selection, p: float, rng: np.random.Generator) -> Selection:
    """Flip the selection with probability p (simulated user error)."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"flip probability must be in [0, 1], got {p}")
    flip = rng.random() < p
    return Selection(
        r=1 - sel.r if flip else sel.r,
        source="noisy",
        noise_p=p,
        candidate_wers=sel.candidate_wers,
    )
