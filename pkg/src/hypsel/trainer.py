"""Supervised bootstrap training and the staged large-batch campaign.

Stage k decodes unlabeled large batch #k+1 with the current model, collects
binary selections on (1-best, rival) candidate pairs, and performs one
large-batch update to produce the next model.  The learning rate starts at
the stage's configured value and is halved whenever the relative
cross-validation cross-entropy improvement in an epoch falls below the
threshold; epochs stop at the per-stage cap.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .corpus import CorpusSplit, Utterance
from .decoder import DecodeGraph, force_align, nbest_decode, viterbi_decode
from .errors import ConfigurationError, TrainingError, ValidationError
from .feedback import WerBreakdown, noisy_select, oracle_select, word_error_rate
from .model import (
    AcousticModel,
    ArchConfig,
    FrameGradientRequest,
    estimate_priors,
    init_model,
    log_posteriors,
    sgd_step,
    weighted_ce_gradient,
)
from .reinforce import (
    CandidatePair,
    RlConfig,
    build_rl_requests,
    candidate_weights,
    select_rival,
)

log = logging.getLogger(__name__)


@dataclass
class BaselineConfig:
    learning_rate: float = 0.5
    max_iterations_per_epoch: int = 30  # epoch cap per alignment round
    cv_fraction: float = 0.10
    halving_threshold: float = 0.01
    minibatch_requests: int = 8
    clip_norm: float = 5.0
    align_rounds: int = 2
    # From-scratch training needs gradient magnitudes that do not scale with
    # utterance length, otherwise clipping caps every step; stage updates
    # keep the unnormalized per-frame sums.
    per_frame_normalization: bool = True

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if not 0.0 < self.cv_fraction < 1.0:
            raise ConfigurationError("cv_fraction must be in (0, 1)")
        if self.align_rounds < 1:
            raise ConfigurationError("align_rounds must be >= 1")


@dataclass
class StageConfig:
    stage_learning_rates: tuple[float, ...] = (0.004, 0.002, 0.001, 0.0005)
    max_iterations_per_epoch: int = 7
    cv_fraction: float = 0.10
    halving_threshold: float = 0.01
    labeled_mix: bool = True
    labeled_mix_weight: float = 1.0
    mode: str = "reinforcement"  # | "unsupervised_adaptation"
    minibatch_requests: int = 16
    clip_norm: float = 5.0
    per_frame_normalization: bool = False

    def validate(self):
        if not self.stage_learning_rates or any(r <= 0 for r in self.stage_learning_rates):
            raise ConfigurationError("stage_learning_rates must all be > 0")
        if not 0.0 < self.cv_fraction < 1.0:
            raise ConfigurationError("cv_fraction must be in (0, 1)")
        if self.mode not in ("reinforcement", "unsupervised_adaptation"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")


@dataclass
class PairRecord:
    """Audit row for one candidate pair decision."""

    utterance_id: str
    c1_wer: float
    c2_wer: float
    r: int | None
    source: str
    w1: float
    w2: float
    drop_reason: str | None


@dataclass
class StageReport:
    stage: int
    eval_wer: float | None
    batch_wer: float | None
    selected_wer: float | None
    candidate1_wer: float | None = None
    candidate2_wer: float | None = None
    dropped_pairs: dict = field(default_factory=dict)
    lr_trajectory: list = field(default_factory=list)
    cv_ce_trajectory: list = field(default_factory=list)
    pair_log: list = field(default_factory=list)
    wall_time_s: float = 0.0


class ScheduleDecision(NamedTuple):
    lr: float
    stop: bool


def lr_schedule_step(current_lr: float, cv_improvement: float, iteration: int,
                     cfg) -> ScheduleDecision:
    """Halve the rate when relative CV CE improvement falls below threshold;
    stop at the epoch cap."""
    if current_lr <= 0:
        raise ConfigurationError("current_lr must be > 0")
    lr = current_lr / 2.0 if cv_improvement < cfg.halving_threshold else current_lr
    return ScheduleDecision(lr, iteration >= cfg.max_iterations_per_epoch)


def split_cv(labeled, cv_fraction):
    """Deterministic held-out split: every round(1/cv_fraction)-th utterance."""
    stride = max(2, round(1.0 / cv_fraction))
    cv = [u for i, u in enumerate(labeled) if i % stride == 0]
    train = [u for i, u in enumerate(labeled) if i % stride != 0]
    if not cv or not train:
        raise ValidationError("labeled set too small for the CV split")
    return train, cv


def uniform_segmentation(utterance: Utterance, graph: DecodeGraph) -> np.ndarray:
    """Even frame-to-state bootstrap alignment of the reference chain."""
    chain = []
    for w in utterance.reference:
        off = int(graph.state_offset[w])
        chain.extend(range(off, off + int(graph.chain_len[w])))
    t_len = len(utterance.frames)
    n_pos = len(chain)
    if t_len < n_pos:
        raise ValidationError(
            f"utterance {utterance.id} shorter than its reference chain"
        )
    idx = (np.arange(t_len) * n_pos) // t_len
    return np.asarray(chain, dtype=np.int32)[idx]


def _cv_cross_entropy(model, cv_data):
    total = 0.0
    count = 0
    for frames, labels in cv_data:
        logp = log_posteriors(model, frames)
        total -= float(logp[np.arange(len(labels)), labels].sum())
        count += len(labels)
    return total / count


def _train_epochs(model, requests, cv_data, lr0, cfg, rng, *, keep_best,
                  divergence_error=False, normalize_per_frame=False):
    """Minibatch-SGD epochs under the halving schedule; returns the model plus
    (lr, cv-ce) trajectories."""
    ce0 = _cv_cross_entropy(model, cv_data)
    lr_traj, ce_traj = [], [ce0]
    if not requests:
        return model, lr_traj, ce_traj
    best_ce, best_model = ce0, model
    prev_ce = ce0
    lr = lr0
    iteration = 0
    mb = max(1, cfg.minibatch_requests)
    while True:
        iteration += 1
        order = rng.permutation(len(requests))
        for start in range(0, len(order), mb):
            chunk = [requests[i] for i in order[start : start + mb]]
            grad = weighted_ce_gradient(model, chunk, normalize_per_frame)
            model = sgd_step(model, grad, lr, cfg.clip_norm)
        ce = _cv_cross_entropy(model, cv_data)
        improvement = (prev_ce - ce) / abs(prev_ce)
        lr_traj.append(lr)
        ce_traj.append(ce)
        if keep_best and ce < best_ce:
            best_ce, best_model = ce, model
        lr, stop = lr_schedule_step(lr, improvement, iteration, cfg)
        prev_ce = ce
        if stop:
            break
    if divergence_error and all(b > a for a, b in zip(ce_traj, ce_traj[1:])):
        raise TrainingError(
            f"training diverged: CV cross-entropy worsened every epoch from {ce0:.6f} "
            f"(trajectory {['%.6f' % c for c in ce_traj]})"
        )
    return (best_model if keep_best else model), lr_traj, ce_traj


def _align_labeled(model, graph, utts, fallback=None):
    """Force-align references; on failure fall back to the previous alignment."""
    alignments = {}
    for u in utts:
        forced = force_align(model, graph, u, u.reference)
        if forced is not None:
            alignments[u.id] = forced.alignment
        elif fallback and u.id in fallback:
            alignments[u.id] = fallback[u.id]
        else:
            raise TrainingError(f"cannot align labeled utterance {u.id}")
    return alignments


def train_baseline(labeled, arch: ArchConfig, cfg: BaselineConfig, seed: int,
                   graph: DecodeGraph) -> AcousticModel:
    """Cross-entropy bootstrap on the labeled set.

    Round 0 trains on an even frame-to-state segmentation of the reference
    chains; later rounds re-align with the improving model.  Returns the
    best-CV-cross-entropy model of the final round, with state priors
    estimated from the final forced alignments.
    """
    cfg.validate()
    if not labeled:
        raise ValidationError("labeled set is empty")
    train, cv = split_cv(labeled, cfg.cv_fraction)
    model = init_model(arch, seed)

    alignments = {u.id: uniform_segmentation(u, graph) for u in labeled}
    for rnd in range(cfg.align_rounds):
        if rnd > 0:
            alignments = _align_labeled(model, graph, labeled, fallback=alignments)
        requests = [
            FrameGradientRequest(u.frames, alignments[u.id].astype(np.int64), 1.0, u.id)
            for u in train
        ]
        cv_data = [(u.frames, alignments[u.id].astype(np.int64)) for u in cv]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 101, rnd]))
        model, lr_traj, ce_traj = _train_epochs(
            model, requests, cv_data, cfg.learning_rate, cfg, rng,
            keep_best=True, divergence_error=True,
            normalize_per_frame=cfg.per_frame_normalization,
        )
        log.info("baseline round %d: cv ce %s", rnd, ["%.4f" % c for c in ce_traj])

    alignments = _align_labeled(model, graph, labeled, fallback=alignments)
    priors = estimate_priors(alignments.values(), arch.num_states, arch.prior_floor)
    return AcousticModel(
        arch=model.arch, weights=model.weights, biases=model.biases, state_priors=priors
    )


def evaluate_model(model, eval_set, graph) -> WerBreakdown:
    """1-best decode of every utterance, error counts aggregated over total
    reference words."""
    if not eval_set:
        raise ValidationError("eval set is empty")
    total = WerBreakdown(0, 0, 0, 0)
    for u in eval_set:
        hyp = viterbi_decode(model, graph, u)
        total = total + word_error_rate(hyp.words, u.reference)
    return total


class OracleSelector:
    """Selects by true per-utterance WER; ties prefer candidate 1."""

    def __init__(self, references: dict):
        self.references = references

    def collect(self, pairs):
        return [
            oracle_select(p.candidate1, p.candidate2, self.references[p.utterance_id])
            for p in pairs
        ]


class NoisySelector:
    """Wraps another selector and flips each selection with probability p."""

    def __init__(self, inner, p: float, rng: np.random.Generator):
        self.inner = inner
        self.p = p
        self.rng = rng

    def collect(self, pairs):
        return [noisy_select(s, self.p, self.rng) for s in self.inner.collect(pairs)]


def make_selector_factory(references, p: float, seed: int) -> Callable:
    """Per-stage selector factory: oracle when p=0, noisy oracle otherwise."""

    def factory(stage_index: int):
        oracle = OracleSelector(references)
        if p == 0.0:
            return oracle
        rng = np.random.default_rng(np.random.SeedSequence([seed, 202, stage_index]))
        return NoisySelector(oracle, p, rng)

    return factory


def run_stage(model: AcousticModel, batch, labeled, cfg: StageConfig,
              rl_cfg: RlConfig, selector, graph: DecodeGraph, *,
              stage_index: int, eval_set=None, archive=None,
              seed: int = 0) -> tuple[AcousticModel, StageReport]:
    """One large-batch update: decode, select, build weighted requests, train.

    The report's batch/eval WERs are those of the *input* model (the model
    that decoded this batch); the returned model is the updated one.
    """
    cfg.validate()
    rl_cfg.validate()
    if stage_index >= len(cfg.stage_learning_rates):
        raise ConfigurationError(
            f"stage index {stage_index} outside configured learning rates"
        )
    t_start = time.perf_counter()

    eval_wer = evaluate_model(model, eval_set, graph).wer if eval_set else None

    batch_total = WerBreakdown(0, 0, 0, 0)
    requests = []
    pair_log = []
    dropped = {}
    sel_total = WerBreakdown(0, 0, 0, 0)
    c1_total = WerBreakdown(0, 0, 0, 0)
    c2_total = WerBreakdown(0, 0, 0, 0)
    selected_wer = None
    c1_wer = None
    c2_wer = None

    if cfg.mode == "reinforcement":
        rng_archive = np.random.default_rng(
            np.random.SeedSequence([seed, 303, stage_index])
        )
        n = rl_cfg.rival_rank if rl_cfg.rival_strategy == "nth_best" else 1
        pairs = []
        utt_by_id = {}
        for u in batch:
            nb = nbest_decode(model, graph, u, n)
            rival = select_rival(
                nb, rl_cfg, archive, utterance=u, graph=graph, rng=rng_archive
            )
            pairs.append(CandidatePair(nb[0], rival, u.id))
            utt_by_id[u.id] = u
            batch_total = batch_total + word_error_rate(nb[0].words, u.reference)
        selections = selector.collect(pairs)
        for pair, sel in zip(pairs, selections):
            u = utt_by_id[pair.utterance_id]
            wb1 = word_error_rate(pair.candidate1.words, u.reference)
            wb2 = word_error_rate(pair.candidate2.words, u.reference)
            built = build_rl_requests(pair, sel, rl_cfg, u.frames)
            if built.drop_reason is not None:
                dropped[built.drop_reason] = dropped.get(built.drop_reason, 0) + 1
                pair_log.append(PairRecord(u.id, wb1.wer, wb2.wer, sel.r, sel.source,
                                           0.0, 0.0, built.drop_reason))
                continue
            requests.extend(built.requests)
            w1, w2 = candidate_weights(sel.r, rl_cfg.alpha)
            pair_log.append(PairRecord(u.id, wb1.wer, wb2.wer, sel.r, sel.source,
                                       w1, w2, None))
            sel_total = sel_total + (wb1 if sel.r == 1 else wb2)
            c1_total = c1_total + wb1
            c2_total = c2_total + wb2
        if c1_total.reference_length:
            selected_wer = sel_total.wer
            c1_wer = c1_total.wer
            c2_wer = c2_total.wer
    else:
        for u in batch:
            hyp = viterbi_decode(model, graph, u)
            batch_total = batch_total + word_error_rate(hyp.words, u.reference)
            requests.append(
                FrameGradientRequest(u.frames, hyp.alignment.astype(np.int64), 1.0, u.id)
            )

    train, cv = split_cv(labeled, cfg.cv_fraction)
    if cfg.labeled_mix:
        alignments = _align_labeled(model, graph, train)
        requests.extend(
            FrameGradientRequest(
                u.frames, alignments[u.id].astype(np.int64), cfg.labeled_mix_weight, u.id
            )
            for u in train
        )
    cv_alignments = _align_labeled(model, graph, cv)
    cv_data = [(u.frames, cv_alignments[u.id].astype(np.int64)) for u in cv]

    rng = np.random.default_rng(np.random.SeedSequence([seed, 404, stage_index]))
    lr0 = cfg.stage_learning_rates[stage_index]
    new_model, lr_traj, ce_traj = _train_epochs(
        model, requests, cv_data, lr0, cfg, rng,
        keep_best=False, normalize_per_frame=cfg.per_frame_normalization,
    )

    report = StageReport(
        stage=stage_index,
        eval_wer=eval_wer,
        batch_wer=batch_total.wer if batch_total.reference_length else None,
        selected_wer=selected_wer,
        candidate1_wer=c1_wer,
        candidate2_wer=c2_wer,
        dropped_pairs=dropped,
        lr_trajectory=lr_traj,
        cv_ce_trajectory=ce_traj,
        pair_log=pair_log,
        wall_time_s=time.perf_counter() - t_start,
    )
    return new_model, report


@dataclass
class CampaignResult:
    reports: list
    models: list  # RL0 .. RLK in stage order
    initial_batch_wers: list | None = None

    @property
    def final_eval_wer(self):
        return self.reports[-1].eval_wer


def run_campaign(corpus: CorpusSplit, graph: DecodeGraph, baseline: AcousticModel,
                 cfg: StageConfig, rl_cfg: RlConfig, selector_factory, *,
                 seed: int = 0, include_initial_curve: bool = False) -> CampaignResult:
    """Run all stages sequentially, archiving each stage's model.

    Report k carries the WERs of model RLk (its eval WER plus its 1-best WER
    on large batch #k+1); a terminal report carries the final model's eval
    WER.  The whole campaign is a pure function of (corpus, configs, seed).
    """
    model = baseline
    archive = [baseline]
    reports = []
    for k, batch in enumerate(corpus.large_batches):
        selector = selector_factory(k)
        model, report = run_stage(
            model, batch, corpus.labeled, cfg, rl_cfg, selector, graph,
            stage_index=k, eval_set=corpus.eval_set, archive=list(archive),
            seed=seed,
        )
        archive.append(model)
        reports.append(report)
        log.info(
            "stage %d: batch wer %.4f eval wer %.4f selected %s",
            k, report.batch_wer, report.eval_wer,
            "%.4f" % report.selected_wer if report.selected_wer is not None else "n/a",
        )
    reports.append(
        StageReport(
            stage=len(corpus.large_batches),
            eval_wer=evaluate_model(model, corpus.eval_set, graph).wer,
            batch_wer=None,
            selected_wer=None,
        )
    )

    initial = None
    if include_initial_curve:
        initial = [
            sum(
                (word_error_rate(viterbi_decode(baseline, graph, u).words, u.reference)
                 for u in batch),
                WerBreakdown(0, 0, 0, 0),
            ).wer
            for batch in corpus.large_batches
        ]
    return CampaignResult(reports=reports, models=archive, initial_batch_wers=initial)
