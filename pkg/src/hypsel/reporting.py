"""Analysis outputs: the selection-error sweep, paired campaign arms (RL vs
unsupervised adaptation vs rival ranks), and CSV/plot-data emission.

Emission never recomputes: every number written comes from a StageReport or
a sweep table, and files are byte-identical across re-runs on the same
inputs (full-precision floats, no timestamps).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .reinforce import RlConfig
from .trainer import StageConfig, make_selector_factory, run_campaign

log = logging.getLogger(__name__)

DEFAULT_ERROR_RATES = tuple(round(0.05 * i, 2) for i in range(11))  # 0.0 .. 0.5


@dataclass
class SweepSpec:
    error_rates: tuple[float, ...] = DEFAULT_ERROR_RATES
    trials: int = 50
    seed: int = 0

    def validate(self):
        if any(not 0.0 <= p <= 1.0 for p in self.error_rates):
            raise ConfigurationError("error_rates must lie in [0, 1]")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")


@dataclass
class SweepRow:
    p: float
    mean_selected_wer: float
    mean_candidate1_wer: float
    mean_candidate2_wer: float


@dataclass
class SweepTable:
    rows: list[SweepRow]
    crossing_p: float | None  # first p where selected WER exceeds candidate-1 WER


def selection_error_sweep(pair_wers, spec: SweepSpec) -> SweepTable:
    """Mean selected-hypothesis WER as a function of the selection error rate.

    pair_wers: per-pair (candidate1 WER, candidate2 WER).  For each rate p,
    the oracle choice (per-pair min, ties to candidate 1) is flipped
    independently with probability p, averaged over pairs and trials.
    """
    spec.validate()
    pairs = np.asarray(pair_wers, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[0] == 0 or pairs.shape[1] != 2:
        raise ValidationError("pair_wers must be a nonempty list of (wer1, wer2)")
    w1, w2 = pairs[:, 0], pairs[:, 1]
    chosen = np.where(w1 <= w2, w1, w2)
    other = np.where(w1 <= w2, w2, w1)
    mean_c1 = float(w1.mean())
    mean_c2 = float(w2.mean())

    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    rows = []
    crossing = None
    for p in spec.error_rates:
        if p == 0.0:
            mean_sel = float(chosen.mean())
        else:
            flips = rng.random((spec.trials, len(chosen))) < p
            sel = np.where(flips, other[None, :], chosen[None, :])
            mean_sel = float(sel.mean())
        rows.append(SweepRow(p, mean_sel, mean_c1, mean_c2))
        if crossing is None and mean_sel > mean_c1:
            crossing = p
    return SweepTable(rows=rows, crossing_p=crossing)


# ---------------------------------------------------------------------------
# Paired campaign arms
# ---------------------------------------------------------------------------


@dataclass
class ArmSpec:
    """One campaign configuration sharing the baseline with its siblings."""

    name: str
    mode: str = "reinforcement"
    alpha: float = 0.5
    selection_error: float = 0.0
    rival_rank: int = 10
    rival_strategy: str = "nth_best"


def run_arms(corpus, graph, baseline, stage_cfg: StageConfig, arms, *,
             seed: int = 0, include_initial_curve: bool = False):
    """Run each arm from the same baseline and seed; returns [(arm, result)]."""
    references = {}
    for batch in corpus.large_batches:
        for u in batch:
            references[u.id] = u.reference
    out = []
    for i, arm in enumerate(arms):
        cfg = replace(stage_cfg, mode=arm.mode)
        rl_cfg = RlConfig(
            alpha=arm.alpha,
            rival_strategy=arm.rival_strategy,
            rival_rank=arm.rival_rank,
        )
        factory = make_selector_factory(references, arm.selection_error, seed)
        result = run_campaign(
            corpus, graph, baseline, cfg, rl_cfg, factory,
            seed=seed, include_initial_curve=include_initial_curve and i == 0,
        )
        out.append((arm, result))
    return out


def rival_rank_comparison(corpus, graph, baseline, stage_cfg, *, ranks=(5, 10),
                          alpha: float = 0.5, selection_error: float = 0.15,
                          seed: int = 0):
    """Paired campaigns differing only in rival rank, plus the unsupervised arm.

    Returns (summary rows, [(arm, result)], rl_beats_unsup flags); one summary
    row per (arm, stage).  A rank whose final eval WER exceeds the
    unsupervised arm's is flagged False and logged.
    """
    arms = [
        ArmSpec(name=f"rl_n{n}", alpha=alpha, selection_error=selection_error,
                rival_rank=n)
        for n in ranks
    ]
    arms.append(ArmSpec(name="unsup", mode="unsupervised_adaptation"))
    results = run_arms(corpus, graph, baseline, stage_cfg, arms, seed=seed)
    rows = summary_rows(results)
    finals = {arm.name: result.final_eval_wer for arm, result in results}
    flags = {
        arm.name: finals[arm.name] <= finals["unsup"]
        for arm, _ in results
        if arm.name != "unsup"
    }
    for name, ok in flags.items():
        if not ok:
            log.warning(
                "rival comparison: %s final eval WER %.4f exceeds unsupervised %.4f",
                name, finals[name], finals["unsup"],
            )
    return rows, results, flags


# ---------------------------------------------------------------------------
# CSV / plot-data emission
# ---------------------------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def summary_rows(named_results):
    """(stage, arm, alpha, p, batch_wer, eval_wer, selected_wer) per report."""
    rows = []
    for arm, result in named_results:
        is_rl = arm.mode == "reinforcement"
        for report in result.reports:
            rows.append(
                {
                    "stage": report.stage,
                    "arm": arm.name,
                    "alpha": arm.alpha if is_rl else None,
                    "p": arm.selection_error if is_rl else None,
                    "batch_wer": report.batch_wer,
                    "eval_wer": report.eval_wer,
                    "selected_wer": report.selected_wer,
                }
            )
        if result.initial_batch_wers is not None:
            for k, wer in enumerate(result.initial_batch_wers):
                rows.append(
                    {
                        "stage": k,
                        "arm": "initial",
                        "alpha": None,
                        "p": None,
                        "batch_wer": wer,
                        "eval_wer": result.reports[0].eval_wer if k == 0 else None,
                        "selected_wer": None,
                    }
                )
    return rows


SUMMARY_COLUMNS = ("stage", "arm", "alpha", "p", "batch_wer", "eval_wer", "selected_wer")
PAIR_LOG_COLUMNS = ("utterance_id", "c1_wer", "c2_wer", "r", "source", "w1", "w2",
                    "drop_reason")


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c) if isinstance(row, dict) else getattr(row, c))
                         for c in columns])
    path.write_text(buf.getvalue())


def emit_report(named_results, out_dir) -> list[Path]:
    """Write summary, per-stage audit logs, and plot-data files; idempotent."""
    if not named_results:
        raise ValidationError("no campaign results to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    summary = out / "summary.csv"
    _write_csv(summary, SUMMARY_COLUMNS, summary_rows(named_results))
    written.append(summary)

    for arm, result in named_results:
        arm_dir = out / "reports" / arm.name
        arm_dir.mkdir(parents=True, exist_ok=True)
        for report in result.reports:
            if report.batch_wer is None and not report.pair_log:
                continue
            path = arm_dir / f"stage_{report.stage}.csv"
            _write_csv(path, PAIR_LOG_COLUMNS, report.pair_log)
            written.append(path)

    for metric in ("eval_wer", "batch_wer"):
        stages = sorted({r.stage for _, res in named_results for r in res.reports})
        cols = ["stage"] + [arm.name for arm, _ in named_results]
        rows = []
        for s in stages:
            row = {"stage": s}
            for arm, res in named_results:
                val = next((getattr(r, metric) for r in res.reports if r.stage == s), None)
                row[arm.name] = val
            rows.append(row)
        path = out / f"plotdata_{metric}.csv"
        _write_csv(path, cols, rows)
        written.append(path)
    return written


def emit_sweep(table: SweepTable, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    cols = ("p", "mean_selected_wer", "mean_candidate1_wer", "mean_candidate2_wer")
    _write_csv(path, cols, table.rows)
    crossing = out / "sweep_crossing.txt"
    crossing.write_text(f"crossing_p={_fmt(table.crossing_p)}\n")
    return path
