"""Command-line driver: corpus generation, baseline training, campaigns,
sweeps, rival comparisons, and the interactive selection service.

Every subcommand accepts --seed and --out.  Exit code is 0 on success; on
failure a single machine-readable JSON line is written to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .corpus import GenerationConfig, generate_corpus, load_corpus, load_generation_config, load_task, save_corpus
from .decoder import DecodeGraph, nbest_decode, run_length_encode
from .errors import ConfigurationError, HypselError
from .feedback import WerBreakdown, word_error_rate
from .model import ArchConfig, load_model, save_model
from .reinforce import RlConfig
from .reporting import (
    ArmSpec,
    SweepSpec,
    emit_report,
    emit_sweep,
    rival_rank_comparison,
    run_arms,
    selection_error_sweep,
)
from .trainer import BaselineConfig, StageConfig, train_baseline

log = logging.getLogger("hypsel")


# ---------------------------------------------------------------------------
# Experiment config file
# ---------------------------------------------------------------------------


@dataclass
class DecodeConfig:
    lm_weight: float = 1.0
    word_insertion_penalty: float = 0.0


@dataclass
class SelectorConfig:
    type: str = "oracle"  # oracle | noisy | human
    p: float = 0.0

    def validate(self):
        if self.type not in ("oracle", "noisy", "human"):
            raise ConfigurationError(f"unknown selector type {self.type!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError("selector p must be in [0, 1]")


@dataclass
class ExperimentConfig:
    seed: int = 0
    corpus: GenerationConfig = field(default_factory=GenerationConfig)
    arch_hidden_sizes: tuple[int, ...] = (128, 128)
    arch_splice: int = 5
    arch_prior_floor: float = 1e-8
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    stage: StageConfig = field(default_factory=StageConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def arch_for(self, task) -> ArchConfig:
        return ArchConfig(
            feature_dim=task.feature_dim,
            num_states=task.num_states,
            hidden_sizes=tuple(self.arch_hidden_sizes),
            splice=self.arch_splice,
            prior_floor=self.arch_prior_floor,
        )

    def graph_for(self, task) -> DecodeGraph:
        return DecodeGraph.from_task(
            task,
            lm_weight=self.decode.lm_weight,
            word_insertion_penalty=self.decode.word_insertion_penalty,
        )


def _build_section(cls, data, section):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in config section {section!r}"
        )
    obj = cls(**data)
    tuple_fields = {"utterance_length_range", "stage_learning_rates", "hidden_sizes"}
    for name in tuple_fields & set(data):
        setattr(obj, name, tuple(data[name]))
    return obj


def load_experiment_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig()
    sections = {
        "corpus": (GenerationConfig, "corpus"),
        "baseline": (BaselineConfig, "baseline"),
        "stage": (StageConfig, "stage"),
        "rl": (RlConfig, "rl"),
        "selector": (SelectorConfig, "selector"),
        "decode": (DecodeConfig, "decode"),
    }
    for key, value in raw.items():
        if key == "seed":
            cfg.seed = int(value)
        elif key == "arch":
            known = {"hidden_sizes", "splice", "prior_floor"}
            unknown = set(value) - known
            if unknown:
                raise ConfigurationError(f"unknown key(s) {sorted(unknown)} in config section 'arch'")
            cfg.arch_hidden_sizes = tuple(value.get("hidden_sizes", cfg.arch_hidden_sizes))
            cfg.arch_splice = value.get("splice", cfg.arch_splice)
            cfg.arch_prior_floor = value.get("prior_floor", cfg.arch_prior_floor)
        elif key in sections:
            cls, name = sections[key]
            setattr(cfg, name, _build_section(cls, value, key))
        else:
            raise ConfigurationError(f"unknown top-level config key {key!r}")
    cfg.corpus.validate()
    cfg.stage.validate()
    cfg.rl.validate()
    cfg.selector.validate()
    return cfg


def _load_config_arg(args) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.corpus.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def cmd_corpus_generate(args):
    cfg = _load_config_arg(args)
    if args.seed is None:
        cfg.corpus.seed = cfg.corpus.seed or cfg.seed
    out = Path(args.out or "corpus_out")
    split, task = generate_corpus(cfg.corpus)
    save_corpus(split, out, task=task, config=cfg.corpus)
    n_utts = len(split.labeled) + sum(len(b) for b in split.large_batches) + len(split.eval_set)
    print(f"wrote {out / corpus_mod.CORPUS_FILENAME}: {n_utts} utterances, "
          f"{task.num_states} states, seed {cfg.corpus.seed}")
    return 0


def cmd_corpus_inspect(args):
    split = load_corpus(args.path)
    cfg = load_generation_config(args.path)
    frames = sum(len(u.frames) for u in split.all_utterances())
    print(f"labeled: {len(split.labeled)} utterances")
    for i, batch in enumerate(split.large_batches):
        print(f"batch:{i + 1}: {len(batch)} utterances")
    print(f"eval: {len(split.eval_set)} utterances")
    print(f"total frames: {frames}")
    if cfg is not None:
        print(f"config: vocab={cfg.vocab_size} states/word={cfg.states_per_word} "
              f"dim={cfg.feature_dim} sigma={cfg.emission_noise_sigma} "
              f"shift={cfg.batch_shift_magnitude} seed={cfg.seed}")
    return 0


def cmd_model_inspect(args):
    model = load_model(args.path)
    arch = model.arch
    print(f"arch: input={arch.input_dim} hidden={list(arch.hidden_sizes)} "
          f"states={arch.num_states} splice=+/-{arch.splice}")
    print(f"parameters: {model.param_count()}")
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        print(f"layer {i}: W{w.shape} |W|={np.linalg.norm(w):.4f} |b|={np.linalg.norm(b):.4f}")
    print(f"priors: min={model.state_priors.min():.3e} max={model.state_priors.max():.3e} "
          f"sum={model.state_priors.sum():.9f}")
    return 0


def cmd_train_baseline(args):
    cfg = _load_config_arg(args)
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    model = train_baseline(split.labeled, cfg.arch_for(task), cfg.baseline, cfg.seed, graph)
    out = Path(args.out or "baseline_out")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "baseline.bin"
    save_model(model, path)
    print(f"wrote {path}")
    return 0


def _subset(split, name):
    if name == "labeled":
        return split.labeled
    if name == "eval":
        return split.eval_set
    if name.startswith("batch:"):
        idx = int(name.split(":", 1)[1]) - 1
        if not 0 <= idx < len(split.large_batches):
            raise ConfigurationError(f"no batch {name!r} in this corpus")
        return split.large_batches[idx]
    raise ConfigurationError(f"unknown subset {name!r}")


def cmd_decode(args):
    cfg = _load_config_arg(args)
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    model = load_model(args.model)
    utts = _subset(split, args.subset)
    lines = []
    for u in utts:
        for hyp in nbest_decode(model, graph, u, args.n):
            words = ",".join(str(w) for w in hyp.words)
            lines.append(
                f"{u.id} {hyp.rank} {hyp.score!r} {words} {run_length_encode(hyp.alignment)}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}: {len(lines)} hypotheses")
    else:
        sys.stdout.write(text)
    return 0


def _read_transcripts(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts:
            out[parts[0]] = tuple(parts[1:])
    return out


def cmd_wer(args):
    refs = _read_transcripts(args.ref)
    hyps = _read_transcripts(args.hyp)
    rows = ["utterance_id,substitutions,insertions,deletions,reference_length,wer"]
    total = WerBreakdown(0, 0, 0, 0)
    for uid, ref in refs.items():
        wb = word_error_rate(hyps.get(uid, ()), ref)
        total = total + wb
        rows.append(f"{uid},{wb.substitutions},{wb.insertions},{wb.deletions},"
                    f"{wb.reference_length},{wb.wer!r}")
    rows.append(f"TOTAL,{total.substitutions},{total.insertions},{total.deletions},"
                f"{total.reference_length},{total.wer!r}")
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _load_or_train_baseline(args, cfg, split, task, graph, out: Path):
    if args.baseline:
        return load_model(args.baseline)
    log.info("no --baseline given; training one")
    model = train_baseline(split.labeled, cfg.arch_for(task), cfg.baseline, cfg.seed, graph)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "baseline.bin")
    return model


def _arm_specs(cfg: ExperimentConfig, which: str):
    rl = ArmSpec(
        name="rl",
        mode="reinforcement",
        alpha=cfg.rl.alpha,
        selection_error=cfg.selector.p if cfg.selector.type == "noisy" else 0.0,
        rival_rank=cfg.rl.rival_rank,
        rival_strategy=cfg.rl.rival_strategy,
    )
    unsup = ArmSpec(name="unsup", mode="unsupervised_adaptation")
    if which == "rl":
        return [rl]
    if which == "unsup":
        return [unsup]
    return [rl, unsup]


def _write_models(named_results, out: Path):
    for arm, result in named_results:
        mdir = out / "models" / arm.name
        mdir.mkdir(parents=True, exist_ok=True)
        for k, model in enumerate(result.models):
            save_model(model, mdir / f"RL{k}.bin")


def _write_timings(named_results, out: Path):
    lines = []
    for arm, result in named_results:
        for report in result.reports:
            lines.append(f"{arm.name} stage {report.stage}: {report.wall_time_s:.2f}s")
    (out / "timings.txt").write_text("\n".join(lines) + "\n")


def cmd_campaign_run(args):
    cfg = _load_config_arg(args)
    if cfg.selector.type == "human":
        raise ConfigurationError("use `hypsel serve` for human-backed campaigns")
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    out = Path(args.out or "campaign_out")
    baseline = _load_or_train_baseline(args, cfg, split, task, graph, out)
    arms = _arm_specs(cfg, args.arm)
    named = run_arms(
        split, graph, baseline, cfg.stage, arms,
        seed=cfg.seed, include_initial_curve=(args.arm == "both"),
    )
    emit_report(named, out)
    _write_models(named, out)
    _write_timings(named, out)
    for arm, result in named:
        print(f"{arm.name}: final eval WER {result.final_eval_wer:.4f}")
    print(f"wrote {out / 'summary.csv'}")
    return 0


def cmd_sweep(args):
    cfg = _load_config_arg(args)
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    model = load_model(args.model)
    batch = split.large_batches[0] if split.large_batches else split.eval_set
    pair_wers = []
    for u in batch:
        nb = nbest_decode(model, graph, u, cfg.rl.rival_rank)
        rival = nb[min(cfg.rl.rival_rank, len(nb)) - 1]
        pair_wers.append(
            (word_error_rate(nb[0].words, u.reference).wer,
             word_error_rate(rival.words, u.reference).wer)
        )
    spec = SweepSpec(trials=args.trials, seed=cfg.seed)
    table = selection_error_sweep(pair_wers, spec)
    out = Path(args.out or "sweep_out")
    path = emit_sweep(table, out)
    crossing = "none" if table.crossing_p is None else f"{table.crossing_p:.2f}"
    print(f"wrote {path}; selected-WER crossing at p={crossing}")
    return 0


def cmd_rival_compare(args):
    cfg = _load_config_arg(args)
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    out = Path(args.out or "rival_out")
    baseline = _load_or_train_baseline(args, cfg, split, task, graph, out)
    rows, named, rank_flags = rival_rank_comparison(
        split, graph, baseline, cfg.stage,
        ranks=tuple(args.ranks), alpha=cfg.rl.alpha,
        selection_error=args.p, seed=cfg.seed,
    )
    emit_report(named, out)
    _write_models(named, out)
    _write_timings(named, out)
    for arm, result in named:
        verdict = ""
        if arm.name in rank_flags:
            verdict = " (<= unsup)" if rank_flags[arm.name] else " (worse than unsup)"
        print(f"{arm.name}: final eval WER {result.final_eval_wer:.4f}{verdict}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import ServiceSelector, SessionHub, create_app
    from .trainer import run_campaign

    cfg = _load_config_arg(args)
    split = load_corpus(args.corpus)
    task = load_task(args.corpus)
    graph = cfg.graph_for(task)
    out = Path(args.out or "serve_out")
    out.mkdir(parents=True, exist_ok=True)
    baseline = _load_or_train_baseline(args, cfg, split, task, graph, out)

    hub = SessionHub()
    references = {u.id: u.reference for u in split.all_utterances()}
    selector = ServiceSelector(
        hub, seed=cfg.seed, log_dir=out / "selections",
        references=references if args.debug else None,
    )
    stage_cfg = replace(cfg.stage, mode="reinforcement")
    if args.stages is not None:
        split.large_batches = split.large_batches[: args.stages]

    def worker():
        result = run_campaign(
            split, graph, baseline, stage_cfg, cfg.rl, lambda k: selector, seed=cfg.seed
        )
        emit_report([(ArmSpec(name="human", alpha=cfg.rl.alpha), result)], out)
        _write_models([(ArmSpec(name="human"), result)], out)
        log.info("interactive campaign complete: final eval WER %.4f",
                 result.final_eval_wer)

    thread = threading.Thread(target=worker, daemon=True, name="campaign")
    thread.start()
    app = create_app(hub, static_dir=args.static, debug=args.debug)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="hypsel", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    corpus_p = sub.add_parser("corpus", help="generate or inspect corpora")
    corpus_sub = corpus_p.add_subparsers(dest="subcommand", required=True)
    gen = corpus_sub.add_parser("generate")
    gen.add_argument("--config", default=None)
    common(gen)
    gen.set_defaults(func=cmd_corpus_generate)
    insp = corpus_sub.add_parser("inspect")
    insp.add_argument("path")
    common(insp)
    insp.set_defaults(func=cmd_corpus_inspect)

    model_p = sub.add_parser("model", help="inspect model files")
    model_sub = model_p.add_subparsers(dest="subcommand", required=True)
    minsp = model_sub.add_parser("inspect")
    minsp.add_argument("path")
    common(minsp)
    minsp.set_defaults(func=cmd_model_inspect)

    tb = sub.add_parser("train-baseline", help="supervised bootstrap on the labeled set")
    tb.add_argument("--corpus", required=True)
    tb.add_argument("--config", default=None)
    common(tb)
    tb.set_defaults(func=cmd_train_baseline)

    dec = sub.add_parser("decode", help="emit n-best hypotheses for a corpus subset")
    dec.add_argument("--corpus", required=True)
    dec.add_argument("--model", required=True)
    dec.add_argument("--subset", default="eval")
    dec.add_argument("--n", type=int, default=1)
    dec.add_argument("--config", default=None)
    common(dec)
    dec.set_defaults(func=cmd_decode)

    wer_p = sub.add_parser("wer", help="per-utterance and aggregate WER of two transcript files")
    wer_p.add_argument("--ref", required=True)
    wer_p.add_argument("--hyp", required=True)
    common(wer_p)
    wer_p.set_defaults(func=cmd_wer)

    camp = sub.add_parser("campaign", help="run staged adaptation campaigns")
    camp_sub = camp.add_subparsers(dest="subcommand", required=True)
    run = camp_sub.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--corpus", required=True)
    run.add_argument("--baseline", default=None)
    run.add_argument("--arm", choices=["rl", "unsup", "both"], default="both")
    common(run)
    run.set_defaults(func=cmd_campaign_run)

    sw = sub.add_parser("sweep", help="selection-error-rate sweep over decoded pairs")
    sw.add_argument("--corpus", required=True)
    sw.add_argument("--model", required=True)
    sw.add_argument("--config", default=None)
    sw.add_argument("--trials", type=int, default=50)
    common(sw)
    sw.set_defaults(func=cmd_sweep)

    rc = sub.add_parser("rival-compare", help="paired campaigns with different rival ranks")
    rc.add_argument("--config", required=True)
    rc.add_argument("--corpus", required=True)
    rc.add_argument("--baseline", default=None)
    rc.add_argument("--ranks", type=int, nargs="+", default=[5, 10])
    rc.add_argument("--p", type=float, default=0.15)
    common(rc)
    rc.set_defaults(func=cmd_rival_compare)

    srv = sub.add_parser("serve", help="start the interactive selection service")
    srv.add_argument("--config", required=True)
    srv.add_argument("--corpus", required=True)
    srv.add_argument("--baseline", default=None)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8710)
    srv.add_argument("--static", default=None)
    srv.add_argument("--debug", action="store_true")
    srv.add_argument("--stages", type=int, default=None)
    common(srv)
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except HypselError as exc:
        sys.stderr.write(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n"
        )
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(
            json.dumps({"error": {"type": "FileNotFoundError", "message": str(exc)}}) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
