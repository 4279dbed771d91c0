#!/usr/bin/env python3
"""Benchmark the compiled k-best Viterbi kernel against the pure-Python twin.

Decodes a small synthetic batch with both backends, checks the outputs are
bit-identical, and reports per-utterance timings.

Usage: python benchmarks/bench_decoder.py [--utterances 20] [--n 10]
"""

import argparse
import time

import numpy as np

from hypsel._kernels import native_kbest_viterbi, pure_kbest_viterbi
from hypsel.corpus import GenerationConfig, generate_corpus
from hypsel.decoder import DecodeGraph, acoustic_scores
from hypsel.model import ArchConfig, init_model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--utterances", type=int, default=20)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = GenerationConfig(
        labeled_count=args.utterances, batch_count=0, batch_size=0, eval_count=0,
        seed=args.seed,
    )
    split, task = generate_corpus(cfg)
    graph = DecodeGraph.from_task(task)
    arch = ArchConfig(feature_dim=cfg.feature_dim, num_states=task.num_states)
    model = init_model(arch, args.seed)

    ams = [
        np.ascontiguousarray(acoustic_scores(model, graph, u.frames))
        for u in split.labeled
    ]
    kernel_args = (
        np.ascontiguousarray(graph.chain_len, dtype=np.int32),
        np.ascontiguousarray(graph.state_offset, dtype=np.int32),
        graph._entry0,
        graph._entry,
        args.n,
        graph._word_mask,
    )

    backends = [("pure", pure_kbest_viterbi)]
    if native_kbest_viterbi is not None:
        backends.insert(0, ("native", native_kbest_viterbi))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    results = {}
    timings = {}
    for name, kernel in backends:
        t0 = time.perf_counter()
        results[name] = [kernel(am, *kernel_args) for am in ams]
        timings[name] = time.perf_counter() - t0
        per_utt = timings[name] / len(ams) * 1e3
        print(f"{name:>6}: {timings[name]:.3f}s total, {per_utt:.2f} ms/utterance")

    if len(results) == 2:
        for (s1, a1, f1), (s2, a2, f2) in zip(results["native"], results["pure"]):
            assert np.array_equal(s1, s2), "backend scores differ"
            assert np.array_equal(a1, a2), "backend alignments differ"
            assert np.array_equal(f1, f2), "backend flags differ"
        print(f"outputs bit-identical; speedup {timings['pure'] / timings['native']:.1f}x")


if __name__ == "__main__":
    main()
