import numpy as np
import pytest

from hypsel.corpus import GenerationConfig, generate_corpus
from hypsel.decoder import (
    DecodeGraph,
    acoustic_scores,
    force_align,
    nbest_decode,
    run_length_encode,
    viterbi_decode,
)
from hypsel.errors import DecodeError, ValidationError
from hypsel.model import ArchConfig, init_model
from hypsel._kernels import native_kbest_viterbi, pure_kbest_viterbi

from conftest import gaussian_classifier_model, tiny_generation_config
from oracles import brute_force_align_score, brute_force_best_alignment, brute_force_nbest


def _random_instance(rng, trial, max_vocab=4, max_t=6):
    vocab = int(rng.integers(2, max_vocab + 1))
    spw = int(rng.integers(1, 3))
    cfg = tiny_generation_config(
        seed=trial, vocab_size=vocab, states_per_word=spw,
        labeled_count=1, batch_count=0, batch_size=0, eval_count=0,
    )
    split, task = generate_corpus(cfg)
    graph = DecodeGraph.from_task(task, word_insertion_penalty=float(rng.normal(0, 0.3)))
    arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(8,), splice=1)
    model = init_model(arch, trial)
    t_len = int(rng.integers(spw, max_t + 1))
    frames = rng.standard_normal((t_len, 3)).astype(np.float32)
    return model, graph, frames


def _check_alignment_legal(graph, hyp):
    """The alignment must walk the concatenated chains of hyp.tokens left to
    right, each position held for >= 1 frame (feasibility DP over positions)."""
    path = []
    for tok in hyp.tokens:
        off = int(graph.state_offset[tok])
        path.extend(range(off, off + int(graph.chain_len[tok])))
    assert int(hyp.alignment[0]) == path[0], "alignment must start the first chain"
    reach = {0}
    for t in range(1, len(hyp.alignment)):
        s = int(hyp.alignment[t])
        reach = {
            q for p in reach for q in (p, p + 1) if q < len(path) and path[q] == s
        }
        assert reach, f"illegal transition at frame {t}"
    assert len(path) - 1 in reach, "alignment must finish the last chain"


class TestViterbi:
    def test_single_word_vocabulary(self):
        cfg = tiny_generation_config(seed=2, vocab_size=2, states_per_word=3,
                                     labeled_count=1, batch_count=0, batch_size=0,
                                     eval_count=0)
        split, task = generate_corpus(cfg)
        # restrict the LM so only word 0 is reachable
        task.lm_init[:] = [1.0, 0.0]
        task.lm_bigram[:, 1] = 0.0
        task.lm_bigram[:, 0] = 1.0
        graph = DecodeGraph.from_task(task)
        arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(6,), splice=0)
        model = init_model(arch, 1)
        frames = np.random.default_rng(0).standard_normal((7, 3)).astype(np.float32)
        hyp = viterbi_decode(model, graph, frames)
        assert set(hyp.words) == {0}
        diffs = np.diff(hyp.alignment)
        assert np.all((diffs == 0) | (diffs == 1) | (hyp.alignment[1:] == 0))

    def test_recovers_reference_at_low_noise(self):
        cfg = GenerationConfig(
            vocab_size=8, states_per_word=2, feature_dim=6, emission_noise_sigma=0.05,
            batch_shift_magnitude=0.0, labeled_count=50, batch_count=0, batch_size=0,
            eval_count=0, utterance_length_range=(2, 4), seed=77,
        )
        split, task = generate_corpus(cfg)
        graph = DecodeGraph.from_task(task)
        model = gaussian_classifier_model(task)
        matches = sum(
            viterbi_decode(model, graph, u).words == u.reference for u in split.labeled
        )
        assert matches >= 0.95 * len(split.labeled)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            model, graph, frames = _random_instance(rng, trial)
            am = acoustic_scores(model, graph, frames)
            expected = brute_force_nbest(am, graph, 1)
            hyp = viterbi_decode(model, graph, frames)
            assert hyp.words == expected[0][0]
            assert hyp.score == pytest.approx(expected[0][1], abs=1e-9)
            _check_alignment_legal(graph, hyp)

    def test_too_short_utterance_raises(self, small_setup):
        _, _, task, graph, model = small_setup
        frames = np.zeros((1, 3), dtype=np.float32)  # every chain needs 2 frames
        with pytest.raises(DecodeError):
            viterbi_decode(model, graph, frames)

    def test_prior_scaling_leaves_argmax_unchanged(self, small_setup):
        _, split, task, graph, model = small_setup
        scaled = model.copy()
        scaled.state_priors = model.state_priors * 1.0  # same shape
        base_words = [viterbi_decode(model, graph, u).words for u in split.labeled]
        # multiplying every acoustic likelihood by a per-frame constant is
        # equivalent to scaling all priors by one constant
        scaled.state_priors = model.state_priors * 3.7
        new_words = [viterbi_decode(scaled, graph, u).words for u in split.labeled]
        assert base_words == new_words


class TestNBest:
    def test_n1_equals_viterbi(self, small_setup):
        _, split, _, graph, model = small_setup
        for u in split.labeled:
            single = viterbi_decode(model, graph, u)
            nb = nbest_decode(model, graph, u, 1)
            assert len(nb) == 1
            assert nb[0].words == single.words
            assert nb[0].score == single.score
            assert np.array_equal(nb[0].alignment, single.alignment)

    def test_top3_matches_brute_force(self):
        rng = np.random.default_rng(23)
        for trial in range(20):
            model, graph, frames = _random_instance(rng, trial)
            am = acoustic_scores(model, graph, frames)
            expected = brute_force_nbest(am, graph, 3)
            got = nbest_decode(model, graph, frames, 3)
            assert len(got) == len(expected)
            for hyp, (words, score) in zip(got, expected):
                assert hyp.score == pytest.approx(score, abs=1e-9)
                assert hyp.words == words

    def test_scores_non_increasing_and_distinct(self, small_setup):
        _, split, _, graph, model = small_setup
        for u in split.labeled:
            nb = nbest_decode(model, graph, u, 6)
            scores = [h.score for h in nb]
            assert scores == sorted(scores, reverse=True)
            words = [h.words for h in nb]
            assert len(words) == len(set(words))
            assert [h.rank for h in nb] == list(range(1, len(nb) + 1))

    def test_fewer_sequences_than_n(self):
        cfg = tiny_generation_config(seed=4, vocab_size=2, states_per_word=2,
                                     labeled_count=1, batch_count=0, batch_size=0,
                                     eval_count=0)
        _, task = generate_corpus(cfg)
        graph = DecodeGraph.from_task(task)
        arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(4,), splice=0)
        model = init_model(arch, 0)
        frames = np.random.default_rng(1).standard_normal((2, 3)).astype(np.float32)
        # with T=2 and two 2-state words only two sequences fit
        nb = nbest_decode(model, graph, frames, 10)
        assert 0 < len(nb) <= 2


class TestForceAlign:
    def test_reproduces_viterbi_alignment_and_score(self, small_setup):
        _, split, _, graph, model = small_setup
        for u in split.labeled:
            hyp = viterbi_decode(model, graph, u)
            fa = force_align(model, graph, u, hyp.words)
            assert fa is not None
            assert fa.score == pytest.approx(hyp.score, abs=1e-9)
            assert np.array_equal(fa.alignment, hyp.alignment)

    def test_exact_length_chain(self):
        cfg = tiny_generation_config(seed=3, vocab_size=2, states_per_word=3,
                                     labeled_count=1, batch_count=0, batch_size=0,
                                     eval_count=0)
        _, task = generate_corpus(cfg)
        graph = DecodeGraph.from_task(task)
        arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(4,), splice=0)
        model = init_model(arch, 0)
        frames = np.random.default_rng(2).standard_normal((3, 3)).astype(np.float32)
        fa = force_align(model, graph, frames, (1,))
        assert fa is not None
        assert list(fa.alignment) == [3, 4, 5]  # word 1 occupies states 3..5

    def test_matches_exhaustive_alignment_oracle(self):
        rng = np.random.default_rng(31)
        for trial in range(15):
            model, graph, frames = _random_instance(rng, trial + 100, max_t=6)
            words = tuple(
                int(w) for w in rng.integers(0, graph.num_tokens, size=rng.integers(1, 3))
            )
            am = acoustic_scores(model, graph, frames)
            chain = sum(int(graph.chain_len[w]) for w in words)
            fa = force_align(model, graph, frames, words)
            if chain > len(frames):
                assert fa is None
                continue
            acoustic, = (brute_force_align_score(am, graph, words),)
            lm = graph._entry0[words[0]] + sum(
                graph._entry[words[i - 1], words[i]] for i in range(1, len(words))
            )
            assert fa is not None
            assert fa.score == pytest.approx(acoustic + lm, abs=1e-9)
            ali, _ = brute_force_best_alignment(am, graph, words)
            assert np.array_equal(fa.alignment, ali)

    def test_failure_when_too_short(self, small_setup):
        _, _, _, graph, model = small_setup
        frames = np.zeros((3, 3), dtype=np.float32)
        assert force_align(model, graph, frames, (0, 1)) is None  # needs 4 frames

    def test_rejects_bad_words(self, small_setup):
        _, split, _, graph, model = small_setup
        with pytest.raises(ValidationError):
            force_align(model, graph, split.labeled[0], ())
        with pytest.raises(ValidationError):
            force_align(model, graph, split.labeled[0], (99,))


class TestSilenceDecoding:
    def test_words_stripped_and_alignment_legal(self):
        cfg = tiny_generation_config(
            seed=8, vocab_size=4, states_per_word=2, silence_prob=0.35,
            labeled_count=25, batch_count=0, batch_size=0, eval_count=0,
            utterance_length_range=(2, 4), emission_noise_sigma=0.2,
        )
        split, task, alignments = generate_corpus(cfg, return_alignments=True)
        graph = DecodeGraph.from_task(task)
        model = gaussian_classifier_model(task)
        sil = task.silence_token
        sil_state = task.num_states - 1
        saw_sil = False
        with_sil = recovered = 0
        for u in split.labeled:
            nb = nbest_decode(model, graph, u, 3)
            for hyp in nb:
                assert sil not in hyp.words
                if sil in hyp.tokens:
                    saw_sil = True
                _check_alignment_legal(graph, hyp)
            fa = force_align(model, graph, u, u.reference)
            assert fa is not None
            # the oracle-posterior aligner recovers most true silence segments
            # (very short ones may be absorbed into neighboring word states)
            if np.any(alignments[u.id] == sil_state):
                with_sil += 1
                recovered += bool(np.any(fa.alignment == sil_state))
        assert saw_sil
        assert with_sil > 0 and recovered >= 0.5 * with_sil

    def test_silence_brute_force(self):
        rng = np.random.default_rng(5)
        cfg = tiny_generation_config(
            seed=9, vocab_size=3, states_per_word=1, silence_prob=0.3,
            labeled_count=1, batch_count=0, batch_size=0, eval_count=0,
        )
        _, task = generate_corpus(cfg)
        graph = DecodeGraph.from_task(task)
        arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(6,), splice=0)
        model = init_model(arch, 2)
        for trial in range(8):
            frames = rng.standard_normal((int(rng.integers(2, 6)), 3)).astype(np.float32)
            am = acoustic_scores(model, graph, frames)
            expected = brute_force_nbest(am, graph, 3)
            got = nbest_decode(model, graph, frames, 3)
            assert [h.words for h in got] == [w for w, _ in expected]
            for hyp, (_, score) in zip(got, expected):
                assert hyp.score == pytest.approx(score, abs=1e-9)


@pytest.mark.skipif(native_kbest_viterbi is None, reason="extension not built")
class TestKernelBackends:
    def test_bit_identical_results(self):
        rng = np.random.default_rng(77)
        for trial in range(15):
            model, graph, frames = _random_instance(rng, trial + 300)
            am = np.ascontiguousarray(acoustic_scores(model, graph, frames))
            args = (
                am,
                np.ascontiguousarray(graph.chain_len, dtype=np.int32),
                np.ascontiguousarray(graph.state_offset, dtype=np.int32),
                graph._entry0,
                graph._entry,
                5,
                graph._word_mask,
            )
            s1, a1, f1 = native_kbest_viterbi(*args)
            s2, a2, f2 = pure_kbest_viterbi(*args)
            assert np.array_equal(s1, s2)
            assert np.array_equal(a1, a2)
            assert np.array_equal(f1, f2)


def test_run_length_encode():
    assert run_length_encode(np.array([0, 0, 1, 1, 1, 2])) == "0:2,1:3,2:1"
    assert run_length_encode(np.array([5])) == "5:1"
