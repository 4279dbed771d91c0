import json
import zipfile

import numpy as np
import pytest

from hypsel.corpus import (
    CORPUS_FILENAME,
    generate_corpus,
    load_corpus,
    load_generation_config,
    load_task,
    save_corpus,
)
from hypsel.errors import ConfigurationError, SchemaError, SchemaVersionError

from conftest import tiny_generation_config


def test_same_seed_gives_identical_corpora():
    cfg = tiny_generation_config(seed=123)
    a, task_a = generate_corpus(cfg)
    b, task_b = generate_corpus(cfg)
    assert a == b
    assert task_a == task_b


def test_same_seed_gives_byte_identical_archives(tmp_path):
    cfg = tiny_generation_config(seed=9)
    for name in ("one", "two"):
        split, task = generate_corpus(cfg)
        save_corpus(split, tmp_path / name, task=task, config=cfg)
    a = (tmp_path / "one" / CORPUS_FILENAME).read_bytes()
    b = (tmp_path / "two" / CORPUS_FILENAME).read_bytes()
    assert a == b


def test_different_seeds_differ():
    a, _ = generate_corpus(tiny_generation_config(seed=1))
    b, _ = generate_corpus(tiny_generation_config(seed=2))
    assert a != b


def test_zero_shift_matches_labeled_distribution():
    cfg = tiny_generation_config(
        seed=3, batch_shift_magnitude=0.0, labeled_count=400, batch_size=400,
        emission_noise_sigma=1.0,
    )
    split, _ = generate_corpus(cfg)
    lab = np.concatenate([u.frames for u in split.labeled])
    bat = np.concatenate([u.frames for u in split.large_batches[0]])
    diff = np.linalg.norm(lab.mean(axis=0) - bat.mean(axis=0))
    # means of ~8k frames each; per-dim spread is O(mean-scale + sigma)
    assert diff < 0.2


def test_nonzero_shift_moves_batch_mean():
    cfg = tiny_generation_config(
        seed=3, batch_shift_magnitude=2.0, labeled_count=300, batch_size=300
    )
    split, task = generate_corpus(cfg)
    lab = np.concatenate([u.frames for u in split.labeled])
    bat = np.concatenate([u.frames for u in split.large_batches[0]])
    diff = np.linalg.norm(lab.mean(axis=0) - bat.mean(axis=0))
    assert 1.0 < diff < 3.0
    assert np.isclose(np.linalg.norm(task.batch_shifts[0]), 2.0)
    assert np.isclose(np.linalg.norm(task.eval_shift), 2.0)


def test_reference_membership_and_length():
    cfg = tiny_generation_config(
        seed=17, vocab_size=3, states_per_word=1, utterance_length_range=(2, 2),
        labeled_count=30, batch_size=30, eval_count=10,
    )
    split, _ = generate_corpus(cfg)
    for utt in split.all_utterances():
        assert len(utt.reference) == 2
        assert all(0 <= w < 3 for w in utt.reference)


def test_partitions_disjoint_and_frames_cover_reference():
    cfg = tiny_generation_config(seed=21, states_per_word=2)
    split, task = generate_corpus(cfg)
    ids = [u.id for u in split.all_utterances()]
    assert len(ids) == len(set(ids))
    for u in split.all_utterances():
        assert len(u.frames) >= task.min_path_length(u.reference)
        assert len(u.frames) >= 1


def test_round_trip_identity(tmp_path):
    cfg = tiny_generation_config(seed=31)
    split, task = generate_corpus(cfg)
    save_corpus(split, tmp_path, task=task, config=cfg)
    loaded = load_corpus(tmp_path)
    assert loaded == split
    assert load_task(tmp_path) == task
    assert load_generation_config(tmp_path) == cfg


def test_truncated_archive_is_schema_error(tmp_path):
    cfg = tiny_generation_config(seed=5)
    split, task = generate_corpus(cfg)
    save_corpus(split, tmp_path, task=task)
    path = tmp_path / CORPUS_FILENAME
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(SchemaError):
        load_corpus(tmp_path)


def test_unknown_version_names_found_and_expected(tmp_path):
    cfg = tiny_generation_config(seed=5)
    split, task = generate_corpus(cfg)
    save_corpus(split, tmp_path, task=task)
    path = tmp_path / CORPUS_FILENAME
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        records = zf.read("utterances.bin")
    header["schema_version"] = 99
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("header.json", json.dumps(header))
        zf.writestr("utterances.bin", records)
    with pytest.raises(SchemaVersionError) as exc:
        load_corpus(tmp_path)
    assert exc.value.found == 99
    assert exc.value.expected == 1


@pytest.mark.parametrize(
    "field,value",
    [
        ("vocab_size", 1),
        ("states_per_word", 0),
        ("self_loop_prob", 1.0),
        ("self_loop_prob", 0.0),
        ("utterance_length_range", (0, 3)),
        ("utterance_length_range", (4, 2)),
        ("emission_noise_sigma", -0.1),
        ("bigram_concentration", 0.0),
        ("batch_shift_magnitude", -1.0),
    ],
)
def test_invalid_config_names_field(field, value):
    cfg = tiny_generation_config(seed=0, **{field: value})
    with pytest.raises(ConfigurationError) as exc:
        generate_corpus(cfg)
    assert field in str(exc.value)


def test_silence_token_generation():
    cfg = tiny_generation_config(
        seed=44, silence_prob=0.4, vocab_size=4, states_per_word=2,
        labeled_count=40, batch_size=20, eval_count=10,
        utterance_length_range=(2, 5),
    )
    split, task, alignments = generate_corpus(cfg, return_alignments=True)
    assert task.has_silence
    assert task.num_states == 4 * 2 + 1
    sil_state = 4 * 2
    saw_silence = False
    for u in split.all_utterances():
        ali = alignments[u.id]
        assert all(0 <= w < 4 for w in u.reference)  # references exclude silence
        if np.any(ali == sil_state):
            saw_silence = True
        assert len(u.frames) >= task.min_path_length(u.reference)
    assert saw_silence


def test_true_alignments_match_frames():
    cfg = tiny_generation_config(seed=50, emission_noise_sigma=0.0)
    split, task, alignments = generate_corpus(cfg, return_alignments=True)
    for u in split.labeled:
        ali = alignments[u.id]
        expected = task.state_means[ali]
        assert np.allclose(u.frames, expected, atol=1e-5)
