import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hypsel.corpus import GenerationConfig, generate_corpus
from hypsel.decoder import DecodeGraph
from hypsel.model import AcousticModel, ArchConfig, init_model


def gaussian_classifier_model(task):
    """Idealized recognizer: one linear softmax layer whose logits equal the
    unit-variance Gaussian log-likelihoods at the true state means."""
    arch = ArchConfig(
        feature_dim=task.feature_dim, num_states=task.num_states,
        hidden_sizes=(), splice=0,
    )
    w = task.state_means.T.copy()
    b = -0.5 * (task.state_means**2).sum(axis=1)
    return AcousticModel(
        arch=arch, weights=[w], biases=[b],
        state_priors=np.full(task.num_states, 1.0 / task.num_states),
    )


def tiny_generation_config(seed, **overrides):
    base = dict(
        vocab_size=3,
        states_per_word=1,
        feature_dim=3,
        emission_noise_sigma=0.8,
        labeled_count=6,
        batch_count=1,
        batch_size=6,
        eval_count=4,
        utterance_length_range=(1, 3),
        batch_shift_magnitude=0.5,
        seed=seed,
    )
    base.update(overrides)
    return GenerationConfig(**base)


@pytest.fixture
def tiny_setup():
    """A 3-word, 1-state task with a random small model; enumeration-friendly."""
    cfg = tiny_generation_config(seed=42)
    split, task = generate_corpus(cfg)
    graph = DecodeGraph.from_task(task)
    arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(8,), splice=1)
    model = init_model(arch, 7)
    return cfg, split, task, graph, model


@pytest.fixture
def small_setup():
    """A slightly richer task (4 words x 2 states) for alignment tests."""
    cfg = tiny_generation_config(
        seed=5, vocab_size=4, states_per_word=2, utterance_length_range=(1, 2)
    )
    split, task = generate_corpus(cfg)
    graph = DecodeGraph.from_task(task)
    arch = ArchConfig(feature_dim=3, num_states=task.num_states, hidden_sizes=(10,), splice=1)
    model = init_model(arch, 3)
    return cfg, split, task, graph, model


def random_frames(rng, t_len, dim):
    return rng.standard_normal((t_len, dim)).astype(np.float32)
