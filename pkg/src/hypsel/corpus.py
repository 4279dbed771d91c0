"""Synthetic recognition corpus: generation, partitioning, and persistence.

The task is a vocabulary of left-to-right word HMMs with Gaussian emissions
and a bigram language model.  Utterances are partitioned into a labeled set,
an ordered list of unlabeled large batches, and an evaluation set.  Large
batches and the evaluation set carry a global feature bias so they are
domain-mismatched relative to the labeled set.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, SchemaError, SchemaVersionError

SCHEMA_VERSION = 1
CORPUS_FILENAME = "corpus.hsc"

# Fixed timestamp for archive members so identical corpora serialize
# byte-identically.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class GenerationConfig:
    """Knobs for the synthetic task and its partition sizes."""

    vocab_size: int = 50
    states_per_word: int = 3
    feature_dim: int = 20
    emission_noise_sigma: float = 1.1
    self_loop_prob: float = 0.5
    bigram_concentration: float = 0.85
    utterance_length_range: tuple[int, int] = (3, 8)
    batch_shift_magnitude: float = 1.25
    seed: int = 0
    labeled_count: int = 200
    batch_count: int = 4
    batch_size: int = 500
    eval_count: int = 200
    # Probability of a single silence token between adjacent words.  Silence
    # is a first-class bigram token with one HMM state; 0 disables it.
    silence_prob: float = 0.0

    def validate(self):
        if self.vocab_size < 2:
            raise ConfigurationError("vocab_size must be >= 2")
        if self.states_per_word < 1:
            raise ConfigurationError("states_per_word must be >= 1")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        if self.emission_noise_sigma < 0:
            raise ConfigurationError("emission_noise_sigma must be >= 0")
        if not 0.0 < self.self_loop_prob < 1.0:
            raise ConfigurationError("self_loop_prob must be in (0, 1)")
        if self.bigram_concentration <= 0:
            raise ConfigurationError("bigram_concentration must be > 0")
        lo, hi = self.utterance_length_range
        if lo < 1 or hi < lo:
            raise ConfigurationError("utterance_length_range must satisfy 1 <= min <= max")
        if self.batch_shift_magnitude < 0:
            raise ConfigurationError("batch_shift_magnitude must be >= 0")
        if not 0.0 <= self.silence_prob < 1.0:
            raise ConfigurationError("silence_prob must be in [0, 1)")
        for name in ("labeled_count", "batch_count", "batch_size", "eval_count"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")


@dataclass
class Utterance:
    """One feature-frame sequence plus its reference word sequence."""

    id: str
    frames: np.ndarray  # (T, feature_dim) float32
    reference: tuple[int, ...]
    batch_tag: str

    def __eq__(self, other):
        if not isinstance(other, Utterance):
            return NotImplemented
        return (
            self.id == other.id
            and self.batch_tag == other.batch_tag
            and self.reference == other.reference
            and self.frames.dtype == other.frames.dtype
            and np.array_equal(self.frames, other.frames)
        )


@dataclass
class CorpusSplit:
    """Disjoint partitions in stage order."""

    labeled: list[Utterance]
    large_batches: list[list[Utterance]]
    eval_set: list[Utterance]

    def all_utterances(self):
        yield from self.labeled
        for batch in self.large_batches:
            yield from batch
        yield from self.eval_set

    def __eq__(self, other):
        if not isinstance(other, CorpusSplit):
            return NotImplemented
        return (
            self.labeled == other.labeled
            and self.large_batches == other.large_batches
            and self.eval_set == other.eval_set
        )


@dataclass
class TrueTaskModel:
    """The ground-truth generator: word-HMM state means plus the bigram LM.

    Kept for oracle/debug use (forced alignment against the truth, building
    the decode graph) and never shown to the model being trained beyond the
    LM table, which mirrors a fixed pre-trained language model.
    """

    vocab_size: int
    states_per_word: int
    feature_dim: int
    self_loop_prob: float
    emission_noise_sigma: float
    silence_prob: float
    state_means: np.ndarray  # (num_states, feature_dim) float64
    lm_init: np.ndarray  # (num_tokens,) probabilities, silence column 0
    lm_bigram: np.ndarray  # (num_tokens, num_tokens) row-stochastic
    batch_shifts: np.ndarray  # (batch_count, feature_dim)
    eval_shift: np.ndarray  # (feature_dim,)
    seed: int = 0

    @property
    def has_silence(self):
        return self.silence_prob > 0.0

    @property
    def num_tokens(self):
        return self.vocab_size + (1 if self.has_silence else 0)

    @property
    def silence_token(self):
        return self.vocab_size if self.has_silence else None

    @property
    def num_states(self):
        return self.vocab_size * self.states_per_word + (1 if self.has_silence else 0)

    def chain_lengths(self):
        """States per token, in token order (silence, when present, is last)."""
        lens = [self.states_per_word] * self.vocab_size
        if self.has_silence:
            lens.append(1)
        return np.asarray(lens, dtype=np.int32)

    def state_offsets(self):
        lens = self.chain_lengths()
        offsets = np.zeros(len(lens), dtype=np.int32)
        np.cumsum(lens[:-1], out=offsets[1:])
        return offsets

    def token_of_state(self, state):
        if state < self.vocab_size * self.states_per_word:
            return state // self.states_per_word
        return self.vocab_size  # silence

    def min_path_length(self, reference):
        return len(reference) * self.states_per_word

    def __eq__(self, other):
        if not isinstance(other, TrueTaskModel):
            return NotImplemented
        scalar = (
            self.vocab_size == other.vocab_size
            and self.states_per_word == other.states_per_word
            and self.feature_dim == other.feature_dim
            and self.self_loop_prob == other.self_loop_prob
            and self.emission_noise_sigma == other.emission_noise_sigma
            and self.silence_prob == other.silence_prob
            and self.seed == other.seed
        )
        return (
            scalar
            and np.array_equal(self.state_means, other.state_means)
            and np.array_equal(self.lm_init, other.lm_init)
            and np.array_equal(self.lm_bigram, other.lm_bigram)
            and np.array_equal(self.batch_shifts, other.batch_shifts)
            and np.array_equal(self.eval_shift, other.eval_shift)
        )


def _sample_lm(config: GenerationConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet-sampled initial distribution and bigram table over tokens."""
    v = config.vocab_size
    has_sil = config.silence_prob > 0.0
    n_tok = v + (1 if has_sil else 0)
    conc = np.full(v, config.bigram_concentration)

    lm_init = np.zeros(n_tok)
    lm_init[:v] = rng.dirichlet(conc)

    lm_bigram = np.zeros((n_tok, n_tok))
    for w in range(v):
        row = rng.dirichlet(conc)
        if has_sil:
            lm_bigram[w, :v] = row * (1.0 - config.silence_prob)
            lm_bigram[w, v] = config.silence_prob
        else:
            lm_bigram[w, :v] = row
    if has_sil:
        # Silence never follows silence; its row is a fresh word distribution.
        lm_bigram[v, :v] = rng.dirichlet(conc)
    return lm_init, lm_bigram


def _sample_shifts(config: GenerationConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Per-batch bias vectors of exact norm batch_shift_magnitude.

    All batches (and the evaluation set) share one "new domain" direction,
    with small per-batch jitter so batches differ in difficulty; the eval
    shift sits at the shared direction.
    """
    d = config.feature_dim
    mag = config.batch_shift_magnitude
    direction = rng.standard_normal(d)
    jitter = rng.standard_normal((config.batch_count, d))
    if mag == 0.0:
        return np.zeros((config.batch_count, d)), np.zeros(d)
    direction /= np.linalg.norm(direction)
    batch_dirs = direction[None, :] + 0.25 * jitter
    batch_dirs /= np.linalg.norm(batch_dirs, axis=1, keepdims=True)
    return mag * batch_dirs, mag * direction


def _generate_utterance(config, task, rng, uid, tag, shift):
    """Sample one utterance; returns (Utterance, state alignment)."""
    lo, hi = config.utterance_length_range
    n_words = int(rng.integers(lo, hi + 1))
    spw = config.states_per_word
    sil_tok = task.silence_token

    tokens = []
    words_emitted = 0
    current = int(rng.choice(config.vocab_size, p=task.lm_init[: config.vocab_size]))
    tokens.append(current)
    words_emitted += 1
    while words_emitted < n_words:
        nxt = int(rng.choice(task.num_tokens, p=task.lm_bigram[current]))
        tokens.append(nxt)
        if nxt != sil_tok:
            words_emitted += 1
        current = nxt

    states = []
    for tok in tokens:
        if tok == sil_tok:
            chain = [config.vocab_size * spw]
        else:
            chain = list(range(tok * spw, (tok + 1) * spw))
        for s in chain:
            dur = int(rng.geometric(1.0 - config.self_loop_prob))
            states.extend([s] * dur)
    alignment = np.asarray(states, dtype=np.int32)

    noise = rng.standard_normal((len(states), config.feature_dim))
    frames = task.state_means[alignment] + config.emission_noise_sigma * noise + shift
    reference = tuple(t for t in tokens if t != sil_tok)
    utt = Utterance(id=uid, frames=frames.astype(np.float32), reference=reference, batch_tag=tag)
    return utt, alignment


def generate_corpus(config: GenerationConfig, return_alignments: bool = False):
    """Generate a corpus split plus its ground-truth task model.

    Fully deterministic given ``config.seed``.  With ``return_alignments``
    the true per-frame state alignment of every utterance is also returned
    (debug/oracle only; training code must not touch it).
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    means = rng.standard_normal(
        (config.vocab_size * config.states_per_word + (1 if config.silence_prob > 0 else 0),
         config.feature_dim)
    )
    lm_init, lm_bigram = _sample_lm(config, rng)
    batch_shifts, eval_shift = _sample_shifts(config, rng)

    task = TrueTaskModel(
        vocab_size=config.vocab_size,
        states_per_word=config.states_per_word,
        feature_dim=config.feature_dim,
        self_loop_prob=config.self_loop_prob,
        emission_noise_sigma=config.emission_noise_sigma,
        silence_prob=config.silence_prob,
        state_means=means,
        lm_init=lm_init,
        lm_bigram=lm_bigram,
        batch_shifts=batch_shifts,
        eval_shift=eval_shift,
        seed=config.seed,
    )

    alignments = {}
    zero = np.zeros(config.feature_dim)

    def make_partition(count, tag, prefix, shift):
        utts = []
        for i in range(count):
            utt, ali = _generate_utterance(config, task, rng, f"{prefix}-{i:05d}", tag, shift)
            utts.append(utt)
            alignments[utt.id] = ali
        return utts

    labeled = make_partition(config.labeled_count, "labeled", "lab", zero)
    batches = [
        make_partition(config.batch_size, f"batch:{k + 1}", f"b{k + 1}", batch_shifts[k])
        for k in range(config.batch_count)
    ]
    eval_set = make_partition(config.eval_count, "eval", "ev", eval_shift)

    split = CorpusSplit(labeled=labeled, large_batches=batches, eval_set=eval_set)
    if return_alignments:
        return split, task, alignments
    return split, task


# ---------------------------------------------------------------------------
# Persistence: a single zip archive with a text header plus binary records.
# ---------------------------------------------------------------------------


def _config_to_jsonable(config: GenerationConfig):
    d = asdict(config)
    d["utterance_length_range"] = list(config.utterance_length_range)
    return d


def _config_from_jsonable(d):
    d = dict(d)
    d["utterance_length_range"] = tuple(d["utterance_length_range"])
    return GenerationConfig(**d)


def _pack_utterance(utt: Utterance) -> bytes:
    id_b = utt.id.encode("utf-8")
    tag_b = utt.batch_tag.encode("utf-8")
    ref = np.asarray(utt.reference, dtype="<i4")
    frames = np.ascontiguousarray(utt.frames, dtype="<f4")
    head = struct.pack(
        "<IIIII", len(id_b), len(tag_b), frames.shape[0], frames.shape[1], len(utt.reference)
    )
    return head + id_b + tag_b + ref.tobytes() + frames.tobytes()


def _unpack_utterance(buf: io.BytesIO) -> Utterance | None:
    head = buf.read(20)
    if not head:
        return None
    if len(head) < 20:
        raise SchemaError("truncated utterance record header")
    id_len, tag_len, t, dim, ref_len = struct.unpack("<IIIII", head)
    need = id_len + tag_len + 4 * ref_len + 4 * t * dim
    body = buf.read(need)
    if len(body) < need:
        raise SchemaError("truncated utterance record body")
    pos = 0
    uid = body[pos : pos + id_len].decode("utf-8")
    pos += id_len
    tag = body[pos : pos + tag_len].decode("utf-8")
    pos += tag_len
    ref = tuple(int(x) for x in np.frombuffer(body, dtype="<i4", count=ref_len, offset=pos))
    pos += 4 * ref_len
    frames = np.frombuffer(body, dtype="<f4", count=t * dim, offset=pos).reshape(t, dim).copy()
    return Utterance(id=uid, frames=frames, reference=ref, batch_tag=tag)


def _task_to_jsonable(task: TrueTaskModel):
    return {
        "schema_version": SCHEMA_VERSION,
        "vocab_size": task.vocab_size,
        "states_per_word": task.states_per_word,
        "feature_dim": task.feature_dim,
        "self_loop_prob": task.self_loop_prob,
        "emission_noise_sigma": task.emission_noise_sigma,
        "silence_prob": task.silence_prob,
        "seed": task.seed,
        "state_means": task.state_means.tolist(),
        "lm_init": task.lm_init.tolist(),
        "lm_bigram": task.lm_bigram.tolist(),
        "batch_shifts": task.batch_shifts.tolist(),
        "eval_shift": task.eval_shift.tolist(),
    }


def _task_from_jsonable(d) -> TrueTaskModel:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(version, SCHEMA_VERSION)
    return TrueTaskModel(
        vocab_size=d["vocab_size"],
        states_per_word=d["states_per_word"],
        feature_dim=d["feature_dim"],
        self_loop_prob=d["self_loop_prob"],
        emission_noise_sigma=d["emission_noise_sigma"],
        silence_prob=d["silence_prob"],
        seed=d["seed"],
        state_means=np.asarray(d["state_means"], dtype=np.float64),
        lm_init=np.asarray(d["lm_init"], dtype=np.float64),
        lm_bigram=np.asarray(d["lm_bigram"], dtype=np.float64),
        batch_shifts=np.asarray(d["batch_shifts"], dtype=np.float64).reshape(-1, d["feature_dim"]),
        eval_shift=np.asarray(d["eval_shift"], dtype=np.float64),
    )


def _resolve_corpus_path(path) -> Path:
    p = Path(path)
    if p.is_dir() or p.suffix == "":
        return p / CORPUS_FILENAME
    return p


def save_corpus(split: CorpusSplit, path, task: TrueTaskModel | None = None,
                config: GenerationConfig | None = None):
    """Write the corpus archive; ``load(save(x)) == x`` bit-exactly."""
    p = _resolve_corpus_path(path)
    p.parent.mkdir(parents=True, exist_ok=True)

    header = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_to_jsonable(config) if config is not None else None,
        "manifest": {
            "labeled": [u.id for u in split.labeled],
            "large_batches": [[u.id for u in b] for b in split.large_batches],
            "eval_set": [u.id for u in split.eval_set],
        },
    }
    records = b"".join(_pack_utterance(u) for u in split.all_utterances())

    def add(zf, name, data):
        info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
        info.compress_type = zipfile.ZIP_STORED
        zf.writestr(info, data)

    with zipfile.ZipFile(p, "w") as zf:
        add(zf, "header.json", json.dumps(header, indent=1, sort_keys=True))
        if task is not None:
            add(zf, "task.json", json.dumps(_task_to_jsonable(task), sort_keys=True))
        add(zf, "utterances.bin", records)


def _open_archive(path) -> zipfile.ZipFile:
    p = _resolve_corpus_path(path)
    try:
        return zipfile.ZipFile(p, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise SchemaError(f"not a corpus archive: {p} ({exc})") from exc


def load_corpus(path) -> CorpusSplit:
    with _open_archive(path) as zf:
        try:
            header = json.loads(zf.read("header.json"))
            raw = zf.read("utterances.bin")
        except (KeyError, zipfile.BadZipFile) as exc:
            raise SchemaError(f"corpus archive missing member: {exc}") from exc
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(version, SCHEMA_VERSION)

    buf = io.BytesIO(raw)
    by_id = {}
    while True:
        utt = _unpack_utterance(buf)
        if utt is None:
            break
        by_id[utt.id] = utt

    manifest = header["manifest"]
    try:
        return CorpusSplit(
            labeled=[by_id[i] for i in manifest["labeled"]],
            large_batches=[[by_id[i] for i in b] for b in manifest["large_batches"]],
            eval_set=[by_id[i] for i in manifest["eval_set"]],
        )
    except KeyError as exc:
        raise SchemaError(f"manifest references missing utterance {exc}") from exc


def load_task(path) -> TrueTaskModel:
    with _open_archive(path) as zf:
        try:
            raw = zf.read("task.json")
        except KeyError as exc:
            raise SchemaError("corpus archive has no task model") from exc
    return _task_from_jsonable(json.loads(raw))


def load_generation_config(path) -> GenerationConfig | None:
    with _open_archive(path) as zf:
        header = json.loads(zf.read("header.json"))
    cfg = header.get("config")
    return _config_from_jsonable(cfg) if cfg else None
