"""Pure-Python twin of the compiled k-best Viterbi kernel.

Kept semantically and arithmetically identical to ``_viterbi.pyx`` (same
candidate comparator, same word-prefix hash, same ``(prev + cost) + am``
operation order) so the two backends produce bit-identical results.  Used
when the extension is not built; orders of magnitude slower on realistic
inputs.
"""

from __future__ import annotations

import math

import numpy as np

_NEG_INF = float("-inf")
_MASK = (1 << 64) - 1
_HASH_SEED = 14695981039346656037
_HASH_MULT = 1099511628211


def _hash_word(h, w):
    return ((h ^ (w + 1)) * _HASH_MULT) & _MASK


def _merge(delta_prev, hash_prev, sources, k, hash_update, w, out):
    """Pop candidates best-first from sorted per-source lists, deduplicating
    by word-prefix hash.  sources entries: [pred, cost, entry, length, rank,
    head_score]; ``out`` collects (score, pred, rank, entry, hash) tuples."""
    for src in sources:
        src[4] = 0
        src[5] = delta_prev[src[0]][src[4]] + src[1]
    seen = []
    while len(out) < k:
        best = None
        for src in sources:
            if src[4] >= src[3]:
                continue
            if best is None:
                best = src
                continue
            sc, bc = src[5], best[5]
            if sc > bc or (
                sc == bc
                and (
                    src[0] < best[0]
                    or (
                        src[0] == best[0]
                        and (src[4] < best[4] or (src[4] == best[4] and src[2] < best[2]))
                    )
                )
            ):
                best = src
        if best is None:
            break
        cand_hash = hash_prev[best[0]][best[4]]
        if best[2] and hash_update:
            cand_hash = _hash_word(cand_hash, w)
        if cand_hash not in seen:
            seen.append(cand_hash)
            out.append((best[5], best[0], best[4], best[2], cand_hash))
        best[4] += 1
        if best[4] < best[3]:
            best[5] = delta_prev[best[0]][best[4]] + best[1]


def kbest_viterbi(am, chain_len, state_offset, entry0, entry, k, token_is_word=None):
    """See the compiled kernel's docstring; identical contract."""
    am = np.asarray(am, dtype=np.float64)
    chain_len = np.asarray(chain_len, dtype=np.int32)
    state_offset = np.asarray(state_offset, dtype=np.int32)
    entry0 = np.asarray(entry0, dtype=np.float64)
    entry = np.asarray(entry, dtype=np.float64)
    t_len, n_states = am.shape
    n_tok = len(chain_len)
    if t_len < 1:
        raise ValueError("am must have at least one frame")
    if k < 1:
        raise ValueError("k must be >= 1")
    if token_is_word is None:
        token_is_word = np.ones(n_tok, dtype=np.uint8)
    token_is_word = np.asarray(token_is_word, dtype=np.uint8)

    token_of = np.empty(n_states, dtype=np.int32)
    final_state = np.empty(n_tok, dtype=np.int32)
    for w in range(n_tok):
        token_of[state_offset[w] : state_offset[w] + chain_len[w]] = w
        final_state[w] = state_offset[w] + chain_len[w] - 1
    initial = set(int(o) for o in state_offset)

    # Per (t, s): parallel lists of scores/hashes (desc) and (pred, rank, entry)
    delta = [[[] for _ in range(n_states)] for _ in range(t_len)]
    hashes = [[[] for _ in range(n_states)] for _ in range(t_len)]
    bp = [[[] for _ in range(n_states)] for _ in range(t_len)]

    for w in range(n_tok):
        s = int(state_offset[w])
        sc = float(entry0[w]) + float(am[0, s])
        if math.isfinite(sc):
            delta[0][s].append(sc)
            hashes[0][s].append(_hash_word(_HASH_SEED, w) if token_is_word[w] else _HASH_SEED)
            bp[0][s].append((s, 0, 1))

    for t in range(1, t_len):
        prev = delta[t - 1]
        prev_hash = hashes[t - 1]
        for s in range(n_states):
            base = float(am[t, s])
            if not (base > _NEG_INF and base == base):
                continue
            w = int(token_of[s])
            sources = []
            if prev[s]:
                sources.append([s, 0.0, 0, len(prev[s]), 0, 0.0])
            if s not in initial:
                if prev[s - 1]:
                    sources.append([s - 1, 0.0, 0, len(prev[s - 1]), 0, 0.0])
            else:
                for wp in range(n_tok):
                    fs = int(final_state[wp])
                    if not prev[fs]:
                        continue
                    cost = float(entry[wp, w])
                    if not cost > _NEG_INF:
                        continue
                    sources.append([fs, cost, 1, len(prev[fs]), 0, 0.0])
            if not sources:
                continue
            out = []
            _merge(prev, prev_hash, sources, k, bool(token_is_word[w]), w, out)
            for sc, pred, rank, ent, h in out:
                delta[t][s].append(sc + base)
                hashes[t][s].append(h)
                bp[t][s].append((pred, rank, ent))

    sources = []
    last = delta[t_len - 1]
    for w in range(n_tok):
        fs = int(final_state[w])
        if last[fs]:
            sources.append([fs, 0.0, 0, len(last[fs]), 0, 0.0])
    out = []
    _merge(last, hashes[t_len - 1], sources, k, False, 0, out)

    filled = len(out)
    scores = np.array([o[0] for o in out], dtype=np.float64)
    aligns = np.zeros((filled, t_len), dtype=np.int32)
    flags = np.zeros((filled, t_len), dtype=np.uint8)
    for p, (sc, pred, rank, ent, h) in enumerate(out):
        s, r = pred, rank
        for t in range(t_len - 1, 0, -1):
            aligns[p, t] = s
            pstate, prank, pent = bp[t][s][r]
            flags[p, t] = pent
            s, r = pstate, prank
        aligns[p, 0] = s
        flags[p, 0] = 1
    return scores, aligns, flags
