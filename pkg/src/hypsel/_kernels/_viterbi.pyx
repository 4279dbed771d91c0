# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""K-best Viterbi over a token-chain decode graph (compiled hot kernel).

States are laid out contiguously per token: token ``w`` occupies
``state_offset[w] .. state_offset[w] + chain_len[w] - 1`` left to right.
Per frame and state the kernel merges sorted predecessor path lists:
self-loop, within-chain advance, and (for chain-initial states) token
entries from every token's final state.

Each surviving path carries a rolling 64-bit hash of its *word* prefix
(non-word tokens do not update it), and every per-node list keeps only the
best path per distinct prefix.  By suffix optimality this makes the k paths
returned at the end exactly the top-k distinct word sequences, each with its
best alignment -- alignment jitter never crowds out rival sequences.

Candidate order is (score desc, predecessor state asc, predecessor rank
asc, entry flag asc); the pure-Python twin in ``pure.py`` must match this
comparator, the hash arithmetic, and the ``(prev + cost) + am`` operation
order bit for bit.
"""

from libc.math cimport INFINITY

import numpy as np

cdef unsigned long long HASH_SEED = 14695981039346656037ULL
cdef unsigned long long HASH_MULT = 1099511628211ULL


cdef inline unsigned long long _hash_word(unsigned long long h, int w) nogil:
    return (h ^ <unsigned long long> (w + 1)) * HASH_MULT


def kbest_viterbi(double[:, ::1] am,
                  int[::1] chain_len,
                  int[::1] state_offset,
                  double[::1] entry0,
                  double[:, ::1] entry,
                  int k,
                  unsigned char[::1] token_is_word=None):
    """Return (scores, alignments, boundary flags) for up to k best
    distinct-word-sequence paths, best first.

    am: (T, S) per-frame per-state scores (may contain -inf).
    entry0: cost of opening the utterance with each token.
    entry: entry[w_prev, w_next] cost of a token boundary.
    token_is_word: mask of tokens that count toward sequence identity
    (defaults to all); non-word tokens (silence) are transparent, so paths
    differing only in them deduplicate to the best-scoring one.
    Output alignments are (M, T) state ids; flags are 1 where a new token
    starts.  M <= k.
    """
    cdef int T = am.shape[0]
    cdef int S = am.shape[1]
    cdef int Vt = chain_len.shape[0]
    if T < 1:
        raise ValueError("am must have at least one frame")
    if k < 1:
        raise ValueError("k must be >= 1")
    if token_is_word is None:
        token_is_word = np.ones(Vt, dtype=np.uint8)

    token_of_np = np.empty(S, dtype=np.int32)
    final_state_np = np.empty(Vt, dtype=np.int32)
    cdef int[::1] token_of = token_of_np
    cdef int[::1] final_state = final_state_np
    cdef int w, j, s
    for w in range(Vt):
        for j in range(chain_len[w]):
            token_of[state_offset[w] + j] = w
        final_state[w] = state_offset[w] + chain_len[w] - 1

    delta_np = np.full((T, S, k), -INFINITY, dtype=np.float64)
    hash_np = np.zeros((T, S, k), dtype=np.uint64)
    bp_s_np = np.zeros((T, S, k), dtype=np.int32)
    bp_k_np = np.zeros((T, S, k), dtype=np.int32)
    bp_e_np = np.zeros((T, S, k), dtype=np.uint8)
    cnt_np = np.zeros((T, S), dtype=np.int32)
    cdef double[:, :, ::1] delta = delta_np
    cdef unsigned long long[:, :, ::1] hashes = hash_np
    cdef int[:, :, ::1] bp_s = bp_s_np
    cdef int[:, :, ::1] bp_k = bp_k_np
    cdef unsigned char[:, :, ::1] bp_e = bp_e_np
    cdef int[:, ::1] cnt = cnt_np

    # Source scratch; slot layout: self-loop, advance/entries.
    cdef int n_src_max = Vt + 2
    src_pred_np = np.zeros(n_src_max, dtype=np.int32)
    src_rank_np = np.zeros(n_src_max, dtype=np.int32)
    src_n_np = np.zeros(n_src_max, dtype=np.int32)
    src_e_np = np.zeros(n_src_max, dtype=np.uint8)
    src_cost_np = np.zeros(n_src_max, dtype=np.float64)
    src_head_np = np.zeros(n_src_max, dtype=np.float64)
    cdef int[::1] src_pred = src_pred_np
    cdef int[::1] src_rank = src_rank_np
    cdef int[::1] src_n = src_n_np
    cdef unsigned char[::1] src_e = src_e_np
    cdef double[::1] src_cost = src_cost_np
    cdef double[::1] src_head = src_head_np

    cdef int t, i, n_src, filled, best, wp, fs, pred
    cdef double base, sc, best_sc, cost
    cdef int best_pred, best_rank
    cdef unsigned char best_e, hash_update
    cdef unsigned long long cand_hash
    cdef bint dup

    for w in range(Vt):
        s = state_offset[w]
        sc = entry0[w] + am[0, s]
        if sc > -INFINITY and sc == sc:
            delta[0, s, 0] = sc
            if token_is_word[w]:
                hashes[0, s, 0] = _hash_word(HASH_SEED, w)
            else:
                hashes[0, s, 0] = HASH_SEED
            cnt[0, s] = 1

    for t in range(1, T):
        for s in range(S):
            base = am[t, s]
            if not (base > -INFINITY and base == base):
                continue
            w = token_of[s]
            n_src = 0
            if cnt[t - 1, s] > 0:
                src_pred[n_src] = s
                src_cost[n_src] = 0.0
                src_e[n_src] = 0
                src_n[n_src] = cnt[t - 1, s]
                n_src += 1
            if s != state_offset[w]:
                if cnt[t - 1, s - 1] > 0:
                    src_pred[n_src] = s - 1
                    src_cost[n_src] = 0.0
                    src_e[n_src] = 0
                    src_n[n_src] = cnt[t - 1, s - 1]
                    n_src += 1
            else:
                for wp in range(Vt):
                    fs = final_state[wp]
                    if cnt[t - 1, fs] == 0:
                        continue
                    cost = entry[wp, w]
                    if not (cost > -INFINITY):
                        continue
                    src_pred[n_src] = fs
                    src_cost[n_src] = cost
                    src_e[n_src] = 1
                    src_n[n_src] = cnt[t - 1, fs]
                    n_src += 1
            if n_src == 0:
                continue
            for i in range(n_src):
                src_rank[i] = 0
                src_head[i] = delta[t - 1, src_pred[i], 0] + src_cost[i]
            hash_update = 1 if token_is_word[w] else 0

            filled = 0
            while filled < k:
                best = -1
                best_sc = -INFINITY
                best_pred = 0
                best_rank = 0
                best_e = 0
                for i in range(n_src):
                    if src_rank[i] >= src_n[i]:
                        continue
                    sc = src_head[i]
                    if best < 0 or sc > best_sc or (
                        sc == best_sc and (
                            src_pred[i] < best_pred or (
                                src_pred[i] == best_pred and (
                                    src_rank[i] < best_rank or (
                                        src_rank[i] == best_rank
                                        and src_e[i] < best_e))))):
                        best = i
                        best_sc = sc
                        best_pred = src_pred[i]
                        best_rank = src_rank[i]
                        best_e = src_e[i]
                if best < 0:
                    break
                cand_hash = hashes[t - 1, best_pred, best_rank]
                if best_e and hash_update:
                    cand_hash = _hash_word(cand_hash, w)
                dup = False
                for i in range(filled):
                    if hashes[t, s, i] == cand_hash:
                        dup = True
                        break
                if not dup:
                    delta[t, s, filled] = best_sc + base
                    hashes[t, s, filled] = cand_hash
                    bp_s[t, s, filled] = best_pred
                    bp_k[t, s, filled] = best_rank
                    bp_e[t, s, filled] = best_e
                    filled += 1
                src_rank[best] += 1
                if src_rank[best] < src_n[best]:
                    src_head[best] = delta[t - 1, best_pred, src_rank[best]] + src_cost[best]
            cnt[t, s] = filled

    # terminal merge over token-final states, deduplicated by sequence
    n_src = 0
    for w in range(Vt):
        fs = final_state[w]
        if cnt[T - 1, fs] == 0:
            continue
        src_pred[n_src] = fs
        src_rank[n_src] = 0
        src_n[n_src] = cnt[T - 1, fs]
        src_head[n_src] = delta[T - 1, fs, 0]
        n_src += 1

    term_state_np = np.zeros(k, dtype=np.int32)
    term_rank_np = np.zeros(k, dtype=np.int32)
    term_hash_np = np.zeros(k, dtype=np.uint64)
    scores_np = np.zeros(k, dtype=np.float64)
    cdef int[::1] term_state = term_state_np
    cdef int[::1] term_rank = term_rank_np
    cdef unsigned long long[::1] term_hash = term_hash_np
    cdef double[::1] scores = scores_np

    filled = 0
    while filled < k:
        best = -1
        best_sc = -INFINITY
        best_pred = 0
        best_rank = 0
        for i in range(n_src):
            if src_rank[i] >= src_n[i]:
                continue
            sc = src_head[i]
            if best < 0 or sc > best_sc or (
                sc == best_sc and (
                    src_pred[i] < best_pred or (
                        src_pred[i] == best_pred and src_rank[i] < best_rank))):
                best = i
                best_sc = sc
                best_pred = src_pred[i]
                best_rank = src_rank[i]
        if best < 0:
            break
        cand_hash = hashes[T - 1, best_pred, best_rank]
        dup = False
        for i in range(filled):
            if term_hash[i] == cand_hash:
                dup = True
                break
        if not dup:
            term_state[filled] = best_pred
            term_rank[filled] = best_rank
            term_hash[filled] = cand_hash
            scores[filled] = best_sc
            filled += 1
        src_rank[best] += 1
        if src_rank[best] < src_n[best]:
            src_head[best] = delta[T - 1, best_pred, src_rank[best]]

    cdef int m = filled
    aligns_np = np.zeros((m, T), dtype=np.int32)
    flags_np = np.zeros((m, T), dtype=np.uint8)
    cdef int[:, ::1] aligns = aligns_np
    cdef unsigned char[:, ::1] flags = flags_np

    cdef int p, r
    for p in range(m):
        s = term_state[p]
        r = term_rank[p]
        t = T - 1
        while t > 0:
            aligns[p, t] = s
            flags[p, t] = bp_e[t, s, r]
            pred = bp_s[t, s, r]
            r = bp_k[t, s, r]
            s = pred
            t -= 1
        aligns[p, 0] = s
        flags[p, 0] = 1

    return scores_np[:m].copy(), aligns_np, flags_np
