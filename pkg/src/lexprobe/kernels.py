"""Hot inner-loop kernels with numba JIT and a pure-numpy fallback.

The JIT path is the default. Set the environment variable LEXPROBE_NUMBA=0
(before import) to select the numpy fallback; the flag is also honoured when
numba is not installed. Matrix products stay in numpy/BLAS on both paths --
the kernels here cover the loops BLAS cannot express: token pooling over
ragged occurrence records, rank counting with index tie-breaks, and masked
argmax.

Both backends accumulate in float64 and are exposed side by side
(``*_numba`` / ``*_numpy``) so tests and ``benchmarks/bench_kernels.py``
can compare them directly.

Policy codes: 0 = content tokens only, 1 = all tokens, 2 = content + CLS.
Flag codes (as stored): 0 = CONTENT, 1 = CLS, 2 = SEP.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("LEXPROBE_NUMBA", "1").strip().lower()
USE_NUMBA = _env not in ("0", "false", "no", "off")

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    USE_NUMBA = False

POLICY_NOSPEC = 0
POLICY_ALL = 1
POLICY_WITHCLS = 2


def _pool_occurrences_loops(vectors, flags, tok_bounds, num_layers, dim, policy):
    """Mean-of-means pooling over a word's occurrence records.

    vectors: concatenated float32 record payloads, each record laid out
    layer-major as [num_layers, token_count, dim].
    flags: concatenated uint8 token flags.
    tok_bounds: int64 token boundaries per record, length R+1.

    Returns (pooled float64 [num_layers*dim], bad_record) where bad_record
    is the index of the first record whose policy selection is empty, or -1.
    Sums run in token index order within a layer, records in stored order.
    """
    size = num_layers * dim
    out = np.zeros(size, np.float64)
    rec = np.empty(size, np.float64)
    nrec = tok_bounds.shape[0] - 1
    vec_off = 0
    for r in range(nrec):
        t0 = tok_bounds[r]
        t1 = tok_bounds[r + 1]
        ntok = t1 - t0
        nsel = 0
        for t in range(t0, t1):
            f = flags[t]
            if policy == 1 or f == 0 or (policy == 2 and f == 1):
                nsel += 1
        if nsel == 0:
            return out, r
        for i in range(size):
            rec[i] = 0.0
        for l in range(num_layers):
            layer_base = vec_off + l * ntok * dim
            out_base = l * dim
            for t in range(ntok):
                f = flags[t0 + t]
                if policy == 1 or f == 0 or (policy == 2 and f == 1):
                    tok_base = layer_base + t * dim
                    for k in range(dim):
                        rec[out_base + k] += vectors[tok_base + k]
        inv = 1.0 / nsel
        for i in range(size):
            out[i] += rec[i] * inv
        vec_off += num_layers * ntok * dim
    inv_r = 1.0 / nrec
    for i in range(size):
        out[i] *= inv_r
    return out, -1


def _pool_occurrences_numpy(vectors, flags, tok_bounds, num_layers, dim, policy):
    out = np.zeros(num_layers * dim, np.float64)
    nrec = tok_bounds.shape[0] - 1
    vec_off = 0
    for r in range(nrec):
        t0 = int(tok_bounds[r])
        t1 = int(tok_bounds[r + 1])
        ntok = t1 - t0
        rec_flags = flags[t0:t1]
        if policy == POLICY_ALL:
            sel = np.ones(ntok, bool)
        elif policy == POLICY_WITHCLS:
            sel = rec_flags != 2
        else:
            sel = rec_flags == 0
        nsel = int(sel.sum())
        if nsel == 0:
            return out, r
        n = num_layers * ntok * dim
        rec = vectors[vec_off : vec_off + n].reshape(num_layers, ntok, dim)
        out += rec[:, sel, :].astype(np.float64).sum(axis=1).ravel() / nsel
        vec_off += n
    return out / nrec, -1


def _best_gold_rank_loops(scores, gold):
    """Best (smallest) competition rank of any gold index.

    Rank of g = 1 + #{j : s_j > s_g} + #{j : s_j == s_g and j < g}, i.e.
    ties are broken in favour of the lower index.
    """
    n = scores.shape[0]
    best = n + 1
    for gi in range(gold.shape[0]):
        g = gold[gi]
        sg = scores[g]
        rank = 1
        for j in range(n):
            s = scores[j]
            if s > sg or (s == sg and j < g):
                rank += 1
        if rank < best:
            best = rank
    return best


def _best_gold_rank_numpy(scores, gold):
    idx = np.arange(scores.shape[0])
    best = scores.shape[0] + 1
    for g in gold:
        sg = scores[g]
        rank = 1 + int((scores > sg).sum()) + int(((scores == sg) & (idx < g)).sum())
        if rank < best:
            best = rank
    return best


def _argmax_excluding_loops(scores, excluded):
    """Index of the maximum score, first index winning ties, skipping
    the excluded indices. Scans the segments between excluded positions
    so the inner loop carries no membership test."""
    n = scores.shape[0]
    exc = np.sort(excluded)
    best_i = -1
    best_s = -np.inf
    start = 0
    for e in range(exc.shape[0]):
        stop = exc[e]
        if stop > n:
            stop = n
        for j in range(start, stop):
            s = scores[j]
            if s > best_s:
                best_s = s
                best_i = j
        nxt = exc[e] + 1
        if nxt > start:
            start = nxt
    for j in range(start, n):
        s = scores[j]
        if s > best_s:
            best_s = s
            best_i = j
    return best_i


def _argmax_excluding_numpy(scores, excluded):
    masked = scores.astype(np.float64, copy=True)
    masked[excluded] = -np.inf
    if not np.isfinite(masked).any():
        return -1
    return int(np.argmax(masked))


if USE_NUMBA and njit is not None:
    pool_occurrences_numba = njit(cache=True)(_pool_occurrences_loops)
    best_gold_rank_numba = njit(cache=True)(_best_gold_rank_loops)
    argmax_excluding_numba = njit(cache=True)(_argmax_excluding_loops)
    pool_occurrences = pool_occurrences_numba
    best_gold_rank = best_gold_rank_numba
    argmax_excluding = argmax_excluding_numba
    BACKEND = "numba"
else:
    pool_occurrences_numba = None
    best_gold_rank_numba = None
    argmax_excluding_numba = None
    pool_occurrences = _pool_occurrences_numpy
    best_gold_rank = _best_gold_rank_numpy
    argmax_excluding = _argmax_excluding_numpy
    BACKEND = "numpy"

pool_occurrences_numpy = _pool_occurrences_numpy
best_gold_rank_numpy = _best_gold_rank_numpy
argmax_excluding_numpy = _argmax_excluding_numpy


def warmup():
    """Trigger JIT compilation of all kernels on tiny inputs.

    A no-op on the numpy backend. Compiled code is cached on disk, so the
    cost is paid once per environment.
    """
    vectors = np.zeros(2 * 2 * 2, np.float32)
    flags = np.array([0, 1], np.uint8)
    bounds = np.array([0, 2], np.int64)
    pool_occurrences(vectors, flags, bounds, 2, 2, POLICY_ALL)
    scores = np.array([0.1, 0.2, 0.2], np.float64)
    best_gold_rank(scores, np.array([1], np.int64))
    argmax_excluding(scores, np.array([0], np.int64))
