"""Independent brute-force oracles used to pin expected values.

Everything here enumerates explicitly and never shares code with the
implementations under test: CTC quantities walk all V^T alignments, TDT
quantities walk all (token, duration) move sequences, and edit distances
come from a plain cost-only DP / recursive alignment search.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def ctc_collapse_ref(alignment, blank):
    out = []
    prev = None
    for lab in alignment:
        if lab != prev and lab != blank:
            out.append(lab)
        prev = lab
    return tuple(out)


def ctc_all_sequences(lattice, blank):
    """Map each label sequence to its total probability, summing over every
    one of the V^T alignments that collapses to it."""
    probs = np.exp(lattice.log_probs.astype(np.float64))
    T, V = probs.shape
    masses: dict[tuple, float] = {}
    for alignment in itertools.product(range(V), repeat=T):
        p = 1.0
        for t, lab in enumerate(alignment):
            p *= probs[t, lab]
        seq = ctc_collapse_ref(alignment, blank)
        masses[seq] = masses.get(seq, 0.0) + p
    return masses


def ctc_loss_bruteforce(lattice, target, blank):
    masses = ctc_all_sequences(lattice, blank)
    p = masses.get(tuple(target), 0.0)
    if p == 0.0:
        raise ValueError("target unreachable")
    return -math.log(p)


def ctc_best_sequence(lattice, blank):
    masses = ctc_all_sequences(lattice, blank)
    # mirror the decoder's tie-break: probability desc, shorter, lexicographic
    return min(masses.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))


def tdt_all_sequences(joiner, max_tokens):
    """Map each emitted token sequence (up to max_tokens) to its total
    probability over all (token, duration) move sequences that consume
    exactly T frames. Blank moves need duration >= 1; token moves may use
    duration 0."""
    T = joiner.num_frames
    V = joiner.num_tokens
    blank = joiner.blank_index
    durations = joiner.durations
    tok = np.exp(joiner.token_log_probs.astype(np.float64))
    dur = np.exp(joiner.duration_log_probs.astype(np.float64))
    k = joiner.context_order
    masses: dict[tuple, float] = {}

    def walk(t, emitted, p):
        if t == T:
            masses[emitted] = masses.get(emitted, 0.0) + p
            return
        ci = 0 if (k == 0 or not emitted) else 1 + emitted[-1]
        for di, d in enumerate(durations):
            if t + d > T:
                continue
            if d >= 1:
                walk(t + d, emitted, p * tok[t, ci, blank] * dur[t, ci, di])
            if len(emitted) < max_tokens:
                for w in range(V):
                    walk(t + d, emitted + (w,), p * tok[t, ci, w] * dur[t, ci, di])

    walk(0, (), 1.0)
    return masses


def tdt_loss_bruteforce(joiner, target):
    masses = tdt_all_sequences(joiner, max_tokens=len(target))
    p = masses.get(tuple(target), 0.0)
    if p == 0.0:
        raise ValueError("target unreachable")
    return -math.log(p)


def tdt_best_sequence(joiner, max_tokens):
    masses = tdt_all_sequences(joiner, max_tokens)
    return min(masses.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))


def edit_distance_ref(ref, hyp):
    """Plain Levenshtein distance, costs only."""
    prev = list(range(len(hyp) + 1))
    for i in range(1, len(ref) + 1):
        cur = [i] + [0] * len(hyp)
        for j in range(1, len(hyp) + 1):
            cur[j] = min(
                prev[j - 1] + (ref[i - 1] != hyp[j - 1]),
                prev[j] + 1,
                cur[j - 1] + 1,
            )
        prev = cur
    return prev[len(hyp)]


def edit_distance_batch(ref, hyps_padded, hyp_lens):
    """Vectorized Levenshtein of one reference against many padded
    hypotheses; returns distances as an int array."""
    m = len(ref)
    n_max = hyps_padded.shape[1]
    count = hyps_padded.shape[0]
    prev = np.tile(np.arange(n_max + 1), (count, 1))
    for i in range(1, m + 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i
        for j in range(1, n_max + 1):
            sub = prev[:, j - 1] + (hyps_padded[:, j - 1] != ref[i - 1])
            cur[:, j] = np.minimum(np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1), sub)
        prev = cur
    return prev[np.arange(count), hyp_lens]


def all_alignments_breakdowns(ref, hyp):
    """Every (edits, substitutions, insertions, deletions) reachable by some
    alignment; exponential, use only on tiny sequences."""
    results = set()

    def walk(i, j, subs, ins, dels):
        if i == len(ref) and j == len(hyp):
            results.add((subs + ins + dels, subs, ins, dels))
            return
        if i < len(ref) and j < len(hyp):
            walk(i + 1, j + 1, subs + (ref[i] != hyp[j]), ins, dels)
        if i < len(ref):
            walk(i + 1, j, subs, ins, dels + 1)
        if j < len(hyp):
            walk(i, j + 1, subs, ins + 1, dels)

    walk(0, 0, 0, 0, 0)
    return results
