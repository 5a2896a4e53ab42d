"""CTC decoding and loss.

``ctc_greedy`` is the frame-argmax + collapse path. ``ctc_prefix_beam`` is a
prefix beam search that keeps per-prefix (ends-in-blank, ends-in-token)
probabilities in log space and optionally fuses a token n-gram LM: extending
a prefix by token w adds ``alpha * ln P_lm(w | last N-1 tokens) + beta`` to
the pruning/ranking score. ``ctc_loss`` is the standard forward dynamic
program over the blank-interleaved target.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InfeasibleTargetError, ValidationError
from .lattice import DecodingConfig, Hypothesis, Lattice, Vocabulary, make_hypothesis

LOG0 = -math.inf
LN10 = math.log(10.0)

_exp = math.exp
_log1p = math.log1p


def _lae(a: float, b: float) -> float:
    """log(exp(a) + exp(b)) without numpy overhead; hot path of the beam."""
    if a < b:
        a, b = b, a
    if b == LOG0:
        return a
    return a + _log1p(_exp(b - a))


def collapse(frame_labels, blank: int) -> list[int]:
    """Merge adjacent repeats, then delete blanks."""
    out = []
    prev = None
    for lab in frame_labels:
        if lab != prev:
            out.append(lab)
        prev = lab
    return [lab for lab in out if lab != blank]


def _check_dims(lattice: Lattice, vocab: Vocabulary) -> None:
    if lattice.num_tokens != len(vocab):
        raise ValidationError(
            f"lattice has {lattice.num_tokens} tokens, vocabulary has {len(vocab)}"
        )


def ctc_greedy(lattice: Lattice, vocab: Vocabulary) -> Hypothesis:
    """Per-frame argmax followed by collapse. The acoustic score is the sum
    of the selected log-probabilities (the best single alignment's score)."""
    _check_dims(lattice, vocab)
    lp = lattice.log_probs
    labels = lp.argmax(axis=1)
    acoustic = float(lp[np.arange(lp.shape[0]), labels].sum())
    tokens = collapse(labels.tolist(), vocab.blank_index)
    return make_hypothesis(tokens, acoustic)


class FusionScorer:
    """Adapter between a log10 backoff LM over token strings and a decoder
    working in token indices and natural log.

    LM state is the tuple of the last N-1 emitted token strings, padded with
    a sentence-start symbol. Stateless and safe for concurrent use.
    """

    def __init__(self, model, vocab: Vocabulary):
        from .lm import BOS, EOS, UNK

        self.model = model
        self.strings = vocab.tokens
        self.ctx_len = max(model.order - 1, 0)
        self._bos = BOS
        self._eos = EOS
        known = model.unigrams()
        if UNK not in known:
            missing = [
                t for i, t in enumerate(vocab.tokens)
                if i != vocab.blank_index and t not in known
            ]
            if missing:
                raise ValidationError(
                    "LM/vocabulary mismatch: no <unk> entry and tokens missing "
                    f"from the LM, e.g. {missing[:5]}"
                )

    def initial_state(self) -> tuple:
        return (self._bos,) if self.ctx_len else ()

    def extend(self, state: tuple, token_index: int) -> tuple[tuple, float]:
        """Return (next state, natural-log LM probability of the extension)."""
        tok = self.strings[token_index]
        lnp = self.model.score(state, tok) * LN10
        if self.ctx_len:
            state = (state + (tok,))[-self.ctx_len:]
        return state, lnp

    def final(self, state: tuple) -> float:
        return self.model.score(state, self._eos) * LN10


def ctc_prefix_beam(
    lattice: Lattice,
    vocab: Vocabulary,
    config: DecodingConfig,
    lm=None,
) -> list[Hypothesis]:
    """Prefix beam search with optional shallow fusion.

    Returns the ``config.nbest`` best hypotheses by fused score. The
    acoustic score of each hypothesis is the log of its total prefix
    probability summed over all alignments, so with a beam wide enough to
    hold every prefix and ``alpha == beta == 0`` the search is exact.

    Ties are broken deterministically: higher fused score, then shorter
    prefix, then lexicographically smaller token sequence.
    """
    _check_dims(lattice, vocab)
    blank = vocab.blank_index
    rows = lattice.log_probs.astype(np.float64).tolist()
    T, V = lattice.log_probs.shape
    alpha, beta = config.alpha, config.beta

    scorer = FusionScorer(lm, vocab) if lm is not None else None
    init_state = scorer.initial_state() if scorer else ()

    # prefix -> [ends_in_blank, ends_in_token] log-probs
    beams = {(): [0.0, LOG0]}
    # prefix -> (lm_state, total ln LM prob of the prefix)
    lm_info = {(): (init_state, 0.0)}
    ext_cache: dict = {}  # (lm_state, token) -> (next state, ln prob)

    nonblank = [w for w in range(V) if w != blank]

    for t in range(T):
        row = rows[t]
        row_blank = row[blank]
        next_beams: dict[tuple, list] = {}
        for prefix, (p_b, p_nb) in beams.items():
            p_total = _lae(p_b, p_nb)
            # stay on the same prefix: blank, or repeat of the last token
            entry = next_beams.get(prefix)
            if entry is None:
                entry = [LOG0, LOG0]
                next_beams[prefix] = entry
            entry[0] = _lae(entry[0], p_total + row_blank)
            if prefix:
                entry[1] = _lae(entry[1], p_nb + row[prefix[-1]])
            # extend by each non-blank token
            last = prefix[-1] if prefix else -1
            for w in nonblank:
                base = p_b if w == last else p_total
                if base == LOG0:
                    continue
                new_prefix = prefix + (w,)
                ext = next_beams.get(new_prefix)
                if ext is None:
                    ext = [LOG0, LOG0]
                    next_beams[new_prefix] = ext
                    if scorer and new_prefix not in lm_info:
                        state, total = lm_info[prefix]
                        step = ext_cache.get((state, w))
                        if step is None:
                            step = scorer.extend(state, w)
                            ext_cache[(state, w)] = step
                        lm_info[new_prefix] = (step[0], total + step[1])
                ext[1] = _lae(ext[1], base + row[w])

        if scorer:
            ranked = sorted(
                next_beams.items(),
                key=lambda item: (
                    -(
                        _lae(item[1][0], item[1][1])
                        + alpha * lm_info[item[0]][1]
                        + beta * len(item[0])
                    ),
                    len(item[0]),
                    item[0],
                ),
            )
        else:
            ranked = sorted(
                next_beams.items(),
                key=lambda item: (
                    -(_lae(item[1][0], item[1][1]) + beta * len(item[0])),
                    len(item[0]),
                    item[0],
                ),
            )
        beams = dict(ranked[: config.beam_size])
        if scorer:
            lm_info = {p: lm_info[p] for p in beams}

    hyps = []
    for prefix, (p_b, p_nb) in beams.items():
        acoustic = _lae(p_b, p_nb)
        lm_total = 0.0
        if scorer:
            state, lm_total = lm_info[prefix]
            if config.lm_eos:
                lm_total += scorer.final(state)
        hyps.append(make_hypothesis(prefix, acoustic, lm_total, alpha, beta))
    hyps.sort(key=lambda h: (-h.total_score, len(h.tokens), h.tokens))
    return hyps[: config.nbest]


def ctc_loss(lattice: Lattice, target, blank: int) -> float:
    """Negative log-likelihood of ``target`` under the lattice, summing over
    every alignment that collapses to it (forward algorithm in log space).

    Raises :class:`InfeasibleTargetError` when no alignment exists, i.e.
    T < len(target) + number of adjacent duplicate pairs.
    """
    lp = lattice.log_probs.astype(np.float64)
    T, V = lp.shape
    target = [int(y) for y in target]
    if not 0 <= blank < V:
        raise ValidationError(f"blank index {blank} outside [0, {V})")
    if any(y == blank for y in target):
        raise ValidationError("target must not contain the blank token")
    if any(not 0 <= y < V for y in target):
        raise ValidationError("target token outside vocabulary")
    dup_pairs = sum(1 for a, b in zip(target, target[1:]) if a == b)
    if T < len(target) + dup_pairs:
        raise InfeasibleTargetError(
            f"target of length {len(target)} with {dup_pairs} repeats "
            f"cannot align to {T} frames"
        )

    ext = [blank]
    for y in target:
        ext.extend((y, blank))
    S = len(ext)

    fwd = np.full(S, LOG0)
    fwd[0] = lp[0, blank]
    if S > 1:
        fwd[1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = fwd
        fwd = np.full(S, LOG0)
        for s in range(S):
            acc = prev[s]
            if s >= 1:
                acc = np.logaddexp(acc, prev[s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = np.logaddexp(acc, prev[s - 2])
            if acc != LOG0:
                fwd[s] = acc + lp[t, ext[s]]
    total = fwd[S - 1] if S == 1 else np.logaddexp(fwd[S - 1], fwd[S - 2])
    if total == LOG0:
        raise InfeasibleTargetError("no feasible alignment for target")
    return float(-total)
