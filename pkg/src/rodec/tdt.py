"""Token-Duration Transducer inference and losses.

The acoustic model side is abstracted as a :class:`JoinerTable`: a dense,
file-backed table of joint-network outputs giving, for every (frame,
predictor context) pair, a normalized distribution over V tokens + blank and
a normalized distribution over a small duration set D. Context order k is 0
(context-free) or 1 (last emitted token).

Conventions:
  * blank lives at token index V (one past the last real token); a compatible
    vocabulary therefore has V+1 entries with the blank last;
  * a blank transition must consume at least one frame; token transitions may
    consume 0 frames (emit several tokens on one frame);
  * greedy interprets a (blank, duration 0) prediction as "advance one frame"
    so it always terminates.

On-disk format (little-endian): magic "TDTJ" | version u16=1 | T u32 | V u32
| k u8 | |D| u8 | D entries u8 each | per frame, per context (empty context
first, then contexts (0,)..(V-1,) when k=1): V+1 f32 token log-probs then
|D| f32 duration log-probs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DecodeFailure, FormatError, InfeasibleTargetError, ValidationError
from .lattice import Hypothesis, Vocabulary, make_hypothesis
from .ctc import FusionScorer, _lae

JOINER_MAGIC = b"TDTJ"
JOINER_VERSION = 1
LOG0 = -math.inf

_JOINER_HEADER = struct.Struct("<4sHIIBB")


@dataclass(frozen=True)
class JoinerQuery:
    frame_index: int
    context: tuple[int, ...]


@dataclass(frozen=True)
class JoinerResponse:
    token_log_probs: np.ndarray  # (V+1,), blank last
    duration_log_probs: np.ndarray  # (|D|,)


class JoinerTable:
    """Dense joint-network outputs for T frames and all contexts up to order k."""

    def __init__(self, token_log_probs, duration_log_probs, durations, context_order):
        tok = np.asarray(token_log_probs, dtype=np.float32)
        dur = np.asarray(duration_log_probs, dtype=np.float32)
        durations = tuple(int(d) for d in durations)
        if context_order not in (0, 1):
            raise ValidationError("context order must be 0 or 1")
        if tok.ndim != 3 or dur.ndim != 3:
            raise ValidationError("joiner tables must be (T, contexts, dist) arrays")
        t, c, vp1 = tok.shape
        if vp1 < 2:
            raise ValidationError("token distribution needs at least one token + blank")
        v = vp1 - 1
        expected_c = 1 if context_order == 0 else 1 + v
        if c != expected_c or dur.shape[:2] != (t, c):
            raise ValidationError("joiner table does not cover every (frame, context)")
        if dur.shape[2] != len(durations):
            raise ValidationError("duration table width does not match duration set")
        if sorted(set(durations)) != list(durations):
            raise ValidationError("duration set must be sorted and distinct")
        if any(d < 0 for d in durations):
            raise ValidationError("durations must be non-negative")
        if not durations or max(durations) < 1:
            raise ValidationError("duration set needs a positive duration")
        if not (np.isfinite(tok).all() and np.isfinite(dur).all()):
            raise ValidationError("joiner table contains NaN or Inf")
        for name, arr in (("token", tok), ("duration", dur)):
            flat = arr.reshape(-1, arr.shape[2]).astype(np.float64)
            m = flat.max(axis=1)
            lse = m + np.log(np.exp(flat - m[:, None]).sum(axis=1))
            if np.abs(lse).max() > 1e-4:
                raise ValidationError(f"{name} distributions are not normalized")
        tok.flags.writeable = False
        dur.flags.writeable = False
        self.token_log_probs = tok
        self.duration_log_probs = dur
        self.durations = durations
        self.context_order = context_order

    @property
    def num_frames(self) -> int:
        return self.token_log_probs.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.token_log_probs.shape[2] - 1

    @property
    def blank_index(self) -> int:
        return self.num_tokens

    def context_index(self, context: tuple[int, ...]) -> int:
        if self.context_order == 0 or not context:
            return 0
        return 1 + context[-1]

    def response(self, frame: int, context: tuple[int, ...]) -> JoinerResponse:
        c = self.context_index(context)
        return JoinerResponse(self.token_log_probs[frame, c], self.duration_log_probs[frame, c])

    def lookup(self, query: JoinerQuery) -> JoinerResponse:
        return self.response(query.frame_index, query.context)


def check_joiner_vocab(joiner: JoinerTable, vocab: Vocabulary) -> None:
    if len(vocab) != joiner.num_tokens + 1 or vocab.blank_index != joiner.num_tokens:
        raise ValidationError(
            f"joiner with {joiner.num_tokens} tokens needs a vocabulary of "
            f"{joiner.num_tokens + 1} entries with the blank last"
        )


def save_joiner(joiner: JoinerTable, path) -> None:
    t = joiner.num_frames
    v = joiner.num_tokens
    header = _JOINER_HEADER.pack(
        JOINER_MAGIC, JOINER_VERSION, t, v, joiner.context_order, len(joiner.durations)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bytes(joiner.durations))
        # interleave per (frame, context): token dist then duration dist
        for ti in range(t):
            for ci in range(joiner.token_log_probs.shape[1]):
                fh.write(np.ascontiguousarray(joiner.token_log_probs[ti, ci], "<f4").tobytes())
                fh.write(np.ascontiguousarray(joiner.duration_log_probs[ti, ci], "<f4").tobytes())


def load_joiner(path) -> JoinerTable:
    with open(path, "rb") as fh:
        head = fh.read(_JOINER_HEADER.size)
        if len(head) < _JOINER_HEADER.size:
            raise FormatError(f"{path}: truncated joiner header")
        magic, version, t, v, k, nd = _JOINER_HEADER.unpack(head)
        if magic != JOINER_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {JOINER_MAGIC!r}")
        if version != JOINER_VERSION:
            raise FormatError(f"{path}: unsupported joiner version {version}")
        durations = tuple(fh.read(nd))
        if len(durations) != nd:
            raise FormatError(f"{path}: truncated duration set")
        contexts = 1 if k == 0 else 1 + v
        stride = (v + 1) + nd
        payload = fh.read(4 * t * contexts * stride)
        if len(payload) != 4 * t * contexts * stride:
            raise FormatError(f"{path}: truncated joiner payload")
    flat = np.frombuffer(payload, dtype="<f4").reshape(t, contexts, stride)
    return JoinerTable(flat[:, :, : v + 1], flat[:, :, v + 1 :], durations, k)


def tdt_greedy(
    joiner: JoinerTable,
    vocab: Vocabulary,
    *,
    max_symbols_per_frame: int = 8,
) -> Hypothesis:
    """Greedy TDT decoding: take the argmax token and argmax duration at each
    step, emit non-blank tokens, and advance by the predicted duration.

    A (blank, 0) prediction advances one frame, and after
    ``max_symbols_per_frame`` zero-duration emissions on one frame the
    decoder also advances, so termination needs at most
    T * (max_symbols_per_frame + 1) queries.
    """
    check_joiner_vocab(joiner, vocab)
    k = joiner.context_order
    blank = joiner.blank_index
    durations = joiner.durations
    T = joiner.num_frames

    t = 0
    context: tuple[int, ...] = ()
    tokens: list[int] = []
    score = 0.0
    stuck = 0
    while t < T:
        resp = joiner.response(t, context)
        w = int(resp.token_log_probs.argmax())
        di = int(resp.duration_log_probs.argmax())
        d = durations[di]
        score += float(resp.token_log_probs[w]) + float(resp.duration_log_probs[di])
        if w != blank:
            tokens.append(w)
            if k:
                context = (w,)
        if d == 0:
            if w == blank:
                t += 1  # forced progress
                stuck = 0
            else:
                stuck += 1
                if stuck >= max_symbols_per_frame:
                    t += 1
                    stuck = 0
        else:
            t += d
            stuck = 0
    return make_hypothesis(tokens, score)


@dataclass(frozen=True)
class AlsdConfig:
    """Alignment-length synchronous search knobs. The emitted-prefix cap is
    U_max = ceil(max_symbols_ratio * T)."""

    beam_size: int = 32
    max_symbols_ratio: float = 0.3

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if not self.max_symbols_ratio > 0:
            raise ValidationError("max_symbols_ratio must be positive")


def alsd_decode(
    joiner: JoinerTable,
    vocab: Vocabulary,
    config: AlsdConfig,
    lm=None,
    alpha: float = 0.0,
    *,
    nbest: int | None = None,
    utterance_id: str = "",
) -> list[Hypothesis]:
    """Beam search synchronized on alignment length n = frames consumed +
    tokens emitted.

    Every live hypothesis (prefix, t) expands by blank moves consuming d >= 1
    frames and by token emissions consuming d in D frames (d = 0 allowed);
    expansions that would consume past the last frame are invalid. Hypotheses
    with identical (prefix, t) merge their probability mass via log-sum-exp,
    reaching t = T finalizes, and prefixes longer than U_max are dropped.
    With a beam wide enough to avoid pruning the search is exact over all
    alignments of length at most T + U_max.
    """
    check_joiner_vocab(joiner, vocab)
    T = joiner.num_frames
    V = joiner.num_tokens
    blank = joiner.blank_index
    durations = joiner.durations
    u_max = math.ceil(config.max_symbols_ratio * T)
    k = joiner.context_order

    scorer = FusionScorer(lm, vocab) if lm is not None else None
    # LM totals are pure functions of the prefix, cached across beam levels
    lm_totals: dict[tuple, tuple[tuple, float]] = {(): (scorer.initial_state(), 0.0)} if scorer else {}
    ext_cache: dict = {}

    def lm_extend(prefix: tuple, w: int) -> float:
        new_prefix = prefix + (w,)
        cached = lm_totals.get(new_prefix)
        if cached is None:
            state, total = lm_totals[prefix]
            step = ext_cache.get((state, w))
            if step is None:
                step = scorer.extend(state, w)
                ext_cache[(state, w)] = step
            cached = (step[0], total + step[1])
            lm_totals[new_prefix] = cached
        return cached[1]

    tok_rows = joiner.token_log_probs.astype(np.float64).tolist()
    dur_rows = joiner.duration_log_probs.astype(np.float64).tolist()

    buckets: dict[int, dict[tuple, float]] = {0: {((), 0): 0.0}}
    finals: dict[tuple, float] = {}

    def emit(level: int, prefix: tuple, t_new: int, score: float) -> None:
        if t_new == T:
            prev = finals.get(prefix)
            finals[prefix] = score if prev is None else _lae(prev, score)
            return
        bucket = buckets.setdefault(level, {})
        key = (prefix, t_new)
        prev = bucket.get(key)
        bucket[key] = score if prev is None else _lae(prev, score)

    for n in range(T + u_max + 1):
        bucket = buckets.pop(n, None)
        if not bucket:
            continue

        def fused(item):
            (prefix, _t), score = item
            if scorer:
                score = score + alpha * lm_totals[prefix][1]
            return score

        live = sorted(bucket.items(), key=lambda it: (-fused(it), len(it[0][0]), it[0]))
        live = live[: config.beam_size]

        for (prefix, t), score in live:
            ci = joiner.context_index(prefix[-1:] if k else ())
            tok_lp = tok_rows[t][ci]
            dur_lp = dur_rows[t][ci]
            blank_lp = tok_lp[blank]
            can_grow = len(prefix) < u_max
            for di, d in enumerate(durations):
                if t + d > T:
                    continue
                dlp = dur_lp[di]
                if d >= 1:
                    emit(n + d, prefix, t + d, score + blank_lp + dlp)
                if not can_grow:
                    continue
                base = score + dlp
                level = n + d + 1
                t_new = t + d
                for w in range(V):
                    if scorer:
                        lm_extend(prefix, w)  # ensure cached for ranking
                    emit(level, prefix + (w,), t_new, base + tok_lp[w])

    if not finals:
        raise DecodeFailure(
            f"utterance {utterance_id or '<unknown>'}: no hypothesis reached "
            f"the final frame within alignment length {T + u_max}"
        )

    hyps = []
    for prefix, acoustic in finals.items():
        lm_total = lm_totals[prefix][1] if scorer else 0.0
        hyps.append(make_hypothesis(prefix, acoustic, lm_total, alpha, 0.0))
    hyps.sort(key=lambda h: (-h.total_score, len(h.tokens), h.tokens))
    return hyps[: (nbest if nbest is not None else config.beam_size)]


def tdt_loss(joiner: JoinerTable, target) -> float:
    """Negative log-likelihood of emitting exactly ``target`` while consuming
    exactly T frames, summed over every (token, duration) alignment.

    Blank transitions require duration >= 1; token transitions may use
    duration 0. Dynamic program over (frames consumed, tokens emitted).
    """
    T = joiner.num_frames
    V = joiner.num_tokens
    blank = joiner.blank_index
    durations = joiner.durations
    k = joiner.context_order
    target = [int(y) for y in target]
    if any(not 0 <= y < V for y in target):
        raise ValidationError("target token outside joiner vocabulary")
    U = len(target)

    # fwd[u][t]: log-prob of having emitted target[:u] and consumed t frames
    fwd = np.full((U + 1, T + 1), LOG0)
    fwd[0, 0] = 0.0
    for u in range(U + 1):
        for t in range(T):
            base = fwd[u, t]
            if base == LOG0:
                continue
            ci = 0 if (k == 0 or u == 0) else 1 + target[u - 1]
            tok_lp = joiner.token_log_probs[t, ci]
            dur_lp = joiner.duration_log_probs[t, ci]
            for di, d in enumerate(durations):
                if t + d > T:
                    continue
                dlp = float(dur_lp[di])
                if d >= 1:
                    fwd[u, t + d] = np.logaddexp(
                        fwd[u, t + d], base + float(tok_lp[blank]) + dlp
                    )
                if u < U:
                    fwd[u + 1, t + d] = np.logaddexp(
                        fwd[u + 1, t + d], base + float(tok_lp[target[u]]) + dlp
                    )
    total = fwd[U, T]
    if total == LOG0:
        raise InfeasibleTargetError(
            f"target of length {U} cannot consume exactly {T} frames "
            f"with durations {durations}"
        )
    return float(-total)


def hybrid_loss(ctc_nll: float, tdt_nll: float, ctc_weight: float) -> float:
    """Weighted combination of the two branch losses: tdt + weight * ctc."""
    if not (math.isfinite(ctc_nll) and math.isfinite(tdt_nll)):
        raise ValidationError("losses must be finite")
    if not 0.0 <= ctc_weight <= 1.0:
        raise ValidationError("ctc_weight must be in [0, 1]")
    return tdt_nll + ctc_weight * ctc_nll


def synth_joiner(
    reference,
    frames_per_token: int,
    noise_temperature: float,
    seed: int,
    vocab: Vocabulary,
    *,
    context_order: int = 0,
    margin: float = 8.0,
) -> JoinerTable:
    """Generate a joiner table whose noiseless argmax path emits ``reference``.

    Token u is favored (with its duration ``frames_per_token``) at frame
    u * frames_per_token; everywhere else blank with duration 1 is favored.
    T = len(reference) * frames_per_token (at least 1). Deterministic for a
    fixed seed; rows stay normalized at any noise temperature.
    """
    check_dims = len(vocab)
    if check_dims < 2:
        raise ValidationError("vocabulary too small")
    if vocab.blank_index != check_dims - 1:
        raise ValidationError("synthetic joiner needs the blank as the last token")
    if frames_per_token < 1:
        raise ValidationError("frames_per_token must be >= 1")
    v = check_dims - 1
    blank = v
    reference = [int(y) for y in reference]
    if any(not 0 <= y < v for y in reference):
        raise ValidationError("reference token outside vocabulary")
    T = max(1, len(reference) * frames_per_token)
    durations = (1,) if frames_per_token == 1 else (1, frames_per_token)
    contexts = 1 if context_order == 0 else 1 + v

    rng = np.random.default_rng(seed)
    tok = np.zeros((T, contexts, v + 1))
    dur = np.zeros((T, contexts, len(durations)))
    tok[:, :, blank] = margin
    dur[:, :, 0] = margin
    fpt_slot = durations.index(frames_per_token)
    for u, y in enumerate(reference):
        t = u * frames_per_token
        tok[t, :, blank] = 0.0
        tok[t, :, y] = margin
        dur[t, :, 0] = 0.0
        dur[t, :, fpt_slot] = margin
    if noise_temperature > 0:
        tok += noise_temperature * rng.standard_normal(tok.shape)
        dur += noise_temperature * rng.standard_normal(dur.shape)

    def log_softmax(a):
        m = a.max(axis=-1, keepdims=True)
        return a - (m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True)))

    return JoinerTable(
        log_softmax(tok).astype(np.float32),
        log_softmax(dur).astype(np.float32),
        durations,
        context_order,
    )
