"""Token-level backoff n-gram language model.

Pipeline: count n-grams over token streams (one sentence-start pad and one
end-of-sentence symbol per stream), optionally prune by raw appearance
counts, then estimate an interpolated Kneser-Ney model with one absolute
discount per order. Probabilities and backoff weights are stored in log10
(the ARPA convention); decoders convert to natural log at the fusion
boundary.

Estimation notes:
  * the top order is discounted on raw counts; lower orders on continuation
    counts (number of distinct left extensions), except n-grams starting
    with the sentence-start symbol, which keep raw counts because they can
    never be left-extended;
  * interpolated probabilities are stored directly and the interpolation
    weight of a context doubles as its backoff weight, which makes every
    stored context distribution sum to one exactly, pruned or not;
  * the unigram level interpolates with a uniform distribution over the
    observed vocabulary plus the unknown and end-of-sentence symbols, so
    the unknown token always carries probability mass.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass

from .errors import FormatError, ValidationError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
BOS_LOG10 = -99.0


@dataclass
class NgramCounts:
    """Per-order raw occurrence counts, keys are token-string tuples."""

    order: int
    tables: list[dict[tuple[str, ...], int]]

    def total_entries(self) -> int:
        return sum(len(t) for t in self.tables)


def count_ngrams(token_streams, order: int) -> NgramCounts:
    """Count all n-grams of orders 1..order over the streams, each padded
    with one sentence-start symbol and one end-of-sentence symbol."""
    if order < 1:
        raise ValidationError("order must be >= 1")
    tables: list[Counter] = [Counter() for _ in range(order)]
    for stream in token_streams:
        padded = [BOS] + [str(t) for t in stream] + [EOS]
        L = len(padded)
        for n in range(1, order + 1):
            table = tables[n - 1]
            for i in range(L - n + 1):
                table[tuple(padded[i:i + n])] += 1
    return NgramCounts(order, [dict(t) for t in tables])


@dataclass(frozen=True)
class PruneScheme:
    """Per-order count thresholds; an n-gram is dropped iff its count is at
    or below the threshold for its order. The last value extends to higher
    orders; unigrams are never pruned (threshold 0)."""

    thresholds: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(int(t) for t in self.thresholds))
        if not self.thresholds:
            raise ValidationError("prune scheme needs at least one threshold")
        if self.thresholds[0] != 0:
            raise ValidationError("unigram threshold must be 0 (unigrams are kept)")
        if any(t < 0 for t in self.thresholds):
            raise ValidationError("thresholds must be non-negative")

    def threshold(self, n: int) -> int:
        return self.thresholds[min(n, len(self.thresholds)) - 1]

    @classmethod
    def parse(cls, text: str) -> "PruneScheme":
        try:
            return cls(tuple(int(p) for p in text.split(",")))
        except ValueError:
            raise ValidationError(f"bad prune scheme {text!r}, expected e.g. 0,1,3,5")


def prune_counts(counts: NgramCounts, scheme: PruneScheme) -> NgramCounts:
    """Drop n-grams at or below their order's threshold; removal cascades so
    every retained n-gram still has its full prefix path retained."""
    out: list[dict] = [dict(counts.tables[0])]
    for n in range(2, counts.order + 1):
        thr = scheme.threshold(n)
        prev = out[n - 2]
        kept = {
            g: c
            for g, c in counts.tables[n - 1].items()
            if c > thr and g[:-1] in prev
        }
        out.append(kept)
    return NgramCounts(counts.order, out)


class NgramModel:
    """Backoff n-gram model: per-order maps from n-gram tuple to
    (log10 probability, log10 backoff weight or None)."""

    def __init__(self, order: int, tables: list[dict]):
        if order < 1 or len(tables) != order:
            raise ValidationError("model tables must cover orders 1..N")
        self.order = order
        self.tables = tables

    def unigrams(self) -> set[str]:
        return {g[0] for g in self.tables[0]}

    def prediction_vocab(self) -> list[str]:
        """Sorted unigram strings that are actual events (everything but BOS)."""
        return sorted(w for w in self.unigrams() if w != BOS)

    def logprob(self, gram: tuple[str, ...]):
        entry = self.tables[len(gram) - 1].get(gram)
        return None if entry is None else entry[0]

    def backoff(self, gram: tuple[str, ...]) -> float:
        entry = self.tables[len(gram) - 1].get(gram)
        if entry is None or entry[1] is None:
            return 0.0
        return entry[1]

    def score(self, context, token: str) -> float:
        """log10 P(token | context) via the standard backoff recursion.
        Contexts longer than order-1 are truncated; tokens without a unigram
        entry fall back to the unknown-token entry."""
        ctx = tuple(context)
        if len(ctx) > self.order - 1:
            ctx = ctx[len(ctx) - (self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            gram = ctx + (token,)
            if len(gram) <= self.order:
                lp = self.logprob(gram)
                if lp is not None:
                    return acc + lp
            if not ctx:
                unk = self.logprob((UNK,))
                if unk is None:
                    raise ValidationError(f"token {token!r} unknown and model has no <unk>")
                return acc + unk
            acc += self.backoff(ctx)
            ctx = ctx[1:]


def _continuation_counts(higher: dict) -> dict:
    """Number of distinct left extensions per (n-1)-gram suffix."""
    cc: dict[tuple, int] = {}
    for gram in higher:
        suffix = gram[1:]
        cc[suffix] = cc.get(suffix, 0) + 1
    return cc


def _discount(table_values, order_n: int) -> float:
    n1 = sum(1 for c in table_values if c == 1)
    n2 = sum(1 for c in table_values if c == 2)
    if n1 == 0 or n2 == 0:
        warnings.warn(
            f"degenerate counts-of-counts at order {order_n} "
            f"(n1={n1}, n2={n2}); falling back to discount 0.5",
            stacklevel=3,
        )
        return 0.5
    return n1 / (n1 + 2.0 * n2)


def estimate_kn(counts: NgramCounts) -> NgramModel:
    """Interpolated Kneser-Ney estimation with one discount per order,
    D_n = n1 / (n1 + 2 n2) from the counts-of-counts of the counts being
    discounted at that order."""
    N = counts.order
    raw = counts.tables
    if not raw[0]:
        raise ValidationError("cannot estimate a model from empty counts")

    support = sorted({g[0] for g in raw[0] if g[0] != BOS} | {EOS, UNK})
    if len(support) < 2:
        raise ValidationError("need at least 2 distinct predictable unigrams")
    p_uniform = 1.0 / len(support)

    # adjusted counts: raw at the top order, continuation below, with the
    # raw-count exception for grams starting with BOS
    adjusted: list[dict] = [None] * (N + 1)
    adjusted[N] = dict(raw[N - 1])
    for n in range(N - 1, 0, -1):
        cont = _continuation_counts(raw[n])
        adj = {}
        for g, c in raw[n - 1].items():
            adj[g] = c if g[0] == BOS else cont.get(g, 0)
        adjusted[n] = adj

    discounts = [None] * (N + 1)
    for n in range(1, N + 1):
        positive = [c for c in adjusted[n].values() if c > 0]
        discounts[n] = _discount(positive, n)

    # probs[n]: gram -> interpolated probability; lambdas[n]: context -> weight
    probs: list[dict] = [None] * (N + 1)
    lambdas: list[dict] = [None] * (N + 1)

    def p_interp(n: int, ctx: tuple, w: str) -> float:
        if n == 0:
            return p_uniform
        p = probs[n].get(ctx + (w,))
        if p is not None:
            return p
        lam = lambdas[n].get(ctx)
        if lam is None:
            lam = 1.0
        return lam * p_interp(n - 1, ctx[1:], w)

    for n in range(1, N + 1):
        probs[n] = {}
        lambdas[n] = {}
        by_context: dict[tuple, list] = {}
        if n == 1:
            grams = [(w,) for w in support]
            for g in grams:
                by_context.setdefault((), []).append(g)
        else:
            for g in raw[n - 1]:
                by_context.setdefault(g[:-1], []).append(g)
        D = discounts[n]
        for ctx in sorted(by_context):
            grams = by_context[ctx]
            adj = adjusted[n]
            base = {g: adj.get(g, 0) for g in grams}
            total = sum(base.values())
            if total == 0:
                # all successors lost their continuation mass (heavy pruning
                # above); fall back to raw counts for this context
                base = {g: raw[n - 1].get(g, 0) for g in grams}
                total = sum(base.values())
            if total == 0:
                continue
            n_pos = sum(1 for c in base.values() if c > 0)
            lam = D * n_pos / total
            lambdas[n][ctx] = lam
            for g in grams:
                c = base[g]
                disc = (c - D) / total if c > 0 else 0.0
                probs[n][g] = disc + lam * p_interp(n - 1, ctx[1:], g[-1])

    # assemble backoff-form tables; interpolation weights become backoffs
    tables: list[dict] = [dict() for _ in range(N)]
    for w in support:
        tables[0][(w,)] = [math.log10(probs[1][(w,)]), None]
    if (BOS,) in raw[0]:
        tables[0][(BOS,)] = [BOS_LOG10, None]
    for n in range(2, N + 1):
        for g in sorted(raw[n - 1]):
            p = probs[n].get(g)
            if p is not None and p > 0:
                tables[n - 1][g] = [math.log10(p), None]
    for n in range(1, N):
        for ctx, lam in lambdas[n + 1].items():
            entry = tables[n - 1].get(ctx)
            if entry is None:
                continue  # context's own gram was not storable
            entry[1] = math.log10(lam) if lam > 0 else None
    return NgramModel(N, [
        {g: (e[0], e[1]) for g, e in table.items()} for table in tables
    ])


def perplexity(model: NgramModel, streams) -> float:
    """10^(-avg log10 prob) over all tokens plus one end-of-sentence event
    per stream. Unknown tokens are scored through the <unk> entry."""
    total_lp = 0.0
    events = 0
    ctx_len = model.order - 1
    for stream in streams:
        ctx = (BOS,) if ctx_len else ()
        for tok in stream:
            tok = str(tok)
            total_lp += model.score(ctx, tok)
            events += 1
            if ctx_len:
                ctx = (ctx + (tok,))[-ctx_len:]
        total_lp += model.score(ctx, EOS)
        events += 1
    if events == 0:
        raise ValidationError("cannot compute perplexity of an empty corpus")
    return 10.0 ** (-total_lp / events)


def write_arpa(model: NgramModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write(f"ngram {n}={len(model.tables[n - 1])}\n")
        for n in range(1, model.order + 1):
            fh.write(f"\n\\{n}-grams:\n")
            for gram in sorted(model.tables[n - 1]):
                logp, bow = model.tables[n - 1][gram]
                line = f"{logp:.7f}\t{' '.join(gram)}"
                if bow is not None:
                    line += f"\t{bow:.7f}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


def read_arpa(path) -> NgramModel:
    declared: dict[int, int] = {}
    tables: dict[int, dict] = {}
    section = None  # None | "data" | order int
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.strip()
            if not line:
                continue
            if line == "\\data\\":
                section = "data"
                continue
            if line == "\\end\\":
                section = "end"
                continue
            if line.startswith("\\") and line.endswith("-grams:"):
                try:
                    n = int(line[1:-len("-grams:")])
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad section header {line!r}")
                if n not in declared:
                    raise FormatError(f"{path}:{lineno}: section {n} not declared in \\data\\")
                section = n
                tables[n] = {}
                continue
            if section == "data":
                if not line.startswith("ngram "):
                    raise FormatError(f"{path}:{lineno}: expected 'ngram N=count'")
                try:
                    n_str, count_str = line[len("ngram "):].split("=")
                    declared[int(n_str)] = int(count_str)
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad ngram declaration {line!r}")
                continue
            if isinstance(section, int):
                parts = line.split()
                n = section
                if len(parts) == n + 1:
                    logp, gram, bow = parts[0], tuple(parts[1:]), None
                elif len(parts) == n + 2:
                    logp, gram, bow = parts[0], tuple(parts[1:-1]), parts[-1]
                else:
                    raise FormatError(
                        f"{path}:{lineno}: expected {n}-gram line, got {len(parts)} fields"
                    )
                try:
                    entry = (float(logp), float(bow) if bow is not None else None)
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad numeric field")
                tables[n][gram] = entry
                continue
            raise FormatError(f"{path}:{lineno}: content outside any section")
    if not declared:
        raise FormatError(f"{path}: missing \\data\\ header")
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        raise FormatError(f"{path}: non-contiguous ngram orders declared")
    for n, declared_count in declared.items():
        actual = len(tables.get(n, {}))
        if actual != declared_count:
            raise FormatError(
                f"{path}: header declares {declared_count} {n}-grams, body has {actual}"
            )
    return NgramModel(order, [tables.get(n, {}) for n in range(1, order + 1)])


def limit_lexicon(word_streams, top_k: int):
    """Keep the top_k most frequent words (ties broken lexicographically);
    everything else is rewritten to the unknown symbol. Returns the rewritten
    streams and the kept-word set."""
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    streams = [[str(w) for w in stream] for stream in word_streams]
    freq = Counter(w for stream in streams for w in stream)
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = frozenset(w for w, _ in ranked[:top_k])
    rewritten = [[w if w in kept else UNK for w in stream] for stream in streams]
    return rewritten, kept
