"""Word error rate and decoding-throughput measurement."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ValidationError

# packed edit-cost fields: (edits << 42) | (substitutions << 21) | insertions,
# so integer min() realizes the lexicographic preference
# (fewest edits, then fewest substitutions, then fewest insertions)
_EDIT = 1 << 42
_SUB = 1 << 21
_FIELD = (1 << 21) - 1


@dataclass(frozen=True)
class EditBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        """Percentage; may exceed 100 when insertions dominate."""
        return 100.0 * self.errors / self.ref_words


def edit_ops(reference, hypothesis) -> EditBreakdown:
    """Minimum-edit alignment with unit costs. Among minimal alignments the
    one with fewer substitutions, then fewer insertions, is reported."""
    ref = list(reference)
    hyp = list(hypothesis)
    if not ref:
        raise ValidationError("WER is undefined for an empty reference")

    prev = [j * (_EDIT + 1) for j in range(len(hyp) + 1)]
    for i, r in enumerate(ref, start=1):
        cur = [i * _EDIT] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            diag = prev[j - 1] + (0 if r == h else _EDIT + _SUB)
            delete = prev[j] + _EDIT
            insert = cur[j - 1] + _EDIT + 1
            cur[j] = min(diag, delete, insert)
        prev = cur

    packed = prev[len(hyp)]
    edits = packed >> 42
    subs = (packed >> 21) & _FIELD
    ins = packed & _FIELD
    return EditBreakdown(
        substitutions=subs,
        deletions=edits - subs - ins,
        insertions=ins,
        ref_words=len(ref),
    )


def corpus_wer(pairs) -> float:
    """Pooled corpus WER as a percentage: 100 * total errors / total
    reference words over all (reference, hypothesis) word-sequence pairs."""
    total_errors = 0
    total_words = 0
    count = 0
    for reference, hypothesis in pairs:
        breakdown = edit_ops(reference, hypothesis)
        total_errors += breakdown.errors
        total_words += breakdown.ref_words
        count += 1
    if count == 0:
        raise ValidationError("cannot score an empty pair list")
    return 100.0 * total_errors / total_words


@dataclass(frozen=True)
class RtfxReport:
    total_audio_s: float
    wall_clock_s: float
    rtfx: float
    batch_size: int
    utterance_count: int

    def to_json_obj(self) -> dict:
        return {
            "total_audio_s": self.total_audio_s,
            "wall_clock_s": self.wall_clock_s,
            "rtfx": self.rtfx,
            "batch_size": self.batch_size,
            "utterance_count": self.utterance_count,
        }


def measure_rtfx(decode_fn, entries, batch_size: int = 64, *, load_fn, workers: int = 1):
    """Time ``decode_fn`` over all manifest entries and report throughput.

    Inputs are materialized with ``load_fn`` before the clock starts, so the
    wall-clock window covers decoding only. Results are returned in manifest
    order regardless of batch size or worker count. Returns
    (RtfxReport, outputs).
    """
    entries = list(entries)
    if not entries:
        raise ValidationError("empty manifest")
    total_audio = 0.0
    for entry in entries:
        if entry.duration is None:
            raise ValidationError(f"utterance {entry.id}: manifest entry lacks a duration")
        total_audio += entry.duration
    payloads = [load_fn(entry) for entry in entries]

    outputs = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            start = time.perf_counter()
            for i in range(0, len(payloads), batch_size):
                outputs.extend(pool.map(decode_fn, payloads[i:i + batch_size]))
            wall = time.perf_counter() - start
    else:
        start = time.perf_counter()
        for i in range(0, len(payloads), batch_size):
            outputs.extend(decode_fn(p) for p in payloads[i:i + batch_size])
        wall = time.perf_counter() - start

    wall = max(wall, 1e-9)
    report = RtfxReport(
        total_audio_s=total_audio,
        wall_clock_s=wall,
        rtfx=total_audio / wall,
        batch_size=batch_size,
        utterance_count=len(entries),
    )
    return report, outputs
