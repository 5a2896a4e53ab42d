"""Boundary adapter: saved per-utterance arrays -> decoder input files.

The adapter never runs a model; it consumes `.npy` arrays someone else
produced, log-softmaxes the rows so the emitted files always pass the
decoder's normalization validation, and writes a matching manifest.
Utterances are processed independently: one bad array is reported and
skipped, the job continues.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .formats import (
    log_softmax,
    read_source_manifest,
    write_joiner,
    write_lattice,
    write_manifest,
)

log = logging.getLogger("logit_exporter")

# training-time duration bounds; files outside are flagged but still exported
MIN_DURATION_S = 0.1
MAX_DURATION_S = 20.0

FRAME_TOLERANCE = 2  # allowed |frames - duration/frame_duration| mismatch


@dataclass
class ExportJob:
    source_manifest: str
    tensor_dir: str
    out_dir: str


@dataclass
class ExportResult:
    exported: list = field(default_factory=list)  # manifest dicts
    errors: list = field(default_factory=list)    # (utterance id, message)
    flagged: list = field(default_factory=list)   # out-of-bounds durations


def _load_array(path) -> np.ndarray:
    return np.load(path, allow_pickle=False)


def export_lattices(job: ExportJob, frame_duration_s: float = 0.04) -> ExportResult:
    """Convert frame x vocab arrays to lattice files plus a manifest.

    Rows are log-softmaxed before writing, so raw logits and already
    normalized log-probabilities are both acceptable inputs. Frame counts
    inconsistent with the manifest duration (beyond +-2 frames) and
    non-finite or misshaped arrays are per-utterance errors.
    """
    entries = read_source_manifest(job.source_manifest)
    os.makedirs(job.out_dir, exist_ok=True)
    result = ExportResult()
    for entry in entries:
        ident = str(entry["id"])
        try:
            array = _load_array(os.path.join(job.tensor_dir, f"{ident}.npy"))
            if array.ndim != 2:
                raise ValueError(f"expected a 2-D array, got shape {array.shape}")
            if not np.isfinite(array).all():
                raise ValueError("array contains NaN or Inf")
            duration = entry.get("duration")
            if duration is not None:
                expected = float(duration) / frame_duration_s
                if abs(array.shape[0] - expected) > FRAME_TOLERANCE:
                    raise ValueError(
                        f"{array.shape[0]} frames inconsistent with duration "
                        f"{duration}s at {frame_duration_s}s/frame"
                    )
                if not MIN_DURATION_S <= float(duration) <= MAX_DURATION_S:
                    result.flagged.append(ident)
                    log.warning(
                        "utterance %s: duration %.2fs outside the supported "
                        "training range [%.1fs, %.1fs]; exporting anyway",
                        ident, float(duration), MIN_DURATION_S, MAX_DURATION_S,
                    )
            else:
                duration = array.shape[0] * frame_duration_s
        except (OSError, ValueError) as exc:
            result.errors.append((ident, str(exc)))
            log.error("utterance %s: %s", ident, exc)
            continue
        fname = f"{ident}.lat"
        write_lattice(
            os.path.join(job.out_dir, fname),
            log_softmax(array),
            frame_duration_s,
            ident,
        )
        result.exported.append({
            "id": ident,
            "lattice": fname,
            "text": str(entry.get("text", "")),
            "duration": float(duration),
        })
    write_manifest(result.exported, os.path.join(job.out_dir, "manifest.jsonl"))
    return result


def export_joiner(job: ExportJob, duration_set, context_order: int = 0,
                  frame_duration_s: float = 0.04) -> ExportResult:
    """Convert per-utterance joint-network arrays to joiner table files.

    Expects ``<id>.tokens.npy`` with shape (T, contexts, V+1) and
    ``<id>.durations.npy`` with shape (T, contexts, |D|); contexts must be
    1 for context order 0 or V+1 for order 1.
    """
    durations = tuple(int(d) for d in duration_set)
    if context_order not in (0, 1):
        raise ValueError("context order must be 0 or 1")
    if sorted(set(durations)) != list(durations) or not durations or max(durations) < 1:
        raise ValueError(f"bad duration set {durations}")
    entries = read_source_manifest(job.source_manifest)
    os.makedirs(job.out_dir, exist_ok=True)
    result = ExportResult()
    for entry in entries:
        ident = str(entry["id"])
        try:
            tok = _load_array(os.path.join(job.tensor_dir, f"{ident}.tokens.npy"))
            dur = _load_array(os.path.join(job.tensor_dir, f"{ident}.durations.npy"))
            if tok.ndim != 3 or dur.ndim != 3:
                raise ValueError("joiner arrays must be 3-D (T, contexts, dist)")
            if not (np.isfinite(tok).all() and np.isfinite(dur).all()):
                raise ValueError("array contains NaN or Inf")
            v = tok.shape[2] - 1
            expected_contexts = 1 if context_order == 0 else 1 + v
            if tok.shape[:2] != dur.shape[:2] or tok.shape[1] != expected_contexts:
                raise ValueError(
                    f"token shape {tok.shape} / duration shape {dur.shape} do not "
                    f"cover {expected_contexts} contexts"
                )
            if dur.shape[2] != len(durations):
                raise ValueError(
                    f"duration array width {dur.shape[2]} != |D|={len(durations)}"
                )
        except (OSError, ValueError) as exc:
            result.errors.append((ident, str(exc)))
            log.error("utterance %s: %s", ident, exc)
            continue
        fname = f"{ident}.tdt"
        write_joiner(
            os.path.join(job.out_dir, fname),
            log_softmax(tok),
            log_softmax(dur),
            durations,
            context_order,
        )
        result.exported.append({
            "id": ident,
            "lattice": fname,
            "text": str(entry.get("text", "")),
            "duration": float(entry.get("duration") or tok.shape[0] * frame_duration_s),
        })
    write_manifest(result.exported, os.path.join(job.out_dir, "joiner_manifest.jsonl"))
    return result
