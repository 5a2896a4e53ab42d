"""Standalone writers for the decoding toolkit's on-disk formats.

The exporter talks to the toolkit only through these byte layouts (and the
JSON-lines manifest); it deliberately does not import the toolkit itself.

  lattice: "LATB" | u16 version=1 | u32 T | u32 V | f32 frame_duration_ms
           | u16 id_len | id UTF-8 | T*V f32 log-probs row-major
  joiner:  "TDTJ" | u16 version=1 | u32 T | u32 V | u8 k | u8 |D|
           | |D| u8 durations | per frame, per context: V+1 f32 token
           log-probs then |D| f32 duration log-probs

All integers little-endian; contexts are ordered empty-first, then one per
token when the context order k is 1.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_LATTICE_HEADER = struct.Struct("<4sHIIfH")
_JOINER_HEADER = struct.Struct("<4sHIIBB")


def log_softmax(array: np.ndarray) -> np.ndarray:
    """Row-normalize along the last axis in float64, return float32."""
    a = np.asarray(array, dtype=np.float64)
    m = a.max(axis=-1, keepdims=True)
    out = a - (m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True)))
    return out.astype(np.float32)


def write_lattice(path, log_probs: np.ndarray, frame_duration_s: float, utterance_id: str) -> None:
    lp = np.ascontiguousarray(log_probs, dtype="<f4")
    t, v = lp.shape
    ident = utterance_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_LATTICE_HEADER.pack(
            b"LATB", 1, t, v, np.float32(frame_duration_s * 1000.0), len(ident)
        ))
        fh.write(ident)
        fh.write(lp.tobytes())


def write_joiner(path, token_log_probs, duration_log_probs, durations, context_order: int) -> None:
    tok = np.ascontiguousarray(token_log_probs, dtype="<f4")
    dur = np.ascontiguousarray(duration_log_probs, dtype="<f4")
    t, contexts, vp1 = tok.shape
    v = vp1 - 1
    with open(path, "wb") as fh:
        fh.write(_JOINER_HEADER.pack(b"TDTJ", 1, t, v, context_order, len(durations)))
        fh.write(bytes(int(d) for d in durations))
        for ti in range(t):
            for ci in range(contexts):
                fh.write(tok[ti, ci].tobytes())
                fh.write(dur[ti, ci].tobytes())


def write_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


def read_source_manifest(path) -> list[dict]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})")
            if "id" not in obj:
                raise ValueError(f"{path}:{lineno}: entry lacks an 'id'")
            entries.append(obj)
    return entries
