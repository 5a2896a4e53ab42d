"""Core domain types: vocabulary, posterior lattices, manifests, hypotheses.

A lattice is a dense T x V matrix of per-frame log-probabilities over the
token vocabulary, which is the only acoustic input every decoder consumes.
All types are immutable after construction and safe to share across threads.

On-disk formats (all integers little-endian):

  lattice:    magic "LATB" | version u16=1 | T u32 | V u32
              | frame_duration_ms f32 | id_len u16 | id (UTF-8)
              | T*V f32 log-probs, row-major
  manifest:   UTF-8 JSON lines, keys "id", "lattice", "text", "duration"
  vocabulary: UTF-8 text, one token per line; header lines
              "#blank=<index>" and "#boundary=<char>"
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

LATTICE_MAGIC = b"LATB"
LATTICE_VERSION = 1
ROW_NORM_TOL = 1e-4

_HEADER = struct.Struct("<4sHIIfH")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered subword inventory with a reserved blank and a word-boundary marker.

    ``boundary_marker`` is the single character prefixing word-initial tokens
    (SentencePiece-style), used to rebuild whitespace when detokenizing.
    """

    tokens: tuple[str, ...]
    blank_index: int
    boundary_marker: str = "▁"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 2:
            raise ValidationError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary tokens must be unique")
        if any(not t for t in self.tokens):
            raise ValidationError("vocabulary tokens must be non-empty")
        if not 0 <= self.blank_index < len(self.tokens):
            raise ValidationError(
                f"blank index {self.blank_index} outside [0, {len(self.tokens)})"
            )
        if len(self.boundary_marker) != 1:
            raise ValidationError("boundary marker must be a single character")
        blank = self.tokens[self.blank_index]
        for i, tok in enumerate(self.tokens):
            if i != self.blank_index and blank in tok:
                raise ValidationError(
                    f"blank token {blank!r} is reserved but occurs inside {tok!r}"
                )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def blank_token(self) -> str:
        return self.tokens[self.blank_index]

    @property
    def unk_index(self) -> int | None:
        try:
            return self.tokens.index("<unk>")
        except ValueError:
            return None

    def decode(self, token_indices) -> str:
        """Detokenize: concatenate token strings, boundary markers become spaces."""
        text = "".join(self.tokens[i] for i in token_indices)
        return " ".join(text.replace(self.boundary_marker, " ").split())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#blank={self.blank_index}\n")
            fh.write(f"#boundary={self.boundary_marker}\n")
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        blank_index = None
        boundary = "▁"
        tokens = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if line.startswith("#blank="):
                    try:
                        blank_index = int(line[len("#blank="):])
                    except ValueError:
                        raise FormatError(f"{path}:{lineno}: bad #blank header")
                elif line.startswith("#boundary="):
                    boundary = line[len("#boundary="):]
                else:
                    tokens.append(line)
        if blank_index is None:
            raise FormatError(f"{path}: missing #blank header")
        return cls(tuple(tokens), blank_index, boundary)


@dataclass(frozen=True)
class Lattice:
    """Per-frame natural-log posterior matrix over the vocabulary."""

    log_probs: np.ndarray  # (T, V) float32
    frame_duration_s: float
    utterance_id: str = ""

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float32)
        if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 1:
            raise ValidationError(f"lattice matrix must be 2-D, got shape {lp.shape}")
        if not np.isfinite(lp).all():
            raise ValidationError("lattice contains NaN or Inf cells")
        _check_rows_normalized(lp, what="lattice row")
        if not self.frame_duration_s > 0:
            raise ValidationError("frame_duration_s must be positive")
        lp.flags.writeable = False
        object.__setattr__(self, "log_probs", lp)

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.log_probs.shape[1]

    @property
    def audio_duration_s(self) -> float:
        return self.num_frames * self.frame_duration_s


def _check_rows_normalized(log_probs: np.ndarray, what: str) -> None:
    # logsumexp per row, stable; rows must be proper distributions
    lp = log_probs.astype(np.float64)
    m = lp.max(axis=1)
    lse = m + np.log(np.exp(lp - m[:, None]).sum(axis=1))
    bad = np.nonzero(np.abs(lse) > ROW_NORM_TOL)[0]
    if bad.size:
        row = int(bad[0])
        raise ValidationError(
            f"{what} {row} is not normalized (logsumexp={lse[row]:.6g})"
        )


def save_lattice(lattice: Lattice, path) -> None:
    ident = lattice.utterance_id.encode("utf-8")
    t, v = lattice.log_probs.shape
    header = _HEADER.pack(
        LATTICE_MAGIC,
        LATTICE_VERSION,
        t,
        v,
        np.float32(lattice.frame_duration_s * 1000.0),
        len(ident),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ident)
        fh.write(np.ascontiguousarray(lattice.log_probs, dtype="<f4").tobytes())


def load_lattice(path) -> Lattice:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated lattice header")
        magic, version, t, v, dur_ms, id_len = _HEADER.unpack(head)
        if magic != LATTICE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {LATTICE_MAGIC!r}")
        if version != LATTICE_VERSION:
            raise FormatError(f"{path}: unsupported lattice version {version}")
        ident = fh.read(id_len).decode("utf-8")
        payload = fh.read(4 * t * v)
        if len(payload) != 4 * t * v:
            raise FormatError(f"{path}: truncated payload, expected {t}x{v} cells")
        log_probs = np.frombuffer(payload, dtype="<f4").reshape(t, v)
    return Lattice(log_probs, float(dur_ms) / 1000.0, ident)


@dataclass(frozen=True)
class ManifestEntry:
    """One utterance in a dataset manifest. ``extra`` keeps unknown JSON keys."""

    id: str
    lattice: str
    text: str = ""
    duration: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        obj = {"id": self.id, "lattice": self.lattice, "text": self.text}
        if self.duration is not None:
            obj["duration"] = self.duration
        for key in sorted(self.extra):
            obj.setdefault(key, self.extra[key])
        return obj


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})")
            if not isinstance(obj, dict) or "id" not in obj:
                raise FormatError(f"{path}:{lineno}: manifest line needs an 'id'")
            ident = str(obj["id"])
            if ident in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate utterance id {ident!r}")
            seen.add(ident)
            duration = obj.get("duration")
            if duration is not None:
                duration = float(duration)
                if not duration > 0:
                    raise ValidationError(
                        f"{path}:{lineno}: duration must be positive, got {duration}"
                    )
            extra = {
                k: v for k, v in obj.items()
                if k not in ("id", "lattice", "text", "duration")
            }
            entries.append(
                ManifestEntry(
                    id=ident,
                    lattice=str(obj.get("lattice", "")),
                    text=str(obj.get("text", "")),
                    duration=duration,
                    extra=extra,
                )
            )
    return entries


def write_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json_obj(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class Hypothesis:
    """Decoded token prefix with its score decomposition.

    ``total_score`` is assembled once as
    ``acoustic_score + alpha * lm_score + length_bonus`` where
    ``length_bonus = beta * len(tokens)``; the identity is exact by
    construction (see :func:`make_hypothesis`).
    """

    tokens: tuple[int, ...]
    acoustic_score: float
    lm_score: float = 0.0
    length_bonus: float = 0.0
    total_score: float = 0.0


def make_hypothesis(tokens, acoustic_score, lm_score=0.0, alpha=0.0, beta=0.0) -> Hypothesis:
    tokens = tuple(tokens)
    length_bonus = beta * len(tokens)
    total = acoustic_score + alpha * lm_score + length_bonus
    return Hypothesis(tokens, acoustic_score, lm_score, length_bonus, total)


@dataclass(frozen=True)
class DecodingConfig:
    """Beam-search knobs. Defaults follow the tuned operating point:
    beam 32, LM weight 0.9, per-token length bonus 2."""

    beam_size: int = 32
    alpha: float = 0.9
    beta: float = 2.0
    nbest: int = 1
    lm_eos: bool = False  # score </s> at finalization (off by default)

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if self.nbest < 1:
            raise ValidationError("nbest must be >= 1")
        if self.nbest > self.beam_size:
            raise ValidationError("nbest cannot exceed beam_size")


def synth_lattice(
    reference,
    frames_per_token: int,
    noise_temperature: float,
    seed: int,
    vocab: Vocabulary,
    *,
    frame_duration_s: float = 0.04,
    utterance_id: str = "synth",
    margin: float = 6.0,
) -> Lattice:
    """Generate a lattice whose noiseless argmax path collapses to ``reference``.

    Each reference token occupies ``frames_per_token`` frames; a single blank
    frame separates consecutive identical tokens so that CTC collapse can
    represent the repeat. Gaussian noise scaled by ``noise_temperature`` is
    added to the logits before renormalizing, so rows stay exact
    distributions at any temperature. Deterministic for a fixed seed.
    """
    if len(vocab) == 0:
        raise ValidationError("empty vocabulary")
    if frames_per_token < 1:
        raise ValidationError("frames_per_token must be >= 1")
    if noise_temperature < 0:
        raise ValidationError("noise_temperature must be >= 0")
    blank = vocab.blank_index
    plan = []
    prev = None
    for tok in reference:
        tok = int(tok)
        if not 0 <= tok < len(vocab):
            raise ValidationError(f"reference token {tok} outside vocabulary")
        if tok == prev:
            plan.append(blank)
        plan.extend([tok] * frames_per_token)
        prev = tok
    if not plan:
        plan = [blank]

    rng = np.random.default_rng(seed)
    logits = np.zeros((len(plan), len(vocab)))
    logits[np.arange(len(plan)), plan] = margin
    if noise_temperature > 0:
        logits += noise_temperature * rng.standard_normal(logits.shape)
    m = logits.max(axis=1, keepdims=True)
    log_probs = logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))
    return Lattice(log_probs.astype(np.float32), frame_duration_s, utterance_id)
