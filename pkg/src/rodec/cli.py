"""Command-line interface.

    rodec decode     --manifest m.jsonl --vocab v.txt --strategy ctc-beam --lm lm.arpa
    rodec lm-build   corpus.txt --vocab v.txt --order 6 --prune 0,1,3,5 --out lm.arpa
    rodec lm-ppl     corpus.txt --arpa lm.arpa
    rodec normalize  < raw.txt > clean.txt
    rodec score      --ref manifest.jsonl --hyp transcripts.jsonl
    rodec synth      --vocab v.txt --text sentences.txt --out-dir data/
    rodec bench      --manifest m.jsonl --vocab v.txt --strategy alsd --batch 64

Reports go to stdout as JSON, logs to stderr. Exit codes: 0 success,
1 usage error, 2 data/validation error, 3 decode failure.

Flags are resolved in layers: built-in defaults, then a key=value --config
file, then explicit flags. The fully resolved configuration is logged for
every run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import ctc, lm, metrics, tdt, textnorm
from .errors import DecodeFailure, FormatError, RodecError, ValidationError
from .lattice import (
    DecodingConfig,
    ManifestEntry,
    Vocabulary,
    load_lattice,
    read_manifest,
    save_lattice,
    synth_lattice,
    write_manifest,
)

log = logging.getLogger("rodec")

STRATEGIES = ("ctc-greedy", "ctc-beam", "tdt-greedy", "alsd")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def tokenize_longest_match(text: str, vocab: Vocabulary) -> list[int]:
    """Segment normalized text into vocabulary token indices.

    Each word is prefixed with the boundary marker and greedily matched
    against the longest vocabulary token; characters no token covers map to
    the unknown token (or are skipped with a warning when the vocabulary has
    none)."""
    index = {tok: i for i, tok in enumerate(vocab.tokens)}
    max_len = max(len(tok) for tok in vocab.tokens)
    unk = vocab.unk_index
    out: list[int] = []
    for word in text.split():
        piece = vocab.boundary_marker + word
        pos = 0
        while pos < len(piece):
            match = None
            for length in range(min(max_len, len(piece) - pos), 0, -1):
                candidate = index.get(piece[pos:pos + length])
                if candidate is not None and candidate != vocab.blank_index:
                    match = (candidate, length)
                    break
            if match is None:
                if unk is not None:
                    out.append(unk)
                else:
                    log.warning("character %r not coverable and no <unk> token", piece[pos])
                pos += 1
            else:
                out.append(match[0])
                pos += match[1]
    return out


def _segment_to_strings(word: str, token_set: set, boundary: str, max_len: int) -> list[str]:
    """Longest-match segmentation over bare token strings (for LM pipelines
    that work without a full Vocabulary). Uncovered characters map to <unk>."""
    piece = boundary + word
    out = []
    pos = 0
    while pos < len(piece):
        hit = None
        for length in range(min(max_len, len(piece) - pos), 0, -1):
            cand = piece[pos:pos + length]
            if cand in token_set:
                hit = cand
                break
        if hit is None:
            out.append(lm.UNK)
            pos += 1
        else:
            out.append(hit)
            pos += len(hit)
    return out


# ---------------------------------------------------------------- decode

def _sniff_magic(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


def _resolve(path: str, base: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)


def _load_payload(entry: ManifestEntry, base: str, strategy: str):
    path = _resolve(entry.lattice, base)
    magic = _sniff_magic(path)
    wants_lattice = strategy.startswith("ctc")
    if wants_lattice and magic == tdt.JOINER_MAGIC:
        raise ValidationError(
            f"utterance {entry.id}: strategy {strategy} needs a lattice, "
            f"but {path} is a joiner table"
        )
    if not wants_lattice and magic == b"LATB":
        raise ValidationError(
            f"utterance {entry.id}: strategy {strategy} needs a joiner table, "
            f"but {path} is a lattice"
        )
    return load_lattice(path) if wants_lattice else tdt.load_joiner(path)


def _make_decoder(args, vocab: Vocabulary, model):
    strategy = args.strategy
    if strategy == "ctc-greedy":
        return lambda payload: ctc.ctc_greedy(payload, vocab)
    if strategy == "ctc-beam":
        config = DecodingConfig(
            beam_size=args.beam,
            alpha=args.alpha if model is not None else 0.0,
            beta=args.beta,
            nbest=1,
            lm_eos=args.lm_eos,
        )
        return lambda payload: ctc.ctc_prefix_beam(payload, vocab, config, model)[0]
    if strategy == "tdt-greedy":
        return lambda payload: tdt.tdt_greedy(payload, vocab)
    if strategy == "alsd":
        config = tdt.AlsdConfig(beam_size=args.beam, max_symbols_ratio=args.max_symbols_ratio)
        alpha = args.alpha if model is not None else 0.0
        return lambda payload: tdt.alsd_decode(payload, vocab, config, model, alpha, nbest=1)[0]
    raise _UsageError(f"unknown strategy {strategy}")


def cmd_decode(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    entries = read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    model = lm.read_arpa(args.lm) if args.lm else None
    decoder = _make_decoder(args, vocab, model)
    payloads = [_load_payload(entry, base, args.strategy) for entry in entries]

    def run(item):
        entry, payload = item
        start = time.perf_counter()
        try:
            hyp = decoder(payload)
        except DecodeFailure as exc:
            raise DecodeFailure(f"utterance {entry.id}: {exc}") from exc
        elapsed = time.perf_counter() - start
        return entry, hyp, elapsed

    workers = args.workers or os.cpu_count() or 1
    items = list(zip(entries, payloads))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(item) for item in items]

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for entry, hyp, elapsed in results:
            line = {
                "id": entry.id,
                "text": vocab.decode(hyp.tokens),
                "tokens": [vocab.tokens[i] for i in hyp.tokens],
                "acoustic_score": hyp.acoustic_score,
                "lm_score": hyp.lm_score,
                "length_bonus": hyp.length_bonus,
                "total_score": hyp.total_score,
            }
            if args.timings:
                line["decode_s"] = elapsed
            out.write(json.dumps(line, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ---------------------------------------------------------------- lm build / ppl

def _read_lines(paths) -> list[str]:
    lines = []
    for path in paths:
        if path == "-":
            lines.extend(sys.stdin.read().splitlines())
        else:
            with open(path, encoding="utf-8") as fh:
                lines.extend(fh.read().splitlines())
    return lines


def cmd_lm_build(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    lines = _read_lines(args.corpus)
    if args.no_normalize:
        texts = [ln.strip() for ln in lines]
    else:
        texts = [textnorm.normalize(ln) for ln in lines]
    word_streams = [t.split() for t in texts if t]
    if not word_streams:
        raise ValidationError("corpus is empty after normalization")
    if args.top_k:
        word_streams, kept = lm.limit_lexicon(word_streams, args.top_k)
        log.info("lexicon limited to %d words", len(kept))

    token_set = set(vocab.tokens) - {vocab.blank_token}
    max_len = max(len(t) for t in vocab.tokens)
    streams = []
    for words in word_streams:
        toks: list[str] = []
        for word in words:
            if word == lm.UNK:
                toks.append(lm.UNK)
            else:
                toks.extend(
                    _segment_to_strings(word, token_set, vocab.boundary_marker, max_len)
                )
        streams.append(toks)

    counts = lm.count_ngrams(streams, args.order)
    if args.prune:
        counts = lm.prune_counts(counts, lm.PruneScheme.parse(args.prune))
    model = lm.estimate_kn(counts)
    if args.out:
        lm.write_arpa(model, args.out)
        log.info("wrote %s (%d entries)", args.out, sum(len(t) for t in model.tables))
    else:
        lm.write_arpa(model, "/dev/stdout")
    return 0


def cmd_lm_ppl(args) -> int:
    model = lm.read_arpa(args.arpa)
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
        token_set = set(vocab.tokens) - {vocab.blank_token}
        boundary = vocab.boundary_marker
    else:
        token_set = {t for t in model.unigrams() if t not in (lm.BOS, lm.EOS, lm.UNK)}
        boundary = args.boundary
    max_len = max((len(t) for t in token_set), default=1)
    lines = _read_lines(args.corpus)
    texts = [textnorm.normalize(ln) for ln in lines]
    streams = []
    for text in texts:
        if not text:
            continue
        toks: list[str] = []
        for word in text.split():
            toks.extend(_segment_to_strings(word, token_set, boundary, max_len))
        streams.append(toks)
    if not streams:
        raise ValidationError("corpus is empty after normalization")
    value = lm.perplexity(model, streams)
    tokens = sum(len(s) + 1 for s in streams)
    print(json.dumps({"perplexity": value, "streams": len(streams), "events": tokens}))
    return 0


# ---------------------------------------------------------------- normalize / score

def cmd_normalize(args) -> int:
    config = textnorm.NormalizerConfig(numeral_conversion=not args.keep_numerals)
    for line in sys.stdin:
        sys.stdout.write(textnorm.normalize(line, config) + "\n")
    return 0


def cmd_score(args) -> int:
    refs = read_manifest(args.ref)
    hyp_by_id = {}
    with open(args.hyp, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{args.hyp}:{lineno}: malformed JSON ({exc.msg})")
            hyp_by_id[str(obj["id"])] = str(obj.get("text", ""))

    per_utterance = []
    total_errors = 0
    total_words = 0
    for entry in refs:
        if entry.id not in hyp_by_id:
            raise ValidationError(f"utterance {entry.id}: missing from hypothesis file")
        ref_words = textnorm.normalize(entry.text).split()
        hyp_words = textnorm.normalize(hyp_by_id[entry.id]).split()
        if not ref_words:
            raise ValidationError(f"utterance {entry.id}: empty reference after normalization")
        breakdown = metrics.edit_ops(ref_words, hyp_words)
        total_errors += breakdown.errors
        total_words += breakdown.ref_words
        per_utterance.append({
            "id": entry.id,
            "substitutions": breakdown.substitutions,
            "deletions": breakdown.deletions,
            "insertions": breakdown.insertions,
            "ref_words": breakdown.ref_words,
            "wer": breakdown.wer,
        })
    report = {
        "wer": 100.0 * total_errors / total_words,
        "errors": total_errors,
        "ref_words": total_words,
        "utterances": per_utterance,
    }
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(json.dumps(report, ensure_ascii=False, indent=2) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ---------------------------------------------------------------- synth / bench

def cmd_synth(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    with open(args.text, encoding="utf-8") as fh:
        sentences = [textnorm.normalize(ln) for ln in fh]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ValidationError("no usable sentences in the text file")
    os.makedirs(args.out_dir, exist_ok=True)

    formats = ("lattice", "joiner") if args.format == "both" else (args.format,)
    lat_entries = []
    joi_entries = []
    for i, sentence in enumerate(sentences):
        tokens = tokenize_longest_match(sentence, vocab)
        ident = f"utt-{i:06d}"
        seed = args.seed + i
        if "lattice" in formats:
            lattice = synth_lattice(
                tokens, args.frames_per_token, args.noise, seed, vocab,
                frame_duration_s=args.frame_duration,
                utterance_id=ident, margin=args.margin,
            )
            fname = f"{ident}.lat"
            save_lattice(lattice, os.path.join(args.out_dir, fname))
            lat_entries.append(ManifestEntry(
                id=ident, lattice=fname, text=sentence,
                duration=lattice.audio_duration_s,
            ))
        if "joiner" in formats:
            joiner = tdt.synth_joiner(
                tokens, args.frames_per_token, args.noise, seed, vocab,
                context_order=args.context_order, margin=args.margin,
            )
            fname = f"{ident}.tdt"
            tdt.save_joiner(joiner, os.path.join(args.out_dir, fname))
            joi_entries.append(ManifestEntry(
                id=ident, lattice=fname, text=sentence,
                duration=joiner.num_frames * args.frame_duration,
            ))
    if lat_entries:
        write_manifest(lat_entries, os.path.join(args.out_dir, "manifest.jsonl"))
    if joi_entries:
        write_manifest(joi_entries, os.path.join(args.out_dir, "joiner_manifest.jsonl"))
    log.info("wrote %d utterances to %s", len(sentences), args.out_dir)
    return 0


def cmd_bench(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    entries = read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    model = lm.read_arpa(args.lm) if args.lm else None
    decoder = _make_decoder(args, vocab, model)
    report, _ = metrics.measure_rtfx(
        decoder,
        entries,
        args.batch,
        load_fn=lambda entry: _load_payload(entry, base, args.strategy),
        workers=args.workers or 1,
    )
    obj = report.to_json_obj()
    obj["strategy"] = args.strategy
    print(json.dumps(obj))
    return 0


# ---------------------------------------------------------------- wiring

def _add_decode_flags(p: argparse.ArgumentParser):
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--lm", default=None, help="ARPA language model for shallow fusion")
    p.add_argument("--alpha", type=float, default=0.9, help="LM weight")
    p.add_argument("--beta", type=float, default=2.0, help="per-token length bonus")
    p.add_argument("--beam", type=int, default=32)
    p.add_argument("--max-symbols-ratio", type=float, default=0.3)
    p.add_argument("--lm-eos", action="store_true", help="score </s> at finalization")
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="rodec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a manifest of lattices / joiner tables")
    p.add_argument("--config", default=None, help="key=value defaults file")
    _add_decode_flags(p)
    p.add_argument("--out", default=None, help="transcript JSONL (default stdout)")
    p.add_argument("--timings", action="store_true",
                   help="include per-utterance decode seconds (non-deterministic)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("lm-build", help="normalize, tokenize and estimate an n-gram LM")
    p.add_argument("--config", default=None)
    p.add_argument("corpus", nargs="+", help="text files, '-' for stdin")
    p.add_argument("--vocab", required=True)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--prune", default=None, help="count thresholds, e.g. 0,1,3,5")
    p.add_argument("--top-k", type=int, default=None, help="lexicon frequency cap")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", default=None, help="ARPA output path (default stdout)")
    p.set_defaults(func=cmd_lm_build)

    p = sub.add_parser("lm-ppl", help="perplexity of a corpus under an ARPA model")
    p.add_argument("--config", default=None)
    p.add_argument("corpus", nargs="+")
    p.add_argument("--arpa", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--boundary", default="▁")
    p.set_defaults(func=cmd_lm_ppl)

    p = sub.add_parser("normalize", help="normalize text lines, stdin to stdout")
    p.add_argument("--config", default=None)
    p.add_argument("--keep-numerals", action="store_true")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("score", help="WER of transcript JSONL against a manifest")
    p.add_argument("--config", default=None)
    p.add_argument("--ref", required=True, help="reference manifest JSONL")
    p.add_argument("--hyp", required=True, help="hypothesis transcript JSONL")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="generate synthetic lattices / joiner tables")
    p.add_argument("--config", default=None)
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", required=True, help="one sentence per line")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--frames-per-token", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=float, default=6.0)
    p.add_argument("--frame-duration", type=float, default=0.04)
    p.add_argument("--context-order", type=int, default=0, choices=(0, 1))
    p.add_argument("--format", default="both", choices=("lattice", "joiner", "both"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="measure decoding throughput (RTFx)")
    p.add_argument("--config", default=None)
    _add_decode_flags(p)
    p.add_argument("--batch", type=int, default=64)
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Splice key=value pairs from a --config file right after the subcommand
    so explicit flags still win (argparse keeps the last occurrence)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    path = argv[idx + 1]
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().replace("_", "-")
            value = value.strip()
            if value.lower() == "true":
                tokens.append(f"--{key}")
            elif value.lower() == "false":
                pass  # flags default to off; false is a no-op
            else:
                tokens.extend((f"--{key}", value))
    # insert after the subcommand (first non-flag token)
    for i, tok in enumerate(argv):
        if not tok.startswith("-"):
            return argv[: i + 1] + tokens + argv[i + 1:]
    return argv + tokens


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            force=True,
        )
        resolved = {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func",) and v is not None
        }
        log.info("resolved config: %s", json.dumps(resolved, default=str))
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DecodeFailure as exc:
        print(f"decode failure: {exc}", file=sys.stderr)
        return 3
    except RodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
