"""rodec: decoding and evaluation toolkit for CTC/TDT speech recognition
over precomputed posterior lattices."""

from .errors import (
    DecodeFailure,
    FormatError,
    InfeasibleTargetError,
    RodecError,
    ValidationError,
)
from .lattice import (
    DecodingConfig,
    Hypothesis,
    Lattice,
    ManifestEntry,
    Vocabulary,
    load_lattice,
    make_hypothesis,
    read_manifest,
    save_lattice,
    synth_lattice,
    write_manifest,
)
from .ctc import collapse, ctc_greedy, ctc_loss, ctc_prefix_beam
from .tdt import (
    AlsdConfig,
    JoinerQuery,
    JoinerResponse,
    JoinerTable,
    alsd_decode,
    hybrid_loss,
    load_joiner,
    save_joiner,
    synth_joiner,
    tdt_greedy,
    tdt_loss,
)
from .lm import (
    NgramCounts,
    NgramModel,
    PruneScheme,
    count_ngrams,
    estimate_kn,
    limit_lexicon,
    perplexity,
    prune_counts,
    read_arpa,
    write_arpa,
)
from .textnorm import NormalizerConfig, normalize, num_to_text_ro, replace_numerals
from .metrics import EditBreakdown, RtfxReport, corpus_wer, edit_ops, measure_rtfx

__version__ = "0.1.0"
