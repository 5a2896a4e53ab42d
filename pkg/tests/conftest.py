import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rodec.lattice import Lattice, Vocabulary
from rodec.tdt import JoinerTable


@pytest.fixture
def vocab4():
    # blank first: the usual CTC layout
    return Vocabulary(("<blk>", "a", "b", "c"), 0)


@pytest.fixture
def vocab_tdt():
    # blank last: the transducer layout (joiner blank = V)
    return Vocabulary(("a", "b", "c", "<blk>"), 3)


def random_lattice(rng, T, V, frame_duration_s=0.04, utterance_id="rand"):
    """Dense random posterior lattice with exactly normalized rows."""
    logits = rng.standard_normal((T, V)) * 1.5
    m = logits.max(axis=1, keepdims=True)
    lp = logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))
    return Lattice(lp.astype(np.float32), frame_duration_s, utterance_id)


def random_joiner(rng, T, V, durations, k=0, scale=1.5):
    """Random joiner table with normalized token and duration rows."""
    contexts = 1 if k == 0 else 1 + V

    def normed(shape):
        logits = rng.standard_normal(shape) * scale
        m = logits.max(axis=-1, keepdims=True)
        return (logits - (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))).astype(np.float32)

    return JoinerTable(
        normed((T, contexts, V + 1)),
        normed((T, contexts, len(durations))),
        tuple(durations),
        k,
    )
