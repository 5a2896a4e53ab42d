"""logit_exporter: convert saved acoustic-model output arrays into the
decoding toolkit's lattice and joiner binary formats."""

from .export import ExportJob, ExportResult, export_joiner, export_lattices
from .formats import log_softmax, write_joiner, write_lattice

__version__ = "0.1.0"
