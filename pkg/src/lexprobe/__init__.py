"""lexprobe: static type-level word vectors distilled from layered contextual
encoders, plus the lexical probes that score them.

The pipeline has three stages:

1. a binary token store holds per-word, per-occurrence, per-layer token
   vectors exported from some encoder (see `lexprobe.store`);
2. a distillation step pools subword tokens, averages over contexts and
   combines layers into one static vector per word (`lexprobe.distill`);
3. evaluators score the resulting matrix on similarity, analogy, bilingual
   lexicon induction, cross-lingual retrieval and relation prediction, and
   CKA analyses compare layer geometry (`lexprobe.eval_mono`,
   `lexprobe.eval_xling`, `lexprobe.cka`).

Hot inner loops live in `lexprobe.kernels` and are JIT-compiled with numba;
set LEXPROBE_NUMBA=0 to force the pure-numpy fallback.
"""

from lexprobe.configs import (
    ConfigId,
    ContextMode,
    ExtractionConfig,
    LayerScheme,
    SpecialPolicy,
    parse_config_id,
)
from lexprobe.store import (
    OccurrenceRecord,
    StoreHandle,
    StoreHeader,
    Vocabulary,
    open_store,
    write_store,
)
from lexprobe.distill import TypeEmbeddingMatrix, build_matrix

__version__ = "0.1.0"

__all__ = [
    "ConfigId",
    "ContextMode",
    "ExtractionConfig",
    "LayerScheme",
    "OccurrenceRecord",
    "SpecialPolicy",
    "StoreHandle",
    "StoreHeader",
    "TypeEmbeddingMatrix",
    "Vocabulary",
    "build_matrix",
    "open_store",
    "parse_config_id",
    "write_store",
]
