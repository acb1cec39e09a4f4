"""Exception types raised across the package."""


class LexprobeError(Exception):
    """Base class for all lexprobe errors."""


class StoreFormatError(LexprobeError):
    """File is not a token store (bad magic) or has an unsupported version."""


class StoreCorruptionError(LexprobeError):
    """Store header and payload disagree (truncation, bad offsets)."""


class DimensionMismatchError(LexprobeError):
    """Record shape does not match the store header."""


class DuplicateWordError(LexprobeError):
    """The same word was written as more than one record group."""


class WordNotFoundError(LexprobeError, KeyError):
    """Word is missing from a store index or vocabulary."""


class EmptySelectionError(LexprobeError):
    """A pooling policy selected zero tokens of a record."""


class MissingWordsError(LexprobeError):
    """Words unresolvable during matrix distillation, even with back-off."""

    def __init__(self, words):
        self.words = list(words)
        super().__init__(f"{len(self.words)} unresolvable word(s): {self.words[:10]}")


class ZeroVectorError(LexprobeError):
    """Cosine similarity asked for a zero-norm vector."""


class ConstantInputError(LexprobeError):
    """Rank correlation is undefined for a constant score list."""


class UndefinedCkaError(LexprobeError):
    """CKA denominator vanished (all-zero matrix after preprocessing)."""


class InsufficientCoverageError(LexprobeError):
    """Too few dataset items are covered by the vocabulary to evaluate."""


class InsufficientVocabularyError(LexprobeError):
    """A sampling request exceeds the available vocabulary."""


class ConfigParseError(LexprobeError):
    """A configuration id string failed to parse; names the bad segment."""


class GridSpecError(LexprobeError):
    """Grid specification is invalid or references missing paths."""
