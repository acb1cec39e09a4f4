"""Export layer-wise token-embedding stores (LXTS files) from pretrained
transformer checkpoints: isolated-word encodings (ISO) and corpus-sampled
contextual encodings (AOC)."""

from lexstore_extract.export import ExportJob, export_aoc, export_iso

__all__ = ["ExportJob", "export_aoc", "export_iso"]
