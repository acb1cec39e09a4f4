"""Extraction configurations and their dotted string ids.

A full config id reads `source.context.policy.layers`, e.g.
`mono.aoc-100.nospec.avg_le8`:

    source   mono | multi            which encoder's stores to use
    context  iso | aoc-M             isolated vs averaged over M contexts
    policy   nospec | all | withcls  special-token handling when pooling
    layers   lN | avg_leN | avg_geN  single layer, prefix or suffix average
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from lexprobe.errors import ConfigParseError


class SpecialPolicy(enum.Enum):
    """Which tokens of a record participate in subword averaging."""

    NOSPEC = "nospec"  # content tokens only; CLS and SEP excluded
    ALL = "all"  # content + CLS + SEP
    WITHCLS = "withcls"  # content + CLS; SEP excluded

    @property
    def kernel_code(self) -> int:
        return {"nospec": 0, "all": 1, "withcls": 2}[self.value]


@dataclass(frozen=True)
class ContextMode:
    kind: str  # "iso" | "aoc"
    m: int | None = None  # number of contexts for aoc

    def __post_init__(self):
        if self.kind not in ("iso", "aoc"):
            raise ValueError(f"unknown context kind {self.kind!r}")
        if self.kind == "aoc" and (self.m is None or self.m < 1):
            raise ValueError("aoc requires a positive context count")
        if self.kind == "iso" and self.m is not None:
            raise ValueError("iso takes no context count")

    @classmethod
    def iso(cls) -> "ContextMode":
        return cls("iso")

    @classmethod
    def aoc(cls, m: int) -> "ContextMode":
        return cls("aoc", m)

    def canonical(self) -> str:
        return "iso" if self.kind == "iso" else f"aoc-{self.m}"


@dataclass(frozen=True)
class LayerScheme:
    kind: str  # "single" | "avg_le" | "avg_ge"
    n: int

    def __post_init__(self):
        if self.kind not in ("single", "avg_le", "avg_ge"):
            raise ValueError(f"unknown layer scheme {self.kind!r}")
        if self.n < 0:
            raise ValueError("layer index must be >= 0")

    @classmethod
    def single(cls, n: int) -> "LayerScheme":
        return cls("single", n)

    @classmethod
    def avg_le(cls, n: int) -> "LayerScheme":
        return cls("avg_le", n)

    @classmethod
    def avg_ge(cls, n: int) -> "LayerScheme":
        return cls("avg_ge", n)

    def canonical(self) -> str:
        prefix = {"single": "l", "avg_le": "avg_le", "avg_ge": "avg_ge"}[self.kind]
        return f"{prefix}{self.n}"


@dataclass(frozen=True)
class ExtractionConfig:
    """One point in the extraction grid (source kind excluded)."""

    context: ContextMode
    policy: SpecialPolicy
    layers: LayerScheme


@dataclass(frozen=True)
class ConfigId:
    """A parsed config id: source kind plus the extraction config."""

    source: str  # "mono" | "multi"
    config: ExtractionConfig

    def canonical(self) -> str:
        c = self.config
        return ".".join(
            (self.source, c.context.canonical(), c.policy.value, c.layers.canonical())
        )


_LAYERS_RE = re.compile(r"^(l|avg_le|avg_ge)(\d+)$")
_AOC_RE = re.compile(r"^aoc-(\d+)$")


def _parse_layers(segment: str, num_layers: int | None) -> LayerScheme:
    m = _LAYERS_RE.match(segment)
    if not m:
        raise ConfigParseError(f"bad layer segment {segment!r}")
    kind = {"l": "single", "avg_le": "avg_le", "avg_ge": "avg_ge"}[m.group(1)]
    n = int(m.group(2))
    if num_layers is not None and n >= num_layers:
        raise ConfigParseError(
            f"bad layer segment {segment!r}: index {n} out of range for "
            f"{num_layers} layers"
        )
    return LayerScheme(kind, n)


def parse_context_policy(text: str) -> tuple[str, ContextMode, SpecialPolicy]:
    """Parse a 3-segment id `source.context.policy` (used by CKA commands)."""
    parts = text.strip().lower().split(".")
    if len(parts) != 3:
        raise ConfigParseError(
            f"expected source.context.policy, got {len(parts)} segment(s) in {text!r}"
        )
    source, ctx, pol = parts
    if source not in ("mono", "multi"):
        raise ConfigParseError(f"bad source segment {source!r}")
    if ctx == "iso":
        context = ContextMode.iso()
    else:
        m = _AOC_RE.match(ctx)
        if not m:
            raise ConfigParseError(f"bad context segment {ctx!r}")
        n = int(m.group(1))
        if n < 1:
            raise ConfigParseError(f"bad context segment {ctx!r}: count must be >= 1")
        context = ContextMode.aoc(n)
    try:
        policy = SpecialPolicy(pol)
    except ValueError:
        raise ConfigParseError(f"bad policy segment {pol!r}") from None
    return source, context, policy


def parse_config_id(text: str, num_layers: int | None = None) -> ConfigId:
    """Parse a dotted 4-segment config id; round-trips via `canonical()`.

    When `num_layers` is given, layer indices are range-checked against it.
    """
    parts = text.strip().lower().split(".")
    if len(parts) != 4:
        raise ConfigParseError(
            f"expected source.context.policy.layers, got {len(parts)} "
            f"segment(s) in {text!r}"
        )
    source, context, policy = parse_context_policy(".".join(parts[:3]))
    layers = _parse_layers(parts[3], num_layers)
    return ConfigId(source, ExtractionConfig(context, policy, layers))
