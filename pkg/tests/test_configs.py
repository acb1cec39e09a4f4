import pytest

from lexprobe.configs import (
    ContextMode,
    LayerScheme,
    SpecialPolicy,
    parse_config_id,
    parse_context_policy,
)
from lexprobe.errors import ConfigParseError


def test_parse_iso_single():
    cid = parse_config_id("mono.iso.nospec.l0")
    assert cid.source == "mono"
    assert cid.config.context == ContextMode.iso()
    assert cid.config.policy is SpecialPolicy.NOSPEC
    assert cid.config.layers == LayerScheme.single(0)


def test_parse_aoc_avg_le():
    cid = parse_config_id("multi.aoc-10.withcls.avg_le8")
    assert cid.source == "multi"
    assert cid.config.context == ContextMode.aoc(10)
    assert cid.config.policy is SpecialPolicy.WITHCLS
    assert cid.config.layers == LayerScheme.avg_le(8)


def test_parse_avg_ge():
    cid = parse_config_id("mono.aoc-100.nospec.avg_ge2")
    assert cid.config.context == ContextMode.aoc(100)
    assert cid.config.layers == LayerScheme.avg_ge(2)


@pytest.mark.parametrize(
    "text",
    [
        "mono.iso.nospec.l0",
        "multi.aoc-10.withcls.avg_le8",
        "mono.aoc-100.nospec.avg_ge2",
        "mono.aoc-3.all.l12",
    ],
)
def test_canonical_round_trip(text):
    assert parse_config_id(text).canonical() == text


def test_parse_is_case_insensitive_but_canonical_is_lower():
    assert parse_config_id("MONO.ISO.NOSPEC.L3").canonical() == "mono.iso.nospec.l3"


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("meno.iso.nospec.l0", "source"),
        ("mono.isoo.nospec.l0", "context"),
        ("mono.aoc-.nospec.l0", "context"),
        ("mono.aoc-0.nospec.l0", "context"),
        ("mono.iso.nospeck.l0", "policy"),
        ("mono.iso.nospec.layer3", "layer"),
        ("mono.iso.nospec", "segment"),
        ("mono.iso.nospec.l0.extra", "segment"),
    ],
)
def test_parse_errors_name_the_bad_segment(text, fragment):
    with pytest.raises(ConfigParseError, match=fragment):
        parse_config_id(text)


def test_layer_range_check_with_known_layer_count():
    parse_config_id("mono.iso.nospec.l12", num_layers=13)
    with pytest.raises(ConfigParseError, match="out of range"):
        parse_config_id("mono.iso.nospec.l13", num_layers=13)
    with pytest.raises(ConfigParseError, match="out of range"):
        parse_config_id("mono.iso.nospec.avg_ge13", num_layers=13)


def test_parse_context_policy_three_segments():
    source, mode, policy = parse_context_policy("mono.aoc-100.nospec")
    assert source == "mono"
    assert mode == ContextMode.aoc(100)
    assert policy is SpecialPolicy.NOSPEC
    with pytest.raises(ConfigParseError):
        parse_context_policy("mono.aoc-100.nospec.l0")
