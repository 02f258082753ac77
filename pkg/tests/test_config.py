import pytest
from hypothesis import given, settings, strategies as st

from memctl.config import (KEYS, RANGES, ConfigParseError, ConfigValidationError, ControllerConfig,
                           DramTimingConfig, UnknownKeyError, apply_overrides, load_config, parse_config,
                           render_config, validate)


def test_defaults_validate():
    assert validate(ControllerConfig(), DramTimingConfig()).ok


def test_default_derived_geometry():
    cfg = ControllerConfig()
    assert cfg.line_bytes == 64
    assert cfg.num_sets == 1024
    assert cfg.cache_bytes == 256 * 1024


@pytest.mark.parametrize("name,value", [
    ("sched_batch_size", 256),
    ("sched_batch_size", 2),
    ("cache_associativity", 32),
    ("num_pes", 0),
    ("dma_parallel_count", 9),
    ("app_io_data_width", 128),
])
def test_out_of_range_is_reported_by_field(name, value):
    result = validate(ControllerConfig(**{name: value}))
    assert not result.ok
    assert name in result.fields()


def test_override_admits_out_of_range_but_not_structural():
    ok = ControllerConfig(sched_batch_size=512, allow_out_of_range=True)
    assert validate(ok).ok
    bad = ControllerConfig(sched_batch_size=48, allow_out_of_range=True)
    assert "sched_batch_size" in validate(bad).fields()


@pytest.mark.parametrize("changes,field", [
    (dict(cache_line_width=260, allow_out_of_range=True), "cache_line_width"),
    (dict(cache_num_lines=1000, cache_associativity=3), "cache_num_lines"),
    (dict(ctrl_overhead=11), "ctrl_overhead"),
    (dict(enable_cacheline=False, enable_dma=False), "enable_cacheline"),
])
def test_structural_rules(changes, field):
    assert field in validate(ControllerConfig(**changes)).fields()


def test_timing_rules():
    assert "t_cl" in validate(ControllerConfig(), DramTimingConfig(t_cl=0)).fields()
    assert "num_banks" in validate(ControllerConfig(), DramTimingConfig(num_banks=12)).fields()
    too_wide = DramTimingConfig(column_bits=13, row_bits=20)
    assert "address_map" in validate(ControllerConfig(), too_wide).fields()


def test_every_range_boundary_is_inclusive():
    for name, (lo, hi) in RANGES.items():
        for value in (lo, hi):
            changes = {name: value}
            if name == "sched_batch_size":
                assert value & (value - 1) == 0
            if name == "cache_num_lines":
                changes["cache_associativity"] = 1
            if name == "cache_associativity":
                changes["cache_num_lines"] = 4096 if value <= 4096 else value
            assert name not in validate(ControllerConfig(**changes)).fields(), (name, value)


def test_render_parse_round_trip():
    cfg = ControllerConfig(num_pes=16, sched_batch_size=32, enable_dma=False)
    timing = DramTimingConfig(t_cl=14, t_mem=1.25)
    assert parse_config(render_config(cfg, timing)) == (cfg, timing)


def test_rendered_document_is_grouped_by_section():
    text = render_config()
    headers = [line for line in text.splitlines() if line.startswith("# ")]
    assert headers == ["# controller", "# dram", "# cache", "# dma", "# sched"]
    assert "sched.batch_size = 64" in text
    assert "cache.line_width = 512" in text
    assert "dma.parallel_count = 4" in text


def test_comments_blank_lines_and_bases():
    cfg, _ = parse_config("# hello\n\nsched.batch_size = 0x20  # inline\ncontroller.enable_dma = false\n")
    assert cfg.sched_batch_size == 32
    assert cfg.enable_dma is False


def test_unknown_key_names_line():
    with pytest.raises(UnknownKeyError) as exc:
        parse_config("sched.batch_size = 8\nsched.bogus = 1\n")
    assert exc.value.line_no == 2
    assert exc.value.key == "sched.bogus"


@pytest.mark.parametrize("text", ["sched.batch_size 8", "sched.batch_size = eight",
                                  "controller.enable_dma = maybe", "format_version = 7"])
def test_parse_errors_carry_line_number(text):
    with pytest.raises(ConfigParseError) as exc:
        parse_config("# header\n" + text)
    assert exc.value.line_no == 2


def test_load_config_validates():
    with pytest.raises(ConfigValidationError) as exc:
        load_config("sched.batch_size = 512\n")
    assert [v.field for v in exc.value.violations] == ["sched_batch_size"]
    cfg, _ = load_config("sched.batch_size = 512\ncontroller.allow_out_of_range = 1\n")
    assert cfg.sched_batch_size == 512


def test_apply_overrides():
    cfg, timing = apply_overrides(ControllerConfig(), DramTimingConfig(),
                                  [("sched.batch_size", "8"), ("dram.t_rp", "20")])
    assert cfg.sched_batch_size == 8
    assert timing.t_rp == 20


def test_every_field_has_a_key():
    names = {name for _, name in KEYS.values()}
    from dataclasses import fields
    assert {f.name for f in fields(ControllerConfig)} | {f.name for f in fields(DramTimingConfig)} == names


@settings(max_examples=60, deadline=None)
@given(batch=st.sampled_from([4, 8, 16, 32, 64, 128]), pes=st.integers(1, 128),
       ways=st.sampled_from([1, 2, 4, 8, 16]), timeout=st.integers(4, 40))
def test_round_trip_property(batch, pes, ways, timeout):
    cfg = ControllerConfig(sched_batch_size=batch, num_pes=pes, cache_associativity=ways, sched_timeout=timeout)
    assert validate(cfg).ok
    assert load_config(render_config(cfg))[0] == cfg
