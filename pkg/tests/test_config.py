import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridpend.config import Config, ConfigError, load_config, parse_config, serialize_config


def test_empty_file_gives_defaults():
    assert parse_config("") == Config()
    assert parse_config("# only a comment\n\n") == Config()
    assert load_config("default") == Config() == load_config(None)


def test_invalid_value_names_field_path():
    with pytest.raises(ConfigError, match=r"plant\.cart_mass"):
        parse_config("plant.cart_mass = -1")
    with pytest.raises(ConfigError, match=r"switch\.t_sw"):
        parse_config("[switch]\nt_sw = -0.5\n")


def test_sections_and_qualified_keys_agree():
    a = parse_config("[plant]\ncart_mass = 1.5\n[ga]\npopulation = 12\n")
    b = parse_config("plant.cart_mass = 1.5\nga.population = 12\n")
    assert a == b
    assert a.plant.cart_mass == 1.5 and a.ga.population == 12


def test_seed_and_tuple_values():
    cfg = parse_config("seed = 7\n[lqg]\nq_diag = 1, 2, 3, 4\n[safe]\np = -0.2, 0.2\n")
    assert cfg.seed == 7
    assert cfg.lqg.q_diag == (1.0, 2.0, 3.0, 4.0)
    assert cfg.safe.lo[0] == -0.2 and cfg.safe.hi[0] == 0.2


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match=r"line 2: unknown key plant\.cart_mas"):
        parse_config("[plant]\ncart_mas = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plants]\n")
    with pytest.raises(ConfigError, match="unknown key 'speed'"):
        parse_config("speed = 1\n")


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[sim]\nts = 0.01\nsubsteps 10\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("[sim\n")
    with pytest.raises(ConfigError, match="sim.substeps"):
        parse_config("sim.substeps = ten\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="line 3: duplicate key plant.cart_mass"):
        parse_config("[plant]\ncart_mass = 1\ncart_mass = 2\n")


def test_default_round_trip():
    text = serialize_config(Config())
    assert parse_config(text) == Config()
    assert "[switch]" in text and "lhc_margin = 4.0" in text


@given(
    st.integers(0, 2**32),
    st.floats(0.2, 5),
    st.floats(0.0, 1.0),
    st.one_of(st.floats(0, 10), st.just(math.inf)),
    st.integers(3, 200),
)
def test_round_trip_property(seed, mass, friction, t_sw, population):
    from dataclasses import replace

    base = Config()
    cfg = replace(
        base,
        seed=seed,
        plant=replace(base.plant, cart_mass=mass, static_friction=friction),
        switch=replace(base.switch, t_sw=t_sw),
        ga=replace(base.ga, population=population),
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.cfg"))
