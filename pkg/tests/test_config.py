import math

import numpy as np
import pytest

from gknockoff import _jsonio, config


def test_parse_and_resolve_defaults():
    raw = config.parse_text("# comment\n\nseed = 3\nJ = 12\nmethods = gknockoff, by\n")
    out = config.resolve(raw, "simulate")
    assert out["seed"] == 3 and out["J"] == 12 and out["methods"] == ["gknockoff", "by"]
    assert out["n"] == 350 and out["q"] == 0.2


def test_unknown_key_is_named():
    with pytest.raises(config.ConfigError, match="bogus"):
        config.resolve({"seed": "1", "bogus": "2"}, "simulate")


def test_bad_value_and_missing_seed():
    with pytest.raises(config.ConfigError, match="'n'"):
        config.resolve({"seed": "1", "n": "many"}, "simulate")
    with pytest.raises(config.ConfigError, match="seed"):
        config.resolve({}, "simulate")


def test_duplicate_key_and_malformed_line():
    with pytest.raises(config.ConfigError, match="duplicate"):
        config.parse_text("a = 1\na = 2\n")
    with pytest.raises(config.ConfigError, match=":1:"):
        config.parse_text("no equals sign\n")


def test_overrides_replace_values():
    out = config.resolve({"seed": "1"}, "simulate", {"seed": 99, "n": None})
    assert out["seed"] == 99 and out["n"] == 350


def test_to_text_round_trip():
    for command, raw in (
        ("simulate", {"seed": "5", "values": "0.09, 0.1", "sweep": "A", "change_locations": "3, 7"}),
        ("detect", {"seed": "1", "response": "y", "exposure": "x", "unpenalized": "z1, z2", "sigma": "0.3"}),
        ("screen", {"seed": "2", "response": "y", "exposure": "*", "bandwidths": "1, 5"}),
    ):
        resolved = config.resolve(raw, command)
        again = config.resolve(config.parse_text(config.to_text(resolved)), command)
        assert again == resolved
        assert config.config_hash(again) == config.config_hash(resolved)


def test_config_hash_changes_with_content():
    a = config.resolve({"seed": "1"}, "simulate")
    b = config.resolve({"seed": "2"}, "simulate")
    assert config.config_hash(a) != config.config_hash(b)
    assert len(config.config_hash(a)) == 64


def test_json_floats_keep_seventeen_digits():
    x = 0.1 + 0.2
    text = _jsonio.dumps({"b": x, "a": [1, None]})
    assert text.index('"a"') < text.index('"b"')
    assert "0.30000000000000004" in text
    assert _jsonio.loads(text)["b"] == x


def test_json_special_values():
    out = _jsonio.loads(_jsonio.dumps({"nan": math.nan, "inf": np.inf, "ninf": -np.inf,
                                       "arr": np.arange(3), "i": np.int64(4)}))
    assert out == {"nan": None, "inf": "inf", "ninf": "-inf", "arr": [0, 1, 2], "i": 4}
