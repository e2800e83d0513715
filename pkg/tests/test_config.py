import dataclasses
import json

import pytest

from hermes.config import apply_overrides, from_dict, load_json, to_dict
from hermes.errors import ConfigError


@dataclasses.dataclass(frozen=True)
class Inner:
    width: int = 2
    tags: tuple = ()


@dataclasses.dataclass(frozen=True)
class Outer:
    name: str = "x"
    inner: Inner = dataclasses.field(default_factory=Inner)


def test_nested_build_and_round_trip():
    o = from_dict(Outer, {"name": "y", "inner": {"width": 5, "tags": [[1, 2], 3]}})
    assert o == Outer("y", Inner(5, ((1, 2), 3)))
    assert to_dict(o) == {"name": "y", "inner": {"width": 5, "tags": [[1, 2], 3]}}


def test_every_unknown_key_is_reported():
    with pytest.raises(ConfigError) as info:
        from_dict(Outer, {"nme": 1, "inner": {"wdth": 2}})
    assert info.value.messages == ["nme: unknown key", "inner.wdth: unknown key"]


def test_non_object_rejected():
    with pytest.raises(ConfigError, match="inner"):
        from_dict(Outer, {"inner": 3})


def test_overrides_parse_json_values_and_create_paths():
    doc = apply_overrides({"a": {"b": 1}}, ["a.b=2", "a.c=true", "d.e=hello", "f=[1, 2]"])
    assert doc == {"a": {"b": 2, "c": True}, "d": {"e": "hello"}, "f": [1, 2]}


def test_overrides_do_not_mutate_input():
    src = {"a": {"b": 1}}
    apply_overrides(src, ["a.b=7"])
    assert src == {"a": {"b": 1}}


@pytest.mark.parametrize("bad", ["novalue", "=3", "a.b.c=1"])
def test_bad_overrides(bad):
    with pytest.raises(ConfigError):
        apply_overrides({"a": {"b": 1}}, [bad])


def test_load_json_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_json(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_json(p)
    p.write_text(json.dumps({"k": 1}))
    assert load_json(p) == {"k": 1}
