import pytest
from hypothesis import given, strategies as st

from wifi_hpd.kv import (KVSyntaxError, format_kv, format_value, parse_bool, parse_float_list,
                         parse_kv)


def test_sections_comments_and_lines():
    text = "# header\na = 1\n\n[target]\nb = x y  # trailing\n[target]\nb = 2\n"
    secs = parse_kv(text)
    assert [s.name for s in secs] == [None, "target", "target"]
    assert secs[0].get("a") == "1"
    assert secs[1].get("b") == "x y"
    assert secs[1].line_of("b") == 5
    assert secs[2].lineno == 6


@pytest.mark.parametrize("text, line", [
    ("a = 1\nnot a pair\n", 2),
    ("a = 1\na = 2\n", 2),
    ("[open\n", 1),
    (" = 3\n", 1),
])
def test_syntax_errors_carry_line_numbers(text, line):
    with pytest.raises(KVSyntaxError) as info:
        parse_kv(text)
    assert info.value.lineno == line
    assert f"line {line}" in str(info.value)


def test_bool_parsing():
    assert parse_bool("Yes") and parse_bool("true") and not parse_bool("off")
    with pytest.raises(ValueError):
        parse_bool("maybe")


def test_float_list():
    assert parse_float_list("1, 2.5,") == [1.0, 2.5]


keys = st.from_regex(r"[a-z_][a-z0-9_]{0,10}", fullmatch=True)
values = st.one_of(st.integers(-10**6, 10**6),
                   st.floats(allow_nan=False, allow_infinity=False),
                   st.booleans())


@given(st.dictionaries(keys, values, max_size=8))
def test_format_then_parse_round_trips(items):
    parsed = parse_kv(format_kv(items))[0]
    assert {k: v for k, (v, _) in parsed.items.items()} == {
        k: format_value(v) for k, v in items.items()}
    for k, v in items.items():
        if isinstance(v, float):
            assert float(parsed.get(k)) == v
