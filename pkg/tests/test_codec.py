import hashlib
import json

from hypothesis import given
from hypothesis import strategies as st

from iotid.codec import (
    canonical_json,
    canonical_number,
    from_canonical_json,
    sha256,
    sha256_hex,
)

json_values = st.recursive(
    st.none() | st.booleans()
    | st.integers(min_value=-(2 ** 53), max_value=2 ** 53)
    | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=10), children, max_size=4),
    max_leaves=25,
)


@given(json_values)
def test_round_trip(value):
    assert from_canonical_json(canonical_json(value)) == value


@given(json_values)
def test_encoding_is_stable(value):
    assert canonical_json(value) == canonical_json(from_canonical_json(canonical_json(value)))


def test_key_order_never_matters():
    a = canonical_json({"b": 1, "a": {"y": 2, "x": 3}})
    b = canonical_json({"a": {"x": 3, "y": 2}, "b": 1})
    assert a == b == b'{"a":{"x":3,"y":2},"b":1}'


def test_no_insignificant_whitespace():
    assert canonical_json([1, {"k": "v"}]) == b'[1,{"k":"v"}]'


def test_sha256_known_digest():
    # independently verifiable: sha256 of the ASCII bytes "hello world"
    expected = "b94d27b9934d3e08a52e52d7da7dabfac484efe37a5380ee9088f7ace2efcde9"
    assert sha256(b"hello world").hex() == expected
    assert sha256_hex(b"hello world") == expected


@given(st.binary(max_size=64))
def test_sha256_matches_hashlib(data):
    assert sha256(data) == hashlib.sha256(data).digest()


def test_canonical_number_collapses_whole_floats():
    assert canonical_number(42.0) == 42
    assert isinstance(canonical_number(42.0), int)
    assert canonical_number(42.5) == 42.5
    assert canonical_number(7) == 7
    assert canonical_json(canonical_number(42.0)) == b"42"
    assert canonical_json(canonical_number(0.5)) == b"0.5"


def test_canonical_output_parses_with_plain_json():
    data = canonical_json({"temperature": canonical_number(33.0)})
    assert json.loads(data) == {"temperature": 33}
