import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wozloc.state import (
    DONTCARE_VALUE,
    EMPTY_STATE,
    BeliefState,
    NumericRange,
    Ontology,
    ParseError,
    SerializationError,
    SlotId,
    SlotValue,
    StateDelta,
    StateError,
    ValidationError,
    apply_delta,
    diff_states,
    expand_range,
    parse_state,
    serialize_state,
)

A, C = SlotId("a", "b"), SlotId("c", "d")


def reference_parse(text):
    """Brute-force parser over the quote-delimited token list; last assignment wins."""
    if text.strip() == "null":
        return {}
    parts = text.split('"')
    assert len(parts) % 2 == 1 and not parts[-1].strip()
    out = {}
    for i in range(0, len(parts) - 1, 2):
        key = parts[i].strip()
        assert key.endswith("=")
        words = key[:-1].split()
        out[(words[0], " ".join(words[1:]))] = parts[i + 1].strip()
    return out


def as_plain(state):
    return {(s.domain, s.slot): v.render() for s, v in state.items()}


# serialization

def test_empty_state_is_null():
    assert serialize_state(EMPTY_STATE) == "null"
    assert parse_state("null") == EMPTY_STATE
    assert parse_state("  null \n") == EMPTY_STATE


def test_serialize_example():
    state = BeliefState({SlotId("train", "day"): "thursday", SlotId("train", "departure"): "cambridge"})
    assert serialize_state(state) == 'train day = " thursday " train departure = " cambridge "'


def test_dontcare_rendering():
    state = BeliefState({SlotId("restaurant", "price"): DONTCARE_VALUE})
    assert serialize_state(state) == 'restaurant price = " dontcare "'
    assert parse_state(serialize_state(state))[SlotId("restaurant", "price")] is DONTCARE_VALUE


def test_parse_is_order_insensitive():
    a = parse_state('train departure = " cambridge " train day = " thursday "')
    b = parse_state('train day = " thursday "   train departure = " cambridge "')
    assert a == b
    assert serialize_state(a) == 'train day = " thursday " train departure = " cambridge "'


def test_parse_last_wins_matches_reference():
    text = 'hotel price = " cheap " hotel price = " expensive "'
    assert as_plain(parse_state(text)) == reference_parse(text) == {("hotel", "price"): "expensive"}


def test_multiword_slot_names():
    state = parse_state('restaurant book  people = " 6 "')
    assert SlotId("restaurant", "book people") in state


def test_quote_in_value_is_rejected():
    with pytest.raises(SerializationError):
        serialize_state(BeliefState({A: 'say "hi"'}))


@pytest.mark.parametrize("text,offset", [
    ("garbage", 0),
    ('a b = " x " junk', 12),
    ('a b = " x " c d = "', 12),
    ('é b = " x " ??', len('é b = " x " '.encode())),
    ("", 0),
])
def test_parse_error_reports_byte_offset(text, offset):
    with pytest.raises(ParseError) as e:
        parse_state(text)
    assert e.value.offset == offset


def test_strict_parse_validates(ontology):
    ok = 'train day = " monday "'
    assert parse_state(ok, ontology, strict=True)
    with pytest.raises(ValidationError):
        parse_state('train day = " someday "', ontology, strict=True)
    with pytest.raises(ValidationError):
        parse_state('zoo animal = " lion "', ontology, strict=True)
    # lenient by default
    assert parse_state('zoo animal = " lion "', ontology)


def test_none_is_absence():
    state = BeliefState({A: "x", C: "none"})
    assert C not in state and len(state) == 1
    assert BeliefState({A: ""}) == EMPTY_STATE


def test_value_normalization():
    assert BeliefState({A: " café "}) == BeliefState({A: "café"})
    assert BeliefState({A: "Cheap"}) != BeliefState({A: "cheap"})


def test_slot_id_validation():
    for bad in [("", "x"), ("a=b", "x"), ("a", 'x"'), ("two words", "x"), (" a", "x")]:
        with pytest.raises(StateError):
            SlotId(*bad)
    assert SlotId.parse("hotel-book stay", sep="-") == SlotId("hotel", "book stay")


# deltas

def test_apply_delta_examples():
    assert apply_delta(EMPTY_STATE, StateDelta({A: "x"})) == BeliefState({A: "x"})
    assert apply_delta(BeliefState({A: "x"}), StateDelta(clear={A})) == EMPTY_STATE
    prev = BeliefState({A: "x"})
    assert apply_delta(prev, StateDelta({A: "y", C: "z"})) == BeliefState({A: "y", C: "z"})
    assert prev == BeliefState({A: "x"})


def test_diff_examples():
    assert not diff_states(EMPTY_STATE, EMPTY_STATE)
    assert not diff_states(BeliefState({A: "x"}), BeliefState({A: "x"}))
    d = diff_states(BeliefState({A: "x"}), BeliefState({C: "z"}))
    assert dict(d.set) == {C: SlotValue.regular("z")} and d.clear == {A}


def test_delta_must_be_disjoint():
    with pytest.raises(StateError):
        StateDelta({A: "x"}, clear={A})


# ranges

def test_expand_range_examples():
    r = NumericRange(100, 150)
    assert expand_range(r, 83) == NumericRange(80, 150)
    assert expand_range(r, 120) == r
    assert expand_range(r, 161) == NumericRange(100, 170)


def expand_oracle(low, high, x):
    if low <= x <= high:
        return low, high
    if x < low:
        lo = x
        while lo % 10:
            lo -= 1
        return lo, high
    hi = x
    while hi % 10:
        hi += 1
    return low, hi


def test_expand_range_exhaustive():
    for low, high in [(100, 150), (0, 0), (35, 35), (90, 91)]:
        for x in range(0, 301):
            got = expand_range(NumericRange(low, high), x)
            assert (got.low, got.high) == expand_oracle(low, high, x)
            assert x in got and got.low <= low and got.high >= high


def test_range_parse():
    assert NumericRange.parse("100-150") == NumericRange(100, 150)
    assert NumericRange.parse("100 - 150元") == NumericRange(100, 150)
    assert NumericRange.parse("100~150") == NumericRange(100, 150)
    assert NumericRange.parse("cheap") is None
    assert NumericRange.parse("150-100") is None
    with pytest.raises(StateError):
        NumericRange(5, 1)


# ontology

def test_ontology_invariants():
    with pytest.raises(ValidationError):
        Ontology(("a",), (SlotId("b", "c"),), {})
    with pytest.raises(ValidationError):
        Ontology(("a",), (A,), {A: ()})
    with pytest.raises(ValidationError):
        Ontology(("a",), (A,), {A: ("x", "x")})
    with pytest.raises(ValidationError):
        Ontology(("a",), (A,), {A: (" x",)})


def test_ontology_json_round_trip(ontology):
    again = Ontology.from_json(ontology.to_json())
    assert again == ontology and again.n == ontology.n


# properties

values = st.text(alphabet=st.characters(blacklist_characters='"', blacklist_categories=("Cs", "Cc")), min_size=1,
                 max_size=12).map(str.strip).filter(lambda v: v and v not in ("none",))
names = st.from_regex(r"[a-z]{1,6}", fullmatch=True)
slots = st.builds(SlotId, names, st.lists(names, min_size=1, max_size=3).map(" ".join))
states = st.dictionaries(slots, values, max_size=6).map(BeliefState)


@settings(max_examples=300)
@given(states)
def test_round_trip_property(state):
    text = serialize_state(state)
    assert parse_state(text) == state
    assert as_plain(parse_state(text)) == reference_parse(text)


@given(st.lists(st.tuples(slots, values), max_size=6))
def test_serialization_is_order_independent(pairs):
    assert serialize_state(BeliefState(pairs)) == serialize_state(BeliefState(list(reversed(pairs)))) \
        or len({p[0] for p in pairs}) != len(pairs)


@given(states, states)
def test_delta_soundness(prev, nxt):
    delta = diff_states(prev, nxt)
    assert apply_delta(prev, delta) == nxt
    # minimal: nothing set to its existing value, nothing cleared that stays
    assert all(prev.get(k) != v for k, v in delta.set.items())
    assert all(k not in nxt for k in delta.clear)


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 20_000))
def test_expand_range_contains(a, b, x):
    r = NumericRange(min(a, b), max(a, b))
    got = expand_range(r, x)
    assert x in got and got.low <= r.low and got.high >= r.high
    assert got.low % 10 == 0 or got.low == r.low
    assert got.high % 10 == 0 or got.high == r.high
    assert got.high - max(x, r.high) < 10 and min(x, r.low) - got.low < 10
    assert math.isfinite(got.high)
