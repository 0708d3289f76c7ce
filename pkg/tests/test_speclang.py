import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gf_double_loop, window_semantics
from specleak.speclang import (ALWAYS, ALWAYS_EVENTUALLY, ATOM, EVENTUALLY, EVENTUALLY_ALWAYS, Atom,
                               ProblemInstance, SpecSyntaxError, Temporal, WordTooShort, classify, evaluate,
                               evaluate_batch, parse_spec, parse_specs_file)


def test_parse_always_window():
    f = parse_spec("G[9,10] blue")
    assert f.ast == Temporal("G", 9, 10, Atom("blue"))
    assert f.form == ALWAYS and f.horizon == 10


def test_parse_nested_parameter_set():
    f = parse_spec("G[1,10] F[0,5] blue")
    assert f.form == ALWAYS_EVENTUALLY
    assert f.param_set == {1, 6, 10, 15}
    assert f.horizon == 15


@pytest.mark.parametrize("text", ["F[3,2] a", "F[1,2] G[0,1] F[0,1] a", "G a", "F[1,2]", "F[1,2] !", "U[1,2] a",
                                  "F[1,2] a b", "F[-1,2] a", "F[1 2] a", "!F[1,2] a", "F[0,1] F[0,1] a"])
def test_rejected_inputs(text):
    with pytest.raises(SpecSyntaxError):
        parse_spec(text)


@pytest.mark.parametrize("text, form", [("p", ATOM), ("!p", ATOM), ("F[1,4] p", EVENTUALLY), ("G[0,3] !q", ALWAYS),
                                        ("F[1,2] G[0,3] p", EVENTUALLY_ALWAYS),
                                        ("G[1,2] F[0,3] p", ALWAYS_EVENTUALLY)])
def test_classify(text, form):
    assert classify(parse_spec(text)) == form


def test_negated_literal():
    f = parse_spec("G[0,1] !a")
    assert f.literal == Atom("a", True)
    assert evaluate([set(), set()], f)
    assert not evaluate([set(), {"a"}], f)


def test_evaluate_examples():
    word = [set()] * 9 + [{"blue"}, {"blue"}]
    assert evaluate(word, parse_spec("G[9,10] blue"))
    word = [set()] * 6 + [{"a"}]
    assert not evaluate(word, parse_spec("F[1,5] a"))
    with pytest.raises(WordTooShort):
        evaluate([set()] * 5, parse_spec("F[1,5] a"))


def test_surveillance_formula_against_double_loop():
    rng = np.random.default_rng(7)
    f = parse_spec("G[1,10] F[0,5] p")
    for _ in range(200):
        word = [{p for p in ("p", "q") if rng.random() < 0.3} for _ in range(20)]
        assert evaluate(word, f) == gf_double_loop(word, "p")


def test_specs_file():
    specs, gt = parse_specs_file("# header\n G[29,30] red\n* G[9,10] blue  # secret\n\n")
    assert gt == 1 and [str(s) for s in specs] == ["G[29,30] red", "G[9,10] blue"]
    with pytest.raises(SpecSyntaxError, match="exactly one"):
        parse_specs_file("G[1,2] a\nG[2,3] b\n")
    with pytest.raises(SpecSyntaxError, match="line 2"):
        parse_specs_file("* G[1,2] a\nG[3,2] b\n")


@pytest.mark.parametrize("gamma, beta", [(0.5, 0.8), (1.2, 0.8), (0.9, 0.0), (0.9, 1.0)])
def test_instance_validation(gamma, beta):
    with pytest.raises(ValueError):
        ProblemInstance((parse_spec("F[0,1] a"),), 0, gamma, beta)


formulas = st.one_of(
    st.just("p"),
    st.tuples(st.sampled_from("FG"), st.integers(0, 4), st.integers(0, 3)).map(
        lambda t: f"{t[0]}[{t[1]},{t[1] + t[2]}] p"),
    st.tuples(st.sampled_from(["FG", "GF"]), st.integers(0, 3), st.integers(0, 2), st.integers(0, 2),
              st.integers(0, 2)).map(lambda t: f"{t[0][0]}[{t[1]},{t[1] + t[2]}] {t[0][1]}[{t[3]},{t[3] + t[4]}] p"),
)


@settings(max_examples=200, deadline=None)
@given(text=formulas, neg=st.booleans(), bits=st.lists(st.booleans(), min_size=16, max_size=16))
def test_evaluate_matches_quantifier_expansion(text, neg, bits):
    if neg:
        text = text[:-1] + "!p"
    f = parse_spec(text)
    word = [{"p"} if b else set() for b in bits]
    expected = window_semantics(word, f.form, (f.literal.prop, f.literal.negated), f.windows())
    assert evaluate(word, f) == expected
    batch = evaluate_batch(f, {"p": np.array([bits])})
    assert bool(batch[0]) == expected


@settings(max_examples=100, deadline=None)
@given(text=formulas, bits=st.lists(st.booleans(), min_size=20, max_size=20), cut=st.integers(0, 8))
def test_verdict_stable_under_extension(text, bits, cut):
    f = parse_spec(text)
    word = [{"p"} if b else set() for b in bits]
    short = word[:f.horizon + 1]
    assert evaluate(short, f) == evaluate(word[:f.horizon + 1 + cut], f)


@settings(max_examples=100, deadline=None)
@given(a=st.integers(0, 5), w1=st.integers(0, 5), c=st.integers(0, 5), w2=st.integers(0, 5), op=st.sampled_from(["FG", "GF"]))
def test_nested_horizon_is_sum_of_upper_bounds(a, w1, c, w2, op):
    f = parse_spec(f"{op[0]}[{a},{a + w1}] {op[1]}[{c},{c + w2}] p")
    assert f.horizon == (a + w1) + (c + w2)
    assert f.param_set == {a + c, a + c + w2, a + w1 + c, a + w1 + c + w2}
