"""Unit and property tests for the expression core."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lawlab.expr import (
    Constant,
    Literal,
    Operator,
    OperatorKind,
    ParseError,
    Variable,
    backend_name,
    canonicalize,
    compile_tree,
    constant_leaves,
    iter_nodes,
    evaluate,
    evaluate_batch,
    node_at,
    node_count,
    op,
    parse_expression,
    replace_at,
    serialize,
    structurally_equal,
    validate_tree,
    variable_names,
)


# ---------------------------------------------------------------- parsing

def test_parse_simple_product():
    tree = parse_expression("C * m1 * m2 / r ^ 2")
    assert serialize(tree) == "C * m1 * m2 / r ^ 2"
    assert variable_names(tree) == {"m1", "m2", "r"}
    assert {c.name for c in constant_leaves(tree)} == {"C"}


def test_parse_functions_and_aliases():
    a = parse_expression("sin(x) + ln(y) + arctan(z)")
    b = parse_expression("sin(x) + log(y) + atan(z)")
    assert a == b


def test_double_star_alias():
    assert parse_expression("x ** 2") == parse_expression("x ^ 2")


def test_pow_right_associative():
    tree = parse_expression("x ^ y ^ z")
    assert isinstance(tree, Operator) and tree.op is OperatorKind.POW
    assert isinstance(tree.children[1], Operator)
    assert tree.children[1].op is OperatorKind.POW


def test_negative_exponent():
    tree = parse_expression("x ^ -2.8")
    assert serialize(tree) == "x ^ -2.8"
    again = parse_expression(serialize(tree))
    assert again == tree


def test_unary_minus_folds_literal():
    assert parse_expression("-3.5") == Literal(-3.5)
    tree = parse_expression("-x")
    assert tree == op(OperatorKind.MUL, Literal(-1.0), Variable("x"))


def test_reserved_constants_inferred():
    tree = parse_expression("C1 * x + C2")
    consts = {n.name for _, n in iter_nodes(tree) if isinstance(n, Constant)}
    assert consts == {"C1", "C2"}


def test_known_vars_rejects_stray_identifier():
    with pytest.raises(ParseError) as exc:
        parse_expression("a * b", known_vars={"a"}, known_consts={"C"})
    assert exc.value.position == 4


def test_parse_error_positions():
    with pytest.raises(ParseError) as exc:
        parse_expression("x + @")
    assert exc.value.position == 4
    with pytest.raises(ParseError):
        parse_expression("x + ")
    with pytest.raises(ParseError):
        parse_expression("(x + y")
    with pytest.raises(ParseError):
        parse_expression("")
    with pytest.raises(ParseError):
        parse_expression("x y")


def test_scientific_notation():
    assert parse_expression("6.674e-5") == Literal(6.674e-5)
    assert parse_expression("1e3") == Literal(1000.0)


# ---------------------------------------------------------- serialization

CANONICAL_TEXTS = [
    "C * m1 * m2 / r ^ 2",
    "C * (n1 / n2) * tan(theta1)",
    "x ^ -2.8",
    "C * q1 * q2 / r ^ 2",
    "N0 * exp(-1 * C * t)",
    "sin(x) ^ 2 / cos(x) ^ 2",
    "(x + y) * (x - y)",
    "x - (y - z)",
    "x / (y / z)",
    "x / (y * z)",
    "(x ^ 2) ^ 3",
    "2 ^ (0.5 * t)",
    "exp(x + y) * log(x / y)",
    "C1 * sqrt(C2 / m)",
    "x ^ (y + 1)",
]


@pytest.mark.parametrize("text", CANONICAL_TEXTS)
def test_serialize_parse_round_trip(text):
    tree = parse_expression(text)
    assert parse_expression(serialize(tree)) == tree


def test_serialize_minimal_parens():
    assert serialize(parse_expression("(x * y) + z")) == "x * y + z"
    assert serialize(parse_expression("x * (y ^ 2)")) == "x * y ^ 2"
    assert serialize(parse_expression("(x + y) * z")) == "(x + y) * z"


def test_div_grouping_preserved():
    # A quotient used as a later product operand keeps its parentheses.
    tree = op(
        OperatorKind.MUL,
        op(
            OperatorKind.MUL,
            Constant("C"),
            op(OperatorKind.DIV, Variable("n1"), Variable("n2")),
        ),
        op(OperatorKind.TAN, Variable("theta1")),
    )
    text = serialize(tree)
    assert text == "C * (n1 / n2) * tan(theta1)"
    assert parse_expression(text) == tree


# -------------------------------------------------------------- structure

def test_node_paths():
    tree = parse_expression("x + y * z")
    assert node_at(tree, ()) == tree
    assert node_at(tree, (1, 0)) == Variable("y")
    swapped = replace_at(tree, (1, 0), Variable("w"))
    assert node_at(swapped, (1, 0)) == Variable("w")
    assert node_at(tree, (1, 0)) == Variable("y")
    assert node_count(tree) == 5


def test_arity_enforced():
    with pytest.raises(ValueError):
        Operator(OperatorKind.ADD, (Variable("x"),))
    with pytest.raises(ValueError):
        Operator(OperatorKind.SIN, (Variable("x"), Variable("y")))


def test_validate_tree_conflicting_defaults():
    bad = op(
        OperatorKind.ADD,
        Constant("C", default_value=1.0),
        Constant("C", default_value=2.0),
    )
    with pytest.raises(ValueError):
        validate_tree(bad)
    validate_tree(op(OperatorKind.ADD, Constant("C"), Constant("C")))


# -------------------------------------------------------------- evaluation

def test_evaluate_gravity_form():
    tree = parse_expression("C * m1 * m2 / r ^ 2")
    res = evaluate(tree, {"C": 6.674e-5, "m1": 2.0, "m2": 3.0, "r": 2.0})
    assert res.defined
    assert res.value == pytest.approx(6.674e-5 * 6.0 / 4.0)


def test_constant_default_fallback():
    tree = parse_expression("C * x", known_vars={"x"}, known_consts={"C": Constant("C", 2.5)})
    assert evaluate(tree, {"x": 4.0}).value == pytest.approx(10.0)
    assert evaluate(tree, {"x": 4.0, "C": 1.0}).value == pytest.approx(4.0)


@pytest.mark.parametrize(
    "text,bindings,reason",
    [
        ("1 / x", {"x": 0.0}, "domain-error"),
        ("log(x)", {"x": -1.0}, "domain-error"),
        ("log(x)", {"x": 0.0}, "domain-error"),
        ("sqrt(x)", {"x": -4.0}, "domain-error"),
        ("asin(x)", {"x": 1.5}, "domain-error"),
        ("acos(x)", {"x": -1.001}, "domain-error"),
        ("x ^ 0.5", {"x": -2.0}, "domain-error"),
        ("x ^ -1", {"x": 0.0}, "domain-error"),
        ("exp(x)", {"x": 1e4}, "overflow"),
        ("x ^ x", {"x": 1e300}, "overflow"),
        ("x * x", {"x": 1e200}, "overflow"),
    ],
)
def test_undefined_reasons(text, bindings, reason):
    res = evaluate(parse_expression(text), bindings)
    assert not res.defined
    assert res.reason == reason


def test_negative_integer_power_defined():
    res = evaluate(parse_expression("x ^ 3"), {"x": -2.0})
    assert res.value == pytest.approx(-8.0)


def test_missing_binding_raises():
    from lawlab.expr import MissingBindingError

    with pytest.raises(MissingBindingError):
        evaluate(parse_expression("x + y"), {"x": 1.0})


# ---------------------------------------------------------- canonical form

def test_canonical_commutative_sort():
    a = canonicalize(parse_expression("y + x"))
    b = canonicalize(parse_expression("x + y"))
    assert a == b
    assert serialize(a) == "x + y"


def test_canonical_literals_first():
    tree = canonicalize(parse_expression("x * 3 * y * 2"))
    assert serialize(tree) == "2 * 3 * x * y"


def test_canonical_neutral_removal():
    assert canonicalize(parse_expression("x + 0")) == Variable("x")
    assert canonicalize(parse_expression("1 * x")) == Variable("x")
    assert canonicalize(parse_expression("x ^ 1")) == Variable("x")
    assert canonicalize(parse_expression("0 + 0")) == Literal(0.0)
    assert canonicalize(parse_expression("1 * 1")) == Literal(1.0)


def test_canonical_flattens_associative_chains():
    a = canonicalize(parse_expression("(a * b) * (c * d)"))
    b = canonicalize(parse_expression("a * (b * (c * d))"))
    assert a == b


def test_canonical_preserves_noncommutative():
    tree = parse_expression("x - y")
    assert canonicalize(tree) == tree
    tree = parse_expression("x / y")
    assert canonicalize(tree) == tree
    tree = parse_expression("x ^ y")
    assert canonicalize(tree) == tree


def test_structurally_equal():
    assert structurally_equal(
        parse_expression("C * m1 * m2"), parse_expression("m2 * C * m1")
    )
    assert not structurally_equal(
        parse_expression("x / y"), parse_expression("y / x")
    )


# --------------------------------------------------------- property tests

_var_names = st.sampled_from(["x", "y", "z", "t"])
_leaves = st.one_of(
    _var_names.map(Variable),
    st.floats(
        min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False
    ).map(Literal),
    st.sampled_from(["C", "C1", "C2"]).map(Constant),
)


def _operators(children):
    binary = st.sampled_from(sorted(
        (k for k in OperatorKind if k.arity == 2), key=lambda k: k.value
    ))
    unary = st.sampled_from(sorted(
        (k for k in OperatorKind if k.arity == 1), key=lambda k: k.value
    ))
    return st.one_of(
        st.tuples(binary, children, children).map(
            lambda t: Operator(t[0], (t[1], t[2]))
        ),
        st.tuples(unary, children).map(lambda t: Operator(t[0], (t[1],))),
    )


_trees = st.recursive(_leaves, _operators, max_leaves=12)
_finite = st.floats(
    min_value=-50.0, max_value=50.0, allow_nan=False, allow_infinity=False
)


@given(_trees)
@settings(max_examples=200)
def test_round_trip_property(tree):
    assert parse_expression(serialize(tree)) == tree


@given(_trees)
@settings(max_examples=200)
def test_canonicalize_idempotent(tree):
    once = canonicalize(tree)
    assert canonicalize(once) == once


@given(_trees, _finite, _finite, _finite, _finite)
@settings(max_examples=200)
def test_evaluation_total(tree, x, y, z, t):
    res = evaluate(tree, {"x": x, "y": y, "z": z, "t": t})
    if res.defined:
        assert math.isfinite(res.value)
    else:
        assert res.reason in ("domain-error", "overflow")


@given(_trees, _finite, _finite, _finite, _finite)
@settings(max_examples=150)
def test_canonicalization_preserves_value(tree, x, y, z, t):
    bindings = {"x": x, "y": y, "z": z, "t": t}
    before = evaluate(tree, bindings)
    after = evaluate(canonicalize(tree), bindings)
    if before.defined and after.defined:
        if before.value == 0:
            assert abs(after.value) < 1e-9
        else:
            assert after.value == pytest.approx(before.value, rel=1e-9, abs=1e-12)


# ------------------------------------------------------------- batch eval

def _batch_inputs(n, n_vars, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-5.0, 5.0, size=(n, n_vars))


@given(_trees, st.integers(0, 2 ** 31 - 1))
@settings(max_examples=100, deadline=None)
def test_backends_agree_with_recursive(tree, seed):
    var_order = ("x", "y", "z", "t")
    program = compile_tree(tree, var_order)
    inputs = _batch_inputs(16, len(var_order), seed)
    pure = evaluate_batch(program, inputs, backend="pure")
    for row, got in zip(inputs, pure):
        res = evaluate(tree, dict(zip(var_order, row)))
        if res.defined:
            assert math.isfinite(got)
            assert got == pytest.approx(res.value, rel=1e-12, abs=1e-300)
        else:
            assert math.isnan(got)
    if backend_name() == "compiled":
        fast = evaluate_batch(program, inputs, backend="compiled")
        assert np.array_equal(np.isnan(fast), np.isnan(pure))
        both = ~np.isnan(fast)
        np.testing.assert_allclose(fast[both], pure[both], rtol=1e-12)


def test_const_overrides_rebind_pool():
    tree = parse_expression("C * x + C")
    program = compile_tree(tree, ("x",))
    inputs = np.array([[2.0], [3.0]])
    base = evaluate_batch(program, inputs)
    np.testing.assert_allclose(base, [3.0, 4.0])
    shifted = evaluate_batch(program, inputs, const_overrides={"C": 5.0})
    np.testing.assert_allclose(shifted, [15.0, 20.0])
    # The original pool is untouched.
    np.testing.assert_allclose(evaluate_batch(program, inputs), [3.0, 4.0])


def test_batch_shape_validation():
    program = compile_tree(parse_expression("x + y"), ("x", "y"))
    with pytest.raises(ValueError):
        evaluate_batch(program, np.zeros((4, 3)))


def test_compile_unknown_variable():
    with pytest.raises(KeyError):
        compile_tree(parse_expression("x + q"), ("x",))


def test_nan_stickiness_in_batch():
    # nan ** 0 == 1 must not resurrect an undefined point.
    tree = parse_expression("log(x) ^ 0")
    program = compile_tree(tree, ("x",))
    out = evaluate_batch(program, np.array([[-1.0], [2.0]]), backend="pure")
    assert math.isnan(out[0])
    assert out[1] == pytest.approx(1.0)
    if backend_name() == "compiled":
        out = evaluate_batch(program, np.array([[-1.0], [2.0]]), backend="compiled")
        assert math.isnan(out[0])
