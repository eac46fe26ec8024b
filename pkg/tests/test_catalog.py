"""Catalog loading, mutation edits, chain validation, well-posedness."""

import json
import math

import numpy as np
import pytest

from lawlab.catalog import (
    CatalogError,
    MutationEdit,
    MutationError,
    SamplingDistribution,
    TIERS,
    apply_edits,
    catalog_content_hash,
    check_well_posed,
    enumerate_single_edits,
    generate_random_edit,
    load_catalog,
    mutate,
    validate_mutation_chain,
)
from lawlab.expr import (
    canonicalize,
    compile_tree,
    evaluate_batch,
    node_count,
    parse_expression,
    serialize,
    structurally_equal,
    variable_names,
)

from oracles import CANONICAL, ORACLES


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


def _sample_inputs(law, n, seed):
    rng = np.random.default_rng(seed)
    names = sorted(law.sampling)
    cols = [law.sampling[name].sample(rng, n) for name in names]
    return names, np.column_stack(cols)


def _batch(law, tree, names, inputs):
    program = compile_tree(tree, tuple(names))
    return evaluate_batch(program, inputs)


class TestCatalogShape:
    def test_counts(self, catalog):
        assert len(catalog) == 12
        assert sum(len(law.chains) for law in catalog) == 36
        tiers = sum(len(ch.tiers) for law in catalog for ch in law.chains)
        assert tiers == 108

    def test_unique_domains(self, catalog):
        domains = [law.domain for law in catalog]
        assert len(set(domains)) == len(domains)

    def test_every_law_has_hidden_constant(self, catalog):
        for law in catalog:
            assert law.constants
            for const in law.constants.values():
                assert const.default_value != 0.0

    def test_variables_cover_canonical(self, catalog):
        for law in catalog:
            assert variable_names(law.canonical) <= set(law.variables)
            assert set(law.sampling) == set(law.variables)

    def test_content_hash_stable(self):
        assert catalog_content_hash() == catalog_content_hash()


class TestChainReplay:
    def test_edits_reproduce_stored_tiers(self, catalog):
        for law in catalog:
            for chain in law.chains:
                replayed = chain.replay()
                for tier in TIERS:
                    assert structurally_equal(replayed[tier], chain.tiers[tier]), (
                        law.domain,
                        tier,
                    )

    def test_base_matches_canonical_up_to_symmetry(self, catalog):
        for law in catalog:
            for chain in law.chains:
                assert structurally_equal(
                    canonicalize(chain.base), canonicalize(law.canonical)
                )

    def test_no_new_variables_in_any_tier(self, catalog):
        for law in catalog:
            base_vars = variable_names(law.canonical)
            for chain in law.chains:
                for tier in TIERS:
                    assert variable_names(chain.tiers[tier]) <= base_vars

    def test_all_chains_satisfy_design_rules(self, catalog):
        for law in catalog:
            for chain in law.chains:
                edits = [list(chain.edits[tier]) for tier in TIERS]
                verdict = validate_mutation_chain(chain.base, edits)
                assert verdict.ok, (law.domain, verdict.violations)


class TestOracleAgreement:
    def test_canonical_matches_closed_form(self, catalog):
        for law in catalog:
            names, inputs = _sample_inputs(law, 500, seed=7)
            got = _batch(law, law.canonical, names, inputs)
            kwargs = {n: inputs[:, i] for i, n in enumerate(names)}
            kwargs.update(
                {n: c.default_value for n, c in law.constants.items()}
            )
            want = CANONICAL[law.domain](**kwargs)
            np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_every_tier_matches_closed_form(self, catalog):
        for law in catalog:
            names, inputs = _sample_inputs(law, 500, seed=11)
            kwargs = {n: inputs[:, i] for i, n in enumerate(names)}
            kwargs.update(
                {n: c.default_value for n, c in law.constants.items()}
            )
            for idx, chain in enumerate(law.chains):
                for tier in TIERS:
                    got = _batch(law, chain.tiers[tier], names, inputs)
                    want = ORACLES[(law.domain, idx, tier)](**kwargs)
                    np.testing.assert_allclose(
                        got, want, rtol=1e-12, err_msg=f"{law.domain} {idx} {tier}"
                    )

    def test_oracle_table_is_complete(self, catalog):
        keys = {
            (law.domain, idx, tier)
            for law in catalog
            for idx in range(len(law.chains))
            for tier in TIERS
        }
        assert keys == set(ORACLES)
        assert {law.domain for law in catalog} == set(CANONICAL)


class TestWellPosedness:
    def test_all_tiers_defined_and_positive(self, catalog):
        for law in catalog:
            trees = [("canonical", law.canonical)]
            for idx, chain in enumerate(law.chains):
                trees += [(f"{idx}.{t}", chain.tiers[t]) for t in TIERS]
            for label, tree in trees:
                report = check_well_posed(tree, law.sampling, n=4000, rng_seed=3)
                assert report.well_posed, (law.domain, label, report)
                assert report.defined_fraction == 1.0
                assert report.minimum > 0.0

    def test_missing_distribution_raises(self):
        tree = parse_expression("x + y")
        with pytest.raises(CatalogError):
            check_well_posed(tree, {"x": SamplingDistribution("uniform", 0, 1)})

    def test_log_uniform_range(self):
        dist = SamplingDistribution("log-uniform", 1e-3, 1e3)
        draws = dist.sample(np.random.default_rng(0), 5000)
        assert draws.min() >= 1e-3 and draws.max() <= 1e3
        # roughly half the mass on each side of the geometric midpoint
        assert 0.4 < (draws < 1.0).mean() < 0.6


class TestMutationEdits:
    def test_mutate_leaves_input_untouched(self):
        tree = parse_expression("C * x / y ^ 2")
        before = serialize(tree)
        edit = MutationEdit("exponent-change", (1,), {"value": 3})
        out = mutate(tree, edit)
        assert serialize(tree) == before
        assert serialize(out) == "C * x / y ^ 3"

    def test_operator_substitution_arity_guard(self):
        tree = parse_expression("sin(x)")
        with pytest.raises(MutationError):
            mutate(tree, MutationEdit("operator-substitution", (), {"op": "add"}))

    def test_exponent_change_unwraps_unit_power(self):
        tree = parse_expression("x ^ 2 + y")
        out = mutate(tree, MutationEdit("exponent-change", (0,), {"value": 1}))
        assert serialize(out) == "x + y"

    def test_variable_drop(self):
        tree = parse_expression("C * (a * b)")
        out = mutate(tree, MutationEdit("variable-drop", (1,), {"keep": 1}))
        assert serialize(out) == "C * b"

    def test_term_coupling_sides(self):
        tree = parse_expression("x ^ 2")
        left = mutate(
            tree,
            MutationEdit("term-coupling", (), {"op": "div", "expr": "y", "side": "left"}),
        )
        right = mutate(
            tree,
            MutationEdit("term-coupling", (), {"op": "div", "expr": "y", "side": "right"}),
        )
        assert serialize(left) == "y / x ^ 2"
        assert serialize(right) == "x ^ 2 / y"

    def test_function_wrap(self):
        tree = parse_expression("a + b")
        out = mutate(tree, MutationEdit("function-wrap", (0,), {"fn": "sin"}))
        assert serialize(out) == "sin(a) + b"

    def test_reposition_into_first_term(self):
        tree = parse_expression("C * k * (A + dT) ^ 2")
        out = mutate(
            tree, MutationEdit("constant-reposition", (), {"mode": "into-first-term"})
        )
        assert serialize(out) == "C * k * A + dT ^ 2"

    def test_euler_exponent_payload(self):
        tree = parse_expression("x ^ 2")
        out = mutate(tree, MutationEdit("exponent-change", (), {"value": "e"}))
        exponent = out.children[1]
        assert exponent.value == math.e

    def test_edit_dict_round_trip(self):
        edit = MutationEdit("term-coupling", (0, 1), {"op": "mul", "expr": "q1 + q2"})
        assert MutationEdit.from_dict(edit.to_dict()) == edit

    def test_apply_edits_is_sequential(self):
        tree = parse_expression("x * y")
        out = apply_edits(
            tree,
            [
                MutationEdit("exponent-change", (0,), {"value": 2}),
                MutationEdit("operator-substitution", (), {"op": "add"}),
            ],
        )
        assert serialize(out) == "x ^ 2 + y"


class TestChainValidation:
    def test_flags_single_edit_shortcut(self):
        base = parse_expression("C * x / r ^ 2")
        # two edits whose net effect is one exponent change
        edits = [
            [
                MutationEdit("exponent-change", (1,), {"value": 3}),
                MutationEdit("exponent-change", (1,), {"value": 1.5}),
            ]
        ]
        verdict = validate_mutation_chain(base, edits)
        assert not verdict.ok

    def test_flags_undo_pair(self):
        base = parse_expression("C * x / r ^ 2")
        edits = [
            [MutationEdit("operator-substitution", (0,), {"op": "add"})],
            [MutationEdit("operator-substitution", (0,), {"op": "mul"})],
        ]
        verdict = validate_mutation_chain(base, edits)
        assert any("undoes" in v or "rule 3" in v for v in verdict.violations)

    def test_flags_node_count_regression(self):
        base = parse_expression("C * (a * b) / r ^ 2")
        edits = [
            [MutationEdit("exponent-change", (0, 1), {"value": 2})],
            [MutationEdit("variable-drop", (0, 1, 0), {"keep": 0})],
        ]
        verdict = validate_mutation_chain(base, edits)
        # a drop is a sanctioned reduction, so this passes rule 2
        assert all("rule 2" not in v for v in verdict.violations)

    def test_enumeration_includes_expected_edit(self):
        tree = parse_expression("C * x / r ^ 2")
        results = {
            serialize(mutate(tree, e)) for e in enumerate_single_edits(tree)
        }
        assert "C * x / r ^ 3" in results
        assert "C * x * r ^ 2" in results


class TestRandomEdits:
    def test_generated_edits_apply_cleanly(self):
        rng = np.random.default_rng(5)
        tree = parse_expression("C * (m1 * m2) / r ^ 2")
        for _ in range(25):
            edit, out = generate_random_edit(tree, rng)
            assert structurally_equal(out, mutate(tree, edit))
            assert variable_names(out) <= variable_names(tree)
            assert not structurally_equal(canonicalize(out), canonicalize(tree))

    def test_reduction_exemption_respected(self):
        rng = np.random.default_rng(9)
        tree = parse_expression("C * (m1 * m2) / r ^ 2")
        base_count = node_count(tree)
        for _ in range(25):
            edit, out = generate_random_edit(tree, rng)
            if node_count(out) < base_count:
                reduction = edit.kind == "variable-drop" or (
                    edit.kind == "exponent-change"
                    and float(edit.payload.get("value", 0)) == 1.0
                )
                assert reduction


class TestLoadErrors:
    def test_rejects_wrong_schema_version(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schema_version": 99, "laws": []}))
        with pytest.raises(CatalogError):
            load_catalog(path)

    def test_rejects_tampered_tier_expression(self, tmp_path, catalog):
        import importlib.resources as resources

        raw = json.loads(
            resources.files("lawlab.data").joinpath("catalog.json").read_text()
        )
        raw["laws"][0]["chains"][0]["tiers"]["easy"]["expression"] = "C * m1"
        path = tmp_path / "tampered.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(CatalogError):
            load_catalog(path)
