"""
Law catalog: canonical physical laws, mutation chains, and validation.

Each law pairs a canonical expression with three mutation chains of
easy/medium/hard tiers. Tiers are stored both as expression text and as
the recorded edits that produce them, so the whole catalog can be
replayed and checked. Validation enforces the curation guidelines and
well-posedness of every law over its sampling domain.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator, Mapping, Sequence

import numpy as np

from .expr import (
    Constant,
    Literal,
    Node,
    Operator,
    OperatorKind,
    canonicalize,
    compile_tree,
    evaluate_batch,
    iter_nodes,
    node_at,
    node_count,
    parse_expression,
    replace_at,
    serialize,
    variable_names,
)

TIERS = ("easy", "medium", "hard")

EDIT_KINDS = (
    "operator-substitution",
    "exponent-change",
    "constant-reposition",
    "variable-drop",
    "term-coupling",
    "function-wrap",
)

# Exponent payloads for generated mutations; curated chains may carry
# other recorded values.
EXPONENT_PAYLOADS = (0.5, 0.7, 0.9, 1.3, 1.5, 2.0, 2.3, 2.5, 2.6, 3.0, math.e)

_UNARY_KINDS = tuple(k for k in OperatorKind if k.arity == 1)
_BINARY_KINDS = tuple(k for k in OperatorKind if k.arity == 2)


class CatalogError(ValueError):
    """Schema or invariant violation in a catalog file."""


class MutationError(ValueError):
    """An edit does not apply to the addressed site."""


def _payload_number(raw) -> float:
    """Numeric edit payloads; the string \"e\" denotes Euler's number."""
    if raw == "e":
        return math.e
    return float(raw)


@dataclass(frozen=True)
class MutationEdit:
    """One mutation: a kind, a site path, and a kind-specific payload."""

    kind: str
    site: tuple[int, ...]
    payload: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise MutationError(f"unknown edit kind {self.kind!r}")

    @staticmethod
    def from_dict(raw: Mapping[str, object]) -> "MutationEdit":
        return MutationEdit(
            kind=str(raw["kind"]),
            site=tuple(int(i) for i in raw.get("site", ())),
            payload=dict(raw.get("payload", {})),
        )

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "site": list(self.site)}
        if self.payload:
            out["payload"] = dict(self.payload)
        return out


def _substitute_operator(site_node: Node, payload: Mapping) -> Node:
    if not isinstance(site_node, Operator):
        raise MutationError("operator-substitution site must be an operator")
    new_kind = OperatorKind(str(payload["op"]))
    if new_kind.arity != site_node.op.arity:
        raise MutationError(
            f"cannot substitute {site_node.op.value} with "
            f"{new_kind.value}: arity differs"
        )
    return Operator(new_kind, site_node.children)


def _change_exponent(site_node: Node, payload: Mapping) -> Node:
    value = _payload_number(payload["value"])
    if (
        isinstance(site_node, Operator)
        and site_node.op is OperatorKind.POW
        and isinstance(site_node.children[1], Literal)
    ):
        base = site_node.children[0]
        if value == 1.0:
            return base
        return Operator(OperatorKind.POW, (base, Literal(value)))
    if isinstance(site_node, Operator) and site_node.op is OperatorKind.SQRT:
        # The implicit 1/2 exponent is replaced outright.
        child = site_node.children[0]
        if value == 1.0:
            return child
        return Operator(OperatorKind.POW, (child, Literal(value)))
    if value == 1.0:
        raise MutationError("exponent 1 on a non-exponentiated site is a no-op")
    return Operator(OperatorKind.POW, (site_node, Literal(value)))


def _is_sum_shaped(node: Node) -> bool:
    if isinstance(node, Operator) and node.op is OperatorKind.ADD:
        return True
    return (
        isinstance(node, Operator)
        and node.op is OperatorKind.POW
        and isinstance(node.children[0], Operator)
        and node.children[0].op is OperatorKind.ADD
        and isinstance(node.children[1], Literal)
    )


def _reposition_constant(site_node: Node, payload: Mapping) -> Node:
    mode = str(payload.get("mode", ""))
    if mode == "flip-to-mul":
        if not (isinstance(site_node, Operator) and site_node.op is OperatorKind.DIV):
            raise MutationError("flip-to-mul site must be a quotient")
        return Operator(OperatorKind.MUL, site_node.children)
    if mode == "invert":
        if not (isinstance(site_node, Operator) and site_node.op is OperatorKind.DIV):
            raise MutationError("invert site must be a quotient")
        a, b = site_node.children
        return Operator(OperatorKind.DIV, (b, a))
    if mode == "set-literal":
        if not isinstance(site_node, Literal):
            raise MutationError("set-literal site must be a literal")
        return Literal(_payload_number(payload["value"]))
    if mode == "scale":
        return Operator(
            OperatorKind.MUL,
            (Literal(_payload_number(payload["value"])), site_node),
        )
    if mode == "into-first-term":
        # mul(S, X + Y)       -> mul(S, X) + Y
        # mul(S, (X + Y)^n)   -> mul(S, X) + Y^n
        # The factor narrows to the first addend; an exponent no longer
        # covering the factor stays on the residual addend.
        if not (isinstance(site_node, Operator) and site_node.op is OperatorKind.MUL):
            raise MutationError("into-first-term site must be a product")
        a, b = site_node.children
        if _is_sum_shaped(b) and not _is_sum_shaped(a):
            factor, summish = a, b
        elif _is_sum_shaped(a) and not _is_sum_shaped(b):
            factor, summish = b, a
        else:
            raise MutationError(
                "into-first-term needs exactly one sum-shaped operand"
            )
        if isinstance(summish, Operator) and summish.op is OperatorKind.POW:
            x, y = summish.children[0].children
            residual: Node = Operator(OperatorKind.POW, (y, summish.children[1]))
        else:
            x, y = summish.children
            residual = y
        return Operator(
            OperatorKind.ADD,
            (Operator(OperatorKind.MUL, (factor, x)), residual),
        )
    raise MutationError(f"unknown constant-reposition mode {mode!r}")


def _drop_operand(site_node: Node, payload: Mapping) -> Node:
    if not (isinstance(site_node, Operator) and site_node.op.arity == 2):
        raise MutationError("variable-drop site must be a binary operator")
    keep = int(payload["keep"])
    if keep not in (0, 1):
        raise MutationError("variable-drop keep index must be 0 or 1")
    return site_node.children[keep]


def _couple_term(site_node: Node, payload: Mapping) -> Node:
    kind = OperatorKind(str(payload["op"]))
    if kind.arity != 2:
        raise MutationError("term-coupling requires a binary operator")
    partner = parse_expression(str(payload["expr"]))
    if str(payload.get("side", "right")) == "left":
        children = (partner, site_node)
    else:
        children = (site_node, partner)
    return Operator(kind, children)


def _wrap_function(site_node: Node, payload: Mapping) -> Node:
    kind = OperatorKind(str(payload["fn"]))
    if kind.arity != 1:
        raise MutationError("function-wrap requires a unary operator")
    return Operator(kind, (site_node,))


_APPLIERS = {
    "operator-substitution": _substitute_operator,
    "exponent-change": _change_exponent,
    "constant-reposition": _reposition_constant,
    "variable-drop": _drop_operand,
    "term-coupling": _couple_term,
    "function-wrap": _wrap_function,
}


def mutate(tree: Node, edit: MutationEdit) -> Node:
    """Apply one edit, returning a new tree; the input is untouched."""
    try:
        site_node = node_at(tree, edit.site)
    except IndexError as exc:
        raise MutationError(str(exc)) from None
    replacement = _APPLIERS[edit.kind](site_node, edit.payload)
    return replace_at(tree, edit.site, replacement)


def apply_edits(tree: Node, edits: Sequence[MutationEdit]) -> Node:
    for edit in edits:
        tree = mutate(tree, edit)
    return tree


def _literal_values(tree: Node) -> set[float]:
    return {n.value for _, n in iter_nodes(tree) if isinstance(n, Literal)}


def _subtrees(tree: Node) -> list[Node]:
    return [n for _, n in iter_nodes(tree)]


def enumerate_single_edits(
    tree: Node,
    extra_exponents: Sequence[float] = (),
    extra_literals: Sequence[float] = (),
    coupling_payloads: Sequence[Node] = (),
) -> Iterator[MutationEdit]:
    """Every applicable single edit over the given payload pools.

    Used for exhaustive searches (guideline 4) and random generation.
    Term-coupling is unbounded in principle; here its payloads come from
    the supplied pool, which for validation is the set of subtrees of
    the tier under test.
    """
    exponents = sorted(set(EXPONENT_PAYLOADS) | {1.0} | set(extra_exponents))
    literals = sorted({-1.0, 2.0} | set(extra_literals))
    payload_texts = sorted({serialize(p) for p in coupling_payloads})
    for path, node in iter_nodes(tree):
        if isinstance(node, Operator):
            same_arity = _BINARY_KINDS if node.op.arity == 2 else _UNARY_KINDS
            for kind in same_arity:
                if kind is not node.op:
                    yield MutationEdit(
                        "operator-substitution", path, {"op": kind.value}
                    )
            if node.op.arity == 2:
                yield MutationEdit("variable-drop", path, {"keep": 0})
                yield MutationEdit("variable-drop", path, {"keep": 1})
            if node.op is OperatorKind.DIV:
                yield MutationEdit(
                    "constant-reposition", path, {"mode": "flip-to-mul"}
                )
                yield MutationEdit(
                    "constant-reposition", path, {"mode": "invert"}
                )
            if node.op is OperatorKind.MUL:
                try:
                    _reposition_constant(node, {"mode": "into-first-term"})
                except MutationError:
                    pass
                else:
                    yield MutationEdit(
                        "constant-reposition", path, {"mode": "into-first-term"}
                    )
        if isinstance(node, Literal):
            for value in literals:
                if value != node.value:
                    yield MutationEdit(
                        "constant-reposition",
                        path,
                        {"mode": "set-literal", "value": value},
                    )
        for value in literals:
            yield MutationEdit(
                "constant-reposition", path, {"mode": "scale", "value": value}
            )
        for value in exponents:
            try:
                _change_exponent(node, {"value": value})
            except MutationError:
                continue
            yield MutationEdit("exponent-change", path, {"value": value})
        for kind in _UNARY_KINDS:
            yield MutationEdit("function-wrap", path, {"fn": kind.value})
        for text in payload_texts:
            for op_kind in _BINARY_KINDS:
                for side in ("right", "left"):
                    yield MutationEdit(
                        "term-coupling",
                        path,
                        {"op": op_kind.value, "expr": text, "side": side},
                    )


@dataclass(frozen=True)
class ChainVerdict:
    """Outcome of guideline validation: tier trees plus any violations."""

    tiers: tuple[Node, ...]
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _is_reduction(edit: MutationEdit) -> bool:
    """Edits whose whole point is to remove structure.

    The curated chains contain tiers that drop a variable or an exponent
    outright; those are exempt from the complexity guideline, which
    otherwise demands non-decreasing canonical node count.
    """
    if edit.kind == "variable-drop":
        return True
    if edit.kind == "exponent-change":
        return _payload_number(edit.payload["value"]) == 1.0
    return False


def validate_mutation_chain(
    base: Node, edits_per_tier: Sequence[Sequence[MutationEdit]]
) -> ChainVerdict:
    """Check the curation guidelines over one chain.

    1. No new variables may appear.
    2. Canonical node count must not decrease tier over tier, except for
       tiers containing an explicit reduction edit.
    3. No edit may undo the immediately preceding edit.
    4. A two-edit tier must not be reproducible by any single edit.
    """
    violations: list[str] = []
    base_vars = variable_names(base)
    tier_trees: list[Node] = []
    edit_states: list[Node] = [base]  # tree after each individual edit
    current = base
    for tier_index, edits in enumerate(edits_per_tier):
        tier_name = TIERS[tier_index] if tier_index < len(TIERS) else str(tier_index)
        if not 1 <= len(edits) <= 2:
            violations.append(
                f"{tier_name}: {len(edits)} edits (expected 1-2)"
            )
        previous = current
        for edit in edits:
            current = mutate(current, edit)
            edit_states.append(current)
        tier_trees.append(current)
        if not variable_names(current) <= base_vars:
            extra = sorted(variable_names(current) - base_vars)
            violations.append(f"{tier_name}: introduces variables {extra} (rule 1)")
        before = node_count(canonicalize(previous))
        after = node_count(canonicalize(current))
        if after < before and not any(_is_reduction(e) for e in edits):
            violations.append(
                f"{tier_name}: canonical node count {before} -> {after} (rule 2)"
            )
        if len(edits) == 2:
            target = canonicalize(current)
            pool = _subtrees(current) + _subtrees(previous)
            found = None
            for single in enumerate_single_edits(
                previous,
                extra_exponents=_literal_values(current),
                extra_literals=_literal_values(current),
                coupling_payloads=pool,
            ):
                try:
                    candidate = mutate(previous, single)
                except MutationError:
                    continue
                if canonicalize(candidate) == target:
                    found = single
                    break
            if found is not None:
                violations.append(
                    f"{tier_name}: reachable by single edit "
                    f"{found.kind} at {found.site} (rule 4)"
                )
    # Rule 3: applying edit i+1 must not restore the state before edit i.
    for i in range(1, len(edit_states) - 1):
        if canonicalize(edit_states[i + 1]) == canonicalize(edit_states[i - 1]):
            violations.append(
                f"edit {i + 1} reverses edit {i} (rule 3)"
            )
    return ChainVerdict(tiers=tuple(tier_trees), violations=tuple(violations))


@dataclass(frozen=True)
class SamplingDistribution:
    """Per-variable sampling spec: uniform or log-uniform with bounds."""

    kind: str  # "uniform" | "log-uniform"
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "log-uniform"):
            raise CatalogError(f"unknown distribution kind {self.kind!r}")
        if not self.low < self.high:
            raise CatalogError(f"empty range [{self.low}, {self.high}]")
        if self.kind == "log-uniform" and self.low <= 0:
            raise CatalogError("log-uniform range must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        return np.exp(
            rng.uniform(math.log(self.low), math.log(self.high), size=n)
        )


@dataclass(frozen=True)
class WellPosedReport:
    defined_fraction: float
    positive_fraction: float
    minimum: float
    maximum: float

    @property
    def well_posed(self) -> bool:
        return self.defined_fraction == 1.0 and self.positive_fraction == 1.0


def check_well_posed(
    tree: Node,
    sampling: Mapping[str, SamplingDistribution],
    n: int = 10_000,
    rng_seed: int = 0,
) -> WellPosedReport:
    """Sample-and-evaluate sweep over the law's input domain."""
    names = sorted(variable_names(tree))
    missing = [v for v in names if v not in sampling]
    if missing:
        raise CatalogError(f"no sampling distribution for {missing}")
    rng = np.random.default_rng(rng_seed)
    columns = [sampling[name].sample(rng, n) for name in names]
    inputs = np.column_stack(columns) if columns else np.empty((n, 0))
    program = compile_tree(tree, tuple(names))
    values = evaluate_batch(program, inputs)
    defined = np.isfinite(values)
    n_defined = int(defined.sum())
    positive = values[defined] > 0.0
    return WellPosedReport(
        defined_fraction=n_defined / n,
        positive_fraction=(float(positive.mean()) if n_defined else 0.0),
        minimum=float(values[defined].min()) if n_defined else math.nan,
        maximum=float(values[defined].max()) if n_defined else math.nan,
    )


@dataclass(frozen=True)
class MutationChain:
    """Three cumulative tiers derived from a base tree by recorded edits."""

    base: Node
    tiers: Mapping[str, Node]
    edits: Mapping[str, tuple[MutationEdit, ...]]

    def tree(self, tier: str) -> Node:
        return self.tiers[tier]

    def replay(self) -> dict[str, Node]:
        """Re-derive the tier trees from the base and recorded edits."""
        out: dict[str, Node] = {}
        current = self.base
        for tier in TIERS:
            current = apply_edits(current, self.edits[tier])
            out[tier] = current
        return out


@dataclass(frozen=True)
class LawSpec:
    """A canonical law plus sampling table, constants, and three chains."""

    domain: str
    output: str
    canonical: Node
    variables: tuple[str, ...]
    sampling: Mapping[str, SamplingDistribution]
    constants: Mapping[str, Constant]
    chains: tuple[MutationChain, ...]

    def tier_tree(self, chain_index: int, tier: str) -> Node:
        """Tier tree by 0-based chain index and tier name."""
        return self.chains[chain_index].tree(tier)

    def all_shifted(self) -> Iterator[tuple[int, str, Node]]:
        for i, chain in enumerate(self.chains):
            for tier in TIERS:
                yield i, tier, chain.tree(tier)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CatalogError(message)


def _parse_law(raw: Mapping, index: int) -> LawSpec:
    where = f"laws[{index}]"
    for key in ("domain", "output", "canonical", "variables", "constants", "chains"):
        _require(key in raw, f"{where}: missing field {key!r}")
    domain = str(raw["domain"])
    where = f"law {domain!r}"
    constants: dict[str, Constant] = {}
    for c in raw["constants"]:
        constants[str(c["name"])] = Constant(
            name=str(c["name"]),
            default_value=float(c["default"]),
            units_tag=str(c.get("units_tag", "")),
        )
    _require(len(constants) >= 1, f"{where}: needs at least one hidden constant")
    variables: list[str] = []
    sampling: dict[str, SamplingDistribution] = {}
    for v in raw["variables"]:
        name = str(v["name"])
        variables.append(name)
        dist = v["dist"]
        sampling[name] = SamplingDistribution(
            kind=str(dist["kind"]), low=float(dist["low"]), high=float(dist["high"])
        )
    var_set = set(variables)

    def parse_text(text: str, context: str) -> Node:
        try:
            return parse_expression(text, known_vars=var_set, known_consts=constants)
        except ValueError as exc:
            raise CatalogError(f"{where}: {context}: {exc}") from None

    canonical = parse_text(str(raw["canonical"]), "canonical")
    chains: list[MutationChain] = []
    for ci, raw_chain in enumerate(raw["chains"]):
        context = f"chain {ci + 1}"
        if raw_chain.get("base"):
            base = parse_text(str(raw_chain["base"]), f"{context} base")
            _require(
                canonicalize(base) == canonicalize(canonical),
                f"{where}: {context}: base is not a reassociation of the canonical",
            )
        else:
            base = canonical
        tiers: dict[str, Node] = {}
        edits: dict[str, tuple[MutationEdit, ...]] = {}
        for tier in TIERS:
            _require(
                tier in raw_chain["tiers"],
                f"{where}: {context}: missing tier {tier!r}",
            )
            raw_tier = raw_chain["tiers"][tier]
            tiers[tier] = parse_text(str(raw_tier["expression"]), f"{context} {tier}")
            edits[tier] = tuple(
                MutationEdit.from_dict(e) for e in raw_tier["edits"]
            )
        chain = MutationChain(base=base, tiers=tiers, edits=edits)
        replayed = chain.replay()
        for tier in TIERS:
            _require(
                replayed[tier] == tiers[tier],
                f"{where}: {context} {tier}: recorded edits do not reproduce "
                f"the stored expression",
            )
        chains.append(chain)
    _require(len(chains) == 3, f"{where}: expected 3 chains, got {len(chains)}")
    used = variable_names(canonical) | {
        name for c in chains for t in TIERS for name in variable_names(c.tree(t))
    }
    _require(
        used <= var_set,
        f"{where}: expressions use unsampled variables {sorted(used - var_set)}",
    )
    return LawSpec(
        domain=domain,
        output=str(raw["output"]),
        canonical=canonical,
        variables=tuple(variables),
        sampling=sampling,
        constants=constants,
        chains=tuple(chains),
    )


def _default_catalog_bytes() -> bytes:
    return resources.files("lawlab.data").joinpath("catalog.json").read_bytes()


def load_catalog(path: str | None = None) -> list[LawSpec]:
    """Load and validate the law catalog (packaged file by default)."""
    if path is None:
        data = _default_catalog_bytes()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog is not valid JSON: {exc}") from None
    _require(isinstance(raw, dict), "catalog root must be an object")
    _require("schema_version" in raw, "missing schema_version")
    _require(raw["schema_version"] == 1, f"unsupported schema_version {raw['schema_version']!r}")
    _require("laws" in raw and isinstance(raw["laws"], list), "missing laws list")
    laws = [_parse_law(law, i) for i, law in enumerate(raw["laws"])]
    domains = [law.domain for law in laws]
    _require(len(set(domains)) == len(domains), "duplicate domain names")
    return laws


def catalog_content_hash(path: str | None = None) -> str:
    """sha256 of the catalog file; task suites pin this."""
    if path is None:
        data = _default_catalog_bytes()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    return hashlib.sha256(data).hexdigest()


def generate_random_edit(
    tree: Node,
    rng: np.random.Generator,
    max_tries: int = 100,
) -> tuple[MutationEdit, Node]:
    """Draw a random guideline-respecting edit: kind first, then site.

    Retries until the result keeps the variable set and does not shrink
    the canonical node count; raises after max_tries failures.
    """
    sites = [path for path, _ in iter_nodes(tree)]
    coupling_pool = [serialize(n) for _, n in iter_nodes(tree)]
    base_vars = variable_names(tree)
    base_size = node_count(canonicalize(tree))
    for _ in range(max_tries):
        kind = EDIT_KINDS[rng.integers(len(EDIT_KINDS))]
        site = sites[rng.integers(len(sites))]
        if kind == "operator-substitution":
            payload = {"op": (
                _BINARY_KINDS + _UNARY_KINDS
            )[rng.integers(len(_BINARY_KINDS) + len(_UNARY_KINDS))].value}
        elif kind == "exponent-change":
            payload = {"value": EXPONENT_PAYLOADS[rng.integers(len(EXPONENT_PAYLOADS))]}
        elif kind == "constant-reposition":
            modes = ("flip-to-mul", "invert", "set-literal", "scale", "into-first-term")
            mode = modes[rng.integers(len(modes))]
            payload = {"mode": mode}
            if mode in ("set-literal", "scale"):
                payload["value"] = float(rng.choice((-2.0, -1.0, 1.5, 2.0, 3.0)))
        elif kind == "variable-drop":
            payload = {"keep": int(rng.integers(2))}
        elif kind == "term-coupling":
            payload = {
                "op": _BINARY_KINDS[rng.integers(len(_BINARY_KINDS))].value,
                "expr": coupling_pool[rng.integers(len(coupling_pool))],
                "side": ("left", "right")[rng.integers(2)],
            }
        else:
            payload = {"fn": _UNARY_KINDS[rng.integers(len(_UNARY_KINDS))].value}
        edit = MutationEdit(kind, site, payload)
        try:
            mutated = mutate(tree, edit)
        except MutationError:
            continue
        if not variable_names(mutated) <= base_vars:
            continue
        if node_count(canonicalize(mutated)) < base_size and not _is_reduction(edit):
            continue
        if canonicalize(mutated) == canonicalize(tree):
            continue
        return edit, mutated
    raise MutationError(f"no acceptable random edit found in {max_tries} tries")
