"""Model systems: feed-forward equation pipelines around a hidden target law.

A model wires the hidden target equation together with known assisting
equations. Three settings per law variant:

- vanilla: the model is the target alone.
- simple: the target's output feeds one downstream assisting equation
  (an echo-time measurement), and only that equation's output is
  observable.
- complex: two confounding inputs drive a loss factor that splits the
  target's output into two observable components.

Every non-vanilla template records its inverse map: an expression over
final outputs and model inputs that reconstructs the target's value.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .catalog import (
    CatalogError,
    LawSpec,
    SamplingDistribution,
    TIERS,
    catalog_content_hash,
    load_catalog,
)
from .expr import (
    DOMAIN_ERROR,
    EvalResult,
    Node,
    evaluate,
    parse_expression,
    serialize,
    variable_names,
)

SETTINGS = ("vanilla", "simple", "complex")

#: Sampling used for assisting-equation inputs in seeded checks. Agents
#: choose these freely during a session; the ranges only matter for
#: invertibility and sensitivity probes.
ASSIST_SAMPLING = {
    "L_path": SamplingDistribution("log-uniform", 0.1, 10.0),
    "h1": SamplingDistribution("log-uniform", 0.1, 10.0),
    "h2": SamplingDistribution("log-uniform", 0.1, 10.0),
}


class ModelError(ValueError):
    """Invalid model wiring or misuse of run_model/run_batch."""


class BatchTooLargeError(ModelError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"batch of {size} exceeds the {limit}-set limit")
        self.size = size
        self.limit = limit


@dataclass(frozen=True)
class Equation:
    """One pipeline stage: a named expression writing one output."""

    name: str
    tree: Node
    output_name: str


@dataclass(frozen=True)
class Model:
    """An ordered, strictly feed-forward equation pipeline."""

    inputs: tuple[str, ...]
    equations: tuple[Equation, ...]
    final_outputs: tuple[str, ...]
    target_index: int

    def __post_init__(self):
        available = set(self.inputs)
        produced = []
        for eq in self.equations:
            needed = variable_names(eq.tree)
            extra = needed - available
            if extra:
                raise ModelError(
                    f"equation {eq.name!r} reads undeclared names {sorted(extra)}"
                )
            if eq.output_name in available:
                raise ModelError(f"output {eq.output_name!r} shadows an earlier name")
            available.add(eq.output_name)
            produced.append(eq.output_name)
        missing = set(self.final_outputs) - set(produced)
        if missing:
            raise ModelError(f"final outputs {sorted(missing)} are never produced")
        if not (0 <= self.target_index < len(self.equations)):
            raise ModelError("target_index out of range")
        target_out = self.equations[self.target_index].output_name
        if not any(
            target_out in self._ancestry(name) for name in self.final_outputs
        ):
            raise ModelError("no final output depends on the target equation")

    def _ancestry(self, output_name: str) -> set[str]:
        """All names (inputs and outputs) that feed output_name."""
        by_output = {eq.output_name: eq for eq in self.equations}
        seen: set[str] = set()
        frontier = [output_name]
        while frontier:
            name = frontier.pop()
            if name in seen:
                continue
            seen.add(name)
            eq = by_output.get(name)
            if eq is not None:
                frontier.extend(variable_names(eq.tree))
        return seen

    @property
    def target(self) -> Equation:
        return self.equations[self.target_index]

    @property
    def assisting(self) -> tuple[Equation, ...]:
        return tuple(
            eq for i, eq in enumerate(self.equations) if i != self.target_index
        )

    @property
    def wiring(self) -> tuple[frozenset[str], ...]:
        """Per-equation read set, in pipeline order."""
        return tuple(frozenset(variable_names(eq.tree)) for eq in self.equations)


@dataclass(frozen=True)
class TaskSpec:
    """One benchmark task: a shifted law embedded in a model system."""

    law: LawSpec
    chain_index: int
    tier: str
    setting: str
    model: Model
    assist_disclosure: tuple[str, ...]
    inverse: Node = field(repr=False)

    @property
    def task_id(self) -> str:
        return f"{self.law.domain}.c{self.chain_index}.{self.tier}.{self.setting}"

    @property
    def target_tree(self) -> Node:
        return self.model.target.tree


def _parse_assist(text: str, known: set[str]) -> Node:
    return parse_expression(text, known_vars=known, known_consts=set())


def _build_model(law: LawSpec, tier_tree: Node, setting: str) -> Model:
    out = law.output
    target = Equation("f_target", tier_tree, out)
    law_vars = tuple(law.variables)
    if setting == "vanilla":
        return Model(law_vars, (target,), (out,), 0)
    if setting == "simple":
        known = set(law_vars) | {"L_path", out}
        assist = Equation(
            "f_echo", _parse_assist(f"2 * L_path / {out}", known), "t_obs"
        )
        return Model(law_vars + ("L_path",), (target, assist), ("t_obs",), 0)
    if setting == "complex":
        known = set(law_vars) | {"h1", "h2", out, "t_loss"}
        loss = Equation("f_loss", _parse_assist("h1 * h2", known), "t_loss")
        cond = Equation(
            "f_cond", _parse_assist(f"0.3 * {out} / t_loss", known), "p_cond"
        )
        rad = Equation(
            "f_rad", _parse_assist(f"0.7 * {out} / t_loss", known), "p_rad"
        )
        return Model(
            law_vars + ("h1", "h2"),
            (target, loss, cond, rad),
            ("p_cond", "p_rad"),
            0,
        )
    raise ModelError(f"unknown setting {setting!r}")


def _inverse_expression(law: LawSpec, setting: str) -> Node:
    """Expression over final outputs and model inputs recovering the target."""
    if setting == "vanilla":
        text = law.output
        known = {law.output}
    elif setting == "simple":
        text = "2 * L_path / t_obs"
        known = {"L_path", "t_obs"}
    elif setting == "complex":
        text = "(p_cond + p_rad) * (h1 * h2)"
        known = {"p_cond", "p_rad", "h1", "h2"}
    else:
        raise ModelError(f"unknown setting {setting!r}")
    return parse_expression(text, known_vars=known, known_consts=set())


def _disclosure(model: Model) -> tuple[str, ...]:
    return tuple(
        f"{eq.output_name} = {serialize(eq.tree)}" for eq in model.assisting
    )


def make_task(
    law: LawSpec, chain_index: int, tier: str, setting: str
) -> TaskSpec:
    """Build the shipped task for one (law, chain, tier, setting) cell."""
    if not 1 <= chain_index <= len(law.chains):
        raise ModelError(f"chain_index {chain_index} out of range")
    if tier not in TIERS:
        raise ModelError(f"unknown tier {tier!r}")
    tier_tree = law.chains[chain_index - 1].tiers[tier]
    model = _build_model(law, tier_tree, setting)
    return TaskSpec(
        law=law,
        chain_index=chain_index,
        tier=tier,
        setting=setting,
        model=model,
        assist_disclosure=_disclosure(model),
        inverse=_inverse_expression(law, setting),
    )


def instantiate_model(task: TaskSpec, tier_tree: Node) -> Model:
    """Rebuild the task's model with a different tree in the target slot."""
    slot_inputs = set(task.law.variables)
    extra = variable_names(tier_tree) - slot_inputs
    if extra:
        raise ModelError(
            f"tree uses variables {sorted(extra)} not wired to the target slot"
        )
    return _build_model(task.law, tier_tree, task.setting)


def run_model(
    model: Model, assignment: Mapping[str, float]
) -> dict[str, EvalResult]:
    """Evaluate the pipeline in order; undefined propagates downstream."""
    missing = [name for name in model.inputs if name not in assignment]
    if missing:
        raise ModelError(f"assignment missing inputs {missing}")
    env: dict[str, float] = {name: float(assignment[name]) for name in model.inputs}
    results: dict[str, EvalResult] = {}
    for eq in model.equations:
        needed = variable_names(eq.tree)
        upstream_failure = next(
            (
                results[name]
                for name in needed
                if name in results and not results[name].defined
            ),
            None,
        )
        if upstream_failure is not None:
            results[eq.output_name] = upstream_failure
            continue
        outcome = evaluate(eq.tree, env)
        results[eq.output_name] = outcome
        if outcome.defined:
            env[eq.output_name] = outcome.value
    return {name: results[name] for name in model.final_outputs}


def run_batch(
    model: Model,
    assignments: Sequence[Mapping[str, float]],
    max_sets: int = 20,
) -> list[dict[str, EvalResult]]:
    if not assignments:
        raise ModelError("empty batch")
    if len(assignments) > max_sets:
        raise BatchTooLargeError(len(assignments), max_sets)
    return [run_model(model, a) for a in assignments]


def invert_final_outputs(
    task: TaskSpec,
    assignment: Mapping[str, float],
    outputs: Mapping[str, float],
) -> EvalResult:
    """Apply the recorded inverse map to recover the target's value."""
    env = dict(assignment)
    env.update(outputs)
    needed = variable_names(task.inverse)
    if any(name not in env for name in needed):
        return EvalResult(None, DOMAIN_ERROR)
    return evaluate(task.inverse, {name: float(env[name]) for name in needed})


def task_suite(catalog: Sequence[LawSpec] | None = None) -> list[TaskSpec]:
    """All shipped tasks: 12 domains x 3 chains x 3 tiers x 3 settings."""
    laws = load_catalog() if catalog is None else catalog
    tasks = []
    for law in laws:
        for chain_index in range(1, len(law.chains) + 1):
            for tier in TIERS:
                for setting in SETTINGS:
                    tasks.append(make_task(law, chain_index, tier, setting))
    return tasks


def find_task(task_id: str, catalog: Sequence[LawSpec] | None = None) -> TaskSpec:
    """Resolve an id like ``gravitation.c1.easy.vanilla``."""
    try:
        domain, chain, tier, setting = task_id.split(".")
        chain_index = int(chain.removeprefix("c"))
    except ValueError as exc:
        raise ModelError(f"malformed task id {task_id!r}") from exc
    laws = load_catalog() if catalog is None else catalog
    for law in laws:
        if law.domain == domain:
            if setting not in SETTINGS:
                raise ModelError(f"unknown setting {setting!r}")
            return make_task(law, chain_index, tier, setting)
    raise ModelError(f"unknown domain {domain!r}")


def write_task_suite(path) -> None:
    """Write the suite listing, pinned to the catalog content hash."""
    entries = [
        {
            "task_id": task.task_id,
            "domain": task.law.domain,
            "chain_index": task.chain_index,
            "tier": task.tier,
            "setting": task.setting,
            "inputs": list(task.model.inputs),
            "final_outputs": list(task.model.final_outputs),
        }
        for task in task_suite()
    ]
    payload = {
        "schema_version": 1,
        "catalog_hash": catalog_content_hash(),
        "tasks": entries,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_task_suite(path=None) -> list[TaskSpec]:
    """Load the shipped suite file and instantiate every task.

    Verifies the recorded catalog hash so a stale suite file cannot be
    silently paired with an edited catalog.
    """
    if path is None:
        import importlib.resources as resources

        raw = json.loads(
            resources.files("lawlab.data").joinpath("tasks.json").read_text()
        )
    else:
        with open(path) as fh:
            raw = json.load(fh)
    if raw.get("schema_version") != 1:
        raise CatalogError("unsupported task suite schema")
    if raw.get("catalog_hash") != catalog_content_hash():
        raise CatalogError("task suite does not match the installed catalog")
    return [find_task(entry["task_id"]) for entry in raw["tasks"]]
