"""Constructive baseline agent: isolate, enumerate, probe, fit, submit.

The solver observes the hidden target directly by inverting the known
assisting chain (path inversion), enumerates a finite candidate family,
designs a probe set certified to separate every candidate pair, then
fits each candidate to the probe observations and submits the unique
survivor. In catalog-closure mode the family is the benchmark's own
generative neighborhood, so the target is guaranteed to be a member.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .catalog import EXPONENT_PAYLOADS, LawSpec
from .expr import (
    BINARY_OPERATORS,
    Constant,
    Literal,
    Node,
    Operator,
    OperatorKind,
    UNARY_OPERATORS,
    Variable,
    canonicalize,
    compile_tree,
    evaluate_batch,
    iter_nodes,
    node_count,
    replace_at,
    serialize,
)
from .session import RunExperiment, Session, SubmitFinalLaw, step
from .systems import TaskSpec, invert_final_outputs

NOISELESS_TOL = 1e-8
SEPARATION_TOL = 1e-9
EXPONENT_SNAP_SET = tuple(sorted(set(EXPONENT_PAYLOADS) | {1.0}))
ASSIST_INPUT_VALUE = 1.0


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateStructure:
    structure_id: int
    tree: Node  # free parameters appear as Constant leaves
    param_count: int

    @property
    def param_names(self) -> tuple[str, ...]:
        names = sorted({n.name for _, n in iter_nodes(self.tree)
                        if isinstance(n, Constant)})
        return tuple(names)


@dataclass(frozen=True)
class ProbeSet:
    names: tuple[str, ...]
    points: np.ndarray  # (m, d), rows inside the sampling domain

    @property
    def m(self) -> int:
        return int(self.points.shape[0])


@dataclass
class DiscoveryReport:
    mode: str
    candidate_count: int
    probes_used: int
    rounds_used: int
    residuals: dict[int, float] = field(default_factory=dict)
    submitted: str = ""
    best_residual: float = math.inf
    identified: bool = False


# ---------------------------------------------------------------- oracle


class TargetOracle:
    """Maps target-input points to observations of f_target via the
    session, batching requests to respect per-round set limits."""

    def __init__(self, task: TaskSpec, session: Session):
        self.task = task
        self.session = session
        self.names = tuple(sorted(task.law.variables))
        self._assist = {
            name: ASSIST_INPUT_VALUE
            for name in task.model.inputs
            if name not in task.law.variables
        }

    def query(self, points: np.ndarray) -> np.ndarray:
        """Observe f_target at each row; raises SolverError on budget or
        protocol failures."""
        limit = self.session.config.max_sets_per_round
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], limit):
            chunk = points[start:start + limit]
            assignments = []
            for row in chunk:
                a = dict(zip(self.names, (float(v) for v in row)))
                a.update(self._assist)
                assignments.append(a)
            reply = step(self.session, RunExperiment.of(assignments))
            if reply["type"] != "experiment_output":
                raise SolverError(
                    f"oracle query failed: {reply['payload']['message']}"
                )
            for i, (observed, assignment) in enumerate(
                zip(reply["payload"]["sets"], assignments)
            ):
                z = invert_final_outputs(self.task, assignment, {
                    k: v for k, v in observed.items() if v is not None
                })
                out[start + i] = z.value if z.defined else math.nan
        return out


def isolate_target_oracle(task: TaskSpec, session: Session) -> TargetOracle:
    return TargetOracle(task, session)


# ------------------------------------------------------------ candidates


def _fold_scale(lit: Literal, factor: Node) -> Node:
    if lit.value > 0:
        return factor
    return Operator(OperatorKind.MUL, (Literal(-1.0), factor))


def _freed(tree: Node) -> Node:
    """Normalize a catalog tree into a candidate structure.

    Literals that only rescale a free constant are absorbed into it, so
    parameter-equivalent catalog variants collapse to one structure:
    lit * (C-bearing factor) -> factor, and C ^ lit -> C. Absorption is
    sound only when the constant occurs once in the whole tree; a second
    occurrence could not follow the rescale.
    """
    counts: dict[str, int] = {}
    for _, node in iter_nodes(tree):
        if isinstance(node, Constant):
            counts[node.name] = counts.get(node.name, 0) + 1

    def absorbable(node: Node) -> bool:
        """True for C (unique in the tree), or a product or quotient
        chain with such a constant as a direct factor."""
        if isinstance(node, Constant):
            return counts.get(node.name, 0) == 1
        if isinstance(node, Operator) and node.op in (
            OperatorKind.MUL,
            OperatorKind.DIV,
        ):
            return any(absorbable(c) for c in node.children)
        return False

    def absorb(node: Node) -> Node:
        if isinstance(node, Operator):
            children = tuple(absorb(c) for c in node.children)
            node = Operator(node.op, children)
            a, b = children[0], children[-1]
            if node.op is OperatorKind.MUL:
                # constants are fitted as positive scales, so the
                # literal's magnitude folds in but its sign stays
                if isinstance(a, Literal) and absorbable(b):
                    return _fold_scale(a, b)
                if isinstance(b, Literal) and absorbable(a):
                    return _fold_scale(b, a)
            if node.op is OperatorKind.POW:
                if absorbable(a) and isinstance(a, Constant) and isinstance(b, Literal):
                    return a
                # exp(X) ^ p == exp(p * X); the exposed scale can then
                # fold into a constant inside X on the next pass
                if (
                    isinstance(a, Operator)
                    and a.op is OperatorKind.EXP
                    and isinstance(b, Literal)
                ):
                    scaled = Operator(OperatorKind.MUL, (b, a.children[0]))
                    return Operator(OperatorKind.EXP, (scaled,))
        return node

    out = canonicalize(tree)
    while True:
        new = canonicalize(absorb(out))
        if serialize(new) == serialize(out):
            return new
        out = new


def _catalog_closure(law: LawSpec) -> list[Node]:
    trees = [law.canonical]
    for chain in law.chains:
        trees.extend(chain.tiers[tier] for tier in ("easy", "medium", "hard"))
    seen: dict[str, Node] = {}
    for tree in trees:
        freed = _freed(tree)
        seen.setdefault(serialize(freed), freed)
    return list(seen.values())


def _free_grammar(variables: Sequence[str], depth: int, cap: int) -> list[Node]:
    """All canonically distinct trees of operator depth <= depth over the
    variables plus one free-parameter leaf."""
    leaves: list[Node] = [Variable(name) for name in sorted(variables)]
    leaves.append(Constant("C"))
    by_depth: list[list[Node]] = [leaves]
    seen: dict[str, Node] = {}
    for tree in leaves:
        seen.setdefault(serialize(canonicalize(tree)), tree)
    for level in range(1, depth + 1):
        frontier = by_depth[level - 1]
        frontier_ids = {id(t) for t in frontier}
        everything = [t for lvl in by_depth for t in lvl]
        new: list[Node] = []
        for kind in UNARY_OPERATORS:
            for child in frontier:
                new.append(Operator(kind, (child,)))
        for kind in BINARY_OPERATORS:
            for a in everything:
                for b in everything:
                    if id(a) in frontier_ids or id(b) in frontier_ids:
                        new.append(Operator(kind, (a, b)))
        kept = []
        for tree in new:
            key = serialize(canonicalize(tree))
            if key not in seen:
                seen[key] = tree
                kept.append(tree)
                if len(seen) > cap:
                    raise SolverError(
                        f"free-grammar candidate count exceeds the cap of {cap}"
                    )
        by_depth.append(kept)
    return [canonicalize(t) for t in seen.values()]


def enumerate_candidates(
    mode: str,
    law: LawSpec | None = None,
    variables: Sequence[str] | None = None,
    depth: int = 2,
    cap: int = 200_000,
) -> list[CandidateStructure]:
    if mode == "catalog-closure":
        if law is None:
            raise SolverError("catalog-closure mode needs a law")
        trees = _catalog_closure(law)
    elif mode == "free-grammar":
        if depth < 1:
            raise SolverError("depth must be >= 1")
        if variables is None:
            variables = law.variables if law else ()
        trees = _free_grammar(variables, depth, cap)
    else:
        raise SolverError(f"unknown candidate mode {mode!r}")
    out = []
    for i, tree in enumerate(trees):
        params = {n.name for _, n in iter_nodes(tree) if isinstance(n, Constant)}
        out.append(CandidateStructure(i, tree, len(params)))
    return out


# ---------------------------------------------------------------- fitting


def _candidate_values(
    candidate: CandidateStructure,
    names: tuple[str, ...],
    points: np.ndarray,
    theta: Mapping[str, float] | None,
) -> np.ndarray:
    program = compile_tree(candidate.tree, names)
    return evaluate_batch(program, points, const_overrides=theta)


def _exponent_params(candidate: CandidateStructure) -> set[str]:
    names = set()
    for _, node in iter_nodes(candidate.tree):
        if (
            isinstance(node, Operator)
            and node.op is OperatorKind.POW
            and isinstance(node.children[1], Constant)
        ):
            names.add(node.children[1].name)
    return names


def fit_structure(
    candidate: CandidateStructure,
    names: tuple[str, ...],
    points: np.ndarray,
    z: np.ndarray,
    rng_seed: int = 0,
) -> tuple[dict[str, float], float]:
    """Least squares in log space with multi-start; residual is the max
    relative error over the data."""
    if points.shape[0] < candidate.param_count:
        raise SolverError("fewer data points than free parameters")
    good = np.isfinite(z) & (z > 0.0)
    if not good.any():
        return {}, math.inf
    pts, obs = points[good], z[good]
    log_z = np.log(obs)
    params = candidate.param_names
    program = compile_tree(candidate.tree, names)

    def rel_residual(theta: Mapping[str, float]) -> float:
        values = evaluate_batch(program, pts, const_overrides=dict(theta))
        if not np.isfinite(values).all():
            return math.inf
        return float(np.max(np.abs(values - obs) /
                            np.maximum(np.abs(obs), np.finfo(float).tiny)))

    if not params:
        return {}, rel_residual({})

    def residuals(phi: np.ndarray) -> np.ndarray:
        theta = dict(zip(params, np.exp(np.clip(phi, -700.0, 700.0))))
        values = evaluate_batch(program, pts, const_overrides=theta)
        ok = np.isfinite(values) & (values > 0.0)
        res = np.where(ok, np.log(np.where(ok, values, 1.0)) - log_z, 1e6)
        return res

    rng = np.random.default_rng(rng_seed)
    starts = [np.zeros(len(params))]
    for mag in np.linspace(-9.0, 9.0, 7):
        start = np.full(len(params), mag * np.log(10.0))
        if len(params) > 1:
            start = start + rng.normal(0.0, 1.0, size=len(params))
        starts.append(start)
    best = None
    for start in starts:
        try:
            fit = least_squares(residuals, start, method="lm", max_nfev=500)
        except Exception:
            continue
        if best is None or fit.cost < best.cost:
            best = fit
        if best.cost < 1e-24:
            break
    if best is None:
        return {}, math.inf
    theta = dict(
        zip(params, (float(v) for v in np.exp(np.clip(best.x, -700.0, 700.0))))
    )
    residual = rel_residual(theta)
    theta, residual = _snap_exponents(
        candidate, theta, residual, rel_residual
    )
    return theta, residual


def _snap_exponents(candidate, theta, residual, rel_residual):
    """Snap exponent-position parameters onto the generative exponent set
    when within 1e-3, keeping the snap only if it does not hurt."""
    snapped = dict(theta)
    changed = False
    for name in _exponent_params(candidate):
        value = snapped.get(name)
        if value is None:
            continue
        nearest = min(EXPONENT_SNAP_SET, key=lambda s: abs(s - value))
        if 0 < abs(nearest - value) <= 1e-3:
            snapped[name] = nearest
            changed = True
    if changed:
        new_residual = rel_residual(snapped)
        if new_residual <= max(residual, NOISELESS_TOL):
            return snapped, new_residual
    return theta, residual


# ------------------------------------------------------------ probe design


def _sample_points(law: LawSpec, names, rng, m: int) -> np.ndarray:
    return np.column_stack([law.sampling[n].sample(rng, m) for n in names])


def _defined_draw(candidate, names, points, rng):
    """Find a parameter vector giving finite positive outputs on the
    probes; sweeps magnitudes because the defined window can be narrow."""
    if not candidate.param_names:
        z = _candidate_values(candidate, names, points, None)
        return {}, (z if (np.isfinite(z) & (z > 0)).all() else None)
    # moderate scales first: extreme magnitudes can drown the structural
    # term and make genuinely different candidates look alike
    for mag in sorted(np.linspace(-9.0, 9.0, 13), key=abs):
        theta = {
            name: float(10.0 ** mag * np.exp(rng.normal(0.0, 0.3)))
            for name in candidate.param_names
        }
        z = _candidate_values(candidate, names, points, theta)
        if (np.isfinite(z) & (z > 0)).all():
            return theta, z
    return None, None


def _pair_separated(cand_a, cand_b, names, points, rng_seed) -> bool:
    """True when no parameter vector makes cand_b reproduce cand_a's
    outputs on the probes (and vice versa) within tolerance."""
    rng = np.random.default_rng(rng_seed)
    for source, target in ((cand_a, cand_b), (cand_b, cand_a)):
        for _ in range(2):
            _, z = _defined_draw(source, names, points, rng)
            if z is None:
                continue
            _, residual = fit_structure(
                target, names, points, z, rng_seed=rng_seed
            )
            if residual < SEPARATION_TOL:
                return False
    return True


def design_probe_set(
    candidates: Sequence[CandidateStructure],
    law: LawSpec,
    m_extra: int = 6,
    rng_seed: int = 0,
) -> ProbeSet:
    """Greedy probe selection certified by pairwise fit-discrimination."""
    if not candidates:
        raise SolverError("no candidates to separate")
    names = tuple(sorted(law.sampling))
    rng = np.random.default_rng(rng_seed)
    m0 = max(c.param_count for c in candidates) + m_extra
    points = _sample_points(law, names, rng, m0)
    limit = 10 * m0
    pairs = [
        (a, b)
        for i, a in enumerate(candidates)
        for b in candidates[i + 1:]
    ]
    pending = pairs
    while True:
        failing = [
            (a, b)
            for a, b in pending
            if not _pair_separated(a, b, names, points, rng_seed)
        ]
        if not failing:
            return ProbeSet(names, points)
        if points.shape[0] >= limit:
            a, b = failing[0]
            raise SolverError(
                "probe separation failed for candidates "
                f"{serialize(a.tree)!r} vs {serialize(b.tree)!r}"
            )
        extra = _sample_points(law, names, rng, min(m0, limit - points.shape[0]))
        # duplicate rows are rejected during augmentation
        merged = np.vstack([points, extra])
        _, idx = np.unique(merged, axis=0, return_index=True)
        points = merged[np.sort(idx)]
        pending = failing


# ---------------------------------------------------------------- discover


def _bake(tree: Node, theta: Mapping[str, float]) -> Node:
    """Replace fitted parameters with literal values."""
    out = tree
    while True:
        for path, node in iter_nodes(out):
            if isinstance(node, Constant) and node.name in theta:
                out = replace_at(out, path, Literal(float(theta[node.name])))
                break
        else:
            return out


def _disagreement_points(survivors, names, law, rng, count):
    """Sample points where the fitted survivors disagree most, or None
    when they are numerically indistinguishable on the whole domain."""
    pool = _sample_points(law, names, rng, 256)
    values = []
    for candidate, theta, _ in survivors:
        program = compile_tree(_bake(candidate.tree, theta), names)
        values.append(evaluate_batch(program, pool))
    stacked = np.array(values)
    with np.errstate(all="ignore"):
        spread = np.nanmax(stacked, axis=0) - np.nanmin(stacked, axis=0)
        scale = np.nanmax(np.abs(stacked), axis=0)
        rel = np.where(scale > 0.0, spread / scale, 0.0)
    rel = np.where(np.isfinite(rel), rel, 0.0)
    if float(np.max(rel)) <= SEPARATION_TOL:
        return None
    order = np.argsort(rel)[::-1][:count]
    return pool[order]


def _refine_survivors(
    surviving, probes, law, oracle, session, z, *,
    repeats, tol, rng_seed, report,
):
    """Adaptive disambiguation: while several structures explain the
    data, query extra probes where their fitted forms disagree and
    refit. The initial probe set certifies separation only for drawn
    parameter scales; the true constants can sit where two structures
    coincide (e.g. sin(u) vs u for small u)."""
    rng = np.random.default_rng(rng_seed + 9)
    names = probes.names
    points = probes.points
    config = session.config
    count = max(1, config.max_sets_per_round // (2 * repeats))
    while len(surviving) > 1:
        rounds_needed = repeats * math.ceil(count / config.max_sets_per_round)
        if config.max_rounds - session.rounds_used < rounds_needed:
            break
        extra = _disagreement_points(surviving, names, law, rng, count)
        if extra is None:
            break
        observations = np.empty((repeats, len(extra)))
        for k in range(repeats):
            observations[k] = oracle.query(extra)
        z = np.concatenate([z, observations.mean(axis=0)])
        points = np.vstack([points, extra])
        report.probes_used += len(extra) * repeats
        refits = []
        for candidate, _, _ in surviving:
            theta, residual = fit_structure(
                candidate, names, points, z, rng_seed=rng_seed
            )
            report.residuals[candidate.structure_id] = residual
            refits.append((candidate, theta, residual))
        narrowed = [f for f in refits if f[2] < tol]
        if not narrowed:
            surviving = refits
            break
        if len(narrowed) == len(surviving):
            surviving = narrowed
            break
        surviving = narrowed
    return surviving, z


def discover(
    task: TaskSpec,
    session: Session,
    mode: str = "catalog-closure",
    depth: int = 2,
    rng_seed: int = 0,
) -> tuple[Node, DiscoveryReport]:
    """Full baseline procedure; submits its answer through the session."""
    law = task.law
    sigma = session.config.noise_sigma
    candidates = enumerate_candidates(mode, law=law, depth=depth)
    probes = design_probe_set(candidates, law, rng_seed=rng_seed)
    oracle = isolate_target_oracle(task, session)

    repeats = 1 if sigma == 0.0 else 4
    observations = np.empty((repeats, probes.m))
    for k in range(repeats):
        observations[k] = oracle.query(probes.points)
    z = observations.mean(axis=0)

    tol = NOISELESS_TOL if sigma == 0.0 else 5.0 * sigma
    report = DiscoveryReport(
        mode=mode,
        candidate_count=len(candidates),
        probes_used=probes.m * repeats,
        rounds_used=session.rounds_used,
    )
    fits: list[tuple[CandidateStructure, dict, float]] = []
    for candidate in candidates:
        theta, residual = fit_structure(
            candidate, probes.names, probes.points, z, rng_seed=rng_seed
        )
        report.residuals[candidate.structure_id] = residual
        fits.append((candidate, theta, residual))

    surviving = [f for f in fits if f[2] < tol]
    surviving, z = _refine_survivors(
        surviving, probes, law, oracle, session, z,
        repeats=repeats, tol=tol, rng_seed=rng_seed, report=report,
    )
    pool = surviving or [min(fits, key=lambda f: f[2])]
    chosen = min(
        pool,
        key=lambda f: (node_count(f[0].tree), serialize(f[0].tree)),
    )
    candidate, theta, residual = chosen
    answer = canonicalize(_bake(candidate.tree, theta))
    report.best_residual = residual
    report.identified = bool(surviving)
    report.submitted = serialize(answer)
    reply = step(session, SubmitFinalLaw(report.submitted))
    if reply["type"] != "final_law":
        raise SolverError(f"submission rejected: {reply['payload']}")
    report.rounds_used = session.rounds_used
    return answer, report
