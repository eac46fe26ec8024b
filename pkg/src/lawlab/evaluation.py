"""Scoring: constant-absorbing symbolic equivalence and RMSLE fidelity.

Symbolic accuracy is decided by fit-and-verify: refit the target law's
hidden constants so it best matches the submission on a fitting
subsample, then demand near-zero relative discrepancy on a disjoint
holdout. Structure differences (exponents, couplings, function forms)
leave an irreducible residual; constant rescalings do not.

Data fidelity is RMSLE over a log-uniform evaluation set, with a
single-pass modified Z-score filter applied to the squared-log-error
terms, always against noiseless ground truth.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .catalog import CatalogError, LawSpec
from .expr import Node, compile_tree, constant_leaves, evaluate_batch

FIT_SAMPLE = 512
FIT_STARTS = 8
DEFAULT_TOL = 1e-6
INFINITE = math.inf


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationDataset:
    """Seeded evaluation inputs with noiseless ground-truth outputs."""

    names: tuple[str, ...]
    inputs: np.ndarray  # (n, d)
    y_true: np.ndarray  # (n,)
    rng_seed: int

    @property
    def n(self) -> int:
        return int(self.y_true.shape[0])

    @property
    def points(self) -> list[tuple[dict[str, float], float]]:
        return [
            (
                {name: float(self.inputs[i, j]) for j, name in enumerate(self.names)},
                float(self.y_true[i]),
            )
            for i in range(self.n)
        ]


@dataclass(frozen=True)
class EvaluationReport:
    symbolic_accuracy: bool
    fitted_constants: dict[str, float]
    fit_residual: float
    rmsle: float
    valid_fraction: float
    filtered_count: int
    extras: dict = field(default_factory=dict)


def sample_eval_inputs(
    law: LawSpec, n: int = 5_000, rng_seed: int = 0
) -> EvaluationDataset:
    """Draw n points from the law's declared distributions.

    Points where the ground truth is undefined or negative are
    resampled; more than 100*n total draws means the law is ill-posed.
    """
    if n < 1:
        raise EvaluationError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    names = tuple(sorted(law.sampling))
    program = compile_tree(law.canonical, names)
    kept_inputs = []
    kept_y = []
    drawn = 0
    need = n
    while need > 0:
        if drawn >= 100 * n:
            raise EvaluationError(
                f"law {law.domain!r}: resampling exceeded {100 * n} attempts"
            )
        batch = min(need * 2, 100 * n - drawn)
        drawn += batch
        inputs = np.column_stack(
            [law.sampling[name].sample(rng, batch) for name in names]
        )
        y = evaluate_batch(program, inputs)
        good = np.isfinite(y) & (y >= 0.0)
        take = min(int(good.sum()), need)
        idx = np.flatnonzero(good)[:take]
        kept_inputs.append(inputs[idx])
        kept_y.append(y[idx])
        need -= take
    return EvaluationDataset(
        names=names,
        inputs=np.concatenate(kept_inputs),
        y_true=np.concatenate(kept_y),
        rng_seed=rng_seed,
    )


def _split_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint fit/holdout index blocks, each up to FIT_SAMPLE points."""
    size = min(FIT_SAMPLE, n // 2) if n >= 2 else n
    return np.arange(size), np.arange(size, min(2 * size, n))


def _log_values(values: np.ndarray) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    ok = np.isfinite(values) & (values > 0.0)
    out[ok] = np.log(values[ok])
    return out


def _fit_constants_to_reference(
    program, inputs: np.ndarray, log_reference: np.ndarray, const_names: list[str],
    defaults: np.ndarray, rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Multi-start least squares in log space; returns (values, cost)."""

    def residuals(phi: np.ndarray) -> np.ndarray:
        overrides = dict(zip(const_names, np.exp(np.clip(phi, -700.0, 700.0))))
        values = evaluate_batch(program, inputs, const_overrides=overrides)
        logs = _log_values(values)
        res = logs - log_reference
        return np.where(np.isfinite(res), res, 1e6)

    q = len(const_names)
    starts = [np.log(np.abs(defaults))]
    magnitudes = np.linspace(-9.0, 9.0, FIT_STARTS - 1)
    for k in range(FIT_STARTS - 1):
        start = magnitudes[k] * np.log(10.0) * np.ones(q)
        if q > 1:
            start = start + rng.normal(0.0, 1.0, size=q)
        starts.append(start)
    best_phi, best_cost = starts[0], math.inf
    for start in starts:
        try:
            fit = least_squares(residuals, start, method="lm", max_nfev=400)
        except Exception:
            continue
        if fit.cost < best_cost:
            best_cost = fit.cost
            best_phi = fit.x
        if best_cost < 1e-22:
            break
    return np.exp(best_phi), best_cost


def fit_hidden_constants(
    target: Node, submission: Node, dataset: EvaluationDataset
) -> tuple[dict[str, float], float]:
    """Refit the target's hidden constants against the submission.

    Fits on one subsample, then reports the max relative discrepancy on
    a disjoint holdout; non-convergence surfaces as an infinite
    residual.
    """
    consts = {c.name: c for c in constant_leaves(target)}
    if not consts:
        raise EvaluationError("target has no hidden constants to absorb")
    names = dataset.names
    target_prog = compile_tree(target, names)
    sub_prog = compile_tree(submission, names)
    fit_idx, hold_idx = _split_indices(dataset.n)
    sub_fit = evaluate_batch(sub_prog, dataset.inputs[fit_idx])
    log_sub_fit = _log_values(sub_fit)
    usable = np.isfinite(log_sub_fit)
    if usable.sum() < max(len(consts), 1):
        return (
            {name: c.default_value for name, c in consts.items()},
            INFINITE,
        )
    const_names = sorted(consts)
    defaults = np.array([consts[name].default_value for name in const_names])
    rng = np.random.default_rng(dataset.rng_seed + 1)
    values, _ = _fit_constants_to_reference(
        target_prog,
        dataset.inputs[fit_idx][usable],
        log_sub_fit[usable],
        const_names,
        defaults,
        rng,
    )
    fitted = dict(zip(const_names, (float(v) for v in values)))
    sub_hold = evaluate_batch(sub_prog, dataset.inputs[hold_idx])
    tgt_hold = evaluate_batch(
        target_prog, dataset.inputs[hold_idx], const_overrides=fitted
    )
    both = np.isfinite(sub_hold) & np.isfinite(tgt_hold)
    if not both.all():
        return fitted, INFINITE
    denom = np.maximum(np.abs(tgt_hold), np.finfo(float).tiny)
    residual = float(np.max(np.abs(sub_hold - tgt_hold) / denom))
    return fitted, residual


def symbolic_equivalent(
    target: Node,
    submission: Node,
    dataset: EvaluationDataset,
    tol: float = DEFAULT_TOL,
) -> bool:
    """Constants absorbed; structure decisive."""
    sub_prog = compile_tree(submission, dataset.names)
    sub_all = evaluate_batch(sub_prog, dataset.inputs)
    if not np.isfinite(sub_all).all():
        return False  # target is defined everywhere on its own dataset
    _, residual = fit_hidden_constants(target, submission, dataset)
    return residual < tol


def modified_z_filter(
    values: Sequence[float] | np.ndarray, threshold: float = 3.5
) -> np.ndarray:
    """Single-pass keep-mask; |M| == threshold is kept; MAD 0 keeps all."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EvaluationError("empty value list")
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0.0:
        return np.ones(x.shape, dtype=bool)
    m = 0.6745 * (x - med) / mad
    return np.abs(m) <= threshold


def compute_rmsle(
    submission: Node,
    fitted_constants: Mapping[str, float] | None,
    dataset: EvaluationDataset,
) -> tuple[float, float, int]:
    """RMSLE of the submission against noiseless ground truth.

    Points where the prediction is undefined or <= -1 are invalid;
    below 50% validity the score is the infinite sentinel.
    """
    program = compile_tree(submission, dataset.names)
    y_hat = evaluate_batch(program, dataset.inputs, const_overrides=fitted_constants)
    valid = np.isfinite(y_hat) & (y_hat > -1.0)
    valid_fraction = float(valid.mean())
    if valid_fraction < 0.5:
        return INFINITE, valid_fraction, 0
    terms = (np.log1p(y_hat[valid]) - np.log1p(dataset.y_true[valid])) ** 2
    keep = modified_z_filter(terms)
    filtered_count = int((~keep).sum())
    rmsle = float(np.sqrt(terms[keep].mean()))
    return rmsle, valid_fraction, filtered_count


def _fit_submission_constants(
    submission: Node, dataset: EvaluationDataset
) -> dict[str, float]:
    """Fit the submission's own free constants against ground truth."""
    consts = {c.name: c for c in constant_leaves(submission)}
    if not consts:
        return {}
    names = sorted(consts)
    program = compile_tree(submission, dataset.names)
    fit_idx, _ = _split_indices(dataset.n)
    log_y = _log_values(dataset.y_true[fit_idx])
    usable = np.isfinite(log_y)
    if usable.sum() < len(names):
        return {name: consts[name].default_value for name in names}
    defaults = np.array([consts[name].default_value for name in names])
    rng = np.random.default_rng(dataset.rng_seed + 2)
    values, _ = _fit_constants_to_reference(
        program,
        dataset.inputs[fit_idx][usable],
        log_y[usable],
        names,
        defaults,
        rng,
    )
    return dict(zip(names, (float(v) for v in values)))


def evaluate_submission(
    law: LawSpec,
    target: Node,
    submission: Node,
    n: int = 5_000,
    rng_seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> EvaluationReport:
    """Full scoring pass for one submission against one target law.

    Note the dataset's ground truth comes from the *target* tree with
    default constants, not the law's canonical form.
    """
    dataset = _dataset_for_target(law, target, n, rng_seed)
    fitted, residual = fit_hidden_constants(target, submission, dataset)
    sub_prog = compile_tree(submission, dataset.names)
    defined_everywhere = bool(
        np.isfinite(evaluate_batch(sub_prog, dataset.inputs)).all()
    )
    accuracy = defined_everywhere and residual < tol
    rmsle_consts = _fit_submission_constants(submission, dataset)
    rmsle, valid_fraction, filtered = compute_rmsle(
        submission, rmsle_consts, dataset
    )
    return EvaluationReport(
        symbolic_accuracy=accuracy,
        fitted_constants=fitted,
        fit_residual=residual,
        rmsle=rmsle,
        valid_fraction=valid_fraction,
        filtered_count=filtered,
        extras={"submission_constants": rmsle_consts},
    )


def _dataset_for_target(
    law: LawSpec, target: Node, n: int, rng_seed: int
) -> EvaluationDataset:
    shifted = LawSpec(
        domain=law.domain,
        output=law.output,
        canonical=target,
        variables=law.variables,
        sampling=law.sampling,
        constants=law.constants,
        chains=(),
    )
    return sample_eval_inputs(shifted, n, rng_seed)


def aggregate_results(
    groups: Mapping[object, Sequence[EvaluationReport]],
) -> dict[object, dict[str, float]]:
    """Per-cell mean/std of symbolic accuracy and finite RMSLE."""
    summary = {}
    for cell, reports in groups.items():
        if not reports:
            raise EvaluationError(f"empty group {cell!r}")
        sa = np.array([float(r.symbolic_accuracy) for r in reports])
        rmsles = np.array([r.rmsle for r in reports])
        finite = np.isfinite(rmsles)
        summary[cell] = {
            "runs": len(reports),
            "sa_mean": float(100.0 * sa.mean()),
            "sa_std": float(100.0 * sa.std()),
            "rmsle_mean": float(rmsles[finite].mean()) if finite.any() else INFINITE,
            "rmsle_std": float(rmsles[finite].std()) if finite.any() else INFINITE,
            "infinite_count": int((~finite).sum()),
        }
    return summary
