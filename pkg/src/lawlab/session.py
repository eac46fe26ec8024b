"""Discovery episodes: budgeted experiment rounds plus one final submission.

A session is a small state machine. Experiment requests consume rounds;
protocol mistakes (oversized batches, malformed submissions, missing
inputs) are reported without consuming anything. Observation noise is
multiplicative relative Gaussian, drawn from a per-session seeded stream
in (set-index, output-name) order so transcripts replay bit-for-bit.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .expr import EvalResult, Node, ParseError, parse_expression, serialize
from .systems import TaskSpec, run_model

NOISE_LEVELS = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)

#: Identifiers reserved for unknown constants in submissions.
SUBMISSION_CONSTANTS = frozenset({"C", "C1", "C2"})

AWAITING = "awaiting-action"
FINISHED = "finished"
ABORTED = "aborted"


class SessionError(ValueError):
    """Invalid session configuration (caller bug, not agent error)."""


@dataclass(frozen=True)
class SessionConfig:
    max_rounds: int = 10
    max_sets_per_round: int = 20
    noise_sigma: float = 0.0
    rng_seed: int = 0
    code_budget: int | None = None  # None = unlimited

    def __post_init__(self):
        if self.noise_sigma not in NOISE_LEVELS:
            raise SessionError(
                f"noise_sigma must be one of {NOISE_LEVELS}, got {self.noise_sigma}"
            )
        if self.max_rounds < 1 or self.max_sets_per_round < 1:
            raise SessionError("budgets must be positive")
        if self.code_budget is not None and self.code_budget < 0:
            raise SessionError("code_budget must be non-negative")


@dataclass(frozen=True)
class RunExperiment:
    assignments: tuple[Mapping[str, float], ...]

    @staticmethod
    def of(assignments: Sequence[Mapping[str, float]]) -> "RunExperiment":
        return RunExperiment(tuple(dict(a) for a in assignments))


@dataclass(frozen=True)
class SubmitFinalLaw:
    expression: str


def apply_noise(
    value: EvalResult, sigma: float, noise_stream: np.random.Generator
) -> EvalResult:
    """Multiply a defined value by (1 + eps), eps ~ Normal(0, sigma^2).

    sigma = 0 is an exact identity and draws nothing from the stream, so
    noiseless transcripts are independent of generator state.
    """
    if sigma == 0.0 or not value.defined:
        return value
    eps = float(noise_stream.normal(0.0, sigma))
    return EvalResult.of(value.value * (1.0 + eps))


@dataclass
class Session:
    task: TaskSpec
    config: SessionConfig
    rounds_used: int = 0
    state: str = AWAITING
    submission: Node | None = None
    submission_text: str | None = None
    abort_reason: str | None = None
    transcript: list[dict] = field(default_factory=list)
    code_calls_used: int = 0
    _noise_stream: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._noise_stream = np.random.default_rng(self.config.rng_seed)

    @property
    def finished(self) -> bool:
        return self.state != AWAITING


def _briefing(task: TaskSpec, config: SessionConfig) -> str:
    lines = [
        f"Task: discover the hidden law producing `{task.law.output}`.",
        f"System inputs you control: {', '.join(task.model.inputs)}.",
        f"Observable outputs: {', '.join(task.model.final_outputs)}.",
    ]
    if task.assist_disclosure:
        lines.append("Known assisting equations:")
        lines.extend(f"  {text}" for text in task.assist_disclosure)
    else:
        lines.append("The hidden law's output is observed directly.")
    lines.append(
        f"Budget: up to {config.max_rounds} experimental rounds, with at most "
        f"{config.max_sets_per_round} input-parameter sets per round."
    )
    if config.noise_sigma == 0.0:
        lines.append("All measurements of the system outputs are noise-free.")
    else:
        lines.append(
            "All measurements of the system outputs are subject to random "
            f"noise (relative Gaussian, sigma = {config.noise_sigma})."
        )
    lines.append(
        "Submit your final discovered law as one expression over the "
        f"variables {{{', '.join(sorted(task.law.variables))}}}; write unknown "
        "constants as C, C1, C2."
    )
    return "\n".join(lines)


def open_session(task: TaskSpec, config: SessionConfig) -> tuple[Session, str]:
    session = Session(task=task, config=config)
    return session, _briefing(task, config)


def _error(code: str, message: str, **extra) -> dict:
    payload = {"code": code, "message": message}
    payload.update(extra)
    return {"type": "error", "payload": payload}


def _check_assignment(session: Session, assignment: Mapping[str, float]):
    inputs = session.task.model.inputs
    missing = [name for name in inputs if name not in assignment]
    if missing:
        return f"input set is missing {missing}"
    for name in inputs:
        value = assignment[name]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return f"input {name!r} is not a number"
        if not math.isfinite(float(value)):
            return f"input {name!r} is not finite"
    return None


def _run_experiment(session: Session, action: RunExperiment) -> dict:
    config = session.config
    if session.rounds_used >= config.max_rounds:
        return _error(
            "budget-exhausted",
            f"all {config.max_rounds} experimental rounds are used; "
            "you may still submit a final law",
        )
    sets = action.assignments
    if not sets:
        return _error("protocol-error", "empty experiment batch")
    if len(sets) > config.max_sets_per_round:
        return _error(
            "batch-too-large",
            f"batch of {len(sets)} exceeds the "
            f"{config.max_sets_per_round}-set limit",
            limit=config.max_sets_per_round,
        )
    for i, assignment in enumerate(sets):
        problem = _check_assignment(session, assignment)
        if problem is not None:
            return _error("protocol-error", f"set {i}: {problem}")
    model = session.task.model
    session.rounds_used += 1
    observed = []
    for assignment in sets:
        outputs = run_model(model, assignment)
        row = {}
        for name in model.final_outputs:
            noisy = apply_noise(
                outputs[name], config.noise_sigma, session._noise_stream
            )
            row[name] = noisy.value if noisy.defined else None
        observed.append(row)
    return {
        "type": "experiment_output",
        "payload": {
            "round": session.rounds_used,
            "rounds_remaining": config.max_rounds - session.rounds_used,
            "sets": observed,
        },
    }


def _submit(session: Session, action: SubmitFinalLaw) -> dict:
    try:
        tree = parse_expression(
            action.expression,
            known_vars=set(session.task.law.variables),
            known_consts=set(SUBMISSION_CONSTANTS),
        )
    except ParseError as exc:
        return _error(
            "parse-error", str(exc), position=exc.position
        )
    session.state = FINISHED
    session.submission = tree
    session.submission_text = action.expression
    return {
        "type": "final_law",
        "payload": {
            "accepted": True,
            "expression": serialize(tree),
            "rounds_used": session.rounds_used,
        },
    }


def step(session: Session, action: RunExperiment | SubmitFinalLaw) -> dict:
    """Process one action; returns a reply message (never raises on agent
    mistakes)."""
    if session.finished:
        reply = _error("session-closed", f"session is {session.state}")
    elif isinstance(action, RunExperiment):
        reply = _run_experiment(session, action)
    elif isinstance(action, SubmitFinalLaw):
        reply = _submit(session, action)
    else:
        reply = _error("protocol-error", f"unknown action {type(action).__name__}")
    session.transcript.append(
        {
            "round": session.rounds_used,
            "action": type(action).__name__,
            "payload": _action_payload(action),
            "reply": reply,
        }
    )
    return reply


def _action_payload(action) -> dict:
    if isinstance(action, RunExperiment):
        return {"assignments": [dict(a) for a in action.assignments]}
    if isinstance(action, SubmitFinalLaw):
        return {"expression": action.expression}
    return {}


def consume_code_call(session: Session) -> bool:
    """Spend one code-tool call; False when the budget is exhausted."""
    budget = session.config.code_budget
    if budget is not None and session.code_calls_used >= budget:
        return False
    session.code_calls_used += 1
    return True
