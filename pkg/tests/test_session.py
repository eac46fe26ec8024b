"""Session state machine, budgets, noise, and the wire protocol."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lawlab.expr import EvalResult
from lawlab.protocol import envelope, serve_stream
from lawlab.session import (
    NOISE_LEVELS,
    RunExperiment,
    SessionConfig,
    SessionError,
    SubmitFinalLaw,
    apply_noise,
    consume_code_call,
    open_session,
    step,
)
from lawlab.systems import find_task


def _assignment(task, value=2.0):
    return {name: value for name in task.model.inputs}


def _experiment(task, n_sets=1, value=2.0):
    return RunExperiment.of([_assignment(task, value)] * n_sets)


@pytest.fixture(scope="module")
def task():
    return find_task("gravitation.c1.easy.vanilla")


@pytest.fixture(scope="module")
def simple_task():
    return find_task("acoustic.c1.easy.simple")


class TestBriefing:
    def test_noise_free_clause(self, task):
        _, briefing = open_session(task, SessionConfig(noise_sigma=0.0))
        assert "noise-free" in briefing

    def test_noisy_clause(self, task):
        _, briefing = open_session(task, SessionConfig(noise_sigma=0.01))
        assert "random noise" in briefing
        assert "0.01" in briefing

    def test_disclosure_included(self, simple_task):
        _, briefing = open_session(simple_task, SessionConfig())
        assert "t_obs = 2 * L_path / v" in briefing

    def test_budget_statement(self, task):
        _, briefing = open_session(task, SessionConfig())
        assert "10 experimental rounds" in briefing
        assert "20 input-parameter sets" in briefing

    def test_invalid_noise_level_rejected(self):
        with pytest.raises(SessionError):
            SessionConfig(noise_sigma=0.5)


class TestBudgets:
    def test_rounds_exhaust_then_submission_still_allowed(self, task):
        session, _ = open_session(task, SessionConfig())
        for _ in range(10):
            reply = step(session, _experiment(task))
            assert reply["type"] == "experiment_output"
        reply = step(session, _experiment(task))
        assert reply["payload"]["code"] == "budget-exhausted"
        reply = step(session, SubmitFinalLaw("C * m1 * m2 / r ^ 1.5"))
        assert reply["type"] == "final_law"

    def test_oversized_batch_keeps_round(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, _experiment(task, n_sets=21))
        assert reply["payload"]["code"] == "batch-too-large"
        assert reply["payload"]["limit"] == 20
        assert session.rounds_used == 0

    def test_boundary_batch_accepted(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, _experiment(task, n_sets=20))
        assert len(reply["payload"]["sets"]) == 20
        assert session.rounds_used == 1

    def test_empty_batch_is_protocol_error(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, RunExperiment.of([]))
        assert reply["payload"]["code"] == "protocol-error"
        assert session.rounds_used == 0

    def test_missing_and_nonfinite_inputs_rejected(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, RunExperiment.of([{"m1": 1.0}]))
        assert reply["payload"]["code"] == "protocol-error"
        bad = _assignment(task)
        bad["r"] = float("inf")
        reply = step(session, RunExperiment.of([bad]))
        assert reply["payload"]["code"] == "protocol-error"
        assert session.rounds_used == 0

    def test_code_budget(self, task):
        session, _ = open_session(task, SessionConfig(code_budget=2))
        assert consume_code_call(session)
        assert consume_code_call(session)
        assert not consume_code_call(session)
        unlimited, _ = open_session(task, SessionConfig())
        assert all(consume_code_call(unlimited) for _ in range(100))

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(
            st.one_of(
                st.integers(min_value=1, max_value=25),  # batch sizes
                st.just("submit"),
                st.just("garbage"),
            ),
            max_size=30,
        )
    )
    def test_no_action_sequence_breaks_budget(self, actions):
        task = find_task("hooke.c1.easy.vanilla")
        config = SessionConfig()
        session, _ = open_session(task, config)
        replies = 0
        evaluations = 0
        for item in actions:
            if item == "submit":
                step(session, SubmitFinalLaw("C * k * x"))
            elif item == "garbage":
                step(session, SubmitFinalLaw("k +* x"))
            else:
                reply = step(session, _experiment(task, n_sets=item))
                if reply["type"] == "experiment_output":
                    replies += 1
                    evaluations += item
        assert replies <= config.max_rounds
        assert evaluations <= config.max_rounds * config.max_sets_per_round
        assert session.rounds_used <= config.max_rounds


class TestSubmission:
    def test_parse_failure_preserves_submission_chance(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, SubmitFinalLaw("m1 * * m2"))
        assert reply["payload"]["code"] == "parse-error"
        assert "position" in reply["payload"]
        assert not session.finished
        reply = step(session, SubmitFinalLaw("C * m1 * m2 / r ^ 1.5"))
        assert reply["type"] == "final_law"
        assert session.finished

    def test_unknown_variable_rejected(self, task):
        session, _ = open_session(task, SessionConfig())
        reply = step(session, SubmitFinalLaw("C * bogus"))
        assert reply["payload"]["code"] == "parse-error"

    def test_terminality(self, task):
        session, _ = open_session(task, SessionConfig())
        step(session, SubmitFinalLaw("C * m1"))
        for action in (_experiment(task), SubmitFinalLaw("C * m2")):
            reply = step(session, action)
            assert reply["payload"]["code"] == "session-closed"

    def test_submission_tree_recorded(self, task):
        session, _ = open_session(task, SessionConfig())
        step(session, SubmitFinalLaw("C * (m1 * m2) / r ^ 1.5"))
        assert session.submission is not None
        assert session.submission_text == "C * (m1 * m2) / r ^ 1.5"


class TestNoise:
    def test_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        v = EvalResult.of(3.337e-5)
        assert apply_noise(v, 0.0, rng) == v
        # and draws nothing
        assert rng.bit_generator.state == np.random.default_rng(0).bit_generator.state

    def test_undefined_passes_through(self):
        rng = np.random.default_rng(0)
        undef = EvalResult(None, "domain-error")
        for sigma in NOISE_LEVELS:
            assert apply_noise(undef, sigma, rng) == undef

    def test_golden_noisy_value(self):
        rng = np.random.default_rng(123)
        got = apply_noise(EvalResult.of(3.337e-5), 0.1, rng)
        assert got.value == 3.006930205388922e-05

    def test_unbiasedness(self):
        rng = np.random.default_rng(7)
        sigma = 0.01
        n = 100_000
        draws = np.array(
            [apply_noise(EvalResult.of(1.0), sigma, rng).value for _ in range(n)]
        )
        assert abs(draws.mean() - 1.0) < 3 * sigma / np.sqrt(n)

    def test_replay_determinism(self, simple_task):
        def run():
            session, _ = open_session(
                simple_task, SessionConfig(noise_sigma=0.01, rng_seed=42)
            )
            step(session, _experiment(simple_task, n_sets=3))
            step(session, _experiment(simple_task, n_sets=2, value=3.0))
            step(session, SubmitFinalLaw("sqrt(C * gamma * T ^ 2 / M)"))
            return session.transcript

        assert run() == run()

    def test_noise_draw_order_is_per_scalar(self):
        # two sets of one output consume exactly two stream draws,
        # in set order
        task = find_task("hooke.c1.easy.vanilla")
        session, _ = open_session(task, SessionConfig(noise_sigma=0.1, rng_seed=9))
        reply = step(
            session,
            RunExperiment.of([{"k": 1.0, "x": 1.0}, {"k": 1.0, "x": 2.0}]),
        )
        rng = np.random.default_rng(9)
        eps = rng.normal(0.0, 0.1, size=2)
        true = [2 * 1e-3 * 1.0, 2 * 1e-3 * 4.0]
        got = [row["F"] for row in reply["payload"]["sets"]]
        assert got == [t * (1 + e) for t, e in zip(true, eps)]


class TestWireProtocol:
    def _drive(self, task, config, client_lines, session_id="s1"):
        infile = io.StringIO("\n".join(client_lines) + "\n")
        outfile = io.StringIO()
        session = serve_stream(task, config, infile, outfile, session_id)
        lines = [json.loads(l) for l in outfile.getvalue().splitlines()]
        return session, lines, outfile.getvalue().splitlines()

    def test_briefing_first_and_field_order(self, task):
        _, msgs, raw = self._drive(task, SessionConfig(), [])
        assert msgs[0]["type"] == "briefing"
        assert list(msgs[0].keys()) == ["type", "session_id", "round", "payload"]
        assert msgs[0]["payload"]["task_id"] == task.task_id
        assert raw[0].startswith('{"type": "briefing", "session_id": "s1"')

    def test_full_episode(self, task):
        client = [
            json.dumps(
                {
                    "type": "run_experiment",
                    "payload": {
                        "assignments": [{"m1": 2.0, "m2": 3.0, "r": 2.0}]
                    },
                }
            ),
            json.dumps(
                {
                    "type": "final_law",
                    "payload": {"expression": "C * m1 * m2 / r ^ 1.5"},
                }
            ),
        ]
        session, msgs, _ = self._drive(task, SessionConfig(), client)
        assert [m["type"] for m in msgs] == [
            "briefing",
            "experiment_output",
            "final_law",
        ]
        expected = 6.674e-5 * 2 * 3 / 2**1.5
        assert msgs[1]["payload"]["sets"][0]["F"] == pytest.approx(
            expected, rel=1e-12
        )
        assert session.finished

    def test_null_encodes_undefined(self):
        task = find_task("decay.c3.hard.vanilla")
        client = [
            json.dumps(
                {
                    "type": "run_experiment",
                    "payload": {
                        "assignments": [{"N0": 0.0, "lam": 0.01, "t": 1.0}]
                    },
                }
            )
        ]
        _, msgs, raw = self._drive(task, SessionConfig(), client)
        assert msgs[1]["payload"]["sets"][0]["N"] is None
        assert '"N": null' in raw[1]

    def test_malformed_json_and_unknown_type(self, task):
        client = ["{not json", json.dumps({"type": "frobnicate"})]
        _, msgs, _ = self._drive(task, SessionConfig(), client)
        assert msgs[1]["type"] == "error"
        assert msgs[2]["type"] == "error"

    def test_envelope_round_tracks_session(self, task):
        client = [
            json.dumps(
                {
                    "type": "run_experiment",
                    "payload": {
                        "assignments": [{"m1": 1.0, "m2": 1.0, "r": 1.0}]
                    },
                }
            )
        ] * 2
        _, msgs, _ = self._drive(task, SessionConfig(), client)
        assert msgs[1]["round"] == 1
        assert msgs[2]["round"] == 2

    def test_envelope_helper_shape(self):
        line = envelope("error", "abc", 3, {"code": "x"})
        assert json.loads(line) == {
            "type": "error",
            "session_id": "abc",
            "round": 3,
            "payload": {"code": "x"},
        }
