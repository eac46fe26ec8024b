"""Line-delimited JSON wire protocol for sessions, over stdio or TCP.

Every message is one JSON object per line with fixed field order:
``{"type": ..., "session_id": ..., "round": ..., "payload": ...}``.
Undefined observations are encoded as null. The server speaks first
(briefing), then answers each client message with exactly one reply,
and closes after an accepted final law.
"""

from __future__ import annotations

import json
import socket
import sys
import uuid

from .session import (
    RunExperiment,
    Session,
    SessionConfig,
    SubmitFinalLaw,
    open_session,
    step,
)
from .systems import TaskSpec

CLIENT_TYPES = ("run_experiment", "final_law")


def envelope(msg_type: str, session_id: str, round_no: int, payload) -> str:
    # dict literal fixes field order for golden-file comparisons
    return json.dumps(
        {
            "type": msg_type,
            "session_id": session_id,
            "round": round_no,
            "payload": payload,
        }
    )


def _parse_client_line(line: str):
    """Returns (action, error_payload); exactly one is None."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        return None, {"code": "protocol-error", "message": f"bad JSON: {exc}"}
    if not isinstance(msg, dict):
        return None, {"code": "protocol-error", "message": "message must be an object"}
    msg_type = msg.get("type")
    payload = msg.get("payload")
    if msg_type == "run_experiment":
        assignments = (payload or {}).get("assignments")
        if not isinstance(assignments, list) or not all(
            isinstance(a, dict) for a in assignments
        ):
            return None, {
                "code": "protocol-error",
                "message": "run_experiment payload needs an assignments list",
            }
        return RunExperiment.of(assignments), None
    if msg_type == "final_law":
        expression = (payload or {}).get("expression")
        if not isinstance(expression, str):
            return None, {
                "code": "protocol-error",
                "message": "final_law payload needs an expression string",
            }
        return SubmitFinalLaw(expression), None
    return None, {
        "code": "protocol-error",
        "message": f"unknown message type {msg_type!r}; "
        f"expected one of {list(CLIENT_TYPES)}",
    }


def serve_stream(
    task: TaskSpec,
    config: SessionConfig,
    infile,
    outfile,
    session_id: str | None = None,
) -> Session:
    """Run one session over text streams; returns the closed session."""
    session_id = session_id or uuid.uuid4().hex
    session, briefing = open_session(task, config)

    def send(msg_type: str, payload) -> None:
        outfile.write(
            envelope(msg_type, session_id, session.rounds_used, payload) + "\n"
        )
        outfile.flush()

    send(
        "briefing",
        {
            "task_id": task.task_id,
            "briefing": briefing,
            "inputs": list(task.model.inputs),
            "outputs": list(task.model.final_outputs),
            "max_rounds": config.max_rounds,
            "max_sets_per_round": config.max_sets_per_round,
            "noise_sigma": config.noise_sigma,
        },
    )
    for line in infile:
        line = line.strip()
        if not line:
            continue
        action, problem = _parse_client_line(line)
        if problem is not None:
            send("error", problem)
            continue
        reply = step(session, action)
        send(reply["type"], reply["payload"])
        if reply["type"] == "final_law":
            break
    return session


def serve_stdio(task: TaskSpec, config: SessionConfig) -> Session:
    return serve_stream(task, config, sys.stdin, sys.stdout)


def serve_tcp(
    task: TaskSpec,
    config: SessionConfig,
    host: str,
    port: int,
    max_sessions: int | None = 1,
) -> None:
    """Accept connections sequentially, one fresh session per connection."""
    with socket.create_server((host, port)) as server:
        served = 0
        while max_sessions is None or served < max_sessions:
            conn, _ = server.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                serve_stream(task, config, reader, writer)
                writer.close()
                reader.close()
            served += 1
