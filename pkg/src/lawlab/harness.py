"""Suite orchestration: seeded runs, append-only results, and reports.

A suite is (task filter) x (repeats); every run gets a seed derived
purely from (master seed, task id, repeat index), so any single cell can
be reproduced in isolation. Results are line-delimited JSON records
appended as runs finish; interrupting and restarting a suite skips the
(task, repeat) pairs already on disk.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .evaluation import EvaluationError, evaluate_submission
from .session import NOISE_LEVELS, SessionConfig, open_session
from .solver import discover
from .systems import TaskSpec, find_task, task_suite

MASTER_SEED_ENV = "LAWLAB_MASTER_SEED"
TIERS = ("easy", "medium", "hard")
SETTINGS = ("vanilla", "simple", "complex")
RESULTS_FILE = "results.jsonl"


class HarnessError(RuntimeError):
    pass


# ------------------------------------------------------------- word sets


@dataclass(frozen=True)
class WordSets:
    exploration: tuple[str, ...]
    exploitation: tuple[str, ...]

    def __post_init__(self):
        explore = {p.lower() for p in self.exploration}
        exploit = {p.lower() for p in self.exploitation}
        if explore & exploit:
            raise HarnessError(
                f"word sets overlap: {sorted(explore & exploit)}"
            )
        if not explore or not exploit:
            raise HarnessError("both word sets must be non-empty")


def load_word_sets(path: str | Path | None = None) -> WordSets:
    if path is None:
        raw = resources.files("lawlab.data").joinpath("wordsets.json").read_text()
    else:
        raw = Path(path).read_text()
    data = json.loads(raw)
    return WordSets(tuple(data["exploration"]), tuple(data["exploitation"]))


def _count_phrase(text: str, phrase: str) -> int:
    pattern = r"\b" + re.escape(phrase.lower()) + r"\b"
    return len(re.findall(pattern, text))


def exploration_rate(text: str, word_sets: WordSets) -> float | None:
    """Percentage of exploration-signature phrases among all signature
    phrases; None when the text contains neither kind."""
    normalized = " ".join(text.lower().split())
    n_explore = sum(_count_phrase(normalized, p) for p in word_sets.exploration)
    n_exploit = sum(_count_phrase(normalized, p) for p in word_sets.exploitation)
    total = n_explore + n_exploit
    if total == 0:
        return None
    return 100.0 * n_explore / total


# ---------------------------------------------------------- configuration


@dataclass
class SuiteConfig:
    domains: tuple[str, ...] | None = None
    tiers: tuple[str, ...] | None = None
    settings: tuple[str, ...] | None = None
    repeats: int = 4
    noise_sigma: float = 0.0
    master_seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    eval_points: int = 1_000

    def __post_init__(self):
        if self.repeats < 1:
            raise HarnessError("repeats must be >= 1")
        if self.workers < 1:
            raise HarnessError("workers must be >= 1")
        if self.noise_sigma not in NOISE_LEVELS:
            raise HarnessError(
                f"noise_sigma must be one of {sorted(NOISE_LEVELS)}"
            )
        for name, allowed in (("tiers", TIERS), ("settings", SETTINGS)):
            chosen = getattr(self, name)
            if chosen is not None:
                bad = set(chosen) - set(allowed)
                if bad:
                    raise HarnessError(f"unknown {name}: {sorted(bad)}")

    @staticmethod
    def from_file(path: str | Path, **overrides) -> "SuiteConfig":
        data = json.loads(Path(path).read_text())
        for key in ("domains", "tiers", "settings"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        data.update(overrides)
        return SuiteConfig(**data)


def derive_seed(master_seed: int, task_id: str, repeat: int) -> int:
    digest = hashlib.sha256(
        f"{master_seed}:{task_id}:{repeat}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def select_tasks(config: SuiteConfig) -> list[TaskSpec]:
    chosen = [
        task
        for task in task_suite()
        if (config.domains is None or task.law.domain in config.domains)
        and (config.tiers is None or task.tier in config.tiers)
        and (config.settings is None or task.setting in config.settings)
    ]
    if not chosen:
        raise HarnessError("task filter selects no tasks")
    return chosen


# ------------------------------------------------------------- suite runs


def run_task_once(
    task_id: str,
    repeat: int,
    noise_sigma: float,
    seed: int,
    eval_points: int = 1_000,
) -> dict:
    """Execute one (task, repeat) cell and score it; never raises, the
    record carries any failure instead."""
    record = {
        "task_id": task_id,
        "repeat": repeat,
        "seed": seed,
        "noise_sigma": noise_sigma,
        "error": None,
    }
    try:
        task = find_task(task_id)
        session, _ = open_session(
            task, SessionConfig(noise_sigma=noise_sigma, rng_seed=seed)
        )
        answer, solve = discover(task, session, rng_seed=seed)
        report = evaluate_submission(
            task.law,
            task.target_tree,
            answer,
            n=eval_points,
            rng_seed=seed + 1,
        )
        record.update(
            submitted=solve.submitted,
            rounds_used=solve.rounds_used,
            probes_used=solve.probes_used,
            identified=solve.identified,
            symbolic_accuracy=report.symbolic_accuracy,
            rmsle=report.rmsle if math.isfinite(report.rmsle) else None,
            valid_fraction=report.valid_fraction,
            fit_residual=report.fit_residual,
        )
    except Exception as exc:  # recorded, suite continues
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def _completed_keys(results_path: Path) -> set[tuple[str, int]]:
    done = set()
    if not results_path.exists():
        return done
    for line in results_path.read_text().splitlines():
        try:
            record = json.loads(line)
            done.add((record["task_id"], record["repeat"]))
        except (json.JSONDecodeError, KeyError):
            continue
    return done


def run_suite(config: SuiteConfig) -> Path:
    """Run every (task, repeat) cell not already recorded; returns the
    results directory."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / RESULTS_FILE
    done = _completed_keys(results_path)

    jobs = [
        (task.task_id, repeat)
        for task in select_tasks(config)
        for repeat in range(config.repeats)
        if (task.task_id, repeat) not in done
    ]
    args = [
        (
            task_id,
            repeat,
            config.noise_sigma,
            derive_seed(config.master_seed, task_id, repeat),
            config.eval_points,
        )
        for task_id, repeat in jobs
    ]
    if config.workers == 1:
        records = (run_task_once(*a) for a in args)
    else:
        pool = ProcessPoolExecutor(max_workers=config.workers)
        records = pool.map(_run_star, args)
    with results_path.open("a") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    if config.workers != 1:
        pool.shutdown()
    return out_dir


def _run_star(args):
    return run_task_once(*args)


def count_errors(results_dir: str | Path) -> int:
    path = Path(results_dir) / RESULTS_FILE
    if not path.exists():
        raise HarnessError(f"no {RESULTS_FILE} in {results_dir}")
    errors = 0
    for record in _read_records(path):
        if record.get("error"):
            errors += 1
    return errors


# ----------------------------------------------------------------- reports


def _read_records(path: Path) -> Iterable[dict]:
    for line in path.read_text().splitlines():
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            continue  # corrupt record: skipped
        if isinstance(record, dict) and "task_id" in record:
            yield record


def _stats(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def _cell_summary(records: Sequence[dict]) -> dict:
    scored = [r for r in records if not r.get("error")]
    sa = [100.0 * bool(r["symbolic_accuracy"]) for r in scored]
    rmsle = [r["rmsle"] for r in scored if r.get("rmsle") is not None]
    sa_mean, sa_std = _stats(sa)
    rm_mean, rm_std = _stats(rmsle)
    return {
        "runs": len(records),
        "errors": len(records) - len(scored),
        "sa_mean": sa_mean,
        "sa_std": sa_std,
        "rmsle_mean": rm_mean,
        "rmsle_std": rm_std,
        "rmsle_infinite": len(scored) - len(rmsle),
    }


def _task_parts(task_id: str) -> tuple[str, str, str]:
    domain, _, tier, setting = task_id.rsplit(".", 3)
    return domain, tier, setting


def render_report(results_dir: str | Path) -> str:
    """Aggregate raw records into a setting x tier grid plus a per-domain
    table; writes report.txt and report.csv next to the records."""
    out_dir = Path(results_dir)
    records = list(_read_records(out_dir / RESULTS_FILE))
    if not records:
        raise HarnessError(f"no readable records in {out_dir}")

    grid = {}
    domains = {}
    for record in records:
        domain, tier, setting = _task_parts(record["task_id"])
        grid.setdefault((setting, tier), []).append(record)
        domains.setdefault(domain, []).append(record)

    lines = ["symbolic accuracy % (mean +- std) by setting x tier", ""]
    header = f"{'setting':<10}" + "".join(f"{t:>18}" for t in TIERS)
    lines.append(header)
    rows = []
    for setting in SETTINGS:
        cells = [f"{setting:<10}"]
        for tier in TIERS:
            cell = grid.get((setting, tier))
            if cell:
                s = _cell_summary(cell)
                cells.append(f"{s['sa_mean']:>9.1f} +- {s['sa_std']:<5.1f}")
                rows.append((setting, tier, s))
            else:
                cells.append(f"{'-':>18}")
        lines.append("".join(cells))

    lines += ["", "per-domain symbolic accuracy %", ""]
    for domain in sorted(domains):
        s = _cell_summary(domains[domain])
        lines.append(
            f"{domain:<16}{s['sa_mean']:>7.1f} +- {s['sa_std']:<6.1f}"
            f"  runs={s['runs']}  errors={s['errors']}"
        )
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["setting", "tier", "runs", "errors", "sa_mean", "sa_std",
         "rmsle_mean", "rmsle_std", "rmsle_infinite"]
    )
    for setting, tier, s in rows:
        writer.writerow(
            [setting, tier, s["runs"], s["errors"],
             f"{s['sa_mean']:.6f}", f"{s['sa_std']:.6f}",
             f"{s['rmsle_mean']:.6f}", f"{s['rmsle_std']:.6f}",
             s["rmsle_infinite"]]
        )
    (out_dir / "report.csv").write_text(buf.getvalue())
    return text


def rescore(results_dir: str | Path, eval_points: int = 1_000) -> Path:
    """Re-evaluate recorded submissions from their stored expression text;
    writes rescored.jsonl and returns its path."""
    from .expr import ParseError, parse_expression

    out_dir = Path(results_dir)
    out_path = out_dir / "rescored.jsonl"
    with out_path.open("w") as fh:
        for record in _read_records(out_dir / RESULTS_FILE):
            if record.get("error") or not record.get("submitted"):
                continue
            task = find_task(record["task_id"])
            fresh = dict(record)
            try:
                submission = parse_expression(
                    record["submitted"],
                    set(task.law.variables),
                    {"C", "C1", "C2"},
                )
                report = evaluate_submission(
                    task.law,
                    task.target_tree,
                    submission,
                    n=eval_points,
                    rng_seed=record["seed"] + 1,
                )
                fresh["symbolic_accuracy"] = report.symbolic_accuracy
                fresh["rmsle"] = (
                    report.rmsle if math.isfinite(report.rmsle) else None
                )
                fresh["valid_fraction"] = report.valid_fraction
            except (ParseError, EvaluationError) as exc:
                fresh["error"] = f"{type(exc).__name__}: {exc}"
            fh.write(json.dumps(fresh, sort_keys=True) + "\n")
    return out_path


def analyze_transcripts(
    paths: Sequence[str | Path], word_sets: WordSets
) -> dict[str, float | None]:
    return {
        str(path): exploration_rate(Path(path).read_text(), word_sets)
        for path in paths
    }
