"""Suite orchestration, seeding, resume, reports, transcript analytics."""

import json

import pytest
from click.testing import CliRunner

from lawlab.cli import main
from lawlab.harness import (
    HarnessError,
    SuiteConfig,
    WordSets,
    count_errors,
    derive_seed,
    exploration_rate,
    load_word_sets,
    render_report,
    rescore,
    run_suite,
    run_task_once,
    select_tasks,
)

SMALL = dict(
    domains=("gravitation",),
    tiers=("easy",),
    settings=("vanilla",),
    repeats=1,
    eval_points=300,
)


class TestWordSets:
    def test_default_file_loads(self):
        ws = load_word_sets()
        assert "alternatively" in ws.exploration
        assert "what if" in ws.exploration
        assert "confirm" in ws.exploitation
        assert "verify" in ws.exploitation

    def test_overlap_rejected(self):
        with pytest.raises(HarnessError):
            WordSets(("but", "verify"), ("verify",))

    def test_empty_rejected(self):
        with pytest.raises(HarnessError):
            WordSets((), ("confirm",))


class TestExplorationRate:
    WS = WordSets(("alternatively", "what if", "perhaps", "however"),
                  ("confirm", "verify", "fit", "test"))

    def test_three_to_one(self):
        text = "Alternatively, perhaps this is wrong; however, verify it."
        assert exploration_rate(text, self.WS) == 75.0

    def test_no_signature_phrases_undefined(self):
        assert exploration_rate("the quick brown fox", self.WS) is None

    def test_case_and_whitespace_invariance(self):
        a = exploration_rate("WHAT   IF\n\twe  CONFIRM", self.WS)
        b = exploration_rate("what if we confirm", self.WS)
        assert a == b == 50.0

    def test_whole_phrase_matching(self):
        # "fit" must not fire inside "fitness", "test" not inside "fastest"
        assert exploration_rate("fitness fastest", self.WS) is None

    def test_counts_all_occurrences(self):
        text = "perhaps perhaps perhaps verify"
        assert exploration_rate(text, self.WS) == 75.0


class TestSeeds:
    def test_pure_and_deterministic(self):
        a = derive_seed(0, "gravitation.c1.easy.vanilla", 0)
        b = derive_seed(0, "gravitation.c1.easy.vanilla", 0)
        assert a == b
        assert 0 <= a < 2**63

    def test_varies_with_every_input(self):
        base = derive_seed(0, "gravitation.c1.easy.vanilla", 0)
        assert base != derive_seed(1, "gravitation.c1.easy.vanilla", 0)
        assert base != derive_seed(0, "gravitation.c1.easy.simple", 0)
        assert base != derive_seed(0, "gravitation.c1.easy.vanilla", 1)


class TestConfig:
    def test_invalid_values_rejected(self):
        with pytest.raises(HarnessError):
            SuiteConfig(repeats=0)
        with pytest.raises(HarnessError):
            SuiteConfig(tiers=("impossible",))
        with pytest.raises(HarnessError):
            SuiteConfig(noise_sigma=0.5)
        with pytest.raises(HarnessError):
            SuiteConfig(workers=0)

    def test_from_file_with_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"domains": ["hooke"], "repeats": 2}))
        config = SuiteConfig.from_file(path, repeats=3)
        assert config.domains == ("hooke",)
        assert config.repeats == 3

    def test_filter_resolves_nine_single_domain_tasks(self):
        tasks = select_tasks(SuiteConfig(domains=("gravitation",),
                                         settings=("vanilla",)))
        assert len(tasks) == 9

    def test_empty_filter_rejected(self):
        with pytest.raises(HarnessError):
            select_tasks(SuiteConfig(domains=("phlogiston",)))


class TestSuiteRuns:
    def test_single_cell(self):
        record = run_task_once(
            "gravitation.c1.easy.vanilla", 0, 0.0,
            derive_seed(0, "gravitation.c1.easy.vanilla", 0),
            eval_points=300,
        )
        assert record["error"] is None
        assert record["symbolic_accuracy"] is True
        assert record["rounds_used"] <= 10

    def test_suite_writes_one_record_per_cell(self, tmp_path):
        out = run_suite(SuiteConfig(output_dir=str(tmp_path / "r"), **SMALL))
        lines = (out / "results.jsonl").read_text().splitlines()
        assert len(lines) == 3  # three chains x easy x vanilla
        assert all(json.loads(l)["symbolic_accuracy"] for l in lines)

    def test_resume_skips_completed(self, tmp_path):
        config = SuiteConfig(output_dir=str(tmp_path / "r"), **SMALL)
        out = run_suite(config)
        before = (out / "results.jsonl").read_bytes()
        run_suite(config)
        assert (out / "results.jsonl").read_bytes() == before

    def test_fresh_runs_are_byte_identical(self, tmp_path):
        a = run_suite(SuiteConfig(output_dir=str(tmp_path / "a"), **SMALL))
        b = run_suite(SuiteConfig(output_dir=str(tmp_path / "b"), **SMALL))
        assert (a / "results.jsonl").read_bytes() == (b / "results.jsonl").read_bytes()

    def test_count_errors(self, tmp_path):
        out = run_suite(SuiteConfig(output_dir=str(tmp_path / "r"), **SMALL))
        assert count_errors(out) == 0
        with (out / "results.jsonl").open("a") as fh:
            fh.write(json.dumps({"task_id": "hooke.c1.easy.vanilla",
                                 "repeat": 0, "error": "boom"}) + "\n")
        assert count_errors(out) == 1


@pytest.fixture(scope="module")
def results_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    return run_suite(SuiteConfig(output_dir=str(out / "r"), **SMALL))


class TestReports:
    def test_grid_and_domain_tables(self, results_dir):
        text = render_report(results_dir)
        assert "vanilla" in text
        assert "100.0" in text
        assert "gravitation" in text
        assert (results_dir / "report.txt").exists()
        assert (results_dir / "report.csv").exists()

    def test_corrupt_record_skipped(self, results_dir):
        with (results_dir / "results.jsonl").open("a") as fh:
            fh.write("{this is not json\n")
        text = render_report(results_dir)
        assert "100.0" in text

    def test_rescore_round_trip(self, results_dir):
        out = rescore(results_dir, eval_points=300)
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert records
        assert all(r["symbolic_accuracy"] for r in records)

    def test_empty_dir_rejected(self, tmp_path):
        (tmp_path / "results.jsonl").write_text("")
        with pytest.raises(HarnessError):
            render_report(tmp_path)


class TestCli:
    def test_run_and_report(self, tmp_path):
        runner = CliRunner()
        out = str(tmp_path / "r")
        result = runner.invoke(main, [
            "run", "--domains", "gravitation", "--tiers", "easy",
            "--settings", "vanilla", "--repeats", "1", "--output", out,
        ])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ["report", out])
        assert result.exit_code == 0
        assert "100.0" in result.output

    def test_env_master_seed_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LAWLAB_MASTER_SEED", "77")
        runner = CliRunner()
        out = tmp_path / "r"
        result = runner.invoke(main, [
            "run", "--domains", "gravitation", "--tiers", "easy",
            "--settings", "vanilla", "--repeats", "1", "--seed", "0",
            "--output", str(out),
        ])
        assert result.exit_code == 0, result.output
        record = json.loads((out / "results.jsonl").read_text().splitlines()[0])
        assert record["seed"] == derive_seed(77, record["task_id"], 0)

    def test_exit_nonzero_when_any_run_errored(self, tmp_path):
        out = tmp_path / "r"
        out.mkdir()
        (out / "results.jsonl").write_text(json.dumps({
            "task_id": "gravitation.c1.easy.vanilla", "repeat": 0,
            "error": "ValueError: injected",
        }) + "\n")
        runner = CliRunner()
        result = runner.invoke(main, [
            "run", "--domains", "gravitation", "--tiers", "easy",
            "--settings", "vanilla", "--repeats", "1", "--output", str(out),
        ])
        assert result.exit_code == 1

    def test_analyze_transcripts(self, tmp_path):
        transcript = tmp_path / "t.txt"
        transcript.write_text("perhaps we should verify, but how?")
        runner = CliRunner()
        result = runner.invoke(main, ["analyze-transcripts", str(transcript)])
        assert result.exit_code == 0
        assert "66.7" in result.output  # 2 explore (perhaps, but) vs 1 exploit
