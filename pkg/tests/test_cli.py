import json
from pathlib import PurePath

import pytest

from bellforge import errors
from bellforge.cli import main
from bellforge.config import RunConfig, SpecialsSpec
from bellforge.errors import ConfigError, pipeline_stage
from bellforge.forge import Forge
from bellforge.location import ReportDirectory, ReportPathError
from bellforge.questions import build_question_set
from bellforge.strategy import DIAMOND_ODD, honest_strategy, save_strategy
from bellforge.summary import RunSummary

from conftest import specials_of


def write_config(tmp_path, raw):
    target = tmp_path / "config.json"
    target.write_text(json.dumps(raw), encoding="utf-8")
    return str(target)


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path / "reports")])


def test_gen_questions_is_reproducible(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["gen-questions", "--seed", "9", "--out", str(first)]) == 0
    assert main(["gen-questions", "--seed", "9", "--out", str(second)]) == 0
    for name in ("specials.txt", "questions.txt", "questions.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    report = json.loads((first / "questions.json").read_text(encoding="utf-8"))
    assert report["within_bounds"]


def test_honest_audit_passes(tmp_path):
    assert run(tmp_path, "audit") == 0
    report = json.loads((tmp_path / "reports" / "audit.json").read_text(encoding="utf-8"))
    assert report["epsilon"] <= 1e-9


def test_sampled_audit_writes_trials(tmp_path):
    config = write_config(tmp_path, {"n": 1, "specials": ["3"], "trials_per_cell": 10})
    assert run(tmp_path, "audit", "--config", config) == 0
    header = (tmp_path / "reports" / "trials.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "round,x,y,a,b"
    sampled = json.loads((tmp_path / "reports" / "audit_sampled.json").read_text(encoding="utf-8"))
    assert sampled["alpha"] == pytest.approx(0.01)


def test_noisy_audit_fails_gate(tmp_path):
    config = write_config(tmp_path, {"specials": ["31"], "noise": {"kind": "depolarizing", "p": 0.05}})
    assert run(tmp_path, "audit", "--config", config, "--gate", "0.01") == 1
    assert run(tmp_path, "audit", "--config", config, "--gate", "1.0") == 0


def test_strategy_file(tmp_path):
    specials = specials_of("11")
    target = tmp_path / "honest.json"
    save_strategy(honest_strategy(2), target, build_question_set(specials))
    config = write_config(tmp_path, {"specials": ["11"], "strategy": str(target)})
    assert run(tmp_path, "audit", "--config", config) == 0

    document = json.loads(target.read_text(encoding="utf-8"))
    del document["bob"][DIAMOND_ODD]
    target.write_text(json.dumps(document), encoding="utf-8")
    assert run(tmp_path, "audit", "--config", config) == 1


def test_selftest_passes(tmp_path):
    config = write_config(tmp_path, {"specials": ["31", "24"]})
    assert run(tmp_path, "selftest", "--config", config) == 0
    report = json.loads((tmp_path / "reports" / "selftest.json").read_text(encoding="utf-8"))
    assert report["vb_consistent"]


def test_prepare(tmp_path):
    config = write_config(tmp_path, {"specials": ["31", "24"]})
    assert run(tmp_path, "prepare", "--config", config, "--chi", "24") == 0
    assert (tmp_path / "reports" / "prepare_24.json").exists()
    assert run(tmp_path, "prepare", "--config", config, "--chi", "11") == 1


def test_conjugated_prepare(tmp_path):
    config = write_config(tmp_path, {"specials": ["32"], "strategy": "conjugated"})
    assert run(tmp_path, "prepare", "--config", config, "--threshold", "1e-6") == 0


def test_oracle(tmp_path):
    assert run(tmp_path, "oracle", "--count", "50") == 0
    report = json.loads((tmp_path / "reports" / "oracle.json").read_text(encoding="utf-8"))
    assert report["violations"] == 0


def test_bad_config_exits_with_one(tmp_path):
    config = write_config(tmp_path, {"alpha": 5})
    assert run(tmp_path, "audit", "--config", config) == 1


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["sing"])


def test_forge_rejects_mismatched_specials(tmp_path):
    forge = Forge(RunConfig(n=3, specials=SpecialsSpec(explicit=["12"])), tmp_path)
    with pytest.raises(ConfigError):
        forge.specials()
    assert forge.audit() is None
    assert forge.summary.has_failures() is False


def test_report_directory_stays_inside(tmp_path):
    reports = ReportDirectory(tmp_path)
    assert reports.resolve("a.json").parent == tmp_path.resolve()
    with pytest.raises(ReportPathError) as info:
        reports.resolve(PurePath("..", "escape.json"))
    assert info.value.root == tmp_path.resolve()
    assert "leaves the report directory" in str(info.value)
    with pytest.raises(ReportPathError) as info:
        reports.resolve(tmp_path / "absolute.json")
    assert "must be relative" in str(info.value)
    path = reports.write_lines(PurePath("nested", "lines.txt"), ["1", "2"])
    assert path.read_text(encoding="utf-8") == "1\n2\n"
    assert reports.write_lines("nested/lines.txt", ["3"]) == path
    assert path.read_text(encoding="utf-8") == "3\n"


def record_stage_failures(monkeypatch):
    failures = []
    monkeypatch.setattr(errors.PRETTY, "stage_failed",
                        lambda stage_name, reason: failures.append((stage_name, reason)))
    return failures


def test_failing_stage_is_reported_by_name(tmp_path, monkeypatch):
    failures = record_stage_failures(monkeypatch)
    forge = Forge(RunConfig(n=3, specials=SpecialsSpec(explicit=["12"])), tmp_path)
    assert forge.audit() is None
    assert forge.selftest() is None
    assert [stage_name for stage_name, _ in failures] == ["audit", "self-test"]
    assert failures[0][1].startswith("ConfigError: Special questions have length 2")


def test_unexpected_stage_error_is_reported(monkeypatch):
    failures = record_stage_failures(monkeypatch)

    @pipeline_stage("division")
    def divide(numerator, denominator):
        return numerator / denominator

    assert divide(6, 3) == 2
    assert divide(1, 0) is None
    assert failures == [("division", "unexpected ZeroDivisionError")]
    assert divide.__name__ == "divide"


def test_run_summary_merges():
    first, second = RunSummary(), RunSummary()
    first.add_gate("a", True)
    second.add_gate("a", True)
    second.add_gate("b", False)
    first.merge(second)
    assert first.passed_gates == ["a"]
    assert first.failed_gates == ["b"]
    assert first.has_failures()
