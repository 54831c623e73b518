import json
import subprocess
import sys

import pytest

from augrec.cli import USAGE_EXIT, main
from augrec.errors import ConfigError, MissingArtifactError
from augrec.experiment import ExperimentConfig

TINY = ["--pretrain-sentences", "10", "--target-sentences", "20", "--heldout-sentences", "10",
        "--classifier-epochs", "1", "--pretrain-epochs", "1", "--duration-epochs", "20", "--finetune-steps", "2",
        "--finetune-batch-size", "4", "--images", "1"]


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_gen_corpus_is_reproducible(tmp_path):
    assert main(["gen-corpus", "--run-dir", str(tmp_path / "a"), *TINY]) == 0
    assert main(["gen-corpus", "--run-dir", str(tmp_path / "b"), *TINY]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys() and a == b
    assert any(str(k).endswith(".melf") for k in a)


def test_run_dir_named_by_config_and_seed(tmp_path, capsys):
    assert main(["gen-corpus", "--runs-root", str(tmp_path), "--seed", "3", *TINY]) == 0
    (run,) = list(tmp_path.iterdir())
    assert run.name.endswith("-seed3")
    assert str(run) in capsys.readouterr().out


def test_staged_pipeline(tmp_path, capsys):
    rd = ["--run-dir", str(tmp_path / "run"), *TINY]
    assert main(["gen-corpus", *rd]) == 0
    assert main(["evaluate", *rd]) == MissingArtifactError.exit_code
    assert "class=MissingArtifactError" in capsys.readouterr().err
    assert main(["train-classifier", *rd]) == 0
    assert main(["pretrain", *rd]) == 0
    for stage in ("baseline-finetune", "ablation-no-reg", "finetune"):
        assert main(["finetune", "--stage", stage, *rd]) == 0
        assert main(["synthesize", "--stage", stage, *rd]) == 0
    capsys.readouterr()
    assert main(["evaluate", *rd]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1].startswith("system,FER%")
    assert main(["report", *rd]) == 0
    rep = json.loads((tmp_path / "run" / "report" / "report.json").read_text())
    assert [r["system"] for r in rep["rows"]][-1] == "augrec-full"
    assert (tmp_path / "run" / "report" / "report.csv").exists()
    log = (tmp_path / "run" / "finetune" / "finetune" / "log.jsonl").read_text().splitlines()
    assert len(log) == 2


def test_verify_losses_quick(capsys):
    assert main(["verify-losses", "--quick"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_help_lists_every_config_key():
    out = subprocess.run([sys.executable, "-m", "augrec.cli", "finetune", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for flag in ("--beta", "--gamma", "--lambda", "--mix-ratio", "--finetune-steps", "--stage", "--config"):
        assert flag in out
    assert "config key: lambda" in out


def test_unknown_flag_is_usage_error(capsys):
    assert main(["pretrain", "--no-such-flag", "1"]) == USAGE_EXIT
    assert "class=UsageError" in capsys.readouterr().err


def test_bad_config_values(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[augrec]\nbeta = lots\n")
    assert main(["gen-corpus", "--config", str(bad), "--run-dir", str(tmp_path / "r")]) == ConfigError.exit_code
    assert main(["gen-corpus", "--heldout-sentences", "90", "--run-dir", str(tmp_path / "r")]) == 10
    assert main(["gen-corpus", "--config", str(tmp_path / "missing.cfg")]) == 10
    assert capsys.readouterr().err.count("class=ConfigError") == 3


def test_config_file_round_trip_and_override(tmp_path):
    cfg = ExperimentConfig(beta=0.1, mix_ratio=0.25, mask_silence=True)
    cfg.write(tmp_path / "c.cfg")
    assert ExperimentConfig.read(tmp_path / "c.cfg") == cfg
    assert ExperimentConfig.read(tmp_path / "c.cfg", gamma=0.9).gamma == 0.9
    assert "lambda = 25.0" in (tmp_path / "c.cfg").read_text()
