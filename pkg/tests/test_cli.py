import csv
import json
import os
import subprocess
import sys

import pytest

from lobkit.cli import main

SYNTH = ["--days", "8", "--rate", "0.2", "--seed", "3", "--stock", "SYN",
         "--crossed-fraction", "0.005", "--duplicate-fraction", "0.005"]


def run_chain(root, jobs=1):
    """Every subcommand in order; returns the list of exit codes."""
    j = ["--jobs", str(jobs)]
    r = lambda *p: str(root / os.path.join(*p))
    steps = [
        ["synth", "--out", r("raw"), *SYNTH, *j],
        ["clean", "--data", r("raw"), "--out", r("clean"), *j],
        ["stats", "--data", r("clean"), "--stock", "SYN", "--out", r("out", "stats"),
         "--horizons", "10", "50", *j],
        ["label", "--data", r("clean"), "--out", r("labels"), "--horizon", "10", *j],
        ["normalize", "--data", r("clean"), "--out", r("norm"), *j],
        ["sample", "--normalized", r("norm"), "--labels", r("labels"), "--horizon", "10",
         "--cap", "200", "--out", r("windows"), *j],
        ["train-baseline", "--windows", r("windows", "train_windows.bin"), "--epochs", "2",
         "--out", r("model.bin")],
        ["predict", "--model", r("model.bin"), "--windows", r("windows", "test_windows.bin"),
         "--out", r("pred.csv")],
        ["evaluate", "--targets", r("windows", "test_targets.csv"), "--predictions", r("pred.csv"),
         "--stock", "SYN", "--horizon", "10", "--tick-class", "large", "--out", r("out", "eval")],
        ["report", "--inputs", r("out"), "--out", r("report")],
    ]
    return [main(s) for s in steps]


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    root = tmp_path_factory.mktemp("chain")
    codes = run_chain(root)
    return root, codes


def test_full_chain_succeeds(chain):
    root, codes = chain
    assert codes == [0] * 10
    idx = json.loads((root / "report" / "report_index.json").read_text())
    assert idx["n_stats_reports"] == 1 and idx["n_eval_reports"] == 1
    pngs = [f for f in idx["files"] if f.endswith(".png")]
    assert pngs and all((root / "report" / f).stat().st_size > 0 for f in pngs)


def test_chain_outputs_are_consistent(chain):
    root, _ = chain
    summary = json.loads((root / "windows" / "sample_summary.json").read_text())
    assert summary["train"] > 0 and summary["test"] > 0
    with open(root / "pred.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) - 1 == summary["test"]
    ev = json.loads((root / "out" / "eval" / "SYN_h10_eval.json").read_text())
    assert ev["n_records"] == summary["test"]
    assert ev["stock"] == "SYN" and ev["tick_class"] == "large"
    stats = json.loads((root / "out" / "stats" / "SYN_stats.json").read_text())
    assert stats["tick_class"] == "large"
    dist = json.loads((root / "labels" / "class_distribution.json").read_text())
    assert dist


def test_rerun_is_byte_identical(chain, tmp_path):
    root, _ = chain
    assert run_chain(tmp_path, jobs=2) == [0] * 10
    for sub in ("clean", "labels", "norm", "windows", "out/eval", "out/stats"):
        for name in sorted(os.listdir(root / sub)):
            if name.endswith(".png"):
                continue
            a = (root / sub / name).read_bytes()
            b = (tmp_path / sub / name).read_bytes()
            assert a == b, f"{sub}/{name} differs"
    for name in ("model.bin", "pred.csv"):
        assert (root / name).read_bytes() == (tmp_path / name).read_bytes()


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["clean", "--bogus"])
    assert exc.value.code == 2
    assert "unrecognized" in capsys.readouterr().err


def test_mismatched_lengths_exit_1(chain, tmp_path, capsys):
    root, _ = chain
    lines = (root / "pred.csv").read_text().splitlines()
    short = tmp_path / "short.csv"
    short.write_text("\n".join(lines[:-3]) + "\n")
    code = main(["evaluate", "--targets", str(root / "windows" / "test_targets.csv"),
                 "--predictions", str(short), "--out", str(tmp_path / "e")])
    assert code == 1
    assert "LengthMismatch" in capsys.readouterr().err


def test_missing_data_exits_1(tmp_path, capsys):
    assert main(["clean", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err


def test_missing_data_root_is_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("LOBKIT_DATA", raising=False)
    assert main(["clean", "--out", str(tmp_path / "o")]) == 2


def test_data_root_from_environment(chain, tmp_path, monkeypatch):
    root, _ = chain
    monkeypatch.setenv("LOBKIT_DATA", str(root / "raw"))
    assert main(["clean", "--out", str(tmp_path / "c"), "--jobs", "1"]) == 0
    assert sorted(os.listdir(tmp_path / "c")) == sorted(os.listdir(root / "clean"))


def test_config_file_and_flag_override(chain, tmp_path):
    root, _ = chain
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'data_root = "{root / "clean"}"\noutput_dir = "{tmp_path / "cfg"}"\n'
                   "horizons = [50]\n")
    assert main(["label", "--config", str(cfg), "--jobs", "1"]) == 0
    assert any(n.endswith("_h50.labels.npy") for n in os.listdir(tmp_path / "cfg"))
    assert main(["label", "--config", str(cfg), "--horizon", "100", "--out", str(tmp_path / "flag"),
                 "--jobs", "1"]) == 0
    names = os.listdir(tmp_path / "flag")
    assert any(n.endswith("_h100.labels.npy") for n in names)
    assert not any(n.endswith("_h50.labels.npy") for n in names)


def test_bad_config_value(chain, tmp_path):
    root, _ = chain
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"thresholds": "0.5,x"}))
    code = main(["evaluate", "--config", str(cfg), "--targets", str(root / "windows" / "test_targets.csv"),
                 "--predictions", str(root / "pred.csv"), "--out", str(tmp_path / "e")])
    assert code == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "lobkit.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "evaluate" in out.stdout
