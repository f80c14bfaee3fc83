import json
import subprocess
import sys
import time

import pytest

from labelset_loss.cli import load_config, main
from labelset_loss.exceptions import ConfigInvalid
from labelset_loss.volio import read_metrics_csv, read_volume


def write_config(path, **over):
    doc = {
        "labels": ["background", "ring", "core"],
        "seed": 3,
        "phantom": {"dims": [8, 8, 8], "noise_sigma": 0.2},
        "cases": [
            {"id": "a", "split": "train"},
            {"id": "b", "split": "train"},
            {"id": "c", "split": "train", "lprime": ["ring", "core"]},
            {"id": "d", "split": "test"},
        ],
        "losses": [{"kind": "MeanClassDice"}, {"kind": "LeafDice"},
                   {"name": "soft", "kind": "SoftTargetDice", "alpha": 1}],
        "train": {"learning_rate": 0.05, "max_epochs": 10},
    }
    doc.update(over)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def config(tmp_path):
    return write_config(tmp_path / "exp.json")


def test_generate_writes_three_volumes_per_case(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["generate", "--config", str(config), "--out", str(out)]) == 0
    files = sorted(p.name for p in (out / "volumes").iterdir())
    assert len(files) == 12
    manifest = json.loads((out / "manifest.json").read_text())
    assert [c["id"] for c in manifest["cases"]] == ["a", "b", "c", "d"]
    assert manifest["cases"][2]["lprime"] == ["ring", "core"]
    assert read_volume(out / "volumes" / "c_partial.lsv").masks.max() == 0b110
    assert "wrote 12 volumes" in capsys.readouterr().out


def test_generate_is_deterministic(config, tmp_path):
    for name in ("x", "y"):
        main(["generate", "--config", str(config), "--out", str(tmp_path / name)])
    for f in (tmp_path / "x" / "volumes").iterdir():
        assert f.read_bytes() == (tmp_path / "y" / "volumes" / f.name).read_bytes()


def test_seed_flag_changes_noise(config, tmp_path):
    main(["generate", "--config", str(config), "--out", str(tmp_path / "x")])
    main(["generate", "--config", str(config), "--out", str(tmp_path / "y"), "--seed", "4"])
    name = "a_features.lsv"
    assert (tmp_path / "x/volumes" / name).read_bytes() != (tmp_path / "y/volumes" / name).read_bytes()


def test_unknown_label_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json",
                       cases=[{"id": "a", "lprime": ["ring", "csf"]}])
    with pytest.raises(ConfigInvalid):
        load_config(cfg)
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "csf" in capsys.readouterr().err


@pytest.mark.parametrize("over", [
    {"cases": []},
    {"cases": [{"id": "a"}, {"id": "a"}]},
    {"cases": [{"id": "a", "split": "dev"}]},
    {"losses": [{"kind": "Focal"}]},
    {"phantom": {"shell_radii": [0.9, 0.2]}},
])
def test_invalid_configs(tmp_path, over):
    with pytest.raises(ConfigInvalid):
        load_config(write_config(tmp_path / "c.json", **over))


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["check", "everything"]) == 2
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == 2


def test_compare_needs_generated_volumes(config, tmp_path, capsys):
    assert main(["compare", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
    assert "generate" in capsys.readouterr().err


def test_compare_outputs_and_determinism(config, tmp_path):
    outs = []
    for name in ("x", "y"):
        out = tmp_path / name
        assert main(["generate", "--config", str(config), "--out", str(out)]) == 0
        assert main(["compare", "--config", str(config), "--out", str(out)]) == 0
        outs.append(out)
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["losses"] == ["MeanClassDice", "LeafDice", "soft"]
    entries = [cls["dsc_mean"] for per in summary["summary"].values() for cls in per.values()]
    assert len(entries) == 3 * 3
    for name in ("MeanClassDice", "LeafDice", "soft"):
        a = (outs[0] / "metrics" / f"{name}.csv").read_bytes()
        assert a == (outs[1] / "metrics" / f"{name}.csv").read_bytes()
        assert len(read_metrics_csv(outs[0] / "metrics" / f"{name}.csv")) == 3
        assert (outs[0] / "logs" / f"{name}_train_log.csv").exists()
        assert (outs[0] / "predictions" / f"{name}_d_prob.lsv").exists()
    model = json.loads((outs[0] / "models" / "MeanClassDice.json").read_text())
    # the fully supervised baseline never sees the partially annotated case
    assert "c" not in model["train_ids"] + model["val_ids"]


def test_train_then_evaluate(config, tmp_path):
    out = str(tmp_path / "o")
    main(["generate", "--config", str(config), "--out", out])
    assert main(["evaluate", "--config", str(config), "--out", out]) == 2
    assert main(["train", "--config", str(config), "--out", out]) == 0
    assert main(["evaluate", "--config", str(config), "--out", out]) == 0
    assert (tmp_path / "o" / "metrics" / "LeafDice.csv").exists()


def test_minimal_comparison_runs_quickly(tmp_path):
    cases = [{"id": f"t{i}", "lprime": ["b", "c"] if i >= 3 else []} for i in range(6)]
    cases += [{"id": f"s{i}", "split": "test"} for i in range(2)]
    cfg = write_config(tmp_path / "k4.json", labels=["a", "b", "c", "d"], cases=cases,
                       phantom={"dims": [16, 16, 16], "noise_sigma": 0.3},
                       losses=[{"kind": k} for k in
                               ("MeanClassDice", "SoftTargetDice", "ConvertedDice", "LeafDice")],
                       train={})
    t0 = time.perf_counter()
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert time.perf_counter() - t0 < 300


@pytest.mark.parametrize("suite,code", [("axioms", 0), ("grad", 0), ("oracle", 1)])
def test_check_exit_codes(suite, code, capsys):
    assert main(["check", suite]) == code
    out, err = capsys.readouterr()
    if suite == "axioms":
        assert "counterexample found (expected)" in out
    if code:
        assert "FAILED: oracle/ConvertedDice-vs-marginal-Dice" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "labelset_loss", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "compare" in res.stdout
