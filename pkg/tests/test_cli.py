import json

import numpy as np
import pytest

from kernelfusion import checkpoint

from kernelfusion.cli import main
from kernelfusion.ingest import sample_header

from conftest import FAST


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "frames.csv"
    assert main(["synth", "--out", str(data), "--frames", "60", "--seed", "2"]) == 0
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(FAST))
    return root, data, cfg


def _train(root, data, cfg, out, variant="proposed"):
    return main(["train", "--config", str(cfg), "--data", str(data), "--out", str(root / out),
                 "--variant", variant])


def test_kernels_command(workspace):
    root, data, cfg = workspace
    assert main(["kernels", "--config", str(cfg), "--data", str(data), "--out", str(root / "k")]) == 0
    kdir = root / "k" / "kernels"
    manifest = json.loads((kdir / "manifest.json").read_text())
    assert manifest["M_tilde"] == 7
    assert [e["subset"] for e in manifest["kernels"]] == [[1], [2], [3], [1, 2], [1, 3], [2, 3], [1, 2, 3]]
    assert [e["mask"] for e in manifest["kernels"]] == [1, 2, 4, 3, 5, 6, 7]
    assert len(list(kdir.glob("*.gram"))) == 7
    assert (kdir / "preprocess.kfc").exists()


def test_featurize_command(workspace):
    root, data, cfg = workspace
    assert main(["featurize", "--data", str(data), "--out", str(root / "f")]) == 0
    stats = (root / "f" / "features" / "stat_features.csv").read_text().splitlines()
    assert len(stats) == 61
    assert len(stats[0].split(",")) == 2 + 22
    hist = (root / "f" / "features" / "shape_histograms.csv").read_text().splitlines()
    assert len(hist[1].split(",")) == 2 + 16


def test_train_outputs_and_determinism(workspace):
    root, data, cfg = workspace
    assert _train(root, data, cfg, "r1") == 0
    assert _train(root, data, cfg, "r2") == 0
    for name in ("metrics.txt", "loss.csv", "confusion.csv"):
        assert (root / "r1" / "proposed" / name).read_bytes() == (root / "r2" / "proposed" / name).read_bytes()
    (a1, m1), (a2, m2) = (checkpoint.load(root / r / "proposed" / "checkpoint.kfc") for r in ("r1", "r2"))
    assert m1["config"].pop("out") != m2["config"].pop("out")
    assert m1 == m2 and a1.keys() == a2.keys()
    for k in a1:
        np.testing.assert_array_equal(a1[k], a2[k])
    loss = (root / "r1" / "proposed" / "loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,loss,accuracy,batch_loss"
    assert len(loss) == 1 + FAST["epochs"] + 1
    metrics = (root / "r1" / "proposed" / "metrics.txt").read_text()
    assert "balanced_accuracy=" in metrics and "time" not in metrics


def test_train_reuses_kernel_dir(workspace):
    root, data, cfg = workspace
    assert _train(root, data, cfg, "r3") == 0
    assert (root / "r3" / "kernels" / "manifest.json").exists()
    assert _train(root, data, cfg, "r3", "single:correlation") == 0
    assert (root / "r3" / "single-correlation" / "metrics.txt").exists()
    # a different seed changes the split, so the stored kernels must be rejected
    code = main(["train", "--config", str(cfg), "--data", str(data), "--out", str(root / "r3"), "--seed", "9"])
    assert code == 3


def test_eval_matches_train(workspace):
    root, data, cfg = workspace
    assert _train(root, data, cfg, "r4") == 0
    ck = root / "r4" / "proposed" / "checkpoint.kfc"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data), "--out", str(root / "ev")]) == 0
    assert (root / "ev" / "metrics.txt").read_text() == (root / "r4" / "proposed" / "metrics.txt").read_text()


def test_eval_corrupted_checkpoint(workspace, capsys):
    root, data, cfg = workspace
    assert _train(root, data, cfg, "r5") == 0
    ck = root / "r5" / "proposed" / "checkpoint.kfc"
    raw = bytearray(ck.read_bytes())
    raw[len(raw) // 2] ^= 0x55
    bad = root / "bad.kfc"
    bad.write_bytes(bytes(raw))
    assert main(["eval", "--checkpoint", str(bad), "--data", str(data)]) == 2
    assert "checksum" in capsys.readouterr().err


def test_eval_empty_split(workspace, capsys):
    root, data, cfg = workspace
    assert _train(root, data, cfg, "r6") == 0
    empty = root / "empty.csv"
    empty.write_text(",".join(sample_header(500, 3)) + "\n")
    ck = root / "r6" / "proposed" / "checkpoint.kfc"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(empty), "--split", "all"]) == 0
    assert "n_test=0" in capsys.readouterr().out


def test_missing_data_exit_code(workspace, capsys):
    root, _, cfg = workspace
    assert main(["train", "--config", str(cfg), "--data", str(root / "missing.csv"), "--out", str(root)]) == 2
    assert "missing.csv" in capsys.readouterr().err
    assert main(["featurize", "--data", str(root / "missing.csv")]) == 2


def test_config_errors_exit_3(workspace, tmp_path):
    root, data, _ = workspace
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochz": 1}))
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path)]) == 3
    assert main(["train", "--variant", "single:gyro", "--data", str(data), "--out", str(tmp_path)]) == 3


def test_malformed_data_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,s_0_ax0\n1,0,abc\n")
    assert main(["featurize", "--data", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_ablate_command(workspace):
    root, data, cfg = workspace
    fast = root / "fast.json"
    fast.write_text(json.dumps({**FAST, "epochs": 2}))
    assert main(["ablate", "--config", str(fast), "--data", str(data), "--out", str(root / "ab")]) == 0
    rows = (root / "ab" / "ablation.csv").read_text().splitlines()
    assert rows[0] == "variant,balanced_accuracy,accuracy"
    assert [r.split(",")[0] for r in rows[1:]] == [
        "single:statistics", "single:shape", "single:correlation", "a", "b", "c", "proposed"]
