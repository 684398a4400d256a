import subprocess
import sys

import numpy as np
import pytest

from trimatte.cli import main
from trimatte.netpbm import read_gray, write_gray

SMALL = ["model.encoder.cnn_channels=4,8", "model.encoder.stage_channels=8,8,16,16",
         "model.encoder.heads=1,1,2,2", "train.steps=3", "train.batch_size=2",
         "data.synth_n=2", "optim.lr=0.001"]


def sets(items):
    out = []
    for item in items:
        out += ["--set", item]
    return out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth-data", "--n", "3", "--size", "64", "--seed", "1", "--split", "test",
                 "--out", str(root / "corpus")]) == 0
    assert main(["train", "--out", str(root / "run")] + sets(SMALL)) == 0
    return root


def test_train_outputs(workspace):
    run = workspace / "run"
    assert (run / "final.ckpt").exists() and (run / "config.txt").exists()
    assert (run / "loss_trace.csv").read_text().count("\n") == 4


def test_infer_and_clamp(workspace, tmp_path):
    corpus = workspace / "corpus"
    image = next((corpus / "image").glob("*.ppm"))
    trimap = corpus / "trimap" / image.name.replace(".ppm", ".pgm")
    args = ["infer", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--image", str(image),
            "--trimap", str(trimap)]
    assert main(args + ["--out", str(tmp_path / "a.pgm")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.pgm")]) == 0
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert read_gray(tmp_path / "a.pgm").shape == (64, 64)
    assert main(args + ["--clamp-known", "--out", str(tmp_path / "c.pgm")]) == 0
    out, tri = read_gray(tmp_path / "c.pgm"), read_gray(trimap)
    assert np.all(out[tri == 255] == 255) and np.all(out[tri == 0] == 0)


def test_eval_oracle_and_model(workspace, tmp_path, capsys):
    manifest = workspace / "corpus" / "manifest.tsv"
    assert main(["eval", "--oracle", "--manifest", str(manifest), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "metrics.csv").read_text().splitlines()[1:]
    assert len(rows) == 3
    assert all(r.split(",")[1:5] == ["0.0"] * 4 for r in rows)
    assert main(["eval", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--manifest", str(manifest),
                 "--out", str(tmp_path / "m")]) == 0
    assert "| TT+TP | 3 |" in (tmp_path / "m" / "summary.md").read_text()


def test_attn_viz(workspace, tmp_path):
    corpus = workspace / "corpus"
    image = next((corpus / "image").glob("*.ppm"))
    trimap = corpus / "trimap" / image.name.replace(".ppm", ".pgm")
    args = ["attn-viz", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--image", str(image),
            "--trimap", str(trimap), "--point", "10,20", "--stage", "2", "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args + ["--substitute-class", "background"]) == 0
    files = sorted(p.name for p in tmp_path.glob("*.pgm"))
    assert files == ["attn_s2b0_h0.pgm", "attn_s2b0_h0_sub-background.pgm"]
    assert read_gray(tmp_path / files[0]).max() == 255


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TRIMATTE_OUTPUT_DIR", str(tmp_path))
    assert main(["synth-data", "--n", "1", "--size", "32"]) == 0
    assert (tmp_path / "synth" / "manifest.tsv").exists()


def test_exit_codes(workspace, tmp_path, capsys):
    assert main(["train", "--set", "nope=1"]) == 2
    assert "nope" in capsys.readouterr().err
    assert main(["infer", "--checkpoint", str(tmp_path / "missing.ckpt"), "--image", "x", "--trimap", "y"]) == 3
    corpus = workspace / "corpus"
    image = next((corpus / "image").glob("*.ppm"))
    bad = tmp_path / "bad.pgm"
    write_gray(bad, np.full((64, 64), 7, np.uint8))
    code = main(["infer", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--image", str(image),
                 "--trimap", str(bad)])
    assert code == 3
    assert "bad.pgm" in capsys.readouterr().err
    assert main(["attn-viz", "--checkpoint", str(workspace / "run" / "final.ckpt"), "--image", str(image),
                 "--trimap", str(corpus / "trimap" / image.name.replace(".ppm", ".pgm")),
                 "--point", "99,0"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "trimatte", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth-data" in out.stdout
