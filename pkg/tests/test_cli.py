"""CLI tests: exit codes, artifacts, reproducibility, input validation."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from catoptric.imaging import compose_light, LightColor, LightParams, Polygon, load_png, save_png
from catoptric.oracle import CentroidOracle

CENTROIDS = [[0.2, 0.2, 0.2], [0.8, 0.7, 0.6], [0.5, 0.9, 0.3]]


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "catoptric", *[str(a) for a in args]],
        capture_output=True, text=True, cwd=cwd, timeout=300,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Oracle spec + a small labeled dataset on disk."""
    root = tmp_path_factory.mktemp("cli")
    oracle = CentroidOracle(CENTROIDS, temperature=10.0)
    oracle.save(root / "oracle.json")

    rng = np.random.default_rng(2024)
    centroids = np.asarray(CENTROIDS)
    rows = []
    for i in range(6):
        y = i % 3
        rival = (y + 1) % 3
        base = centroids[y] + 0.42 * (centroids[rival] - centroids[y])
        img = np.clip(base + rng.normal(0, 0.02, (10, 10, 3)), 0, 1).astype(np.float32)
        assert oracle.predict(img).label == y
        name = f"img{i}.png"
        save_png(img, root / name)
        rows.append((f"img{i}", name, y))
    with open(root / "dataset.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label"])
        writer.writerows(rows)
    return root


class TestAttackCommand:
    def test_successful_attack_exit_0_and_artifacts(self, workdir, tmp_path):
        out = tmp_path / "out"
        proc = run_cli(
            "attack", "--image", workdir / "img0.png", "--label", 0,
            "--oracle", f"builtin:{workdir / 'oracle.json'}",
            "--seed", 5, "--out", out,
            "--seed-count", 20, "--steps", 10, "--eot-samples", 3, "--eot-accept", 0.7,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "adversarial.png").exists()
        assert (out / "result.json").exists()

        theta = json.loads((out / "theta.json").read_text())
        oracle = CentroidOracle.load(workdir / "oracle.json")
        img = load_png(workdir / "img0.png")
        params = LightParams(Polygon(theta["vertices"]),
                             LightColor(*theta["color"]), theta["intensity"])
        adv = compose_light(img, params)
        assert oracle.predict(adv).label != 0  # theta JSON replays to a flip

        result = json.loads((out / "result.json").read_text())
        assert result["success"] is True
        assert result["queries"] >= 1

    def test_zero_intensity_fails_with_exit_2_and_identity_png(self, workdir, tmp_path):
        out = tmp_path / "out0"
        proc = run_cli(
            "attack", "--image", workdir / "img1.png", "--label", 1,
            "--oracle", f"builtin:{workdir / 'oracle.json'}",
            "--seed", 5, "--out", out, "--intensity", 0.0,
            "--seed-count", 5, "--steps", 3, "--eot-samples", 2,
        )
        assert proc.returncode == 2, proc.stderr
        assert np.array_equal(load_png(out / "adversarial.png"),
                              load_png(workdir / "img1.png"))

    def test_missing_label_is_usage_error_exit_1(self, workdir):
        proc = run_cli("attack", "--image", workdir / "img0.png",
                       "--oracle", f"builtin:{workdir / 'oracle.json'}", "--seed", 1)
        assert proc.returncode == 1
        assert "label" in proc.stderr

    def test_unreadable_image_exit_1(self, workdir, tmp_path):
        proc = run_cli("attack", "--image", tmp_path / "missing.png", "--label", 0,
                       "--oracle", f"builtin:{workdir / 'oracle.json'}", "--seed", 1)
        assert proc.returncode == 1

    def test_missing_seed_is_error(self, workdir):
        proc = run_cli("attack", "--image", workdir / "img0.png", "--label", 0,
                       "--oracle", f"builtin:{workdir / 'oracle.json'}")
        assert proc.returncode == 1
        assert "seed" in proc.stderr

    def test_wrong_label_is_precondition_error_exit_1(self, workdir, tmp_path):
        proc = run_cli("attack", "--image", workdir / "img0.png", "--label", 2,
                       "--oracle", f"builtin:{workdir / 'oracle.json'}",
                       "--seed", 1, "--out", tmp_path / "x")
        assert proc.returncode == 1


class TestGridCommand:
    def test_one_cell_grid_has_one_row_and_is_reproducible(self, workdir, tmp_path):
        outs = []
        for run in range(2):
            out = tmp_path / f"grid{run}"
            proc = run_cli(
                "grid", "--dataset", workdir / "dataset.csv",
                "--oracle", f"builtin:{workdir / 'oracle.json'}",
                "--seed", 9, "--out", out,
                "--edge-counts", "3", "--intensities", "0.6", "--methods", "ga",
                "--seed-count", 8, "--steps", 5, "--eot-samples", 2, "--eot-accept", 0.5,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        rows = list(csv.DictReader(open(outs[0] / "grid.csv")))
        assert len(rows) == 1
        assert rows[0]["method"] == "ga" and rows[0]["edges"] == "3"
        assert int(rows[0]["n_images"]) == 6
        assert (outs[0] / "grid.csv").read_bytes() == (outs[1] / "grid.csv").read_bytes()
        manifest = json.loads((outs[0] / "manifest.json").read_text())
        assert manifest["run_seed"] == 9

    def test_empty_dataset_is_operational_error(self, workdir, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("id,path,label\n")
        proc = run_cli("grid", "--dataset", empty,
                       "--oracle", f"builtin:{workdir / 'oracle.json'}", "--seed", 1)
        assert proc.returncode == 1


class TestAblateAndDataset:
    def test_ablate_two_colors(self, workdir, tmp_path):
        out = tmp_path / "ablate"
        proc = run_cli(
            "ablate-color", "--dataset", workdir / "dataset.csv",
            "--oracle", f"builtin:{workdir / 'oracle.json'}",
            "--seed", 3, "--out", out, "--colors", "255,0,255;0,0,0",
            "--intensity", 0.7, "--seed-count", 6, "--steps", 4,
            "--eot-samples", 2, "--eot-accept", 0.5,
        )
        assert proc.returncode == 0, proc.stderr
        rows = list(csv.DictReader(open(out / "ablation.csv")))
        assert {r["color"] for r in rows} == {"255_0_255", "0_0_0"}

    def test_gen_dataset_counts(self, workdir, tmp_path):
        out = tmp_path / "corpus"
        proc = run_cli("gen-dataset", "--dataset", workdir / "dataset.csv",
                       "--oracle", f"builtin:{workdir / 'oracle.json'}",
                       "--seed", 4, "--out", out)
        assert proc.returncode == 0, proc.stderr
        files = list(Path(out).rglob("*.png"))
        assert len(files) == 6 * 27
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 162

    def test_transfer_replay(self, workdir, tmp_path):
        corpus_dir = tmp_path / "c"
        corpus_dir.mkdir()
        oracle = CentroidOracle.load(workdir / "oracle.json")
        rng = np.random.default_rng(1)
        entries = []
        for i in range(4):
            img = rng.random((8, 8, 3)).astype(np.float32)
            pred = oracle.predict(img).label
            save_png(img, corpus_dir / f"s{i}.png")
            entries.append({"path": f"s{i}.png", "label": int((pred + 1) % 3)})
        (corpus_dir / "manifest.json").write_text(json.dumps({"entries": entries}))

        out = tmp_path / "transfer"
        proc = run_cli("transfer", "--corpus", corpus_dir / "manifest.json",
                       "--oracles", f"builtin:{workdir / 'oracle.json'}",
                       "--names", "source", "--out", out)
        assert proc.returncode == 0, proc.stderr
        rows = list(csv.DictReader(open(out / "transfer.csv")))
        assert len(rows) == 1
        # PNG quantization can only move the mean negligibly: replay stays adversarial
        assert float(rows[0]["asr"]) == 1.0


class TestConfigPrecedence:
    def test_config_file_applies_and_cli_overrides(self, workdir, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"seed_count": 6, "steps": 3, "eot_samples": 2}))
        out = tmp_path / "out"
        proc = run_cli(
            "attack", "--image", workdir / "img2.png", "--label", 2,
            "--oracle", f"builtin:{workdir / 'oracle.json'}",
            "--seed", 8, "--out", out, "--config", config, "--steps", 4,
        )
        assert proc.returncode in (0, 2), proc.stderr
        result = json.loads((out / "result.json").read_text())
        # steps from CLI (4) beats config (3); population from config (6)
        assert result["generations"] <= 4
        assert result["queries"] <= 1 + 6 * 4 * (1 + 2)

    def test_unknown_config_key_is_error(self, workdir, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus": 1}))
        proc = run_cli("attack", "--image", workdir / "img0.png", "--label", 0,
                       "--oracle", f"builtin:{workdir / 'oracle.json'}",
                       "--seed", 1, "--config", config)
        assert proc.returncode == 1
        assert "bogus" in proc.stderr
