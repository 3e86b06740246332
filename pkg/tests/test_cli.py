import csv
import json
import re

import numpy as np
import pytest

from palmtex import archive
from palmtex.classify import ClassifierWeights, PersonTemplate
from palmtex.cli import main
from palmtex.dataset import SynthConfig, synthesize, write_dataset
from palmtex.evaluate import strip_latency
from palmtex.pipeline import SPECTRA


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    write_dataset(synthesize(SynthConfig(num_persons=3)), root)
    return root


def spectrum_args(root, pid, idx, spectra=SPECTRA):
    args = []
    for s in spectra:
        args += [f"--{s}", str(root / pid / s / f"{idx:02d}.png")]
    return args


class TestExtract:
    def test_one_image(self, dataset_dir, tmp_path):
        out = tmp_path / "f.ptx"
        assert main(["extract", str(dataset_dir / "002" / "nir" / "05.png"), "--out", str(out)]) == 0
        recs, mats, cfg = archive.load_features(out)
        assert len(mats) == 1 and mats[0].shape == (14, 64)
        assert recs[0]["person_id"] == "002" and recs[0]["spectrum"] == "nir"
        assert cfg == {"block_size": 16, "quant_step": 8, "offset": [1, 0]}

    def test_no_inputs(self, tmp_path):
        out = tmp_path / "f.ptx"
        with pytest.raises(SystemExit) as exc:
            main(["extract", "--out", str(out)])
        assert exc.value.code == 2
        assert not out.exists()

    def test_byte_identical(self, dataset_dir, tmp_path):
        imgs = [str(p) for p in sorted((dataset_dir / "001" / "red").glob("*.png"))[:3]]
        main(["extract", *imgs, "--out", str(tmp_path / "a.ptx")])
        main(["extract", *imgs, "--out", str(tmp_path / "b.ptx")])
        assert (tmp_path / "a.ptx").read_bytes() == (tmp_path / "b.ptx").read_bytes()

    def test_unreadable(self, tmp_path, capsys):
        bad = tmp_path / "x.png"
        bad.write_bytes(b"not an image")
        assert main(["extract", str(bad), "--out", str(tmp_path / "f.ptx")]) == 1
        assert "x.png" in capsys.readouterr().err
        assert not (tmp_path / "f.ptx").exists()


@pytest.fixture(scope="module")
def templates(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("tpl") / "t.ptx"
    assert main(["train", "--dataset", str(dataset_dir), "--train-count", "6",
                 "--weights", "per_row_accuracy", "--out", str(out)]) == 0
    return out


class TestTrainIdentify:
    @pytest.mark.parametrize("classifier", ["mdc", "wmv"])
    def test_self_match(self, dataset_dir, templates, capsys, classifier):
        rc = main(["identify", *spectrum_args(dataset_dir, "002", 1), "--templates", str(templates),
                   "--classifier", classifier])
        assert rc == 0
        out = capsys.readouterr().out
        assert "predicted: 002" in out
        assert float(re.search(r"elapsed: ([0-9.e-]+) s", out).group(1)) > 0

    def test_missing_spectrum(self, dataset_dir, templates, capsys):
        rc = main(["identify", *spectrum_args(dataset_dir, "002", 1, SPECTRA[:3]), "--templates", str(templates)])
        assert rc == 1
        assert "--nir" in capsys.readouterr().err

    def test_corrupt_archive(self, dataset_dir, tmp_path, capsys):
        bad = tmp_path / "bad.ptx"
        bad.write_bytes(b"garbage!" * 4)
        assert main(["identify", *spectrum_args(dataset_dir, "001", 1), "--templates", str(bad)]) == 1
        assert "magic" in capsys.readouterr().err

    def test_latency_with_500_templates(self, dataset_dir, tmp_path, capsys):
        rng = np.random.default_rng(0)
        tpls = [PersonTemplate(f"{i:03d}", dict(zip(SPECTRA, rng.normal(size=(4, 14, 64))))) for i in range(500)]
        path = tmp_path / "big.ptx"
        archive.save_templates(path, tpls, ClassifierWeights.uniform(),
                               {"block_size": 16, "quant_step": 8, "offset": [1, 0]})
        for clf in ("mdc", "wmv"):
            assert main(["identify", *spectrum_args(dataset_dir, "003", 9), "--templates", str(path),
                         "--classifier", clf]) == 0
            out = capsys.readouterr().out
            elapsed = float(re.search(r"elapsed: ([0-9.e-]+) s", out).group(1))
            assert 0 < elapsed < 0.9  # 0.9 s budget per identification
            assert len(re.findall(r"^  \d{3}\t", out, re.M)) == 5


class TestEvaluate:
    def run(self, tmp_path, *extra):
        out = tmp_path / "rep"
        rc = main(["evaluate", "--synth-persons", "4", "--image-size", "32", "--out", str(out), *extra])
        return rc, out

    def test_one_row(self, tmp_path):
        rc, out = self.run(tmp_path, "--train-count", "6")
        assert rc == 0
        report = json.loads(out.with_suffix(".json").read_text())
        cells = report["cells"]
        assert [(c["classifier"], c["weight_mode"]) for c in cells] == [
            ("mdc", "uniform"), ("mdc", "per_row_accuracy"), ("wmv", "uniform"), ("wmv", "per_row_accuracy")]
        assert cells[0]["scheme"] == "circular_adjacent" and len(cells[0]["folds"]) == 12
        assert cells[2]["scheme"] == "random_repeats" and len(cells[2]["folds"]) == 10
        for c in cells:
            assert 0 <= c["mean_accuracy"] <= 1
            assert c["tests"] == 4 * 6 * len(c["folds"])
            assert c["mean_latency_s"] > 0
        assert report["config"]["block_size"] == 16 and report["config"]["offset"] == [1, 0]
        assert report["config"]["quant_step"] == 8 and report["version"]
        rows = list(csv.reader(out.with_suffix(".csv").open()))
        assert rows[0] == ["train_fraction", "mdc_unweighted", "mdc_weighted", "wmv_unweighted", "wmv_weighted"]
        assert rows[1][0] == "6/12"

    def test_single_person(self, tmp_path):
        out = tmp_path / "one"
        assert main(["evaluate", "--synth-persons", "1", "--image-size", "32", "--train-count", "4,8",
                     "--out", str(out)]) == 0
        cells = json.loads(out.with_suffix(".json").read_text())["cells"]
        assert len(cells) == 8
        assert all(c["mean_accuracy"] == 1.0 for c in cells)

    def test_all_training(self, tmp_path, capsys):
        rc, out = self.run(tmp_path, "--train-count", "12")
        assert rc == 1
        assert "no test samples" in capsys.readouterr().err
        assert not out.with_suffix(".json").exists()

    def test_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        self.run(a, "--train-count", "5", "--seed", "3")
        self.run(b, "--train-count", "5", "--seed", "3")
        ja = json.loads((a / "rep.json").read_text())
        jb = json.loads((b / "rep.json").read_text())
        assert strip_latency(ja) == strip_latency(jb)

    def test_plot_data(self, tmp_path):
        plot = tmp_path / "plot.csv"
        rc, _ = self.run(tmp_path, "--train-count", "4-6", "--classifier", "wmv", "--weights", "uniform",
                         "--plot-data", str(plot))
        assert rc == 0
        rows = list(csv.DictReader(plot.open()))
        measured = [r for r in rows if r["source"] == "measured"]
        assert [r["train_count"] for r in measured] == ["4", "5", "6"]
        assert {r["method"] for r in rows if r["source"] == "reference"}

    def test_dataset_from_disk(self, dataset_dir, tmp_path):
        out = tmp_path / "disk"
        assert main(["evaluate", "--dataset", str(dataset_dir), "--train-count", "6", "--classifier", "mdc",
                     "--weights", "uniform", "--out", str(out)]) == 0
        cell = json.loads(out.with_suffix(".json").read_text())["cells"][0]
        assert cell["tests"] == 3 * 6 * 12


def test_synth_command(tmp_path, capsys):
    assert main(["synth", "--persons", "2", "--samples", "3", "--image-size", "16", "--format", "pgm",
                 "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.rglob("*.pgm"))) == 2 * 3 * 4
    assert (tmp_path / "manifest.jsonl").exists()


def test_bad_offset():
    with pytest.raises(SystemExit):
        main(["extract", "x.png", "--out", "y", "--offset", "0,0"])
