import json
import shutil

import numpy as np
import pytest

from radar_ood.cli import main
from radar_ood.config import FILES, ConfigError, config_from_dict, load_config
from radar_ood.dsp import RangeDopplerImage
from radar_ood.formats import AdcWriter, read_adc, read_loss_history, read_rdis, read_scores, read_threshold, write_rdis, write_scores
from radar_ood.patch_ae import load_weights
from radar_ood.radar_sim import RadarConfig, SceneLabel
from radar_ood.scoring import ScoreRecord, classify

SMALL = {
    "version": 1,
    "seed": 3,
    "dataset": {"train_id": 24, "val_id": 20, "test_id": 20, "test_ood": 24, "frames_per_scene": 10},
    "train": {"epochs": 2},
    "paths": {"workdir": "out"},
}


def write_config(directory, data=SMALL):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "config.json"
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    """One complete small pipeline run shared by the read-only checks."""
    cfg_path = write_config(tmp_path_factory.mktemp("run"))
    assert main(["run", "--config", str(cfg_path)]) == 0
    return cfg_path


def out(cfg_path, name):
    return cfg_path.parent / "out" / FILES[name]


def cli(*args):
    return main([str(a) for a in args])


class TestConfig:
    def test_default_round_trip(self, capsys):
        assert cli("default-config") == 0
        data = json.loads(capsys.readouterr().out)
        cfg = config_from_dict(data)
        assert cfg.dataset.train_id == 2000 and cfg.train.epochs == 30
        assert cfg.radar_config == RadarConfig()

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            config_from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            config_from_dict({"radar": {"n_z": 1}})
        path = write_config(tmp_path, {**SMALL, "train": {"epochz": 2}})
        assert cli("simulate", "--config", path) == 3

    def test_invalid_values(self, tmp_path):
        for bad in ({"radar": {"n_s": 100}}, {"calibration": {"quantile": 1.5}}, {"seed": -1}, {"dataset": {"ood_labels": ["ID_WALK"]}}):
            with pytest.raises(ConfigError):
                config_from_dict(bad)
        path = tmp_path / "c.json"
        path.write_text("{not json")
        assert cli("simulate", "--config", path) == 3

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path)
        a, b = load_config(path), load_config(path, seed=9)
        assert b.seed == 9 and b.dataset_seed == 9 and b.train_config.seed == 9
        assert a.digest() != b.digest()
        assert "dataset_seed=9" in b.manifest()

    def test_digest_ignores_paths(self, tmp_path):
        a = config_from_dict({**SMALL, "paths": {"workdir": "x"}})
        b = config_from_dict({**SMALL, "paths": {"workdir": "y"}})
        assert a.digest() == b.digest()

    def test_workdir_relative_to_config(self, tmp_path):
        assert load_config(write_config(tmp_path)).workdir == tmp_path / "out"


class TestSimulatePreprocess:
    def test_simulate(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert cli("simulate", "--config", path) == 0
        printed = capsys.readouterr().out
        assert "train: ID_WALK=24" in printed
        train = read_adc(out(path, "adc_train"))
        assert set(train.labels.tolist()) == {0}
        test = read_adc(out(path, "adc_test"))
        counts = np.bincount(test.labels, minlength=5).tolist()
        assert counts == [20, 6, 6, 6, 6]
        first = {k: out(path, k).read_bytes() for k in ("adc_train", "adc_val", "adc_test")}
        assert cli("simulate", "--config", path) == 0
        assert all(out(path, k).read_bytes() == v for k, v in first.items())
        seeds = [set(read_adc(out(path, k)).scene_seeds.tolist()) for k in ("adc_train", "adc_val", "adc_test")]
        assert not (seeds[0] & seeds[1] or seeds[0] & seeds[2] or seeds[1] & seeds[2])

    def test_unwritable(self, tmp_path):
        (tmp_path / "blocker").write_text("a file, not a directory")
        path = write_config(tmp_path, {**SMALL, "paths": {"workdir": "blocker/sub"}})
        assert cli("simulate", "--config", path) == 2

    def test_preprocess_counts_and_idempotence(self, full_run):
        for split in ("train", "val", "test"):
            frames = read_adc(out(full_run, f"adc_{split}"))
            rdis = read_rdis(out(full_run, f"rdi_{split}"))
            assert len(rdis) == len(frames)
            assert [r.label for r in rdis] == frames.labels.tolist()

    def test_preprocess_regenerates_identically(self, full_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(full_run.parent, work)
        cfg = work / "config.json"
        before = out(cfg, "rdi_test").read_bytes()
        out(cfg, "rdi_test").unlink()
        assert cli("preprocess", "--config", cfg) == 0
        assert out(cfg, "rdi_test").read_bytes() == before

    def test_zero_frame_input(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        for split in ("train", "val", "test"):
            AdcWriter(out(path, f"adc_{split}"), RadarConfig(), 0).close()
        assert cli("preprocess", "--config", path) == 0
        assert read_rdis(out(path, "rdi_test")) == []

    def test_bad_magic(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        for split in ("train", "val", "test"):
            out(path, f"adc_{split}").write_bytes(b"JUNK" + bytes(64))
        assert cli("preprocess", "--config", path) == 3

    def test_missing_input(self, tmp_path):
        assert cli("preprocess", "--config", write_config(tmp_path)) == 3


class TestTrain:
    def test_outputs(self, full_run):
        cfg = load_config(full_run)
        assert len(read_loss_history(out(full_run, "loss"))) == cfg.train.epochs
        w = load_weights(out(full_run, "weights"))
        assert w.is_patch_model and w.seed == 3
        enc = load_weights(out(full_run, "encoder"))
        assert not enc.has_decoder
        assert 560_000 <= out(full_run, "encoder").stat().st_size <= 700_000
        base = load_weights(out(full_run, "baseline_weights"))
        assert base.tensors["enc.dense.kernel"].shape == (4096, 128)
        assert out(full_run, "loss").read_text().startswith("# radar_ood config=")

    def test_ood_in_training_input(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        rdis = [RangeDopplerImage(np.zeros((64, 64)), 0, 0), RangeDopplerImage(np.zeros((64, 64)), int(SceneLabel.OOD_FAN), 1)]
        write_rdis(out(path, "rdi_train"), rdis)
        assert cli("train", "--config", path) == 4
        assert cli("train", "--baseline", "--config", path) == 4

    def test_missing_training_input(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        assert cli("train", "--config", path) == 3  # nothing to train on yet

    def test_reproducible(self, full_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(full_run.parent, work)
        cfg = work / "config.json"
        before = out(cfg, "weights").read_bytes()
        out(cfg, "weights").unlink()
        assert cli("train", "--config", cfg) == 0
        assert out(cfg, "weights").read_bytes() == before


class TestScoreEvaluate:
    def test_report(self, full_run):
        text = out(full_run, "report_txt").read_text()
        rows = [line.split()[0] for line in text.splitlines()[2:5]]
        assert rows == ["PB-REC", "PB-LSE", "Baseline-REC"]
        report = json.loads(out(full_run, "report_json").read_text())
        assert (report["n_id"], report["n_ood"]) == (20, 24)
        assert sum(report["decisions"].values()) == 44
        assert report["manifest"].startswith("radar_ood config=")
        for fig in ("fig_roc", "fig_scores", "fig_samples"):
            assert out(full_run, fig).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_calibration_acceptance(self, full_run):
        tau = read_threshold(out(full_run, "threshold"))
        val = read_scores(out(full_run, "scores_val"))
        rate = np.mean([classify(r.score(tau.score_kind), tau) == "ID" for r in val])
        assert abs(rate - tau.calibration_quantile) <= 1 / len(val) + 1e-12

    def test_perfect_scores(self, tmp_path, capsys):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        recs = [ScoreRecord(i, SceneLabel.ID_WALK, 0.01 * i, float(i)) for i in range(5)]
        recs += [ScoreRecord(5 + i, SceneLabel.OOD_FAN, 1 + i, 100.0 + i) for i in range(5)]
        write_scores(out(path, "scores"), recs)
        assert cli("evaluate", "--no-figures", "--config", path) == 0
        printed = capsys.readouterr().out
        assert printed.count("100.00") == 6

    def test_single_class(self, tmp_path):
        path = write_config(tmp_path)
        (tmp_path / "out").mkdir()
        write_scores(out(path, "scores"), [ScoreRecord(0, SceneLabel.ID_WALK, 0.1, 1.0)])
        assert cli("evaluate", "--config", path) == 5

    def test_missing(self, tmp_path):
        path = write_config(tmp_path)
        for cmd in ("evaluate", "score", "calibrate"):
            assert cli(cmd, "--config", path) == 3

    def test_inspect(self, full_run, capsys):
        for name in ("adc_test", "rdi_test", "weights", "encoder", "scores", "threshold", "loss"):
            assert cli("inspect", out(full_run, name)) == 0
        printed = capsys.readouterr().out
        assert "encoder parameters: 154496" in printed
        assert cli("inspect", out(full_run, "report_txt")) == 3


def test_determinism_across_directories(full_run, tmp_path):
    other = write_config(tmp_path / "again")
    assert cli("run", "--config", other) == 0
    for name in FILES:
        assert out(other, name).read_bytes() == out(full_run, name).read_bytes(), name
