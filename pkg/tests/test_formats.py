import numpy as np
import pytest

from radar_ood.dsp import RangeDopplerImage
from radar_ood.formats import (
    AdcWriter,
    FormatError,
    read_adc,
    read_loss_history,
    read_rdis,
    read_scores,
    read_threshold,
    write_adc,
    write_loss_history,
    write_rdis,
    write_scores,
    write_threshold,
)
from radar_ood.radar_sim import AdcFrameSet, RadarConfig, SceneLabel, make_scene, simulate_scene
from radar_ood.scoring import ScoreKind, ScoreRecord, Threshold


@pytest.fixture(scope="module")
def frames():
    cfg = RadarConfig()
    return simulate_scene(make_scene(SceneLabel.OOD_PENDULUM, 2, cfg), cfg, 3)


class TestAdc:
    def test_round_trip(self, frames, tmp_path):
        path = tmp_path / "a.radc"
        write_adc(path, frames)
        back = read_adc(path)
        assert back.frames.dtype == np.float32
        assert np.array_equal(back.frames, frames.frames.astype(np.float32))
        assert np.array_equal(back.labels, frames.labels)
        assert np.array_equal(back.scene_seeds, frames.scene_seeds)
        assert back.seed == frames.seed

    def test_streamed_equals_whole(self, frames, tmp_path):
        a, b = tmp_path / "a.radc", tmp_path / "b.radc"
        write_adc(a, frames)
        with AdcWriter(b, frames.config, frames.seed) as w:
            for k in range(3):
                w.write(AdcFrameSet(frames.config, frames.frames[k : k + 1], frames.labels[k : k + 1], frames.scene_seeds[k : k + 1]))
        assert a.read_bytes() == b.read_bytes()

    def test_empty(self, tmp_path):
        cfg = RadarConfig()
        path = tmp_path / "e.radc"
        write_adc(path, AdcFrameSet(cfg, np.zeros((0, *cfg.frame_shape)), [], []))
        assert len(read_adc(path)) == 0

    def test_bad_magic(self, frames, tmp_path):
        path = tmp_path / "a.radc"
        write_adc(path, frames)
        data = bytearray(path.read_bytes())
        data[0:4] = b"RADX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            read_adc(path)

    def test_truncated(self, frames, tmp_path):
        path = tmp_path / "a.radc"
        write_adc(path, frames)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            read_adc(path)

    def test_shape_mismatch(self, frames, tmp_path):
        path = tmp_path / "a.radc"
        write_adc(path, frames)
        with pytest.raises(FormatError):
            read_adc(path, RadarConfig(n_rx=2))


class TestRdi:
    def test_round_trip(self, rng, tmp_path):
        rdis = [RangeDopplerImage(rng.random((64, 64)), lab, 7 * lab) for lab in range(5)]
        path = tmp_path / "r.rdif"
        write_rdis(path, rdis)
        back = read_rdis(path)
        assert [(r.label, r.frame_id) for r in back] == [(r.label, r.frame_id) for r in rdis]
        for a, b in zip(back, rdis):
            assert np.array_equal(a.pixels, b.pixels.astype(np.float32).astype(float))

    def test_empty_and_bad(self, tmp_path):
        path = tmp_path / "r.rdif"
        write_rdis(path, [])
        assert read_rdis(path) == []
        path.write_bytes(b"NOPE" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            read_rdis(path)


class TestText:
    def test_scores(self, tmp_path):
        recs = [ScoreRecord(0, SceneLabel.ID_WALK, 0.0123456789012, 3.14159265358979), ScoreRecord(5, SceneLabel.OOD_FAN, 1e-9, -2.5)]
        path = tmp_path / "s.csv"
        write_scores(path, recs, "radar_ood config=abc")
        text = path.read_text().splitlines()
        assert text[0] == "# radar_ood config=abc"
        assert text[1] == "frame_id,label,score_rec,score_energy"
        back = read_scores(path)
        assert [r.frame_id for r in back] == [0, 5]
        assert back[1].label is SceneLabel.OOD_FAN
        for a, b in zip(back, recs):
            assert a.s_rec == pytest.approx(b.s_rec, rel=1e-8)
            assert a.s_energy == pytest.approx(b.s_energy, rel=1e-8)

    def test_scores_malformed(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(FormatError):
            read_scores(path)
        path.write_text("frame_id,label,score_rec,score_energy\n0,NOT_A_LABEL,1,2\n")
        with pytest.raises(FormatError):
            read_scores(path)

    def test_threshold(self, tmp_path):
        path = tmp_path / "t.txt"
        write_threshold(path, Threshold(95.05, ScoreKind.REC, 0.95), "m")
        t = read_threshold(path)
        assert (t.value, t.score_kind, t.calibration_quantile) == (95.05, ScoreKind.REC, 0.95)
        path.write_text("garbage\n")
        with pytest.raises(FormatError):
            read_threshold(path)

    def test_loss(self, tmp_path):
        path = tmp_path / "l.csv"
        write_loss_history(path, [0.7, 0.65, 0.6], "m")
        assert read_loss_history(path) == [0.7, 0.65, 0.6]
        assert path.read_text().splitlines()[1:3] == ["epoch,mean_loss", "1,0.7"]
