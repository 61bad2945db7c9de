"""Pipeline stages: simulate -> preprocess -> train -> calibrate -> score -> evaluate.

Stages exchange data only through the files named in ``config.FILES``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .config import PipelineConfig
from .dsp import RangeDopplerImage, iter_preprocess, preprocess
from .formats import (
    AdcWriter,
    FormatError,
    read_adc,
    read_rdis,
    read_scores,
    read_threshold,
    write_loss_history,
    write_rdis,
    write_scores,
    write_threshold,
)
from .metrics import evaluate, format_table, split_scores
from .patch_ae import ProtocolError, load_weights, save_weights, train, train_baseline
from .radar_sim import RadarConfig, Scene, SceneLabel, simulate_scene, split_recipes
from .scoring import ScoreKind, calibrate_threshold, classify, score_dataset

log = logging.getLogger(__name__)

SPLIT_FILES = {"train": "adc_train", "val": "adc_val", "test": "adc_test"}


class MissingInputError(FormatError):
    """An upstream artifact is absent."""


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingInputError(f"missing input file {path}")
    return path


def label_counts(labels: Iterable[int]) -> dict[str, int]:
    c = Counter(int(lab) for lab in labels)
    return {SceneLabel(k).name: c[k] for k in sorted(c)}


def rdis_from_recipe(recipe: Sequence[tuple[Scene, int]], config: RadarConfig) -> list[RangeDopplerImage]:
    """Simulate and preprocess scene by scene without keeping the ADC cube around."""
    out: list[RangeDopplerImage] = []
    for scene, n in recipe:
        frames = simulate_scene(scene, config, n)
        out.extend(iter_preprocess(frames.frames, frames.labels, start_id=len(out)))
    return out


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


# -- stages -----------------------------------------------------------------------------


def simulate(cfg: PipelineConfig) -> dict[str, dict[str, int]]:
    radar = cfg.radar_config
    recipes = split_recipes(cfg.dataset_seed, cfg.dataset.split_spec(), radar, cfg.dataset.snr_db)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for split, recipe in recipes.items():
        labels = []
        with AdcWriter(cfg.path(SPLIT_FILES[split]), radar, cfg.dataset_seed) as w:
            for scene, n in recipe:
                if split == "train" and scene.label is not SceneLabel.ID_WALK:
                    raise ProtocolError("training split may only hold ID scenes")
                frames = simulate_scene(scene, radar, n)
                w.write(frames)
                labels.extend(frames.labels)
        counts[split] = label_counts(labels)
    return counts


def preprocess_files(cfg: PipelineConfig) -> dict[str, int]:
    out = {}
    for split, key in SPLIT_FILES.items():
        frames = read_adc(_require(cfg.path(key)))
        rdis = preprocess(frames)
        write_rdis(cfg.path(f"rdi_{split}"), rdis)
        out[split] = len(rdis)
    return out


def train_stage(cfg: PipelineConfig, baseline: bool = False) -> list[float]:
    rdis = read_rdis(_require(cfg.path("rdi_train")))
    bad = [r.frame_id for r in rdis if r.label != SceneLabel.ID_WALK]
    if bad:
        raise ProtocolError(f"training RDIs contain {len(bad)} OOD frames (first id {bad[0]})")
    fit = train_baseline if baseline else train
    result = fit(rdis, cfg.train_config)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    if baseline:
        save_weights(result.weights, cfg.path("baseline_weights"))
        write_loss_history(cfg.path("baseline_loss"), result.history, cfg.manifest())
    else:
        save_weights(result.weights, cfg.path("weights"))
        save_weights(result.weights, cfg.path("encoder"), encoder_only=True)
        write_loss_history(cfg.path("loss"), result.history, cfg.manifest())
    return result.history


def calibrate_stage(cfg: PipelineConfig):
    rdis = read_rdis(_require(cfg.path("rdi_val")))
    if any(r.label != SceneLabel.ID_WALK for r in rdis):
        raise ProtocolError("validation set must hold ID frames only")
    weights = load_weights(_require(cfg.path("weights")))
    records = score_dataset(rdis, weights)
    write_scores(cfg.path("scores_val"), records, cfg.manifest())
    threshold = calibrate_threshold([r.score(cfg.score_kind) for r in records], cfg.calibration.quantile, cfg.score_kind)
    write_threshold(cfg.path("threshold"), threshold, cfg.manifest())
    return threshold


def score_stage(cfg: PipelineConfig) -> dict[str, int]:
    rdis = read_rdis(_require(cfg.path("rdi_test")))
    out = {}
    records = score_dataset(rdis, load_weights(_require(cfg.path("weights"))))
    write_scores(cfg.path("scores"), records, cfg.manifest())
    out["scores"] = len(records)
    if cfg.path("baseline_weights").is_file():
        base = score_dataset(rdis, load_weights(cfg.path("baseline_weights")))
        write_scores(cfg.path("baseline_scores"), base, cfg.manifest())
        out["baseline_scores"] = len(base)
    return out


def evaluate_stage(cfg: PipelineConfig, figures: bool = True) -> tuple[dict, str]:
    from . import plots

    records = read_scores(_require(cfg.path("scores")))
    baseline = read_scores(cfg.path("baseline_scores")) if cfg.path("baseline_scores").is_file() else None
    digest = file_digest(cfg.path("weights")) if cfg.path("weights").is_file() else None
    report = evaluate(records, baseline, cfg.dataset_seed, digest)
    text = format_table(report)
    extra: dict = {"manifest": cfg.manifest()}
    threshold_path = cfg.path("threshold")
    if threshold_path.is_file():
        tau = read_threshold(threshold_path)
        decisions = Counter((("ID" if r.is_id else "OOD"), classify(r.score(tau.score_kind), tau)) for r in records)
        extra["threshold"] = {"kind": tau.score_kind.value, "quantile": tau.calibration_quantile, "tau": tau.value}
        extra["decisions"] = {f"{truth}->{pred}": decisions[(truth, pred)] for truth in ("ID", "OOD") for pred in ("ID", "OOD")}
        text += (
            f"\nthreshold {tau.score_kind.value} q={tau.calibration_quantile:g} tau={tau.value:.6g}: "
            + ", ".join(f"{k} {v}" for k, v in extra["decisions"].items())
        )
    report.extra = extra
    cfg.path("report_txt").write_text(text + "\n")
    cfg.path("report_json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    if figures:
        curves = {"PB-REC": split_scores(records, ScoreKind.REC), "PB-LSE": split_scores(records, ScoreKind.ENERGY)}
        if baseline is not None:
            curves["Baseline-REC"] = split_scores(baseline, ScoreKind.REC)
        plots.roc_figure(curves, cfg.path("fig_roc"), {k: report.rows[k].auroc for k in curves})
        taus = {}
        if "threshold" in extra:
            taus["PB-REC" if extra["threshold"]["kind"] == "REC" else "PB-LSE"] = extra["threshold"]["tau"]
        plots.score_distribution_figure(curves, cfg.path("fig_scores"), taus)
        if cfg.path("rdi_test").is_file():
            plots.sample_rdis_figure(read_rdis(cfg.path("rdi_test")), cfg.path("fig_samples"))
    return report.to_dict(), text
