"""radar-ood command line.

Exit codes: 0 ok, 2 I/O, 3 format / missing input, 4 protocol violation,
5 degenerate data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, default_config_dict, load_config
from .formats import ADC_MAGIC, RDI_MAGIC, FormatError, read_adc, read_loss_history, read_rdis, read_scores, read_threshold, sniff
from .metrics import DegenerateDataError
from .patch_ae import WEIGHT_MAGIC, ProtocolError, WeightFormatError, load_weights, parameter_count, payload_bytes

EXIT_OK, EXIT_IO, EXIT_FORMAT, EXIT_PROTOCOL, EXIT_DEGENERATE = 0, 2, 3, 4, 5

log = logging.getLogger("radar_ood")


def _cfg(args):
    return load_config(args.config, seed=args.seed)


def cmd_simulate(args) -> int:
    counts = pipeline.simulate(_cfg(args))
    for split, per_label in counts.items():
        print(f"{split}: " + ", ".join(f"{k}={v}" for k, v in per_label.items()))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    for split, n in pipeline.preprocess_files(_cfg(args)).items():
        print(f"{split}: {n} images")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _cfg(args)
    history = pipeline.train_stage(cfg, baseline=args.baseline)
    kind = "baseline" if args.baseline else "patch"
    print(f"{kind} model: {len(history)} epochs, loss {history[0]:.6f} -> {history[-1]:.6f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    tau = pipeline.calibrate_stage(_cfg(args))
    print(f"{tau.score_kind.value},{tau.calibration_quantile:g},{tau.value:.9g}")
    return EXIT_OK


def cmd_score(args) -> int:
    for name, n in pipeline.score_stage(_cfg(args)).items():
        print(f"{name}: {n} records")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, text = pipeline.evaluate_stage(_cfg(args), figures=not args.no_figures)
    print(text)
    return EXIT_OK


def cmd_run(args) -> int:
    """All stages in order, patch model and baseline."""
    cfg = _cfg(args)
    pipeline.simulate(cfg)
    pipeline.preprocess_files(cfg)
    pipeline.train_stage(cfg)
    pipeline.train_stage(cfg, baseline=True)
    pipeline.calibrate_stage(cfg)
    pipeline.score_stage(cfg)
    _, text = pipeline.evaluate_stage(cfg, figures=not args.no_figures)
    print(text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.file)
    magic = sniff(path)
    if magic == ADC_MAGIC:
        fs = read_adc(path)
        print(f"RADC v1: {len(fs)} frames of {fs.config.frame_shape}, dataset seed {fs.seed}")
        print("labels: " + json.dumps(pipeline.label_counts(fs.labels)))
        print(f"scene seeds: {len(set(fs.scene_seeds.tolist()))} distinct")
    elif magic == RDI_MAGIC:
        rdis = read_rdis(path)
        print(f"RDIF v1: {len(rdis)} images of 64x64")
        print("labels: " + json.dumps(pipeline.label_counts(r.label for r in rdis)))
    elif magic == WEIGHT_MAGIC:
        w = load_weights(path)
        kind = "patch (32x32)" if w.is_patch_model else "full-image baseline (64x64)"
        print(f"AEWT v1: {kind}, training seed {w.seed}, {'encoder only' if not w.has_decoder else 'encoder+decoder'}")
        for name, t in w.tensors.items():
            print(f"  {name:<20} {str(t.shape):<18} {t.size}")
        shapes = {k: v.shape for k, v in w.tensors.items()}
        print(f"encoder parameters: {parameter_count(shapes, 'enc.')}; payload {payload_bytes(w)} bytes; file {path.stat().st_size} bytes")
    else:
        text = path.read_text(errors="replace")
        body = [line for line in text.splitlines() if line and not line.startswith("#")]
        if "frame_id,label,score_rec,score_energy" in text:
            recs = read_scores(path)
            print(f"score table: {len(recs)} records, {sum(r.is_id for r in recs)} ID / {sum(not r.is_id for r in recs)} OOD")
        elif body and body[0] == "epoch,mean_loss":
            history = read_loss_history(path)
            print(f"loss history: {len(history)} epochs, {history[0]:.6f} -> {history[-1]:.6f}")
        elif len(body) == 1 and body[0].count(",") == 2:
            tau = read_threshold(path)
            print(f"threshold: kind {tau.score_kind.value}, quantile {tau.calibration_quantile:g}, tau {tau.value:.9g}")
        else:
            raise FormatError(f"{path}: unrecognised file")
    return EXIT_OK


def cmd_default_config(args) -> int:
    print(json.dumps(default_config_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="pipeline JSON config")
    common.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="radar-ood", description="Patch-autoencoder OOD detection on synthetic FMCW radar", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write synthetic ADC frame files").set_defaults(func=cmd_simulate)
    sub.add_parser("preprocess", parents=[common], help="ADC frames -> range-Doppler images").set_defaults(func=cmd_preprocess)
    p = sub.add_parser("train", parents=[common], help="train the autoencoder on ID images")
    p.add_argument("--baseline", action="store_true", help="train the full-image baseline instead")
    p.set_defaults(func=cmd_train)
    sub.add_parser("calibrate", parents=[common], help="threshold from ID validation scores").set_defaults(func=cmd_calibrate)
    sub.add_parser("score", parents=[common], help="score the test images").set_defaults(func=cmd_score)
    for name, func in (("evaluate", cmd_evaluate), ("run", cmd_run)):
        p = sub.add_parser(name, parents=[common], help="metric report and figures" if name == "evaluate" else "every stage in order")
        p.add_argument("--no-figures", action="store_true")
        p.set_defaults(func=func)
    p = sub.add_parser("inspect", parents=[common], help="summarise any pipeline file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    sub.add_parser("default-config", parents=[common], help="print the default config").set_defaults(func=cmd_default_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, WeightFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ProtocolError as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
