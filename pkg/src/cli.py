from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, NoReturn, Optional

from src.core.config import FUSION_MODE_ALIASES, parse_thresholds
from src.core.errors import MravffError, exit_code_for
from src.core.logging_utils import setup_logging
from src.evaluator.evaluator import run as run_evaluator
from src.extractor.extractor import run as run_extractor
from src.predictor.predictor import run as run_predictor
from src.synthesizer.synthesizer import run as run_synthesizer
from src.trainer.trainer import run as run_trainer

COMMANDS = ("extract-audio-features", "synth", "train", "eval", "predict")


def _add_model_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="configs/train.yaml")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fusion-mode", choices=sorted(FUSION_MODE_ALIASES), default=None)
    p.add_argument("--no-residual", action="store_true", help="Drop the residual around the fusion conv")


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation-error code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    p = CliArgumentParser(description="Multi-resolution audio-visual fusion for temporal action localization")
    p.add_argument("--env", default=".env")
    p.add_argument("--log-level", default="INFO")
    p.add_argument("--deterministic", action="store_true", help="Timestamp-free log lines")
    sub = p.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract-audio-features", help="WAV file or directory -> MRFF audio features")
    ex.add_argument("--in", dest="input", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--config", default=None)
    ex.add_argument("--seed", type=int, default=None, help="Frozen encoder seed (overrides extractor.encoder_seed)")

    sy = sub.add_parser("synth", help="Generate a synthetic audio-visual dataset")
    sy.add_argument("--out", required=True)
    sy.add_argument("--config", default=None)
    sy.add_argument("--seed", type=int, default=None)

    tr = sub.add_parser("train", help="Train a fusion model")
    _add_model_overrides(tr)
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--out", default=None, help="Output directory (overrides paths.output_dir)")

    ev = sub.add_parser("eval", help="Evaluate a checkpoint or a predictions file")
    _add_model_overrides(ev)
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--split", default="validation", help="Annotation subset; 'all' for every video")
    ev.add_argument("--predictions-file", default=None)
    ev.add_argument("--zero-audio", action="store_true", help="Replace audio inputs with zeros")
    ev.add_argument("--thresholds", default=None, help="start:stop:step or comma list of tIoU thresholds")
    ev.add_argument("--out", default=None)

    pr = sub.add_parser("predict", help="Detections and gate statistics for one video")
    _add_model_overrides(pr)
    pr.add_argument("--checkpoint", default=None)
    pr.add_argument("--video-id", required=True)
    pr.add_argument("--zero-audio", action="store_true")
    pr.add_argument("--out", default=None, help="Predictions JSON path")
    return p.parse_args(argv)


def _residual(args: argparse.Namespace) -> Optional[bool]:
    return False if getattr(args, "no_residual", False) else None


def dispatch(args: argparse.Namespace) -> int:
    log = logging.getLogger("cli")
    if args.command == "extract-audio-features":
        result = run_extractor(args.input, args.out, args.config, args.env, seed=args.seed)
        if not result.ok:
            log.error("%d of %d files failed", len(result.failed), len(result.failed) + len(result.written))
            return 2
        return 0
    if args.command == "synth":
        annotations = run_synthesizer(args.out, args.config, args.env, seed=args.seed)
        log.info("Wrote %d videos to %s", len(annotations.videos), args.out)
        return 0
    if args.command == "train":
        result = run_trainer(
            args.config,
            args.env,
            seed=args.seed,
            epochs=args.epochs,
            fusion_mode=args.fusion_mode,
            residual=_residual(args),
            output_dir=args.out,
        )
        if result.history:
            log.info("Final epoch loss %.6f", result.history[-1]["loss"])
        return 0
    if args.command == "eval":
        report, path = run_evaluator(
            args.config,
            args.env,
            checkpoint=args.checkpoint,
            split=None if args.split == "all" else args.split,
            predictions_file=args.predictions_file,
            zero_audio=args.zero_audio,
            thresholds=parse_thresholds(args.thresholds) if args.thresholds else None,
            output_dir=args.out,
            fusion_mode=args.fusion_mode,
            residual=_residual(args),
            seed=args.seed,
        )
        print(report.format_table())
        return 0
    if args.command == "predict":
        output = run_predictor(
            args.config,
            args.video_id,
            args.env,
            checkpoint=args.checkpoint,
            output_path=args.out,
            zero_audio=args.zero_audio,
            fusion_mode=args.fusion_mode,
            residual=_residual(args),
            seed=args.seed,
        )
        print(json.dumps({"video_id": output["video_id"], "gate_stats": output["gate_stats"], "path": output["path"]}, sort_keys=True))
        return 0
    raise MravffError(f"Unknown command: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    setup_logging(args.log_level, deterministic=args.deterministic)
    log = logging.getLogger("cli")
    try:
        return dispatch(args)
    except MravffError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
