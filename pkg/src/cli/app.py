"""
spectro-adv command line

Subcommands: gen-data, train, attack, eval, verify-theorem, plot, roundtrip.
Each run writes run_config.yaml and run.log into its output directory.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.core import config as cfg
from src.core.constants import EXIT_OK, EXIT_FAILURE, EXIT_USAGE, REFERENCE_ROUNDTRIP_MEAN
from src.core.errors import ConfigError, ToolkitError, UsageError
from src.core.log import setup_logging

logger = logging.getLogger(__name__)

BANNER = "spectro-adv: spectrogram adversarial examples"


def _add_common(parser: argparse.ArgumentParser, out_default: str):
    parser.add_argument("--config", type=Path, help="YAML configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key, e.g. attack.alpha=0.05")
    parser.add_argument("--out", type=Path, default=Path(out_default), help="output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes (0 = available parallelism)")
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING, ...")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectro-adv", description=BANNER)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic burst dataset")
    _add_common(p, "runs/data")
    p.add_argument("--n", type=int, help="number of signal files")

    p = sub.add_parser("train", help="train the grid detector")
    _add_common(p, "runs/train")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--epochs", type=int, help="training epochs")

    p = sub.add_parser("attack", help="write adversarial signals for a dataset")
    _add_common(p, "runs/attack")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--model", type=Path, help="trained model file (not needed for rn)")
    p.add_argument("--method", choices=["fgm", "pgd", "rn"], help="attack method")
    p.add_argument("--alpha", type=float, help="time-frequency L2 budget")

    p = sub.add_parser("eval", help="detection and perturbation-ratio tables")
    _add_common(p, "runs/eval")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--model", type=Path, required=True, help="trained model file")
    p.add_argument("--table", choices=["attack", "ratio", "both"], default="both")

    p = sub.add_parser("verify-theorem", help="Monte-Carlo check of the time-domain norm bound")
    _add_common(p, "runs/theorem")
    p.add_argument("--signal", type=Path, help="i16 signal file (default: a generated signal)")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials")

    p = sub.add_parser("plot", help="spectrogram PGMs and waveform CSV for one file")
    _add_common(p, "runs/plot")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--index", type=int, default=0, help="manifest entry")
    p.add_argument("--model", type=Path, help="model used for the attack and for box overlays")
    p.add_argument("--adv", type=Path, help="existing adversarial i16 signal")
    p.add_argument("--method", choices=["fgm", "pgd", "rn"], help="attack method when --adv is absent")
    p.add_argument("--alpha", type=float, help="time-frequency L2 budget")

    p = sub.add_parser("roundtrip", help="STFT -> ISTFT reconstruction error of a dataset")
    _add_common(p, "runs/roundtrip")
    p.add_argument("--data", type=Path, help="dataset directory (default: generated signals)")
    p.add_argument("--preset", choices=["desk", "wideband", "config"], default="wideband",
                   help="STFT parameters to measure")
    p.add_argument("--n", type=int, default=20, help="generated signals when --data is absent")
    return parser


def _workers(args) -> Optional[int]:
    return None if args.workers == 0 else args.workers


def _resolve(args, extra: Sequence[str] = ()) -> Dict:
    overrides = list(args.overrides) + list(extra)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return cfg.resolve_config(args.config, overrides)


def _require_file(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def _load_data(path: Path):
    from src.data.dataset import load_manifest

    manifest = load_manifest(_require_file(path, "dataset"))
    if len(manifest) == 0:
        raise UsageError(f"dataset {path} has no files")
    return manifest


def cmd_gen_data(args, config: Dict) -> int:
    from src.data.dataset import build_dataset

    manifest = build_dataset(config["data"]["n_files"], cfg.gen_config(config), args.out,
                             workers=_workers(args))
    print(f"gen-data: {len(manifest)} files, "
          f"{sum(e.n_targets for e in manifest.entries)} targets -> {args.out}")
    return EXIT_OK


def cmd_train(args, config: Dict) -> int:
    from src.detector.model import init_model, save_model
    from src.detector.train import SyntheticSource, prepare_samples, train

    manifest = _load_data(args.data)
    stft = cfg.stft_config(config)
    items = [manifest.load(i) for i in range(len(manifest))]
    samples = prepare_samples(items, stft, workers=_workers(args))
    model = init_model(cfg.detector_config(config), seed=config["seed"])
    train_config = cfg.train_config(config)

    source = None
    if train_config.synthetic_per_epoch > 0:
        generator = manifest.generator_config() or cfg.gen_config(config)
        source = SyntheticSource(generator, stft, train_config.synthetic_per_epoch,
                                 seed=config["seed"], workers=_workers(args))
    model, history = train(model, samples, train_config, extra_samples=source)

    save_model(model, args.out / "model.bin")
    history.write_csv(args.out / "history.csv")
    summary = f"train: final loss {history.epoch_loss[-1]:.4f}"
    if history.val_map and train_config.keep_best:
        summary += f", validation mAP {max(history.val_map):.3f} (epoch {history.best_epoch})"
    elif history.val_map:
        summary += f", validation mAP {history.val_map[-1]:.3f}"
    print(summary + f" -> {args.out / 'model.bin'}")
    return EXIT_OK


def _load_model_if(path: Optional[Path], required: bool):
    from src.detector.model import load_model

    if path is None:
        if required:
            raise UsageError("--model is required for this method")
        return None
    return load_model(_require_file(path, "model"))


def cmd_attack(args, config: Dict) -> int:
    from src.attack.attacks import AttackPerturber, write_adversarial_set

    manifest = _load_data(args.data)
    attack = cfg.attack_config(config)
    model = _load_model_if(args.model, attack.method.value != "rn")
    perturber = AttackPerturber(model, cfg.stft_config(config), attack)
    rows = write_adversarial_set(manifest, perturber, args.out, workers=_workers(args))

    ratios = [r.tf_ratio for _, r in rows]
    print(f"attack: {perturber.label} on {len(rows)} files, max tf ratio {max(ratios):.6f}, "
          f"detections {sum(r.detections_before for _, r in rows)} -> "
          f"{sum(r.detections_after for _, r in rows)}, "
          f"{sum(r.write_clamp_count > 0 for _, r in rows)} files clamped on write")
    return EXIT_OK


def cmd_eval(args, config: Dict) -> int:
    from src.evaluation.experiments import (
        attack_experiment, ratio_experiment, write_experiment_rows, write_ratio_table,
    )

    manifest = _load_data(args.data)
    model = _load_model_if(args.model, True)
    stft = cfg.stft_config(config)
    base = cfg.attack_config(config)
    evaluation = config["eval"]

    if args.table in ("attack", "both"):
        rows = attack_experiment(manifest, model, stft, evaluation["rn_alphas"],
                                 evaluation["attack_alphas"], base,
                                 iou_thresh=evaluation["iou_thresh"], workers=_workers(args))
        write_experiment_rows(rows, args.out / "detection_table.csv", model.config.conf_thresh,
                              iou_thresh=evaluation["iou_thresh"])
        print("eval: " + ", ".join(f"{r.sample_type} mAP {r.metrics.map:.3f}" for r in rows))
    if args.table in ("ratio", "both"):
        rows = ratio_experiment(manifest, model, stft, evaluation["methods"],
                                evaluation["attack_alphas"], base, workers=_workers(args))
        write_ratio_table(rows, args.out / "ratio_table.csv")
        print("eval: " + ", ".join(f"{r.method}_{r.alpha:g} {100 * r.time_ratio_mean:.3f}%" for r in rows))
    return EXIT_OK


def _theorem_signal(args, config: Dict):
    from src.data.generator import generate_burst_signal
    from src.data.signal_io import read_signal_file

    if args.signal is not None:
        return read_signal_file(_require_file(args.signal, "signal"), config["data"]["sample_rate"])
    signal, _ = generate_burst_signal(cfg.gen_config(config))
    return signal


def cmd_verify_theorem(args, config: Dict) -> int:
    from src.dsp.stft import StftConfig
    from src.theory.bounds import (
        bound_constant, monte_carlo_bound, vector_sum_sweep, write_bound_csv,
    )

    theory = config["theory"]
    stft = StftConfig(theory["n_fft"], theory["overlap"])
    trials = args.trials if args.trials is not None else theory["trials"]
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    signal = _theorem_signal(args, config)

    rows, summary = monte_carlo_bound(signal, stft, trials, (theory["alpha_min"], theory["alpha_max"]),
                                      seed=config["seed"], workers=_workers(args))
    write_bound_csv(rows, args.out / "bound_checks.csv")

    with open(args.out / "vector_sum.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "lhs", "rhs", "holds"])
        for n, check in vector_sum_sweep(theory["max_vectors"]):
            writer.writerow([n, f"{check.lhs:g}", f"{check.rhs:g}", int(check.holds)])

    print(f"verify-theorem: sqrt(3/{stft.n_fft}) = {bound_constant(stft.n_fft):.7f}, "
          f"{summary.violations}/{summary.trials} violations, "
          f"slack median {summary.slack_median:.4g} max {summary.slack_max:.4g}")
    return EXIT_OK


def cmd_plot(args, config: Dict) -> int:
    from src.attack.attacks import run_attack
    from src.data.signal_io import read_signal_file
    from src.dsp.spectrogram import DbMapping, draw_boxes, to_grayscale, write_pgm
    from src.dsp.stft import split, stft as run_stft
    from src.detector.pipeline import detect_signal

    manifest = _load_data(args.data)
    if not 0 <= args.index < len(manifest):
        raise UsageError(f"--index {args.index} outside dataset of {len(manifest)} files")
    signal, _ = manifest.load(args.index)
    stft = cfg.stft_config(config)
    attack = cfg.attack_config(config)
    model = _load_model_if(args.model, args.adv is None and attack.method.value != "rn")

    magnitude, _ = split(run_stft(signal, stft))
    mapping = DbMapping.from_magnitude(magnitude)
    if args.adv is not None:
        adversarial = read_signal_file(_require_file(args.adv, "adversarial signal"), signal.sample_rate)
        if len(adversarial) != len(signal):
            raise UsageError(f"--adv has {len(adversarial)} samples, expected {len(signal)}")
    else:
        adversarial = run_attack(model, signal, stft, mapping, attack).signal

    args.out.mkdir(parents=True, exist_ok=True)
    for name, buffer in (("clean", signal), ("adversarial", adversarial)):
        image = to_grayscale(split(run_stft(buffer, stft))[0], mapping)
        pixels = image.to_uint8()
        if model is not None:
            pixels = draw_boxes(pixels, detect_signal(model, buffer, stft, mapping))
        write_pgm(pixels, args.out / f"spectrogram_{name}.pgm")

    perturbation = adversarial.samples - signal.samples
    with open(args.out / "waveform.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["index", "clean", "adversarial", "perturbation"])
        for n in range(len(signal)):
            writer.writerow([n, repr(float(signal.samples[n])), repr(float(adversarial.samples[n])),
                             repr(float(perturbation[n]))])
    print(f"plot: wrote spectrograms and {len(signal)} waveform rows -> {args.out}")
    return EXIT_OK


def cmd_roundtrip(args, config: Dict) -> int:
    from src.data.generator import generate_burst_signal
    from src.dsp.stft import StftConfig, roundtrip_error, split, stft as run_stft
    from src.attack.attacks import random_noise_baseline

    if args.preset == "wideband":
        stft = StftConfig.wideband()
    elif args.preset == "desk":
        stft = StftConfig.desk()
    else:
        stft = cfg.stft_config(config)

    if args.data is not None:
        manifest = _load_data(args.data)
        signals = [manifest.load(i)[0] for i in range(len(manifest))]
    else:
        if args.n < 1:
            raise UsageError("--n must be >= 1")
        base = cfg.gen_config(config)
        signals = [generate_burst_signal(base.with_seed(base.seed + i))[0] for i in range(args.n)]

    errors, time_ratios = [], []
    for signal in signals:
        errors.append(roundtrip_error(signal, stft))
        time_ratios.append(random_noise_baseline(signal, stft, 0.0).report.time_ratio)

    errors = np.array(errors)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "roundtrip.csv", "w", newline="") as handle:
        handle.write(f"# mean round-trip error {100 * errors.mean():.4f}% vs reference "
                     f"{100 * REFERENCE_ROUNDTRIP_MEAN:.3f}% "
                     f"(deviation {100 * (errors.mean() - REFERENCE_ROUNDTRIP_MEAN):+.4f} points); "
                     f"normalized overlap-add loses only uncovered and zero-weight samples\n")
        writer = csv.writer(handle)
        writer.writerow(["file", "roundtrip_error", "time_ratio"])
        for index, (error, ratio) in enumerate(zip(errors, time_ratios)):
            writer.writerow([index, f"{error:.9g}", f"{ratio:.9g}"])

    print(f"roundtrip ({args.preset}, n_fft {stft.n_fft}, overlap {stft.overlap}): "
          f"error mean {100 * errors.mean():.4f}% max {100 * errors.max():.4f}% "
          f"min {100 * errors.min():.4f}%, time ratio mean {100 * np.mean(time_ratios):.4f}% "
          f"(reference {100 * REFERENCE_ROUNDTRIP_MEAN:.3f}%)")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "attack": cmd_attack,
    "eval": cmd_eval,
    "verify-theorem": cmd_verify_theorem,
    "plot": cmd_plot,
    "roundtrip": cmd_roundtrip,
}


def _subcommand_overrides(args) -> List[str]:
    """Flags that are shorthands for config keys"""
    extra = []
    if getattr(args, "n", None) is not None and args.command == "gen-data":
        extra.append(f"data.n_files={args.n}")
    if getattr(args, "epochs", None) is not None:
        extra.append(f"train.epochs={args.epochs}")
    if getattr(args, "method", None) is not None:
        extra.append(f"attack.method={args.method}")
    if getattr(args, "alpha", None) is not None:
        extra.append(f"attack.alpha={args.alpha!r}")
    return extra


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand, map failures to exit codes

    Returns:
        0 on success, 2 for usage/config problems, 1 for runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    print(BANNER)
    print("=" * 40)
    try:
        config = _resolve(args, _subcommand_overrides(args))
        setup_logging(args.log_level, args.out / "run.log")
        cfg.RunConfig(args.command, args.out, config["seed"], args.config,
                      tuple(args.overrides), config).write()
        logger.info("Running %s -> %s", args.command, args.out)
        return COMMANDS[args.command](args, config)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolkitError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ArithmeticError, LookupError, OSError, TypeError, ValueError) as exc:
        logger.exception("Unexpected failure in %s", args.command)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        _close_file_handlers()


def _close_file_handlers():
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_toolkit", False) and isinstance(handler, logging.FileHandler):
            handler.close()
            root.removeHandler(handler)
