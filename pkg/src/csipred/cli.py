"""Command-line front end: simulate, train, evaluate, report, all.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from csipred import channel_sim, dataset, evaluation, predictor, reporting, training
from csipred.config import ConfigError, ExperimentConfig, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csipred",
        description="Simulate MIMO-OFDM channel sequences, train the 3-D CNN "
                    "predictor, and evaluate against sample-and-hold.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--preset", choices=("desk", "paper"), default="desk",
                       help="baseline parameter set overlaid by --config")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--snr-db", type=float, help="override evaluation SNR")
        p.add_argument("--no-residual", action="store_true",
                       help="drop the residual blocks (ablation)")

    p = sub.add_parser("simulate", help="generate, mix, split, and store datasets")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the predictor on stored datasets")
    common(p)
    p.add_argument("--train-data", help="training CSIF (default <out>/train.csif)")
    p.add_argument("--test-data", help="test CSIF (default <out>/test.csif)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test dataset")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint (default <out>/best.ckpt)")
    p.add_argument("--test-data", help="test CSIF (default <out>/test.csif)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render figures from evaluation reports")
    p.add_argument("--report", nargs="+", required=True,
                   help="one or more report JSON files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", help="simulate + train + evaluate + report")
    common(p)
    p.set_defaults(func=cmd_all)
    return parser


def _load_experiment(args) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "preset", "desk"))
    if getattr(args, "seed", None) is not None:
        cfg = _replace(cfg, seed=args.seed)
    if getattr(args, "snr_db", None) is not None:
        cfg = _replace(cfg, snr_db=args.snr_db)
    if getattr(args, "no_residual", False):
        cfg = _replace(cfg, use_residual=False)
    cfg.validate()
    return cfg


def _replace(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return dataclasses.replace(cfg, **kw)


def cmd_simulate(args) -> int:
    cfg = _load_experiment(args)
    os.makedirs(args.out, exist_ok=True)
    seqs = []
    for speed_idx, speed in enumerate(cfg.speeds):
        for seq_idx in range(cfg.seqs_per_speed):
            sim = cfg.sim_config(cfg.sequence_seed(speed_idx, seq_idx))
            seqs.append(channel_sim.generate_sequence(sim, speed, cfg.seq_len))
    if cfg.split_mode == "temporal":
        train_ds, test_ds = dataset.split_by_time(
            seqs, cfg.history_len, cfg.train_fraction, seed=cfg.seed)
    else:
        mixed = dataset.build_mixed(seqs, cfg.history_len, seed=cfg.seed,
                                    train_fraction=cfg.train_fraction)
        train_ds, test_ds = dataset.split(mixed, cfg.train_fraction, cfg.seed)
    train_ds.meta = test_ds.meta = cfg.to_dict()
    dataset.save(train_ds, os.path.join(args.out, "train.csif"))
    dataset.save(test_ds, os.path.join(args.out, "test.csif"))

    tags = np.concatenate([train_ds.speed_tags, test_ds.speed_tags])
    per_speed = {s: int(np.sum(tags == np.float32(s))) for s in cfg.speeds}
    print(f"sequences: {len(seqs)} (kernel: {channel_sim.kernel_backend()})")
    print(f"samples: {tags.size} total "
          f"({', '.join(f'{s:g} km/h: {n}' for s, n in per_speed.items())})")
    print(f"split: {len(train_ds)} train / {len(test_ds)} test")
    print(f"wrote {os.path.join(args.out, 'train.csif')} and test.csif")
    return 0


def _check_dataset_arch(ds: dataset.Dataset, arch: predictor.ArchConfig, name: str):
    expected = (arch.n_subbands, arch.n_rx, arch.n_tx)
    if ds.shape != expected or ds.history_len != arch.history_len:
        raise ConfigError(
            f"{name} dataset (K,Nr,Nt)={ds.shape} L={ds.history_len} does not "
            f"match architecture (K,Nr,Nt)={expected} L={arch.history_len}")


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    os.makedirs(args.out, exist_ok=True)
    train_path = getattr(args, "train_data", None) or os.path.join(args.out, "train.csif")
    test_path = getattr(args, "test_data", None) or os.path.join(args.out, "test.csif")
    train_ds = dataset.load(train_path)
    test_ds = dataset.load(test_path)

    start_epoch = 0
    if getattr(args, "resume", None):
        model, header = predictor.load_checkpoint(args.resume)
        start_epoch = header["epoch"] + 1
        if start_epoch >= cfg.n_epochs:
            raise ConfigError(
                f"resume epoch {start_epoch} >= configured n_epochs {cfg.n_epochs}")
    else:
        model = predictor.build_model(cfg.arch_config(), cfg.seed)
    _check_dataset_arch(train_ds, model.arch, "train")
    _check_dataset_arch(test_ds, model.arch, "test")

    norm_power = float(np.mean([s["norm_power"] for s in train_ds.provenance])
                       ) if train_ds.provenance else 1.0
    result = training.train(model, train_ds, test_ds, cfg.train_config(),
                            out_dir=args.out, start_epoch=start_epoch,
                            norm_power=norm_power)

    final_path = os.path.join(args.out, "final.ckpt")
    predictor.save_checkpoint(result.model, final_path, seed=cfg.seed,
                              epoch=cfg.n_epochs - 1, norm_power=norm_power)
    best = predictor.ChannelPredictor(result.model.arch)
    best.to(next(result.model.parameters()).dtype)
    best.load_state_dict(result.best_state)
    best_path = os.path.join(args.out, "best.ckpt")
    predictor.save_checkpoint(best, best_path, seed=cfg.seed,
                              epoch=result.best_epoch, norm_power=norm_power)
    training.write_history(result.history, os.path.join(args.out, "history.csv"),
                           append=start_epoch > 0)
    print(f"trained {cfg.n_epochs - start_epoch} epochs; best test loss "
          f"{result.best_test_loss:.6g} at epoch {result.best_epoch}")
    print(f"wrote {best_path}, {final_path}, history.csv")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_experiment(args)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = getattr(args, "checkpoint", None) or os.path.join(args.out, "best.ckpt")
    test_path = getattr(args, "test_data", None) or os.path.join(args.out, "test.csif")
    model, _ = predictor.load_checkpoint(ckpt_path)
    test_ds = dataset.load(test_path)
    _check_dataset_arch(test_ds, model.arch, "test")

    preds = predict_dataset(model, test_ds)
    report = evaluation.evaluate(preds, test_ds, cfg.snr_linear,
                                 heatmap_sample=min(cfg.heatmap_sample,
                                                    len(test_ds) - 1))
    evaluation.write_report(report, os.path.join(args.out, "report.json"))
    evaluation.write_sample_table(report, os.path.join(args.out, "samples.csv"))
    model_rho = report.aggregates["model"]["cos_mean"]["mean"]
    sh_rho = report.aggregates["sh"]["cos_mean"]["mean"]
    print(f"model_mean_rho={model_rho:.4f}, sh_mean_rho={sh_rho:.4f}, "
          f"improvement={100.0 * report.improvement:.2f}%")
    print(f"wrote {os.path.join(args.out, 'report.json')} and samples.csv")
    return 0


def predict_dataset(model: predictor.ChannelPredictor, ds: dataset.Dataset,
                    batch_size: int = 128) -> np.ndarray:
    """Model predictions (N, K, Nr, Nt) for every sample of a dataset."""
    return predictor.predict(model, ds.inputs, batch_size=batch_size)


def cmd_report(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for path in args.report:
        label = os.path.splitext(os.path.basename(path))[0]
        reports.append((label, evaluation.load_report(path)))
    first = reports[0][1]
    written = [
        reporting.heatmap_figure(first, os.path.join(args.out, "heatmap.png")),
        reporting.histogram_figure(first, os.path.join(args.out, "histogram.png")),
        reporting.cdf_figure(reports, os.path.join(args.out, "cdf.png")),
    ]
    written += reporting.write_grid_text(first, args.out)
    print(f"wrote {len(written)} files under {args.out}")
    return 0


def cmd_all(args) -> int:
    for step in (cmd_simulate, cmd_train, cmd_evaluate):
        code = step(args)
        if code:
            return code
    args.report = [os.path.join(args.out, "report.json")]
    return cmd_report(args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (dataset.DatasetFormatError, training.TrainingDivergedError,
            FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
