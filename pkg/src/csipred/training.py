"""Mini-batch training of the channel predictor.

The loss is the squared Frobenius error of the complex prediction, summed
over all sub-band/antenna entries of a sample and averaged over the batch.
The learning rate follows a piecewise-constant milestone schedule.
"""

from __future__ import annotations

import copy
import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from csipred.dataset import Dataset
from csipred.predictor import ChannelPredictor, encode_batch, save_checkpoint


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch/batch where it happened."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    n_epochs: int = 50
    initial_lr: float = 1e-3
    lr_milestones: tuple[int, ...] = (25, 40)
    lr_decay: float = 0.1
    optimizer: str = "adam"
    seed: int = 0
    checkpoint_every: int = 0       # 0 disables periodic checkpoints
    dtype: str = "float32"          # "float64" for bit-deterministic runs
    grad_clip: float | None = None
    num_threads: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        ms = self.lr_milestones
        if any(m2 <= m1 for m1, m2 in zip(ms, ms[1:])):
            raise ValueError("lr_milestones must be strictly increasing")
        if ms and ms[-1] >= self.n_epochs:
            raise ValueError("lr_milestones must be < n_epochs")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float
    lr: float
    seconds: float


@dataclass
class TrainResult:
    model: ChannelPredictor          # final weights
    best_state: dict                 # weights at the best test loss
    best_epoch: int
    best_test_loss: float
    history: list[EpochRecord] = field(default_factory=list)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared Frobenius error per sample, averaged over the batch.

    Accepts a single (K, Nr, Nt) tensor pair or a batch with a leading axis.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = np.abs(pred - target) ** 2
    if pred.ndim == 3:
        return float(np.sum(diff))
    return float(np.mean(np.sum(diff, axis=tuple(range(1, pred.ndim)))))


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    """Piecewise-constant schedule: decay once per milestone passed."""
    if not 0 <= epoch < cfg.n_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.n_epochs})")
    n_drops = sum(1 for m in cfg.lr_milestones if m <= epoch)
    return cfg.initial_lr * cfg.lr_decay ** n_drops


def _encode_dataset(ds: Dataset, dtype: torch.dtype):
    x = torch.from_numpy(encode_batch(ds.inputs)).to(dtype)
    y = torch.from_numpy(encode_batch(ds.targets[:, None])).to(dtype)
    return x, y.reshape(len(ds), -1)


def _batch_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return ((pred - target) ** 2).sum(dim=1).mean()


def train(model: ChannelPredictor, train_ds: Dataset, test_ds: Dataset,
          cfg: TrainConfig, out_dir: str | None = None,
          start_epoch: int = 0, norm_power: float = 1.0) -> TrainResult:
    """Run the milestone-scheduled Adam regimen and track the best test loss.

    Batch order is drawn from a generator seeded with cfg.seed, so runs are
    reproducible. Periodic checkpoints land in out_dir when
    cfg.checkpoint_every > 0. Raises TrainingDivergedError on the first
    non-finite loss.
    """
    arch = model.arch
    expected = (arch.n_subbands, arch.n_rx, arch.n_tx)
    for name, ds in (("train", train_ds), ("test", test_ds)):
        if ds.shape != expected or ds.history_len != arch.history_len:
            raise ValueError(
                f"{name} dataset shape {ds.shape} x L={ds.history_len} does not "
                f"match architecture {expected} x L={arch.history_len}")

    if cfg.num_threads:
        torch.set_num_threads(cfg.num_threads)
    torch.manual_seed(cfg.seed)
    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    model = model.to(dtype)

    x_train, y_train = _encode_dataset(train_ds, dtype)
    x_test, y_test = _encode_dataset(test_ds, dtype)
    n = len(train_ds)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.initial_lr)
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochRecord] = []
    best_state = copy.deepcopy(model.state_dict())
    best_epoch, best_test = start_epoch, float("inf")

    for epoch in range(start_epoch, cfg.n_epochs):
        tic = time.perf_counter()
        lr = lr_at_epoch(epoch, cfg)
        for group in opt.param_groups:
            group["lr"] = lr

        model.train()
        perm = rng.permutation(n)
        loss_sum = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo:lo + cfg.batch_size]
            pred = model(x_train[idx])
            loss = _batch_loss(pred, y_train[idx])
            value = float(loss.detach())
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, b, value)
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            loss_sum += value * len(idx)

        test_loss = evaluate_loss(model, x_test, y_test, cfg.batch_size)
        history.append(EpochRecord(epoch, loss_sum / n, test_loss, lr,
                                   time.perf_counter() - tic))
        if test_loss < best_test:
            best_test, best_epoch = test_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
        if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, os.path.join(out_dir, f"epoch_{epoch:04d}.ckpt"),
                            seed=cfg.seed, epoch=epoch, norm_power=norm_power)

    return TrainResult(model, best_state, best_epoch, best_test, history)


def evaluate_loss(model: ChannelPredictor, x: torch.Tensor, y: torch.Tensor,
                  batch_size: int) -> float:
    """Mean per-sample loss over encoded tensors, in eval mode."""
    was_training = model.training
    model.eval()
    total = 0.0
    with torch.no_grad():
        for lo in range(0, x.shape[0], batch_size):
            pred = model(x[lo:lo + batch_size])
            total += float(((pred - y[lo:lo + batch_size]) ** 2).sum())
    if was_training:
        model.train()
    return total / x.shape[0]


def write_history(history: list[EpochRecord], path: str,
                  append: bool = False) -> None:
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["epoch", "train_loss", "test_loss", "lr", "seconds"])
        for rec in history:
            writer.writerow([rec.epoch, f"{rec.train_loss:.10e}",
                             f"{rec.test_loss:.10e}", f"{rec.lr:.6e}",
                             f"{rec.seconds:.3f}"])


def read_history(path: str) -> list[EpochRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpochRecord(int(row["epoch"]), float(row["train_loss"]),
                                   float(row["test_loss"]), float(row["lr"]),
                                   float(row["seconds"])))
    return out
