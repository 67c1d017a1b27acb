"""Experiment configuration: TOML loading, presets, and cross-module checks.

A single ExperimentConfig drives the whole pipeline so that simulator,
dataset, model, and training settings cannot drift apart. Validation runs
before any expensive work starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from csipred.channel_sim import SimConfig
from csipred.predictor import ArchConfig
from csipred.training import TrainConfig

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    seed: int = 0
    speeds: list[float] = field(default_factory=lambda: [30.0])
    # simulator
    n_tx: int = 32
    n_rx: int = 4
    n_subbands: int = 52
    carrier_freq: float = 2.1e9
    bandwidth: float = 20e6
    sample_period: float = 5e-3
    n_paths: int = 16
    rician_k: float = 0.0
    antenna_spacing: float = 0.5
    mean_delay: float = 100e-9
    max_delay: float = 1e-6
    # dataset
    history_len: int = 3
    seq_len: int = 2000
    seqs_per_speed: int = 5
    train_fraction: float = 0.7
    split_mode: str = "samples"   # "samples" or leakage-free "temporal"
    # model
    n_res_blocks: int = 2
    use_residual: bool = True
    # training
    batch_size: int = 64
    n_epochs: int = 50
    initial_lr: float = 1e-3
    lr_milestones: tuple[int, ...] = (25, 40)
    lr_decay: float = 0.1
    checkpoint_every: int = 0
    dtype: str = "float32"
    num_threads: int | None = None
    # evaluation
    snr_db: float = 10.0
    heatmap_sample: int = 0

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(
            n_tx=self.n_tx, n_rx=self.n_rx, n_subbands=self.n_subbands,
            carrier_freq=self.carrier_freq, bandwidth=self.bandwidth,
            sample_period=self.sample_period, n_paths=self.n_paths,
            rician_k=self.rician_k, antenna_spacing=self.antenna_spacing,
            seed=self.seed if seed is None else seed,
            mean_delay=self.mean_delay, max_delay=self.max_delay)

    def arch_config(self) -> ArchConfig:
        return ArchConfig(
            history_len=self.history_len, n_rx=self.n_rx, n_tx=self.n_tx,
            n_subbands=self.n_subbands, n_res_blocks=self.n_res_blocks,
            use_residual=self.use_residual)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, n_epochs=self.n_epochs,
            initial_lr=self.initial_lr, lr_milestones=tuple(self.lr_milestones),
            lr_decay=self.lr_decay, seed=self.seed,
            checkpoint_every=self.checkpoint_every, dtype=self.dtype,
            num_threads=self.num_threads)

    @property
    def snr_linear(self) -> float:
        return float(10.0 ** (self.snr_db / 10.0))

    def sequence_seed(self, speed_idx: int, seq_idx: int) -> int:
        """Stable per-sequence seed derived from the base seed."""
        ss = np.random.SeedSequence([self.seed, speed_idx, seq_idx])
        return int(ss.generate_state(1)[0])

    def validate(self) -> None:
        """Cross-module consistency; raises ConfigError before any work runs."""
        try:
            self.sim_config()
            self.arch_config()
            self.train_config()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if not self.speeds:
            raise ConfigError("at least one speed is required")
        if any(s < 0 for s in self.speeds):
            raise ConfigError("speeds must be >= 0 km/h")
        if self.seqs_per_speed < 1:
            raise ConfigError("seqs_per_speed must be >= 1")
        if self.seq_len < self.history_len + 1:
            raise ConfigError(
                f"seq_len {self.seq_len} too short for history_len {self.history_len}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.split_mode not in ("samples", "temporal"):
            raise ConfigError(f"unknown split_mode {self.split_mode!r}")
        if self.split_mode == "temporal":
            cut = int(round(self.seq_len * self.train_fraction))
            if cut < self.history_len + 1 or \
                    self.seq_len - cut < self.history_len + 1:
                raise ConfigError(
                    "temporal split leaves a span shorter than history_len+1")
        n_samples = len(self.speeds) * self.seqs_per_speed * (self.seq_len - self.history_len)
        if int(round(n_samples * self.train_fraction)) in (0, n_samples):
            raise ConfigError("train_fraction leaves an empty train or test side")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["lr_milestones"] = list(self.lr_milestones)
        return doc


_SECTIONS = {
    "simulator": {
        "n_tx": "n_tx", "n_rx": "n_rx", "n_subbands": "n_subbands",
        "carrier_freq_hz": "carrier_freq", "bandwidth_hz": "bandwidth",
        "sample_period_s": "sample_period", "n_paths": "n_paths",
        "rician_k": "rician_k", "antenna_spacing": "antenna_spacing",
        "mean_delay_s": "mean_delay", "max_delay_s": "max_delay",
        "speeds_kmh": "speeds",
    },
    "dataset": {
        "history_len": "history_len", "seq_len": "seq_len",
        "seqs_per_speed": "seqs_per_speed", "train_fraction": "train_fraction",
        "split_mode": "split_mode",
    },
    "model": {
        "n_res_blocks": "n_res_blocks", "use_residual": "use_residual",
    },
    "training": {
        "batch_size": "batch_size", "n_epochs": "n_epochs",
        "initial_lr": "initial_lr", "lr_milestones": "lr_milestones",
        "lr_decay": "lr_decay", "checkpoint_every": "checkpoint_every",
        "dtype": "dtype", "num_threads": "num_threads",
    },
    "evaluation": {
        "snr_db": "snr_db", "heatmap_sample": "heatmap_sample",
    },
}


def desk_preset() -> ExperimentConfig:
    """Workstation-scale defaults: full-size channel, shortened regimen."""
    return ExperimentConfig()


def paper_preset() -> ExperimentConfig:
    """Full training regimen: batch 512, 300 epochs, decay at 100/200/250."""
    return dataclasses.replace(
        ExperimentConfig(), batch_size=512, n_epochs=300,
        lr_milestones=(100, 200, 250))


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def load_config(path: str | None = None, preset: str = "desk") -> ExperimentConfig:
    """Build a config from a preset, overlaid with a TOML file when given."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset]()
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return apply_dict(cfg, doc, source=path)


def apply_dict(cfg: ExperimentConfig, doc: dict, source: str = "<dict>") -> ExperimentConfig:
    updates = {}
    if "seed" in doc:
        updates["seed"] = int(doc["seed"])
    for section, mapping in _SECTIONS.items():
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: section [{section}] must be a table")
        for key, value in body.items():
            if key not in mapping:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            updates[mapping[key]] = value
    unknown = set(doc) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")
    try:
        cfg = dataclasses.replace(cfg, **updates)
    except TypeError as err:
        raise ConfigError(f"{source}: {err}") from err
    if "lr_milestones" in updates:
        cfg = dataclasses.replace(cfg, lr_milestones=tuple(updates["lr_milestones"]))
    if "speeds" in updates:
        cfg = dataclasses.replace(cfg, speeds=[float(s) for s in updates["speeds"]])
    return cfg
