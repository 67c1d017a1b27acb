"""Dataset construction: normalization, windowing, speed mixing, splitting,
and the CSIF binary container.

A sequence is normalized by the average power of a single channel element,
P = (1 / (Q K Nr Nt)) sum_n ||H_n||_F^2, then cut into overlapping windows
of L inputs plus one next-step target. Mixed-speed datasets normalize each
sequence independently before mixing.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from csipred.channel_sim import ChannelSequence

MAGIC = b"CSIF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<5Idd")  # K, Nr, Nt, L, N, T_s, train_fraction


class DatasetFormatError(Exception):
    """Raised when a dataset file is corrupt, truncated, or inconsistent."""


@dataclass
class DatasetSample:
    """One training/evaluation sample: L past tensors and the next-step target."""

    inputs: np.ndarray   # (L, K, Nr, Nt) complex, oldest first
    target: np.ndarray   # (K, Nr, Nt) complex
    speed_tag: float     # km/h


@dataclass
class Dataset:
    """Flat sample container with homogeneous shape and history length.

    Values are stored as complex64, matching the 32-bit on-disk format, so
    a save/load round trip is bit-exact.
    """

    inputs: np.ndarray        # (N, L, K, Nr, Nt) complex64
    targets: np.ndarray       # (N, K, Nr, Nt) complex64
    speed_tags: np.ndarray    # (N,) float32
    sample_period: float
    train_fraction: float = 0.7
    split_tag: str = "all"
    provenance: list = field(default_factory=list)  # per-sequence dicts
    meta: dict = field(default_factory=dict)        # e.g. simulator config

    def __post_init__(self):
        if self.inputs.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs/targets sample counts differ")
        if self.inputs.shape[2:] != self.targets.shape[1:]:
            raise ValueError("inputs/targets tensor shapes differ")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, i: int) -> DatasetSample:
        return DatasetSample(self.inputs[i], self.targets[i],
                             float(self.speed_tags[i]))

    @property
    def shape(self) -> tuple:
        """(K, Nr, Nt) of each tensor."""
        return self.targets.shape[1:]

    @property
    def history_len(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx: np.ndarray, split_tag: str) -> "Dataset":
        return dataclasses.replace(
            self, inputs=self.inputs[idx], targets=self.targets[idx],
            speed_tags=self.speed_tags[idx], split_tag=split_tag)


def compute_norm_power(seq: ChannelSequence) -> float:
    """Average power of a single channel element across the whole sequence."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    p = float(np.mean(np.abs(seq.tensors) ** 2))
    if p == 0.0:
        raise ValueError("all-zero sequence has no normalizable power")
    return p


def normalize(seq: ChannelSequence, p: float) -> ChannelSequence:
    """Scale every tensor by 1/sqrt(p) and record p on the sequence."""
    if p <= 0:
        raise ValueError("normalization power must be positive")
    return ChannelSequence(seq.tensors / np.sqrt(p), seq.speed,
                           seq.sample_period, seq.config, norm_power=p)


def window(seq: ChannelSequence, l: int) -> list[DatasetSample]:
    """Cut a length-Q sequence into Q-l overlapping (L inputs, 1 target) samples."""
    q = len(seq)
    if not 1 <= l <= q - 1:
        raise ValueError(f"history length {l} must be in [1, {q - 1}] for Q={q}")
    samples = []
    for t in range(l - 1, q - 1):
        samples.append(DatasetSample(seq.tensors[t - l + 1:t + 1],
                                     seq.tensors[t + 1], seq.speed))
    return samples


def _check_homogeneous(seqs: list[ChannelSequence]) -> None:
    if not seqs:
        raise ValueError("need at least one sequence")
    shape, period = seqs[0].shape, seqs[0].sample_period
    for s in seqs[1:]:
        if s.shape != shape:
            raise ValueError("sequences have heterogeneous tensor shapes")
        if s.sample_period != period:
            raise ValueError("sequences have heterogeneous sample periods")


def build_mixed(seqs: list[ChannelSequence], l: int, seed: int = 0,
                train_fraction: float = 0.7) -> Dataset:
    """Normalize each sequence independently, window, mix, and shuffle.

    The shuffle is a fixed permutation drawn from seed, so the same inputs
    always produce the same dataset.
    """
    _check_homogeneous(seqs)
    normed = [normalize(s, compute_norm_power(s)) for s in seqs]
    return _mix_windows(normed, l, seed, train_fraction, "all")


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint train/test partition at sample granularity.

    Windows from one sequence may straddle the two sides (their time spans
    overlap); use split_by_time for a leakage-free partition.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(ds)
    n_train = int(round(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise ValueError(f"fraction {train_fraction} leaves an empty side for N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    train = ds.subset(np.sort(perm[:n_train]), "train")
    test = ds.subset(np.sort(perm[n_train:]), "test")
    return train, test


def split_by_time(seqs: list[ChannelSequence], l: int, train_fraction: float,
                  seed: int = 0) -> tuple[Dataset, Dataset]:
    """Disjoint-time-span alternative to build_mixed + split.

    Each sequence is normalized, then cut at tensor index round(Q * f):
    training windows live entirely in the head span, test windows in the
    tail span, so no channel tensor is shared between the sides (the l
    straddling windows per sequence are dropped). Both sides are windowed,
    mixed, and shuffled exactly like build_mixed.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    _check_homogeneous(seqs)
    head, tail = [], []
    for s in seqs:
        cut = int(round(len(s) * train_fraction))
        if cut < l + 1 or len(s) - cut < l + 1:
            raise ValueError(
                f"fraction {train_fraction} leaves a span shorter than "
                f"l+1={l + 1} for Q={len(s)}")
        norm = normalize(s, compute_norm_power(s))
        head.append(dataclasses.replace(norm, tensors=norm.tensors[:cut]))
        tail.append(dataclasses.replace(norm, tensors=norm.tensors[cut:]))
    train = _mix_windows(head, l, seed, train_fraction, "train")
    test = _mix_windows(tail, l, seed, train_fraction, "test")
    return train, test


def _mix_windows(seqs: list[ChannelSequence], l: int, seed: int,
                 train_fraction: float, split_tag: str) -> Dataset:
    inputs, targets, tags, provenance = [], [], [], []
    for s in seqs:
        for sample in window(s, l):
            inputs.append(sample.inputs)
            targets.append(sample.target)
            tags.append(sample.speed_tag)
        provenance.append({
            "speed": s.speed, "seed": s.config.seed, "q": len(s),
            "norm_power": s.norm_power,
        })
    perm = np.random.default_rng(seed).permutation(len(inputs))
    return Dataset(np.stack(inputs).astype(np.complex64)[perm],
                   np.stack(targets).astype(np.complex64)[perm],
                   np.asarray(tags, dtype=np.float32)[perm],
                   seqs[0].sample_period, train_fraction=train_fraction,
                   split_tag=split_tag, provenance=provenance)


def save(ds: Dataset, path: str) -> None:
    """Write a dataset as CSIF (little-endian) plus a .meta.json sidecar.

    Layout: magic "CSIF", u16 version, header {K, Nr, Nt, L, N: u32;
    T_s: f64; train_fraction: f64}, then per sample {speed_tag: f32;
    (L+1) K Nr Nt complex values as interleaved f32 pairs, inputs oldest
    first then target}.
    """
    k, nr, nt = ds.shape
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(_HEADER.pack(k, nr, nt, ds.history_len, len(ds),
                              ds.sample_period, ds.train_fraction))
        for i in range(len(ds)):
            fh.write(struct.pack("<f", ds.speed_tags[i]))
            fh.write(np.ascontiguousarray(ds.inputs[i], dtype="<c8").tobytes())
            fh.write(np.ascontiguousarray(ds.targets[i], dtype="<c8").tobytes())
    os.replace(tmp, path)
    _write_sidecar(ds, path)


def _write_sidecar(ds: Dataset, path: str) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "shape": {"n_subbands": ds.shape[0], "n_rx": ds.shape[1], "n_tx": ds.shape[2]},
        "history_len": ds.history_len,
        "n_samples": len(ds),
        "sample_period": ds.sample_period,
        "train_fraction": ds.train_fraction,
        "split_tag": ds.split_tag,
        "sequences": ds.provenance,
        "experiment": ds.meta,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".meta.json"


def load(path: str) -> Dataset:
    """Read a CSIF file back; raises DatasetFormatError on any inconsistency."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported format version {version}")
        k, nr, nt, l, n, t_s, train_fraction = _HEADER.unpack(
            _read_exact(fh, _HEADER.size))
        if min(k, nr, nt, l, n) < 1:
            raise DatasetFormatError("non-positive header dimension")
        tensor_elems = k * nr * nt
        record = 4 + (l + 1) * tensor_elems * 8
        expected = 4 + 2 + _HEADER.size + n * record
        if size != expected:
            raise DatasetFormatError(
                f"file size {size} != expected {expected} for header {n} samples")

        inputs = np.empty((n, l, k, nr, nt), dtype=np.complex64)
        targets = np.empty((n, k, nr, nt), dtype=np.complex64)
        tags = np.empty(n, dtype=np.float32)
        for i in range(n):
            (tags[i],) = struct.unpack("<f", _read_exact(fh, 4))
            buf = _read_exact(fh, (l + 1) * tensor_elems * 8)
            values = np.frombuffer(buf, dtype="<c8")
            inputs[i] = values[:l * tensor_elems].reshape(l, k, nr, nt)
            targets[i] = values[l * tensor_elems:].reshape(k, nr, nt)

    provenance, split_tag, extra = [], "all", {}
    meta_file = sidecar_path(path)
    if os.path.exists(meta_file):
        with open(meta_file) as fh:
            doc = json.load(fh)
        provenance = doc.get("sequences", [])
        split_tag = doc.get("split_tag", "all")
        extra = doc.get("experiment", {})
    return Dataset(inputs, targets, tags, t_s, train_fraction=train_fraction,
                   split_tag=split_tag, provenance=provenance, meta=extra)


def _read_exact(fh, count: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise DatasetFormatError("truncated file")
    return buf
