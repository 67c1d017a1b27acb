"""3-D convolutional residual network for next-step channel prediction.

The network consumes L past channel tensors encoded as 2L real feature
maps over an (Nr, Nt, K) volume, widens through an input conv block, runs
a configurable number of residual blocks, narrows to 2 maps, pools the
spatial volume down, and maps through one fully-connected layer back to
the 2 Nr Nt K real numbers of the predicted next-step tensor.

Channel schedule with history length L:
    2L -> 4L -> [4L -> 8L -> 16L -> 4L, identity skip] x blocks -> 2 -> FC
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

CKPT_MAGIC = b"CSIC"
CKPT_VERSION = 1

_KERNEL = (3, 7, 5)
_PAD = (1, 3, 2)
_OUT_KERNEL = (3, 7, 7)
_OUT_PAD = (1, 3, 3)
_POOL_OUT = (1, 2, 4)


def fc_input_dim(nr: int, nt: int, k: int) -> int:
    """Flattened feature count entering the FC layer: 2 * nr * (nt//2) * (k//4).

    The final max-pool halves the transmit axis and quarters the sub-band
    axis, so nt < 2 or k < 4 would leave nothing to flatten.
    """
    if min(nr, nt, k) < 1:
        raise ValueError("antenna/subband counts must be >= 1")
    x = 2 * nr * (nt // 2) * (k // 4)
    if x == 0:
        raise ValueError(
            f"FC input collapses to 0 for (nr={nr}, nt={nt}, k={k}); "
            "need nt >= 2 and k >= 4")
    return x


@dataclass(frozen=True)
class ArchConfig:
    history_len: int = 3
    n_rx: int = 4
    n_tx: int = 32
    n_subbands: int = 52
    n_res_blocks: int = 2
    use_residual: bool = True
    activation: str = "relu"
    norm_layer: str = "batchnorm3d"

    def __post_init__(self):
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if self.n_res_blocks < 0:
            raise ValueError("n_res_blocks must be >= 0")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.norm_layer != "batchnorm3d":
            raise ValueError(f"unsupported norm layer {self.norm_layer!r}")
        fc_input_dim(self.n_rx, self.n_tx, self.n_subbands)

    @property
    def output_dim(self) -> int:
        return 2 * self.n_rx * self.n_tx * self.n_subbands


def encode_input(window: np.ndarray) -> np.ndarray:
    """Map L complex (K, Nr, Nt) tensors to 2L real feature maps (2L, Nr, Nt, K).

    Feature map 2i holds the real part of window[i] (oldest first), map
    2i+1 the imaginary part; spatial axes are reordered to (Nr, Nt, K).
    """
    window = np.asarray(window)
    if window.ndim != 4:
        raise ValueError(f"expected (L, K, Nr, Nt) window, got {window.shape}")
    l, k, nr, nt = window.shape
    reordered = np.transpose(window, (0, 2, 3, 1))  # (L, Nr, Nt, K)
    out = np.empty((2 * l, nr, nt, k), dtype=_real_dtype(window.dtype))
    out[0::2] = reordered.real
    out[1::2] = reordered.imag
    return out


def decode_output(encoded: np.ndarray) -> np.ndarray:
    """Invert the real encoding: (2, Nr, Nt, K) or flat -> complex (K, Nr, Nt)."""
    encoded = np.asarray(encoded)
    if encoded.ndim == 1:
        raise ValueError("flat decode needs a shape; pass (2, Nr, Nt, K)")
    if encoded.ndim != 4 or encoded.shape[0] != 2:
        raise ValueError(f"expected (2, Nr, Nt, K), got {encoded.shape}")
    cplx = encoded[0] + 1j * encoded[1]  # (Nr, Nt, K)
    return np.transpose(cplx, (2, 0, 1))


def encode_batch(windows: np.ndarray) -> np.ndarray:
    """Vectorized encode_input over a batch: (B, L, K, Nr, Nt) -> (B, 2L, Nr, Nt, K)."""
    windows = np.asarray(windows)
    b, l, k, nr, nt = windows.shape
    reordered = np.transpose(windows, (0, 1, 3, 4, 2))
    out = np.empty((b, 2 * l, nr, nt, k), dtype=_real_dtype(windows.dtype))
    out[:, 0::2] = reordered.real
    out[:, 1::2] = reordered.imag
    return out


def decode_batch(encoded: np.ndarray) -> np.ndarray:
    """(B, 2, Nr, Nt, K) real -> (B, K, Nr, Nt) complex."""
    cplx = encoded[:, 0] + 1j * encoded[:, 1]
    return np.transpose(cplx, (0, 3, 1, 2))


def _real_dtype(dtype) -> np.dtype:
    return np.float32 if np.dtype(dtype) == np.complex64 else np.float64


class ConvBlock(nn.Module):
    """Conv3d -> BatchNorm3d -> ReLU."""

    def __init__(self, c_in: int, c_out: int, kernel=_KERNEL, padding=_PAD):
        super().__init__()
        self.conv = nn.Conv3d(c_in, c_out, kernel, stride=1, padding=padding)
        self.norm = nn.BatchNorm3d(c_out)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class ResidualBlock(nn.Module):
    """Two conv blocks widening 4L -> 16L, a bare conv back to 4L, and an
    identity skip from the block input, followed by one activation."""

    def __init__(self, l: int):
        super().__init__()
        self.block_a = ConvBlock(4 * l, 8 * l)
        self.block_b = ConvBlock(8 * l, 16 * l)
        self.conv = nn.Conv3d(16 * l, 4 * l, _KERNEL, stride=1, padding=_PAD)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(x + self.conv(self.block_b(self.block_a(x))))


class ChannelPredictor(nn.Module):
    """The full predictor; input (B, 2L, Nr, Nt, K), output (B, 2 Nr Nt K)."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        l = arch.history_len
        self.conv_in = ConvBlock(2 * l, 4 * l)
        self.pool_in = nn.MaxPool3d((3, 3, 3), stride=1, padding=(1, 1, 1))
        n_blocks = arch.n_res_blocks if arch.use_residual else 0
        self.res_blocks = nn.Sequential(*[ResidualBlock(l) for _ in range(n_blocks)])
        self.conv_out = ConvBlock(4 * l, 2, kernel=_OUT_KERNEL, padding=_OUT_PAD)
        self.pool_out = nn.MaxPool3d(_POOL_OUT, stride=_POOL_OUT)
        self.fc = nn.Linear(fc_input_dim(arch.n_rx, arch.n_tx, arch.n_subbands),
                            arch.output_dim)

    def forward(self, x):
        x = self.pool_in(self.conv_in(x))
        x = self.res_blocks(x)
        x = self.pool_out(self.conv_out(x))
        return self.fc(torch.flatten(x, 1))


def build_model(arch: ArchConfig, seed: int) -> ChannelPredictor:
    """Construct a predictor with seed-deterministic initial weights."""
    torch.manual_seed(seed)
    return ChannelPredictor(arch)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def predict(model: ChannelPredictor, windows: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Inference on (B, L, K, Nr, Nt) complex windows -> (B, K, Nr, Nt) complex.

    Runs in eval mode without touching gradients or batch-norm statistics.
    """
    windows = np.asarray(windows)
    if windows.ndim == 4:
        return predict(model, windows[None])[0]
    arch = model.arch
    expected = (arch.history_len, arch.n_subbands, arch.n_rx, arch.n_tx)
    if windows.shape[1:] != expected:
        raise ValueError(f"window shape {windows.shape[1:]} does not match "
                         f"architecture {expected}")
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    outs = []
    with torch.no_grad():
        for lo in range(0, windows.shape[0], batch_size):
            enc = encode_batch(windows[lo:lo + batch_size])
            x = torch.from_numpy(enc).to(dtype)
            y = model(x)
            y = y.view(-1, 2, arch.n_rx, arch.n_tx, arch.n_subbands)
            outs.append(decode_batch(y.numpy().astype(np.float64)))
    if was_training:
        model.train()
    return np.concatenate(outs)


def shape_trace(model: ChannelPredictor, batch_size: int = 1) -> list[tuple[str, tuple]]:
    """Output shape of every leaf layer for a zero batch, in execution order."""
    arch = model.arch
    shapes: list[tuple[str, tuple]] = []
    hooks = []
    for name, module in model.named_modules():
        if len(list(module.children())) == 0 and name:
            hooks.append(module.register_forward_hook(
                lambda mod, inp, out, name=name: shapes.append(
                    (name, tuple(out.shape)))))
    x = torch.zeros(batch_size, 2 * arch.history_len, arch.n_rx, arch.n_tx,
                    arch.n_subbands, dtype=next(model.parameters()).dtype)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        model(x)
    if was_training:
        model.train()
    for h in hooks:
        h.remove()
    return shapes


def save_checkpoint(model: ChannelPredictor, path: str, *, seed: int = 0,
                    epoch: int = 0, norm_power: float = 1.0) -> None:
    """Write a checkpoint: magic "CSIC", u16 version, u32 JSON header length,
    JSON header (architecture, seed, epoch, norm_power, named tensor table),
    then the named float32 blobs concatenated in table order.

    Integer-valued batch-norm counters are carried in the header so the
    blob section is uniformly float32.
    """
    tensors, int_buffers = [], {}
    blobs = []
    for name, value in model.state_dict().items():
        if not value.dtype.is_floating_point:
            int_buffers[name] = int(value.item())
            continue
        arr = value.detach().cpu().numpy().astype("<f4")
        tensors.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format_version": CKPT_VERSION,
        "arch": asdict(model.arch),
        "seed": seed,
        "epoch": epoch,
        "norm_power": norm_power,
        "tensors": tensors,
        "int_buffers": int_buffers,
    }
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HI", CKPT_VERSION, len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str) -> tuple[ChannelPredictor, dict]:
    """Rebuild a predictor from a checkpoint; returns (model, header dict)."""
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a predictor checkpoint")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        arch = ArchConfig(**header["arch"])
        model = ChannelPredictor(arch)
        state = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 4)
            if len(buf) != count * 4:
                raise ValueError(f"{path}: truncated checkpoint")
            arr = np.frombuffer(buf, dtype="<f4").reshape(shape)
            state[entry["name"]] = torch.from_numpy(arr.copy())
        for name, value in header["int_buffers"].items():
            state[name] = torch.tensor(value, dtype=torch.long)
    model.load_state_dict(state)
    return model, header
