"""Prediction quality metrics and the sample-and-hold comparison.

For every test sample the model's and the baseline's predicted tensors are
scored three ways: normalized MSE of the raw tensor, cosine similarity of
the per-sub-band beamformers against the true channel's top singular
vectors, and the single-layer sum rate achieved when the predicted
beamformer/combiner pair is applied to the true channel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from csipred.dataset import Dataset, DatasetSample

COS_GRID = np.linspace(0.0, 1.0, 201)
HIST_BINS = 50
PERCENTILES = (5, 25, 50, 75, 95)


@dataclass
class BeamformerSet:
    """Per-sub-band top singular triplets of a channel tensor.

    f[k] (length Nt) and w[k] (length Nr) are unit-norm; the pair is phase
    aligned so that w[k]^H H_k f[k] equals sigma[k] and the largest entry
    of f[k] is real non-negative.
    """

    f: np.ndarray      # (K, Nt)
    w: np.ndarray      # (K, Nr)
    sigma: np.ndarray  # (K,)


def nmse(truth: np.ndarray, pred: np.ndarray) -> tuple[float, float]:
    """Normalized MSE of a predicted tensor: (linear, dB).

    A perfect prediction yields linear 0 and a -inf dB sentinel.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {pred.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise ValueError("NMSE undefined for an identically zero truth tensor")
    linear = float(np.sum(np.abs(truth - pred) ** 2)) / denom
    db = 10.0 * np.log10(linear) if linear > 0 else float("-inf")
    return linear, db


def _canonicalize(f: np.ndarray, w: np.ndarray):
    """Rotate each (f, w) pair by one phase so f's largest entry is real >= 0.

    A joint rotation keeps w^H H f equal to the top singular value; rotating
    the two vectors independently would not.
    """
    anchor_idx = np.argmax(np.abs(f), axis=-1)
    anchor = np.take_along_axis(f, anchor_idx[..., None], axis=-1)[..., 0]
    phase = np.where(np.abs(anchor) > 0, anchor / np.abs(anchor), 1.0)
    return f * np.conj(phase)[..., None], w * np.conj(phase)[..., None]


def _batched_beamformers(tensors: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top singular triplets for a stack (..., K, Nr, Nt) of channel tensors."""
    u, s, vh = np.linalg.svd(tensors, full_matrices=False)
    f = np.conj(vh[..., 0, :])
    w = u[..., :, 0]
    f, w = _canonicalize(f, w)
    return f, w, s[..., 0]


def svd_beamformers(h: np.ndarray) -> BeamformerSet:
    """Per-sub-band beamformer f_k, combiner w_k and top singular value of h."""
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel tensor contains non-finite entries")
    fs, ws, sigmas = [], [], []
    for k in range(h.shape[0]):
        try:
            f, w, sigma = _batched_beamformers(h[k][None])
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(f"SVD failed at subband {k}: {err}") from err
        fs.append(f[0])
        ws.append(w[0])
        sigmas.append(sigma[0])
    return BeamformerSet(np.stack(fs), np.stack(ws), np.asarray(sigmas))


def cosine_similarity(f: np.ndarray, f_hat: np.ndarray) -> float:
    """|f^H f_hat| / (||f|| ||f_hat||): phase- and scale-blind direction match."""
    f = np.asarray(f)
    f_hat = np.asarray(f_hat)
    nf = np.linalg.norm(f)
    ng = np.linalg.norm(f_hat)
    if nf == 0 or ng == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.abs(np.vdot(f, f_hat)) / (nf * ng))


def sum_rate(h_true: np.ndarray, bf: BeamformerSet, snr: float) -> float:
    """Single-layer rate sum_k log2(1 + snr |w_k^H H_k f_k|^2) in bits/s/Hz."""
    if snr <= 0:
        raise ValueError("snr must be positive (linear)")
    h_true = np.asarray(h_true)
    k, nr, nt = h_true.shape
    if bf.f.shape != (k, nt) or bf.w.shape != (k, nr):
        raise ValueError("beamformer set does not match channel tensor shape")
    gains = np.abs(np.einsum("kr,krm,km->k", np.conj(bf.w), h_true, bf.f)) ** 2
    return float(np.sum(np.log2(1.0 + snr * gains)))


def sh_predict(sample: DatasetSample) -> np.ndarray:
    """Sample-and-hold: reuse the most recent observed tensor as the prediction."""
    if sample.inputs.shape[0] < 1:
        raise ValueError("sample has no input tensors")
    return sample.inputs[-1]


@dataclass
class EvalReport:
    """Per-sample metric tables plus distribution summaries for model and SH."""

    n_samples: int
    snr: float
    speed_tags: np.ndarray
    per_sample: dict      # method -> {nmse, nmse_db, cos_mean, cos_min, sum_rate}
    per_subband_cos: dict  # method -> (N*K,) pooled cosine similarities
    svd_sum_rate: np.ndarray  # rate with the true channel's own beamformers
    aggregates: dict
    improvement: float    # relative mean-cosine gain of model over SH
    heatmap: dict         # amplitude grids of one sample for figure output


def _method_metrics(truth: np.ndarray, preds: np.ndarray, true_f: np.ndarray,
                    true_w: np.ndarray, snr: float):
    pf, pw, _ = _batched_beamformers(preds)
    # (N, K) cosine similarity of predicted vs true beamformers (unit norm);
    # clip the float-epsilon excess above 1 so distributions stay in [0, 1]
    cos = np.minimum(np.abs(np.einsum("nkm,nkm->nk", np.conj(true_f), pf)), 1.0)
    err = np.sum(np.abs(truth - preds) ** 2, axis=(1, 2, 3))
    power = np.sum(np.abs(truth) ** 2, axis=(1, 2, 3))
    lin = err / power
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    gains = np.abs(np.einsum("nkr,nkrm,nkm->nk", np.conj(pw), truth, pf)) ** 2
    rates = np.sum(np.log2(1.0 + snr * gains), axis=1)
    stats = {
        "nmse": lin,
        "nmse_db": db,
        "cos_mean": cos.mean(axis=1),
        "cos_min": cos.min(axis=1),
        "sum_rate": rates,
    }
    return stats, cos.reshape(-1)


def _distribution(values: np.ndarray) -> dict:
    counts, edges = np.histogram(values, bins=HIST_BINS, range=(0.0, 1.0))
    return {
        "mean": float(values.mean()),
        "median": float(np.median(values)),
        "percentiles": {str(p): float(np.percentile(values, p)) for p in PERCENTILES},
        "cdf_grid": COS_GRID.tolist(),
        "cdf": (np.searchsorted(np.sort(values), COS_GRID, side="right")
                / values.size).tolist(),
        "hist_edges": edges.tolist(),
        "hist_counts": counts.tolist(),
    }


def _aggregate(stats: dict) -> dict:
    # dB values may hold -inf sentinels; order statistics avoid the nan
    # that interpolating between infinities would produce
    db = stats["nmse_db"]
    return {
        "nmse_mean": float(stats["nmse"].mean()),
        "nmse_median": float(np.median(stats["nmse"])),
        "nmse_db_median": float(np.quantile(db, 0.5, method="lower")),
        "nmse_db_percentiles": {
            str(p): float(np.quantile(db, p / 100.0, method="lower"))
            for p in PERCENTILES},
        "sum_rate_mean": float(stats["sum_rate"].mean()),
        "cos_mean": _distribution(stats["cos_mean"]),
        "cos_min_mean": float(stats["cos_min"].mean()),
    }


def evaluate(predictions: np.ndarray, test: Dataset, snr: float,
             heatmap_sample: int = 0) -> EvalReport:
    """Score model predictions and the sample-and-hold baseline on a test set.

    predictions holds the model's (N, K, Nr, Nt) next-step tensors aligned
    with test. Beamformer similarity is measured per sub-band against the
    exact SVD beamformers of the true targets; rates apply each method's
    predicted beamformer/combiner pair to the true channel.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    predictions = np.asarray(predictions).astype(np.complex128)
    truth = test.targets.astype(np.complex128)
    if predictions.shape != truth.shape:
        raise ValueError(f"predictions shape {predictions.shape} does not match "
                         f"test targets {truth.shape}")
    sh = test.inputs[:, -1].astype(np.complex128)

    true_f, true_w, true_sigma = _batched_beamformers(truth)
    svd_rates = np.sum(np.log2(1.0 + snr * true_sigma ** 2), axis=1)

    per_sample, per_subband = {}, {}
    for name, preds in (("model", predictions), ("sh", sh)):
        per_sample[name], per_subband[name] = _method_metrics(
            truth, preds, true_f, true_w, snr)

    mean_model = float(per_sample["model"]["cos_mean"].mean())
    mean_sh = float(per_sample["sh"]["cos_mean"].mean())
    improvement = (mean_model - mean_sh) / mean_sh

    aggregates = {name: _aggregate(stats) for name, stats in per_sample.items()}
    for name in per_subband:
        aggregates[name]["cos_per_subband"] = _distribution(per_subband[name])
    aggregates["svd_sum_rate_mean"] = float(svd_rates.mean())

    i = heatmap_sample
    heatmap = {
        "sample_index": i,
        "speed_tag": float(test.speed_tags[i]),
        # per receive antenna: (Nt, K) amplitude grids
        "true": np.abs(truth[i]).transpose(1, 2, 0).tolist(),
        "model": np.abs(predictions[i]).transpose(1, 2, 0).tolist(),
        "sh": np.abs(sh[i]).transpose(1, 2, 0).tolist(),
    }
    return EvalReport(len(test), snr, np.asarray(test.speed_tags, dtype=float),
                      per_sample, per_subband, svd_rates, aggregates,
                      improvement, heatmap)


def _json_safe(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None  # -inf dB sentinel and friends
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def report_to_dict(report: EvalReport) -> dict:
    doc = {
        "n_samples": report.n_samples,
        "snr": report.snr,
        "improvement": report.improvement,
        "aggregates": report.aggregates,
        "heatmap": report.heatmap,
        "per_sample": {
            name: {key: [None if not np.isfinite(v) else float(v) for v in arr]
                   for key, arr in stats.items()}
            for name, stats in report.per_sample.items()
        },
        "speed_tags": report.speed_tags.tolist(),
        "svd_sum_rate": report.svd_sum_rate.tolist(),
    }
    return _json_safe(doc)


def write_report(report: EvalReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_report(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_sample_table(report: EvalReport, path: str) -> None:
    """Per-sample metrics as comma-separated text for external plotting."""
    cols = ["nmse", "nmse_db", "cos_mean", "cos_min", "sum_rate"]
    header = (["index", "speed"]
              + [f"model_{c}" for c in cols] + [f"sh_{c}" for c in cols]
              + ["svd_sum_rate"])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(report.n_samples):
            row = [str(i), f"{report.speed_tags[i]:g}"]
            for name in ("model", "sh"):
                row += [f"{report.per_sample[name][c][i]:.9g}" for c in cols]
            row.append(f"{report.svd_sum_rate[i]:.9g}")
            fh.write(",".join(row) + "\n")
