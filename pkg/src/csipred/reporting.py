"""Static figure and text-grid generation from evaluation reports."""

from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_METHOD_LABELS = {"model": "3-D CNN", "sh": "Sample-and-hold"}


def heatmap_figure(report: dict, out_path: str) -> str:
    """Amplitude heatmaps of one sample: rows true/model/SH, one column per
    receive antenna, each panel a transmit-antenna x sub-band grid."""
    grids = report["heatmap"]
    n_rx = len(grids["true"])
    fig, axes = plt.subplots(3, n_rx, figsize=(3.2 * n_rx, 8.5), squeeze=False)
    vmax = max(np.max(grids[m]) for m in ("true", "model", "sh"))
    for row, method in enumerate(("true", "model", "sh")):
        for r in range(n_rx):
            ax = axes[row][r]
            im = ax.imshow(np.asarray(grids[method][r]), aspect="auto",
                           origin="lower", vmin=0.0, vmax=vmax, cmap="viridis")
            ax.set_title(f"{method} rx {r}", fontsize=9)
            ax.set_xlabel("sub-band")
            if r == 0:
                ax.set_ylabel("tx antenna")
    fig.colorbar(im, ax=[ax for row in axes for ax in row], shrink=0.6,
                 label="|h|")
    fig.suptitle(f"Channel amplitude, sample {grids['sample_index']} "
                 f"({grids['speed_tag']:g} km/h)")
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def histogram_figure(report: dict, out_path: str) -> str:
    """Histogram of the per-sample beamformer cosine similarity, model vs SH."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for method in ("model", "sh"):
        dist = report["aggregates"][method]["cos_mean"]
        edges = np.asarray(dist["hist_edges"])
        ax.stairs(dist["hist_counts"], edges, fill=True, alpha=0.55,
                  label=_METHOD_LABELS[method])
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("samples")
    ax.legend(loc="upper left")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def cdf_figure(reports: list[tuple[str, dict]], out_path: str) -> str:
    """Cosine-similarity CDFs for one or more evaluation runs."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for label, report in reports:
        for method, style in (("model", "-"), ("sh", "--")):
            dist = report["aggregates"][method]["cos_mean"]
            name = _METHOD_LABELS[method]
            name = name if len(reports) == 1 else f"{name} ({label})"
            ax.plot(dist["cdf_grid"], dist["cdf"], style, label=name)
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def write_grid_text(report: dict, out_dir: str) -> list[str]:
    """Underlying gridded data as plain text: heatmap panels, histogram
    counts, and CDF curves."""
    paths = []
    grids = report["heatmap"]
    for method in ("true", "model", "sh"):
        for r, panel in enumerate(grids[method]):
            path = os.path.join(out_dir, f"heatmap_{method}_rx{r}.csv")
            np.savetxt(path, np.asarray(panel), delimiter=",", fmt="%.8g")
            paths.append(path)
    for method in ("model", "sh"):
        dist = report["aggregates"][method]["cos_mean"]
        path = os.path.join(out_dir, f"hist_{method}.csv")
        edges = np.asarray(dist["hist_edges"])
        rows = np.column_stack([edges[:-1], edges[1:], dist["hist_counts"]])
        np.savetxt(path, rows, delimiter=",", fmt="%.8g",
                   header="bin_lo,bin_hi,count", comments="")
        paths.append(path)
        path = os.path.join(out_dir, f"cdf_{method}.csv")
        rows = np.column_stack([dist["cdf_grid"], dist["cdf"]])
        np.savetxt(path, rows, delimiter=",", fmt="%.8g",
                   header="rho,cdf", comments="")
        paths.append(path)
    return paths
