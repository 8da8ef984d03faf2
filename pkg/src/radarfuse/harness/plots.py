"""SVG figures from metrics JSON."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..heads import CLASS_NAMES  # noqa: E402


def plot_metrics(metrics: dict, out: str | Path) -> Path:
    """Loss curves per term next to per-class AP bars; deterministic SVG output."""
    plt.rcParams["svg.hashsalt"] = "radarfuse"
    fig, (ax_loss, ax_ap) = plt.subplots(1, 2, figsize=(10, 4))
    losses = metrics.get("epoch_losses") or []
    for term in sorted({k for e in losses for k in e}):
        ax_loss.plot(range(1, len(losses) + 1), [e.get(term) for e in losses], marker="o", label=term)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean loss")
    if losses:
        ax_loss.legend()
    ev = metrics["eval"]
    regions = [r for r in ("all", "corridor") if r in ev]
    width = 0.8 / max(1, len(regions))
    for i, region in enumerate(regions):
        vals = [ev[region]["ap"].get(c) or 0.0 for c in CLASS_NAMES]
        ax_ap.bar([j + i * width for j in range(len(CLASS_NAMES))], vals, width, label=region)
    ax_ap.set_xticks([j + width * (len(regions) - 1) / 2 for j in range(len(CLASS_NAMES))], CLASS_NAMES)
    ax_ap.set_ylim(0, 1)
    ax_ap.set_ylabel("AP")
    ax_ap.legend()
    fig.suptitle(f"config {metrics.get('config_hash', '?')}  seed {metrics.get('seed', '?')}")
    fig.tight_layout()
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
