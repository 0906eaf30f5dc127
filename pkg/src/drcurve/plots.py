"""Report figures rendered next to the delimited outputs.

Everything draws through the Agg backend and writes straight to files; no
display is required or used.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curve import SliceTable


def render_slice(table: SliceTable, path: str | Path) -> Path:
    """Line-with-band plot for 1-D slices, mean surface for 2-D slices."""
    path = Path(path)
    if len(table.free_dims) == 1:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        x = table.rows[:, 0]
        mean, lower, upper = table.rows[:, 1], table.rows[:, 2], table.rows[:, 3]
        ax.fill_between(x, lower, upper, alpha=0.25, color="tab:red",
                        label="95% band")
        ax.plot(x, mean, color="tab:red", label="estimated amount")
        ax.set_xlabel(f"DR price, dimension {table.free_dims[0]} ($/kWh)")
        ax.set_ylabel("DR amount (kW)")
        ax.set_title(f"price-amount slice ({table.target})")
        ax.legend(loc="best")
    else:
        fig, ax = plt.subplots(figsize=(6.4, 5.0))
        d0, d1 = table.free_dims
        x = np.unique(table.rows[:, 0])
        y = np.unique(table.rows[:, 1])
        z = table.rows[:, 2].reshape(len(x), len(y))
        pc = ax.pcolormesh(x, y, z.T, shading="auto", cmap="viridis")
        fig.colorbar(pc, ax=ax, label="mean DR amount (kW)")
        ax.set_xlabel(f"DR price, dimension {d0} ($/kWh)")
        ax.set_ylabel(f"DR price, dimension {d1} ($/kWh)")
        ax.set_title(f"price-amount surface ({table.target})")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_bench(rows: list[tuple[str, float | None, float | None]],
                 path: str | Path) -> Path:
    """Grouped bars of within/out-of-sample error per method."""
    path = Path(path)
    names = [r[0] for r in rows]
    within = [np.nan if r[1] is None else r[1] for r in rows]
    out = [np.nan if r[2] is None else r[2] for r in rows]
    idx = np.arange(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    ax.bar(idx - width / 2, within, width, label="within sample")
    ax.bar(idx + width / 2, out, width, label="out of sample")
    ax.set_xticks(idx, names, rotation=20, ha="right")
    ax.set_ylabel("normalized RMS error (%)")
    ax.set_title("estimation error by method")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
