"""Self-contained SVG charts: bars with CI whiskers and specification curves."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

# Fixed ids and no timestamp so reruns produce identical files
matplotlib.rcParams["svg.hashsalt"] = "geomv"
matplotlib.rcParams["svg.fonttype"] = "none"
_SVG_METADATA = {"Date": None, "Creator": "geomv"}


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    return path


def bar_chart(
    table: pd.DataFrame,
    label: str,
    path: Union[str, Path],
    title: str = "",
    ylabel: str = "",
    baseline: Optional[str] = None,
) -> Path:
    """One bar per row of `table` (columns value, lo, hi) with 95% whiskers.

    When `baseline` names a label, its interval is drawn as horizontal reference lines.
    """
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(table) + 1.5), 3.5))
    x = np.arange(len(table))
    values = table["value"].to_numpy(dtype=np.float64)
    lo = table["lo"].to_numpy(dtype=np.float64)
    hi = table["hi"].to_numpy(dtype=np.float64)
    err = np.vstack([np.nan_to_num(values - lo), np.nan_to_num(hi - values)])
    ax.bar(x, values, color="#7a9cc6", yerr=err, capsize=3, ecolor="#333333")
    if baseline is not None and baseline in set(table[label]):
        row = table[table[label] == baseline].iloc[0]
        for level in (row["lo"], row["hi"]):
            if np.isfinite(level):
                ax.axhline(level, color="#c0392b", linewidth=0.8, linestyle="--")
    ax.set_xticks(x)
    ax.set_xticklabels(table[label].astype(str), rotation=45, ha="right", fontsize=8)
    ax.set_title(title, fontsize=9)
    ax.set_ylabel(ylabel, fontsize=8)
    return _save(fig, path)


def spec_curve_chart(curve: pd.DataFrame, markers: pd.DataFrame, path: Union[str, Path], title: str = "") -> Path:
    """Ordered coefficients with 95% bounds above a marker matrix of design choices."""
    n_rows = max(len(markers), 1)
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(max(5.0, 0.06 * len(curve) + 3.0), 3.0 + 0.18 * n_rows),
        sharex=True, gridspec_kw={"height_ratios": [3, max(1, n_rows // 3)]},
    )
    x = curve["rank"].to_numpy()
    colors = np.where(curve["significant"].to_numpy(), "#c0392b", "#555555")
    top.vlines(x, curve["ci_lo"], curve["ci_hi"], colors="#bbbbbb", linewidth=0.8)
    top.scatter(x, curve["beta1"], c=colors, s=8, zorder=3)
    top.axhline(0.0, color="#333333", linewidth=0.6)
    top.set_ylabel("coefficient", fontsize=8)
    top.set_title(title, fontsize=9)

    labels = [f"{axis}: {level}" for axis, level in markers.index]
    for i, (_, row) in enumerate(markers.iterrows()):
        hits = x[row.to_numpy(dtype=bool)]
        bottom.scatter(hits, np.full(hits.size, i), marker="|", s=30, color="#333333")
    bottom.set_yticks(np.arange(len(labels)))
    bottom.set_yticklabels(labels, fontsize=6)
    bottom.invert_yaxis()
    bottom.set_xlabel("specification (ordered by coefficient)", fontsize=8)
    return _save(fig, path)
