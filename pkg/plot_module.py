"""Optional convergence plots from ``summary.csv``. Needs matplotlib."""

from __future__ import annotations

import csv
import importlib.util
import logging
import os
from collections import defaultdict
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

_matplotlib_spec = importlib.util.find_spec("matplotlib")
if _matplotlib_spec:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
else:
    plt = None


def matplotlib_available() -> bool:
    return plt is not None


def read_summary(csv_path: str) -> Dict[int, Dict[str, List[Optional[float]]]]:
    """Summary columns grouped by run; empty cells become None."""
    runs: Dict[int, Dict[str, List[Optional[float]]]] = defaultdict(lambda: defaultdict(list))
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            run = int(row["run"])
            for key, value in row.items():
                if key == "run":
                    continue
                runs[run][key].append(float(value) if value not in ("", None) else None)
    return {run: dict(cols) for run, cols in runs.items()}


def plot_convergence(csv_path: str, out_png: str, ground_energy: Optional[float] = None) -> str:
    """Energy per iteration (both estimators) and infidelity F′, one line per run."""
    if plt is None:
        raise ImportError("matplotlib is required for plotting. Install it to enable this feature.")
    runs = read_summary(csv_path)
    if not runs:
        raise ValueError(f"no rows in {csv_path}")

    fig, (ax_e, ax_f) = plt.subplots(2, 1, figsize=(7, 8), sharex=True)
    try:
        for run, cols in sorted(runs.items()):
            it = cols["iteration"]
            ax_e.plot(it, cols["E_vqcfd"], linewidth=0.8, label=f"run {run}" if len(runs) <= 10 else None)
            direct = [(j, e) for j, e in zip(it, cols["E_direct"]) if e is not None]
            if direct:
                ax_e.plot(*zip(*direct), linestyle="none", marker=".", markersize=2, color="grey")
            ax_f.semilogy(it, [max(f, 1e-16) for f in cols["f_prime"]], linewidth=0.8)
        if ground_energy is not None:
            ax_e.axhline(ground_energy, color="red", linestyle="--", label="E_GS")
        ax_e.set_ylabel("energy")
        ax_e.grid(linestyle="--", alpha=0.7)
        if len(runs) <= 10 or ground_energy is not None:
            ax_e.legend(fontsize=7)
        ax_f.set_xlabel("iteration")
        ax_f.set_ylabel("1 - F")
        ax_f.grid(linestyle="--", alpha=0.7)

        directory = os.path.dirname(out_png)
        if directory:
            os.makedirs(directory, exist_ok=True)
        fig.savefig(out_png, dpi=120, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.info("Convergence plot written to %s", out_png)
    return out_png
