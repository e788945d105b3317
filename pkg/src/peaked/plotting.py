"""Render the plot-data tables of a finished run to PNG files.

Figures are a convenience; the ``plot_*.tsv`` columns are the primary output.
"""
from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 10, "axes.spines.top": False, "axes.spines.right": False})
    return plt


def _save(plt, fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_figures(record, out) -> list[Path]:
    """One PNG per experiment kind, written next to the plot data."""
    plt = _pyplot()
    out = Path(out)
    agg = record.aggregates
    kind = agg["kind"]
    fig, ax = plt.subplots(figsize=(5, 3.5))

    if kind == "rarity":
        for p in agg["points"]:
            r = p["rarity"]
            d = [b["delta"] for b in r]
            ax.errorbar(d, [b["p_hat"] for b in r],
                        yerr=[[max(0.0, b["p_hat"] - b["ci_low"]) for b in r], [max(0.0, b["ci_high"] - b["p_hat"]) for b in r]],
                        marker="o", capsize=3, label=f"n={p['n']} empirical")
            ax.plot(d, [b["bound"] for b in r], "--", label=f"n={p['n']} bound")
        ax.set_xscale("log")
        ax.set_yscale("symlog", linthresh=1e-4)
        ax.set_xlabel(r"$\delta$")
        ax.set_ylabel(r"P(max peak $\geq \delta$)")
        name = "fig_rarity.png"
    elif kind == "peak-sweep":
        for n in sorted({p["n"] for p in agg["points"]}):
            pts = [p for p in agg["points"] if p["n"] == n]
            ax.errorbar([p["tau_p"] for p in pts], [p["mean_delta"] for p in pts],
                        yerr=[p["stderr_delta"] for p in pts], marker="o", capsize=3, label=f"n={n}")
        ax.set_xlabel(r"$\tau_p$")
        ax.set_ylabel(r"mean $\delta$")
        name = "fig_peak_sweep.png"
    elif kind == "scaling-fit":
        pts = agg["points"]
        ns = [p["n"] for p in pts]
        ax.errorbar(ns, [p["mean_delta"] for p in pts], yerr=[p["stderr_delta"] for p in pts],
                    marker="o", capsize=3, label="peaked")
        if agg.get("baseline"):
            b = agg["baseline"]
            ax.errorbar([p["n"] for p in b], [p["mean_delta"] for p in b], yerr=[p["stderr_delta"] for p in b],
                        marker="s", capsize=3, label="unpeaked")
        if agg.get("fit"):
            c, a = agg["fit"]["c"], agg["fit"]["a"]
            ax.plot(ns, [c * a ** (-x) for x in ns], "k--", label=f"fit $a={a:.3f}$")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(r"mean $\delta$")
        name = "fig_scaling.png"
    elif kind == "entropy-profile":
        for p in agg["points"]:
            line = ax.errorbar(p["depth"], p["entropy_mean"], yerr=p["entropy_stderr"], label=f"n={p['n']}")
            ax.axhline(p["page"], ls=":", color=line[0].get_color())
            ax.axvline(p["tau_r"], ls="--", color="grey", lw=0.8)
        ax.set_xlabel("layer")
        ax.set_ylabel("half-chain entropy (bits)")
        name = "fig_entropy.png"
    else:
        for label in ("single-layer law", "peaking-layer law"):
            cs = [c for c in agg["checks"] if c["name"] == label]
            ax.errorbar([c["n"] for c in cs], [c["measured"] for c in cs], yerr=[c["stderr"] for c in cs],
                        marker="o", ls="none", capsize=3, label=f"{label} (measured)")
            ax.plot([c["n"] for c in cs], [c["expected"] for c in cs], "--", label=f"{label} (closed form)")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("mean peak weight")
        name = "fig_oracle.png"

    ax.legend(fontsize=8, frameon=False)
    return [_save(plt, fig, out / name)]
