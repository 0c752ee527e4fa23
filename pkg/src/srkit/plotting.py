"""Figure rendering for experiment results.

Renders a summary figure next to the delimited output when asked to; the
CSV stays the machine-readable contract and nothing here affects it.
matplotlib is imported lazily so the rest of the package works without a
plotting stack.
"""

from __future__ import annotations

from .harness import ExperimentResult


def _mpl():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({
        "figure.figsize": (6.0, 3.8),
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.fontsize": 8,
    })
    return plt


def render_figures(result: ExperimentResult, out_prefix: str) -> list[str]:
    """Write the figure(s) for a result; returns the paths written."""
    plt = _mpl()
    groups = result.summary.get("groups", [])
    sizes = sorted({g["n"] for g in groups})
    rvals = sorted({g["r"] for g in groups if g.get("r") is not None})
    path = f"{out_prefix}.png"
    if result.kind in ("sum_growth", "dot") and len(sizes) > 1:
        _plot_error_vs_n(plt, result, groups)
    elif result.kind == "r_sweep" and len(rvals) > 1:
        _plot_error_vs_r(plt, result, groups)
    else:
        _plot_finals(plt, result)
    plt.tight_layout()
    plt.savefig(path, dpi=150)
    plt.close("all")
    return [path]


def _modes_in_order(groups):
    seen = []
    for g in groups:
        if g["mode"] not in seen:
            seen.append(g["mode"])
    return seen


def _plot_error_vs_n(plt, result, groups):
    fig, ax = plt.subplots()
    slopes = result.summary.get("slopes", {})
    for mode in _modes_in_order(groups):
        pts = [(g["n"], g.get("median_rel_err")) for g in groups
               if g["mode"] == mode and g.get("median_rel_err")]
        if not pts:
            continue
        label = mode
        if mode in slopes:
            label += f" (slope {slopes[mode]:.2f})"
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", base=2, label=label)
    ax.set_xlabel("n")
    ax.set_ylabel("median relative error")
    ax.set_title(f"{result.kind}: error growth ({result.summary.get('fmt', '')})")
    ax.legend()


def _plot_error_vs_r(plt, result, groups):
    fig, ax = plt.subplots()
    pts = sorted((g["r"], g.get("median_rel_err")) for g in groups
                 if g.get("r") is not None and g.get("median_rel_err"))
    ax.semilogy([p[0] for p in pts], [p[1] for p in pts], "o-")
    heur = result.summary.get("heuristic_r")
    if heur is not None:
        ax.axvline(heur, color="tab:red", ls="--", lw=1,
                   label=f"ceil(log2(n)/2) = {heur}")
        ax.legend()
    ax.set_xlabel("random bits r")
    ax.set_ylabel("median relative error")
    ax.set_title(f"r sweep, n = {result.summary.get('groups', [{}])[0].get('n', '?')}")


def _plot_finals(plt, result):
    fig, ax = plt.subplots()
    by_mode: dict[str, list[float]] = {}
    for row in result.rows:
        by_mode.setdefault(row.mode, []).append(float(row.final))
    labels = list(by_mode)
    ax.boxplot([by_mode[m] for m in labels], tick_labels=labels)
    exacts = {float(row.exact) for row in result.rows}
    if len(exacts) == 1:
        ax.axhline(exacts.pop(), color="tab:red", ls="--", lw=1, label="exact")
        ax.legend()
    ax.set_ylabel("final value")
    ax.set_title(f"{result.kind}: finals per mode")
