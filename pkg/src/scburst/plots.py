"""Optional figure rendering for CLI artifacts (matplotlib, file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _col(art, name):
    i = art.columns.index(name)
    return [float(r[i]) for r in art.rows]


def _threshold(ax, art, xname, xlabel):
    x = _col(art, xname)
    for name in art.columns:
        if name.startswith("b_bp_w"):
            ax.plot(x, _col(art, name), marker="o", label=f"w = {name[6:]}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("recoverable burst length $b_{BP}$")
    ax.legend()


def _sweep(ax, art):
    b = _col(art, "b")
    p = _col(art, "p_b")
    lo = _col(art, "ci_lo")
    hi = _col(art, "ci_hi")
    err = [[pi - l for pi, l in zip(p, lo)], [h - pi for pi, h in zip(p, hi)]]
    ax.errorbar(b, p, yerr=err, marker="s", capsize=2, label="simulation (95% CI)")
    ax.plot(b, _col(art, "floor_estimate"), "--", label="size-2 stopping-set estimate")
    ax.set_yscale("log")
    ax.set_xlabel("normalized burst length b")
    ax.set_ylabel("block erasure probability")
    ax.legend()


def _per_start(ax, art):
    ax.semilogy(_col(art, "s"), _col(art, "pe"), ".")
    ax.set_xlabel("burst start s")
    ax.set_ylabel("bit error probability")


def render(art, path) -> None:
    """Draw the artifact's table to ``path``; the format follows the file suffix."""
    cols = art.columns
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if "eps" in cols and any(c.startswith("b_bp_w") for c in cols):
            _threshold(ax, art, "eps", r"$\varepsilon$")
        elif "one_minus_capacity" in cols and any(c.startswith("b_bp_w") for c in cols):
            _threshold(ax, art, "one_minus_capacity", "1 - C(N0)")
        elif "p_b" in cols:
            _sweep(ax, art)
        elif "s" in cols and "pe" in cols:
            _per_start(ax, art)
        elif "floor_estimate" in cols:
            ax.semilogy(_col(art, "b"), _col(art, "floor_estimate"), marker="o")
            ax.set_xlabel("normalized burst length b")
            ax.set_ylabel("expected erased size-2 stopping sets")
        else:
            plt.close(fig)
            raise ValueError("this artifact has no figure layout")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
