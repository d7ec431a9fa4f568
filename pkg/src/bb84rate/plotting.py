"""Figures for the CLI report paths.

matplotlib is imported lazily so the numerical modules work without it.
"""

from __future__ import annotations

import math

# (color, linestyle) per security level, first-order asymptote last.
FIGURE1_STYLES = {
    1e-2: ("green", "-"),
    1e-4: ("blue", "--"),
    1e-6: ("red", ":"),
    1e-8: ("black", "-"),
    1e-10: ("green", "--"),
}
ASYMPTOTE_STYLE = ("black", ":")


def eps_label(eps: float) -> str:
    """``1e-2`` style label for powers of ten, ``%g`` otherwise."""
    e = math.log10(eps)
    if abs(e - round(e)) < 1e-12:
        return f"1e{int(round(e))}"
    return f"{eps:g}"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_figure1(curve, path, dpi=150):
    """Plot a :class:`~bb84rate.rate_engine.RateCurve` to ``path``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    x = curve.log10_n
    color, ls = ASYMPTOTE_STYLE
    ax.axhline(curve.asymptote, color=color, linestyle=ls, label=f"first order {curve.asymptote:.6f}")
    for i, (eps, rates) in enumerate(curve.series.items()):
        color, ls = FIGURE1_STYLES.get(eps, (f"C{i}", "-"))
        ax.plot(x, rates, color=color, linestyle=ls, label=f"eps = {eps_label(eps)}")
    ax.set_xlabel("log10 n")
    ax.set_ylabel("rate")
    ax.set_xlim(x[0], x[-1])
    ax.set_ylim(0.0, curve.asymptote * 1.05)
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_key_histogram(summary, path, predicted=None, dpi=150):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    keys = [o.key_len for o in summary.outcomes]
    ax.hist(keys, bins=min(30, max(5, len(keys) // 5)), color="0.6", edgecolor="black")
    ax.axvline(summary.mean_key_len, color="blue", label="empirical mean")
    if predicted is not None:
        ax.axvline(predicted, color="red", linestyle="--", label="predicted")
    ax.set_xlabel("final key length [bits]")
    ax.set_ylabel("trials")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


_SCRIPT = '''\
"""Plot the key-rate curves written by `bb84rate figure1`."""
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
OUT_PATH = sys.argv[1] if len(sys.argv) > 1 else {png_path!r}
STYLES = {styles!r}

with open(CSV_PATH, newline="") as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
cols = list(rows[0].keys())
x = [float(r["log10_n"]) for r in rows]
fig, ax = plt.subplots(figsize=(5.5, 4.0))
asym = float(rows[0]["asymptote"])
ax.axhline(asym, color="black", linestyle=":", label="first order %.6f" % asym)
for i, col in enumerate(c for c in cols if c.startswith("rate_eps_")):
    label = col[len("rate_eps_"):]
    color, ls = STYLES.get(label, ("C%d" % i, "-"))
    ax.plot(x, [float(r[col]) for r in rows], color=color, linestyle=ls, label="eps = " + label)
ax.set_xlabel("log10 n")
ax.set_ylabel("rate")
ax.set_xlim(x[0], x[-1])
ax.set_ylim(0.0, asym * 1.05)
ax.legend(loc="lower right", fontsize="small")
fig.tight_layout()
fig.savefig(OUT_PATH, dpi=150)
'''


def figure1_plot_script(csv_path, png_path) -> str:
    """Source of a standalone matplotlib script that plots a figure1 CSV."""
    styles = {eps_label(e): s for e, s in FIGURE1_STYLES.items()}
    return _SCRIPT.format(csv_path=str(csv_path), png_path=str(png_path), styles=styles)
