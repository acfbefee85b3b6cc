"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited reports.  PNG metadata is
stripped so identical inputs produce byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def render_detection_curves(curves, path, xlabel="attack magnitude", title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        ax.plot(c.x, c.y, marker="o", label=c.detector)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("detection probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_trace(trace_rows, path, title=None):
    """Per-hour reconstruction errors with the threshold line."""
    hours = [r["hour"] for r in trace_rows]
    clean = [r["clean_score"] for r in trace_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(hours, clean, marker="o", label="normal data")
    attacked = [(r["hour"], r["attacked_score"]) for r in trace_rows
                if r["attacked_score"] is not None]
    if attacked:
        ax.plot(*zip(*attacked), marker="x", markersize=10, linestyle="none",
                color="tab:red", label="attacked")
    if trace_rows and trace_rows[0]["threshold"] is not None:
        ax.axhline(trace_rows[0]["threshold"], linestyle="--", color="k",
                   label="threshold")
    ax.set_xlabel("hour")
    ax.set_ylabel("reconstruction error")
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_error_distribution(sorted_errors, threshold, path, title=None):
    """Ascending validation-error curve for inflection-point inspection."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(sorted_errors) + 1), sorted_errors)
    if threshold is not None:
        ax.axhline(threshold, linestyle="--", color="k", label="threshold")
        ax.legend()
    ax.set_xlabel("rank")
    ax.set_ylabel("reconstruction error")
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_loss_log(loss_log, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(loss_log)), loss_log)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
