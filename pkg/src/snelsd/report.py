"""Chunk-boundary heatmaps (ANSI, HTML, PNG) and training-curve figures."""

from __future__ import annotations

import html
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

RED = (220, 50, 50)
GREEN = (50, 180, 50)
BOUNDARY_THRESHOLD = 0.9
BOUNDARY_MARK = "|"


def boundary_color(r: float) -> tuple[int, int, int]:
    """Linear red (r = 0) to green (r = 1) interpolation, rounded to ints."""
    r = min(max(float(r), 0.0), 1.0)
    return tuple(int(round(a + (b - a) * r)) for a, b in zip(RED, GREEN))


def is_boundary(r: float) -> bool:
    return r > BOUNDARY_THRESHOLD


def render_ansi(sentences: Sequence[Sequence[str]], traces: Sequence[Sequence[float]]) -> str:
    lines = []
    for tokens, rs in zip(sentences, traces):
        cells = []
        for tok, r in zip(tokens, rs):
            red, green, blue = boundary_color(r)
            cell = f"\x1b[48;2;{red};{green};{blue}m{tok}:{r:.2f}\x1b[0m"
            if is_boundary(r):
                cell += f" {BOUNDARY_MARK}"
            cells.append(cell)
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


_HTML_HEAD = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Chunk boundaries</title>
<style>
body { font-family: sans-serif; }
table.sent { border-collapse: collapse; margin-bottom: 1em; }
table.sent td { padding: 2px 6px; text-align: center; }
td.r { color: #fff; font-size: 0.85em; }
td.mark { color: rgb(220,50,50); font-weight: bold; }
</style>
</head>
<body>
"""


def render_html(sentences: Sequence[Sequence[str]], traces: Sequence[Sequence[float]]) -> str:
    parts = [_HTML_HEAD]
    for tokens, rs in zip(sentences, traces):
        words = "".join(f"<td>{html.escape(t)}</td>" for t in tokens)
        scores = "".join(
            '<td class="r" style="background: rgb({},{},{})">{:.2f}</td>'.format(*boundary_color(r), r)
            for r in rs
        )
        marks = "".join(
            f'<td class="mark">{"&uarr;" if is_boundary(r) else ""}</td>' for r in rs
        )
        parts.append(f'<table class="sent">\n<tr>{words}</tr>\n<tr>{scores}</tr>\n<tr>{marks}</tr>\n</table>\n')
    parts.append("</body>\n</html>\n")
    return "".join(parts)


_CMAP = LinearSegmentedColormap.from_list(
    "boundary", [tuple(c / 255 for c in RED), tuple(c / 255 for c in GREEN)]
)


def plot_chunk_heatmap(sentences, traces, path) -> None:
    """One row per sentence, one colored cell per token with its r value."""
    width = max(len(t) for t in sentences)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * width), 0.7 * len(sentences) + 0.6))
    for row, (tokens, rs) in enumerate(zip(sentences, traces)):
        for col, (tok, r) in enumerate(zip(tokens, rs)):
            ax.add_patch(plt.Rectangle((col, row), 1, 1, color=_CMAP(r)))
            ax.text(col + 0.5, row + 0.35, tok, ha="center", va="center", fontsize=8)
            ax.text(col + 0.5, row + 0.72, f"{r:.2f}", ha="center", va="center", fontsize=7, color="white")
            if is_boundary(r):
                ax.annotate("", xy=(col + 1, row + 0.05), xytext=(col + 1, row + 0.95),
                            arrowprops=dict(arrowstyle="->", color="darkred"))
    ax.set_xlim(0, width)
    ax.set_ylim(len(sentences), 0)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_training_curves(history: Sequence[dict], path) -> None:
    epochs = [h["epoch"] for h in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [h["train_loss"] for h in history], marker="o", ms=3)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_acc.plot(epochs, [h["train_acc"] for h in history], marker="o", ms=3, label="train")
    if any("dev_acc" in h for h in history):
        ax_acc.plot(epochs, [h.get("dev_acc", float("nan")) for h in history], marker="s", ms=3, label="dev")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend(frameon=False)
    for ax in (ax_loss, ax_acc):
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
