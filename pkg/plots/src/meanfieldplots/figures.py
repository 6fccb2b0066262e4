"""Render figures from the simulator's CSV outputs.

Four figure kinds, one per CSV schema:

    trajectories  t,agent_0,...,agent_{N-1},mean
    loss-hist     defaults,probability,stderr
    convergence   N,p_hat,log_rate,asymptote,gap
    expansion     delta,v2_quad,v2_hat,abs_error

Rendering never touches the input files and contains no randomness, so
a given spec always produces the same figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("trajectories", "loss-hist", "convergence", "expansion")

_SCHEMAS = {
    "loss-hist": ["defaults", "probability", "stderr"],
    "convergence": ["N", "p_hat", "log_rate", "asymptote", "gap"],
    "expansion": ["delta", "v2_quad", "v2_hat", "abs_error"],
}

# Subgroup shading: light grey for the first group, dark grey, then black;
# the mean path is drawn bold red on top.
_GROUP_COLORS = ("#b0b0b0", "#606060", "#000000")
MEAN_COLOR = "#d62728"


class SchemaError(ValueError):
    """The input CSV does not match the schema of the requested kind."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: kind, input CSV, output image, and styling knobs."""

    kind: str
    input_path: str | Path
    output_path: str | Path
    eta: float = -0.7
    group_sizes: tuple[int, ...] | None = None
    dpi: int = 150


def _read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    return rows[0], rows[1:]


def _require_columns(kind: str, header: list[str], path) -> None:
    expected = _SCHEMAS[kind]
    if header != expected:
        raise SchemaError(
            f"{path}: expected columns {','.join(expected)} for kind "
            f"{kind!r}, found {','.join(header)}"
        )


def _as_floats(rows: list[list[str]], path) -> np.ndarray:
    try:
        return np.array([[float(cell) for cell in row] for row in rows])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric cell: {exc}") from exc


def _agent_colors(n_agents: int, group_sizes: tuple[int, ...] | None):
    if group_sizes and sum(group_sizes) == n_agents:
        colors = []
        for g, size in enumerate(group_sizes):
            colors.extend([_GROUP_COLORS[min(g, len(_GROUP_COLORS) - 1)]] * size)
        return colors
    return [_GROUP_COLORS[1]] * n_agents


def _trajectories_figure(spec: FigureSpec):
    header, rows = _read_csv(spec.input_path)
    if (
        len(header) < 3
        or header[0] != "t"
        or header[-1] != "mean"
        or header[1:-1] != [f"agent_{i}" for i in range(len(header) - 2)]
    ):
        raise SchemaError(
            f"{spec.input_path}: expected columns t,agent_0,...,agent_N-1,mean "
            f"for kind 'trajectories', found {','.join(header[:4])}..."
        )
    data = _as_floats(rows, spec.input_path)
    t = data[:, 0]
    n_agents = len(header) - 2
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, color in enumerate(_agent_colors(n_agents, spec.group_sizes)):
        ax.plot(t, data[:, 1 + i], color=color, linewidth=0.8)
    ax.plot(t, data[:, -1], color=MEAN_COLOR, linewidth=2.0, label="mean")
    level = ax.axhline(spec.eta, color="black", linestyle="-", linewidth=1.2)
    level.set_gid("default-level")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.set_title(f"trajectories (default level {spec.eta:g})")
    ax.legend(loc="upper right")
    return fig


def _loss_hist_figure(spec: FigureSpec):
    header, rows = _read_csv(spec.input_path)
    _require_columns("loss-hist", header, spec.input_path)
    data = _as_floats(rows, spec.input_path)
    defaults, probability, stderr = data[:, 0], data[:, 1], data[:, 2]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.bar(defaults, probability, yerr=stderr, color="#606060", capsize=2)
    tail = probability[-1]
    ax.set_xlabel("number of defaulted agents")
    ax.set_ylabel("probability")
    ax.set_title(f"loss distribution (tail default probability {tail:.3f})")
    ax.set_xticks(defaults)
    return fig


def _convergence_figure(spec: FigureSpec):
    header, rows = _read_csv(spec.input_path)
    _require_columns("convergence", header, spec.input_path)
    data = _as_floats(rows, spec.input_path)
    n, log_rate, asymptote = data[:, 0], data[:, 2], data[:, 3]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.plot(n, log_rate, "o-", color="#1f77b4", label="-(1/N) log p_hat")
    ax.axhline(asymptote[0], color=MEAN_COLOR, linestyle="--",
               label=f"asymptote {asymptote[0]:.4f}")
    ax.set_xlabel("N")
    ax.set_ylabel("decay rate")
    ax.set_title("convergence of the empirical decay rate")
    ax.legend()
    return fig


def _expansion_figure(spec: FigureSpec):
    header, rows = _read_csv(spec.input_path)
    _require_columns("expansion", header, spec.input_path)
    data = _as_floats(rows, spec.input_path)
    order = np.argsort(data[:, 0])
    delta, quad, hat = data[order, 0], data[order, 1], data[order, 2]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.plot(delta, quad, "o-", color="#1f77b4", label="quadrature")
    ax.plot(delta, hat, "s--", color=MEAN_COLOR, label="expansion")
    ax.set_xlabel("heterogeneity scale")
    ax.set_ylabel("V_T^2")
    ax.set_title("quadrature vs second-order expansion")
    ax.legend()
    return fig


_BUILDERS = {
    "trajectories": _trajectories_figure,
    "loss-hist": _loss_hist_figure,
    "convergence": _convergence_figure,
    "expansion": _expansion_figure,
}


def build_figure(spec: FigureSpec):
    """Parse the input CSV and return the assembled matplotlib figure."""
    if spec.kind not in _BUILDERS:
        raise SchemaError(f"unknown figure kind {spec.kind!r}; expected one of {KINDS}")
    return _BUILDERS[spec.kind](spec)


def render(spec: FigureSpec) -> Path:
    """Render the figure to spec.output_path and return that path."""
    fig = build_figure(spec)
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, dpi=spec.dpi)
    finally:
        plt.close(fig)
    return out
