"""CSV-to-figure command line tool.

Kinds:
  heatmap   columns (x, y, value): one filled grid, value color-coded
  line      columns (x, curve1[, curve2, ...]): one curve per value column
  multiline columns (group, x, y): one curve per distinct group label

No numeric transformation is applied beyond an optional log y axis.
Exit codes: 0 success, 2 schema/usage error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_IO = 4

KIND_COLUMNS = {
    "heatmap": ("x", "y", "value"),
    "line": ("x", "curve"),
    "multiline": ("group", "x", "y"),
}


class SchemaError(ValueError):
    pass


def read_csv(path):
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise SchemaError(f"{path}: empty file, no header row")
    columns = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(columns):
            raise SchemaError(f"{path}: line {i} has {len(row)} cells, header has {len(columns)}")
    return columns, rows


def check_width(path, kind, columns):
    need = KIND_COLUMNS[kind]
    if len(columns) < len(need):
        missing = need[len(columns):]
        raise SchemaError(
            f"{path}: {kind} needs columns ({', '.join(need)}); "
            f"missing column: {', '.join(missing)}"
        )


def floats(rows, idx, path, name):
    out = []
    for row in rows:
        cell = row[idx]
        try:
            out.append(float(cell))
        except ValueError:
            raise SchemaError(f"{path}: column {name!r} has non-numeric cell {cell!r}")
    return np.array(out)


def render_heatmap(ax, columns, rows, path):
    x = floats(rows, 0, path, columns[0])
    y = floats(rows, 1, path, columns[1])
    v = floats(rows, 2, path, columns[2])
    xs, ys = np.unique(x), np.unique(y)
    grid = np.full((ys.size, xs.size), np.nan)
    xi = np.searchsorted(xs, x)
    yi = np.searchsorted(ys, y)
    grid[yi, xi] = v
    mesh = ax.pcolormesh(xs, ys, grid, shading="nearest", cmap="viridis")
    ax.figure.colorbar(mesh, ax=ax, label=columns[2])
    ax.set_xlabel(columns[0])
    ax.set_ylabel(columns[1])


def render_line(ax, columns, rows, path):
    x = floats(rows, 0, path, columns[0])
    for j in range(1, len(columns)):
        y = floats(rows, j, path, columns[j])
        ax.plot(x, y, marker=".", label=columns[j])
    ax.set_xlabel(columns[0])
    if len(columns) > 2:
        ax.legend()
    else:
        ax.set_ylabel(columns[1])


def render_multiline(ax, columns, rows, path):
    groups = []
    for row in rows:
        if row[0] not in groups:
            groups.append(row[0])
    x_all = floats(rows, 1, path, columns[1])
    y_all = floats(rows, 2, path, columns[2])
    labels = np.array([row[0] for row in rows])
    for g in groups:
        mask = labels == g
        ax.plot(x_all[mask], y_all[mask], marker=".", label=g)
    ax.set_xlabel(columns[1])
    ax.set_ylabel(columns[2])
    ax.legend(title=columns[0])


RENDERERS = {
    "heatmap": render_heatmap,
    "line": render_line,
    "multiline": render_multiline,
}


def render(kind, in_path, out_path, logy=False, vline=None, dpi=200, title=None):
    columns, rows = read_csv(in_path)
    check_width(in_path, kind, columns)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    try:
        RENDERERS[kind](ax, columns, rows, in_path)
        if logy:
            ax.set_yscale("log")
        if vline is not None:
            ax.axvline(vline, linestyle=":", color="black", linewidth=1)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(out_path, dpi=dpi, metadata={"Date": None})
    finally:
        plt.close(fig)


def build_parser():
    p = argparse.ArgumentParser(
        prog="plot", description="Render experiment CSV artifacts to figure files"
    )
    p.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    p.add_argument("--in", dest="in_path", required=True, help="input CSV path")
    p.add_argument("--out", required=True, help="output image path (.png or .svg)")
    p.add_argument("--logy", action="store_true", help="log scale on the y axis")
    p.add_argument("--vline", type=float, default=None, help="dotted vertical marker")
    p.add_argument("--dpi", type=int, default=200)
    p.add_argument("--title", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        render(
            args.kind, args.in_path, args.out,
            logy=args.logy, vline=args.vline, dpi=args.dpi, title=args.title,
        )
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
