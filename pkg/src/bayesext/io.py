"""CSV, JSON-manifest and SVG writers for experiment outputs."""

from __future__ import annotations

import csv
import json
import math
import subprocess
from pathlib import Path
from typing import Sequence

from . import __version__


def format_number(x) -> str:
    """Shortest round-tripping text; scientific when ``|x| >= 1e6`` or ``0 < |x| <= 1e-4``."""
    if isinstance(x, (bool, str)) or x is None:
        return str(x)
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    ax = abs(x)
    if ax >= 1e6 or 0 < ax <= 1e-4:
        return f"{x:.16e}" if float(f"{x:.15e}") != x else f"{x:.15e}"
    return repr(x)


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) for v in row])
    return path


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path) -> tuple[list, list]:
    """Header and rows, with numeric cells parsed back to int/float."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [[_parse(c) for c in row] for row in r]


def tool_version() -> str:
    """Package version plus ``git describe`` output when run from a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path, subcommand: str, config: dict, seed, wall_time: float, outputs=()) -> Path:
    path = Path(path)
    doc = {"subcommand": subcommand, "config": config, "seed": seed,
           "version": tool_version(), "wall_time_seconds": wall_time,
           "outputs": [str(o) for o in outputs]}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    return str(o)


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def write_svg_lines(path, x, series: dict, xlabel: str = "", ylabel: str = "",
                    width: int = 480, height: int = 320, log_x: bool = False) -> Path:
    """Minimal SVG 1.1 line chart: one polyline per entry of ``series``."""
    margin = 50
    xs = [math.log10(v) if log_x else float(v) for v in x]
    ys = [float(v) for vals in series.values() for v in vals]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def py(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="12" y="{height / 2}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 12 {height / 2})">{ylabel}</text>',
             f'<text x="{margin - 4}" y="{height - margin}" text-anchor="end" font-size="10">{y0:.3g}</text>',
             f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" font-size="10">{y1:.3g}</text>']
    for v, label in zip(xs, x):
        parts.append(f'<text x="{px(v):.1f}" y="{height - margin + 14}" text-anchor="middle" '
                     f'font-size="10">{label:g}</text>')
    for k, (name, vals) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(float(b)):.2f}" for a, b in zip(xs, vals))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - margin + 4 - 120}" y="{margin + 14 * k}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
