"""Minimal self-contained SVG line plots.

Deliberately dependency-free: reports and sweep curves are written as
small hand-assembled SVG files (axes, ticks, one polyline per series,
legend) so artifacts stay diffable and reproducible byte for byte.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")

_MARGIN_LEFT = 64
_MARGIN_RIGHT = 64
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 48


def _expand(lo: float, hi: float) -> tuple[float, float]:
    if not (hi > lo):
        pad = max(abs(lo) * 0.1, 0.5)
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(value: float) -> str:
    return f"{value:.4g}"


def write_line_plot(
    path,
    series,
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    y2_series=(),
    y2label: str = "",
    x_tick_labels=None,
    width: int = 720,
    height: int = 440,
):
    """Write an SVG line chart.

    ``series`` is a sequence of ``(label, xs, ys)`` drawn against the
    left axis; ``y2_series`` uses an independent right-hand axis (for
    mixing quantities of different units).  ``x_tick_labels`` replaces
    numeric x ticks with one label per integer position (categorical
    axes).  Returns ``path``.
    """
    series = list(series)
    y2_series = list(y2_series)
    if not series and not y2_series:
        raise ValueError("nothing to plot")
    for label, xs, ys in series + y2_series:
        if len(xs) != len(ys):
            raise ValueError(f"series {label!r}: {len(xs)} x values vs {len(ys)} y values")
        if len(xs) == 0:
            raise ValueError(f"series {label!r} is empty")

    all_x = [float(x) for _, xs, _ in series + y2_series for x in xs]
    x_lo, x_hi = _expand(min(all_x), max(all_x))
    y_lo, y_hi = 0.0, 1.0
    if series:
        all_y = [float(y) for _, _, ys in series for y in ys]
        y_lo, y_hi = _expand(min(all_y), max(all_y))
    y2_lo, y2_hi = 0.0, 1.0
    if y2_series:
        all_y2 = [float(y) for _, _, ys in y2_series for y in ys]
        y2_lo, y2_hi = _expand(min(all_y2), max(all_y2))

    plot_w = width - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = height - _MARGIN_TOP - _MARGIN_BOTTOM

    def sx(x: float) -> float:
        return _MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    def sy2(y: float) -> float:
        return _MARGIN_TOP + (1.0 - (y - y2_lo) / (y2_hi - y2_lo)) * plot_h

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        lines.append(
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
            f'font-size="14">{escape(title)}</text>'
        )

    axis_bottom = _MARGIN_TOP + plot_h
    axis_right = _MARGIN_LEFT + plot_w
    lines.append(
        f'<line x1="{_MARGIN_LEFT}" y1="{axis_bottom}" x2="{axis_right}" '
        f'y2="{axis_bottom}" stroke="black"/>'
    )
    lines.append(
        f'<line x1="{_MARGIN_LEFT}" y1="{_MARGIN_TOP}" x2="{_MARGIN_LEFT}" '
        f'y2="{axis_bottom}" stroke="black"/>'
    )
    if y2_series:
        lines.append(
            f'<line x1="{axis_right}" y1="{_MARGIN_TOP}" x2="{axis_right}" '
            f'y2="{axis_bottom}" stroke="black"/>'
        )

    # x ticks: numeric, or one per categorical position
    if x_tick_labels is not None:
        positions = list(range(len(x_tick_labels)))
        tick_pairs = [(float(p), str(lbl)) for p, lbl in zip(positions, x_tick_labels)]
    else:
        tick_pairs = [(t, _fmt(t)) for t in _ticks(x_lo, x_hi)]
    for tick, label in tick_pairs:
        px = sx(tick)
        lines.append(
            f'<line x1="{px:.1f}" y1="{axis_bottom}" x2="{px:.1f}" '
            f'y2="{axis_bottom + 5}" stroke="black"/>'
        )
        lines.append(
            f'<text x="{px:.1f}" y="{axis_bottom + 18}" '
            f'text-anchor="middle">{escape(label)}</text>'
        )
    if series:
        for tick in _ticks(y_lo, y_hi):
            py = sy(tick)
            lines.append(
                f'<line x1="{_MARGIN_LEFT - 5}" y1="{py:.1f}" x2="{_MARGIN_LEFT}" '
                f'y2="{py:.1f}" stroke="black"/>'
            )
            lines.append(
                f'<text x="{_MARGIN_LEFT - 8}" y="{py + 4:.1f}" '
                f'text-anchor="end">{escape(_fmt(tick))}</text>'
            )
    if y2_series:
        for tick in _ticks(y2_lo, y2_hi):
            py = sy2(tick)
            lines.append(
                f'<line x1="{axis_right}" y1="{py:.1f}" x2="{axis_right + 5}" '
                f'y2="{py:.1f}" stroke="black"/>'
            )
            lines.append(
                f'<text x="{axis_right + 8}" y="{py + 4:.1f}" '
                f'text-anchor="start">{escape(_fmt(tick))}</text>'
            )

    if xlabel:
        lines.append(
            f'<text x="{_MARGIN_LEFT + plot_w / 2:.1f}" y="{height - 10}" '
            f'text-anchor="middle">{escape(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = 16, _MARGIN_TOP + plot_h / 2
        lines.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{escape(ylabel)}</text>'
        )
    if y2label and y2_series:
        cx, cy = width - 14, _MARGIN_TOP + plot_h / 2
        lines.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'transform="rotate(90 {cx} {cy:.1f})">{escape(y2label)}</text>'
        )

    legend_y = _MARGIN_TOP + 6
    color_index = 0
    for label, xs, ys in series:
        color = PALETTE[color_index % len(PALETTE)]
        points = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys))
        lines.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        lines.append(
            f'<line x1="{axis_right - 150}" y1="{legend_y}" x2="{axis_right - 126}" '
            f'y2="{legend_y}" stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{axis_right - 120}" y="{legend_y + 4}">{escape(str(label))}</text>'
        )
        legend_y += 16
        color_index += 1
    for label, xs, ys in y2_series:
        color = PALETTE[color_index % len(PALETTE)]
        points = " ".join(f"{sx(float(x)):.2f},{sy2(float(y)):.2f}" for x, y in zip(xs, ys))
        lines.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.6" stroke-dasharray="5,3"/>'
        )
        lines.append(
            f'<line x1="{axis_right - 150}" y1="{legend_y}" x2="{axis_right - 126}" '
            f'y2="{legend_y}" stroke="{color}" stroke-width="2" stroke-dasharray="5,3"/>'
        )
        lines.append(
            f'<text x="{axis_right - 120}" y="{legend_y + 4}">{escape(str(label))}</text>'
        )
        legend_y += 16
        color_index += 1

    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
