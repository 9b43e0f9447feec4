"""Minimal grouped-bar SVG rendering.

Hand-rolled rather than pulled from a plotting library so that rerunning
a pipeline produces byte-identical chart files (no embedded ids or
timestamps) and the package carries no plotting dependency.
"""

from __future__ import annotations

from typing import Mapping, Sequence

PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
           "#76b7b2", "#edc948", "#9c755f")


def grouped_bar_svg(groups: Sequence[str],
                    series: Mapping[str, Sequence[float]],
                    title: str = "",
                    y_label: str = "",
                    footnote: str = "",
                    width: int = 760, height: int = 420) -> str:
    """Render one bar per (group, series) pair; values are in [0, 1]."""
    margin_l, margin_r, margin_t, margin_b = 56, 16, 48, 64
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    n_groups = max(1, len(groups))
    n_series = max(1, len(series))
    group_w = plot_w / n_groups
    bar_w = group_w * 0.8 / n_series

    def x_of(g: int, s: int) -> float:
        return margin_l + g * group_w + group_w * 0.1 + s * bar_w

    def y_of(value: float) -> float:
        return margin_t + plot_h * (1.0 - max(0.0, min(1.0, value)))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="15" font-weight="bold">{_esc(title)}</text>')

    # gridlines and y ticks
    for tick in range(0, 11, 2):
        value = tick / 10.0
        y = y_of(value)
        parts.append(f'<line x1="{margin_l}" y1="{y:.1f}" x2="{width - margin_r}" '
                     f'y2="{y:.1f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{margin_l - 6}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{value:.1f}</text>')
    if y_label:
        y_mid = margin_t + plot_h / 2
        parts.append(f'<text x="16" y="{y_mid:.1f}" font-size="12" text-anchor="middle" '
                     f'transform="rotate(-90 16 {y_mid:.1f})">{_esc(y_label)}</text>')

    # bars
    for s_idx, (name, values) in enumerate(series.items()):
        color = PALETTE[s_idx % len(PALETTE)]
        for g_idx, value in enumerate(values):
            if g_idx >= n_groups:
                break
            x = x_of(g_idx, s_idx)
            y = y_of(value)
            h = margin_t + plot_h - y
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                         f'height="{h:.1f}" fill="{color}"><title>{_esc(name)} '
                         f'{value:.3f}</title></rect>')

    # group labels
    for g_idx, label in enumerate(groups):
        x = margin_l + g_idx * group_w + group_w / 2
        y = margin_t + plot_h + 16
        parts.append(f'<text x="{x:.1f}" y="{y}" text-anchor="middle" '
                     f'font-size="12">{_esc(label)}</text>')

    # legend
    lx = margin_l
    ly = height - margin_b + 34
    for s_idx, name in enumerate(series):
        color = PALETTE[s_idx % len(PALETTE)]
        parts.append(f'<rect x="{lx}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="{ly}" font-size="11">{_esc(name)}</text>')
        lx += 14 + 7 * len(name) + 18

    if footnote:
        parts.append(f'<text x="{margin_l}" y="{height - 8}" font-size="10" '
                     f'fill="#555555">{_esc(footnote)}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))
