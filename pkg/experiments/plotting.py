"""
Standalone SVG line chart of AUC over simulated time.
"""
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import List, Sequence, Tuple

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 180, 30, 60
PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f')
TICKS = 5

Curve = Tuple[str, Sequence[Tuple[float, float]]]


def _bounds(curves: Sequence[Curve]):
    xs = [x for _, points in curves for x, _ in points]
    ys = [y for _, points in curves for _, y in points]
    x_max = max(xs) if max(xs) > 0 else 1.0
    y_min, y_max = min(ys), max(ys)
    if y_max - y_min < 1e-9:
        y_min, y_max = y_min - 0.05, y_max + 0.05
    return 0.0, x_max, y_min, y_max


def render_svg(curves: Sequence[Curve], title: str = 'AUC over simulated training time') -> str:
    """
    One polyline per (label, points) curve. Raises ValueError when there is
    nothing to draw or a curve is empty.
    """
    if not curves:
        raise ValueError("Nothing to plot: no curves given")
    for label, points in curves:
        if not points:
            raise ValueError(f"Trace {label!r} has no evaluated rounds")

    x_min, x_max, y_min, y_max = _bounds(curves)
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(x):
        return MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y):
        return MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h

    svg = ET.Element('svg', xmlns='http://www.w3.org/2000/svg', width=str(WIDTH), height=str(HEIGHT),
                     viewBox=f'0 0 {WIDTH} {HEIGHT}')
    ET.SubElement(svg, 'rect', x='0', y='0', width=str(WIDTH), height=str(HEIGHT), fill='white')
    ET.SubElement(svg, 'text', x=str(WIDTH / 2), y='20', attrib={'text-anchor': 'middle'}).text = title

    bottom, right = MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w
    axes = ET.SubElement(svg, 'g', attrib={'class': 'axes', 'stroke': 'black'})
    ET.SubElement(axes, 'line', x1=str(MARGIN_LEFT), y1=str(bottom), x2=str(right), y2=str(bottom))
    ET.SubElement(axes, 'line', x1=str(MARGIN_LEFT), y1=str(MARGIN_TOP), x2=str(MARGIN_LEFT), y2=str(bottom))
    for i in range(TICKS + 1):
        x_value = x_min + (x_max - x_min) * i / TICKS
        y_value = y_min + (y_max - y_min) * i / TICKS
        ET.SubElement(svg, 'text', x=f'{sx(x_value):.2f}', y=str(bottom + 18),
                      attrib={'text-anchor': 'middle', 'font-size': '11'}).text = f'{x_value:.1f}'
        ET.SubElement(svg, 'text', x=str(MARGIN_LEFT - 8), y=f'{sy(y_value) + 4:.2f}',
                      attrib={'text-anchor': 'end', 'font-size': '11'}).text = f'{y_value:.3f}'
    ET.SubElement(svg, 'text', x=str(MARGIN_LEFT + plot_w / 2), y=str(HEIGHT - 15),
                  attrib={'text-anchor': 'middle', 'class': 'x-label'}).text = 'Simulated time (s)'
    ET.SubElement(svg, 'text', x='18', y=str(MARGIN_TOP + plot_h / 2),
                  attrib={'text-anchor': 'middle', 'class': 'y-label',
                          'transform': f'rotate(-90 18 {MARGIN_TOP + plot_h / 2})'}).text = 'AUC'

    for n, (label, points) in enumerate(curves):
        color = PALETTE[n % len(PALETTE)]
        coords = ' '.join(f'{sx(x):.2f},{sy(y):.2f}' for x, y in points)
        ET.SubElement(svg, 'polyline', points=coords, fill='none', stroke=color,
                      attrib={'stroke-width': '2', 'data-label': label})
        legend_y = MARGIN_TOP + 10 + 20 * n
        ET.SubElement(svg, 'line', x1=str(right + 15), y1=str(legend_y), x2=str(right + 40), y2=str(legend_y),
                      stroke=color, attrib={'stroke-width': '2'})
        ET.SubElement(svg, 'text', x=str(right + 45), y=str(legend_y + 4),
                      attrib={'font-size': '12'}).text = label

    return ET.tostring(svg, encoding='unicode')


def write_svg(path, curves: List[Curve], title: str = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = render_svg(curves) if title is None else render_svg(curves, title)
    path.write_text('<?xml version="1.0" encoding="UTF-8"?>\n' + body + '\n', encoding='utf-8')
    return path
