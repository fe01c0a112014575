"""PlotCanvas: a recorded draw buffer in world coordinates, saved as SVG.

Every drawing call is appended to the buffer first; save() replays the buffer
onto a matplotlib figure (Agg backend) with one SVG group id per primitive, so
tests can inspect either the buffer or the emitted document.
"""
from __future__ import annotations
import logging
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.lines import Line2D
from matplotlib.patches import Circle, Rectangle

log = logging.getLogger(__name__)


class PlotCanvas:
    """Headless canvas over the rectangle bounds = (xmin, ymin, xmax, ymax)."""

    def __init__(self, title: str, bounds: tuple[float, float, float, float], size: float = 6.0):
        self.title = title
        self.bounds = bounds
        self.size = size
        self._buffer: list[dict] = []
        self._legend: dict[str, dict] = {}

    # ── Drawing primitives ──

    def rect(self, x: float, y: float, w: float, h: float, color: str, gid: str,
             filled: bool = False) -> None:
        self._buffer.append({'type': 'rect', 'x': x, 'y': y, 'w': w, 'h': h,
                             'color': color, 'filled': filled, 'gid': gid})

    def circle(self, x: float, y: float, radius: float, color: str, gid: str,
               filled: bool = True, dashed: bool = False) -> None:
        self._buffer.append({'type': 'circle', 'x': x, 'y': y, 'radius': radius, 'color': color,
                             'filled': filled, 'dashed': dashed, 'gid': gid})

    def polyline(self, xs: list[float], ys: list[float], color: str, gid: str) -> None:
        self._buffer.append({'type': 'polyline', 'xs': list(xs), 'ys': list(ys),
                             'color': color, 'gid': gid})

    def marker(self, x: float, y: float, symbol: str, color: str, gid: str) -> None:
        self._buffer.append({'type': 'marker', 'x': x, 'y': y, 'symbol': symbol,
                             'color': color, 'gid': gid})

    def legend_entry(self, label: str, color: str, symbol: str | None = None) -> None:
        """Legend items are independent of what is drawn."""
        self._legend[label] = {'color': color, 'symbol': symbol}

    def clear(self) -> None:
        self._buffer.clear()

    @property
    def buffer(self) -> list[dict]:
        return list(self._buffer)

    def ops(self, kind: str) -> list[dict]:
        return [op for op in self._buffer if op['type'] == kind]

    # ── Output ──

    def _draw(self, ax) -> None:
        for op in self._buffer:
            kind = op['type']
            if kind == 'rect':
                artist = ax.add_patch(Rectangle((op['x'], op['y']), op['w'], op['h'],
                                                fill=op['filled'], edgecolor=op['color'],
                                                facecolor=op['color'] if op['filled'] else 'none'))
            elif kind == 'circle':
                artist = ax.add_patch(Circle((op['x'], op['y']), op['radius'],
                                             fill=op['filled'], color=op['color'],
                                             linestyle='--' if op['dashed'] else '-',
                                             alpha=0.6 if op['filled'] else 1.0))
            elif kind == 'polyline':
                (artist,) = ax.plot(op['xs'], op['ys'], color=op['color'], linewidth=1.5)
            elif kind == 'marker':
                (artist,) = ax.plot([op['x']], [op['y']], marker=op['symbol'], color=op['color'],
                                    markersize=10, linestyle='none')
            else:
                raise ValueError(f"unknown draw op {kind!r}")
            artist.set_gid(op['gid'])

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(self.size, self.size))
        try:
            xmin, ymin, xmax, ymax = self.bounds
            ax.set_xlim(xmin, xmax)
            ax.set_ylim(ymin, ymax)
            ax.set_aspect('equal')
            ax.set_title(self.title)
            self._draw(ax)
            if self._legend:
                handles = [Line2D([], [], color=v['color'], marker=v['symbol'] or '',
                                  linestyle='none' if v['symbol'] else '-', label=label)
                           for label, v in self._legend.items()]
                ax.legend(handles=handles, loc='upper left', fontsize='small')
            fig.savefig(path, format='svg')
        finally:
            plt.close(fig)
        log.debug("saved %d draw ops to %s", len(self._buffer), path)
        return path

    def __repr__(self) -> str:
        return f"PlotCanvas('{self.title}', bounds={self.bounds}, ops={len(self._buffer)})"
