"""Hand-written SVG for phase portraits and branch overlays in (s, theta)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

MARGIN = 50
CLASS_COLORS = {"hyperbolic": "#d62728", "elliptic": "#2ca02c", "parabolic": "#1f77b4"}
BRANCH_COLORS = {"unstable": "#d62728", "stable": "#1f77b4"}


def num(x: float) -> str:
    return f"{x:.9g}"


@dataclass
class Canvas:
    """Maps [0, L) x (0, pi) onto a plot rectangle."""

    length: float
    width: int = 900
    height: int = 450
    parts: list[str] = field(default_factory=list)
    legend: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def plot_w(self) -> int:
        return self.width - 2 * MARGIN

    @property
    def plot_h(self) -> int:
        return self.height - 2 * MARGIN

    def x(self, s):
        return MARGIN + np.asarray(s) / self.length * self.plot_w

    def y(self, theta):
        return MARGIN + (1.0 - np.asarray(theta) / math.pi) * self.plot_h

    def axes(self) -> None:
        L = self.length
        p = [f'<g id="axes" stroke="#000" fill="none" stroke-width="1">']
        p.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{self.plot_w}" height="{self.plot_h}"/>')
        p.append("</g>")
        p.append('<g id="ticks" font-family="sans-serif" font-size="12" fill="#000">')
        for frac, lab in ((0.0, "0"), (0.5, "L/2"), (1.0, num(L))):
            xx = num(float(self.x(frac * L)))
            p.append(f'<line x1="{xx}" y1="{MARGIN + self.plot_h}" x2="{xx}" y2="{MARGIN + self.plot_h + 5}" stroke="#000"/>')
            p.append(f'<text x="{xx}" y="{MARGIN + self.plot_h + 18}" text-anchor="middle">{escape(lab)}</text>')
        for th, lab in ((0.0, "0"), (math.pi / 2, "pi/2"), (math.pi, "pi")):
            yy = num(float(self.y(th)))
            p.append(f'<line x1="{MARGIN - 5}" y1="{yy}" x2="{MARGIN}" y2="{yy}" stroke="#000"/>')
            p.append(f'<text x="{MARGIN - 8}" y="{yy}" text-anchor="end" dominant-baseline="middle">{lab}</text>')
        p.append(f'<text x="{MARGIN + self.plot_w / 2}" y="{self.height - 8}" text-anchor="middle">s</text>')
        p.append(f'<text x="12" y="{MARGIN + self.plot_h / 2}" text-anchor="middle">theta</text>')
        p.append("</g>")
        self.parts.extend(p)

    def dots(self, s: np.ndarray, theta: np.ndarray, color: str = "#000", label: str = "iterates") -> None:
        """One path of unit pixels; duplicates collapse so output size stays bounded."""
        if len(s) == 0:
            return
        px = np.floor(self.x(np.mod(s, self.length))).astype(int)
        py = np.floor(self.y(theta)).astype(int)
        uniq = sorted(set(zip(px.tolist(), py.tolist())))
        d = "".join(f"M{a} {b}h1v1h-1z" for a, b in uniq)
        self.parts.append(f'<g class="{escape(label)}"><path d="{d}" fill="{color}" fill-opacity="0.6"/></g>')
        self.legend.append(("square", color, label))

    def markers(self, s, theta, color: str, label: str, r: float = 4.0) -> None:
        items = [f'<circle cx="{num(float(self.x(a % self.length)))}" cy="{num(float(self.y(b)))}" r="{r}" fill="{color}" stroke="#000" stroke-width="0.5"/>' for a, b in zip(s, theta)]
        self.parts.append(f'<g class="{escape(label)}">' + "".join(items) + "</g>")
        if ("circle", color, label) not in self.legend:
            self.legend.append(("circle", color, label))

    def polyline(self, pts: np.ndarray, color: str, label: str) -> None:
        """Lifted polyline, split where it wraps around s = L."""
        if len(pts) < 2:
            return
        s = np.mod(pts[:, 0], self.length)
        breaks = np.where(np.abs(np.diff(s)) > 0.5 * self.length)[0] + 1
        segs = np.split(np.column_stack([s, pts[:, 1]]), breaks)
        lines = []
        for seg in segs:
            if len(seg) < 2:
                continue
            coords = " ".join(f"{num(float(a))},{num(float(b))}" for a, b in zip(self.x(seg[:, 0]), self.y(seg[:, 1])))
            lines.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1"/>')
        self.parts.append(f'<g class="{escape(label)}">' + "".join(lines) + "</g>")
        if ("line", color, label) not in self.legend:
            self.legend.append(("line", color, label))

    def hline(self, theta: float, color: str, label: str, dash: str = "6,4") -> None:
        yy = num(float(self.y(theta)))
        self.parts.append(
            f'<line class="{escape(label)}" x1="{MARGIN}" y1="{yy}" x2="{MARGIN + self.plot_w}" y2="{yy}" stroke="{color}" stroke-dasharray="{dash}"/>'
        )
        if ("dash", color, label) not in self.legend:
            self.legend.append(("dash", color, label))

    def _legend(self) -> str:
        if not self.legend:
            return ""
        x0 = MARGIN + self.plot_w - 190
        out = [f'<g id="legend" font-family="sans-serif" font-size="11">']
        out.append(f'<rect x="{x0}" y="{MARGIN + 5}" width="185" height="{16 * len(self.legend) + 8}" fill="#fff" fill-opacity="0.85" stroke="#888"/>')
        for i, (shape, color, label) in enumerate(self.legend):
            y = MARGIN + 18 + 16 * i
            if shape == "circle":
                out.append(f'<circle cx="{x0 + 12}" cy="{y - 4}" r="4" fill="{color}"/>')
            elif shape == "square":
                out.append(f'<rect x="{x0 + 9}" y="{y - 7}" width="6" height="6" fill="{color}"/>')
            else:
                dash = ' stroke-dasharray="4,2"' if shape == "dash" else ""
                out.append(f'<line x1="{x0 + 4}" y1="{y - 4}" x2="{x0 + 20}" y2="{y - 4}" stroke="{color}"{dash}/>')
            out.append(f'<text x="{x0 + 26}" y="{y}">{escape(label)}</text>')
        out.append("</g>")
        return "".join(out)

    def render(self, title: str = "") -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n'
        )
        t = f'<title>{escape(title)}</title>\n' if title else ""
        bg = f'<rect width="{self.width}" height="{self.height}" fill="#fff"/>\n'
        body = "\n".join(self.parts)
        return head + t + bg + body + "\n" + self._legend() + "\n</svg>\n"
