"""
Convergence plots

Fidelity against iteration, drawn from a run's CSV summary. With several
trials each point is the trial mean and the error bar the spread across
trials; with one trial the bar is the spread of the repeated measurements.
"""

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from . import G, Line, Polyline, Rect, Svg, Text, Title, svg_document

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=20, top=36, bottom=48)


def read_summary(source: Union[str, Path]) -> List[Dict[str, float]]:
    """Rows of a summary CSV as floats; ``#`` comment lines are skipped."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO("\n".join(lines)))]


def convergence_series(rows: List[Dict[str, float]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iteration, mean fidelity and error bar per iteration."""
    by_iter: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
    for row in rows:
        if np.isfinite(row["fidelity"]):
            by_iter[int(row["iteration"])].append((row["fidelity"], row.get("fidelity_std", 0.0)))
    iters = np.array(sorted(by_iter), dtype=int)
    mean = np.array([np.mean([f for f, _ in by_iter[q]]) for q in iters])
    err = np.array([
        np.std([f for f, _ in by_iter[q]], ddof=1) if len(by_iter[q]) > 1 else by_iter[q][0][1]
        for q in iters
    ])
    return iters, mean, err


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def convergence_plot(source: Union[str, Path], title: str = "Convergence") -> str:
    """SVG document plotting fidelity vs iteration with error bars."""
    iters, mean, err = convergence_series(read_summary(source))
    if iters.size == 0:
        raise ValueError("summary has no finite fidelities to plot")

    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    q_max = max(int(iters.max()), 1)
    lo = float(np.min(mean - err))
    hi = float(np.max(mean + err))
    if hi - lo < 1e-3:
        lo, hi = lo - 0.01, hi + 0.01

    def sx(q):
        return x0 + (x1 - x0) * q / q_max

    def sy(f):
        return y0 - (y0 - y1) * (f - lo) / (hi - lo)

    axes = G(
        Line(x1=x0, y1=y0, x2=x1, y2=y0, stroke="black"),
        Line(x1=x0, y1=y0, x2=x0, y2=y1, stroke="black"),
        *[G(Line(x1=x0 - 4, y1=sy(f), x2=x0, y2=sy(f), stroke="black"),
            Text(f"{f:.3f}", x=x0 - 6, y=sy(f) + 4, text_anchor="end", font_size=11))
          for f in _ticks(lo, hi)],
        *[G(Line(x1=sx(q), y1=y0, x2=sx(q), y2=y0 + 4, stroke="black"),
            Text(f"{q:.0f}", x=sx(q), y=y0 + 18, text_anchor="middle", font_size=11))
          for q in _ticks(0, q_max)],
        Text("iteration", x=(x0 + x1) / 2, y=HEIGHT - 10, text_anchor="middle", font_size=12),
        Text("control quality", x=16, y=(y0 + y1) / 2, text_anchor="middle", font_size=12,
             transform=f"rotate(-90 16 {(y0 + y1) / 2:.2f})"),
    )
    bars = G(*[
        Line(x1=sx(q), y1=sy(m - e), x2=sx(q), y2=sy(m + e), stroke="#1f77b4", stroke_width=1)
        for q, m, e in zip(iters, mean, err) if e > 0
    ])
    curve = Polyline(
        points=" ".join(f"{sx(q):.2f},{sy(m):.2f}" for q, m in zip(iters, mean)),
        fill="none", stroke="#1f77b4", stroke_width=1.5,
    )
    return svg_document(Svg(
        Title(title),
        Rect(x=0, y=0, width=WIDTH, height=HEIGHT, fill="white"),
        Text(title, x=WIDTH / 2, y=20, text_anchor="middle", font_size=14),
        axes, bars, curve,
        xmlns="http://www.w3.org/2000/svg", width=WIDTH, height=HEIGHT,
        viewBox=f"0 0 {WIDTH} {HEIGHT}",
    ))
