"""Contour extraction and static HTML/SVG/CSV reporting.

Response surfaces are drawn as iso-score contours in (log axis, log contrast)
space with the human threshold curve overlaid in red; contrast-matching
results are drawn as matched-contrast lines (metric dashed, human solid red).
The index page carries a metrics-by-tests summary table with per-column
quartile coloring. Everything is deterministic: stable ordering, fixed float
formatting, and no timestamps when `reproducible` is set.
"""
from __future__ import annotations

import html
import json
import os
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySurface
from .evaluation import ResponseSurface

DEFAULT_N_LEVELS = 8

# colors for contour levels, low score to high score
_LEVEL_COLORS = (
    "#3b4cc0", "#5977e3", "#7b9ff9", "#9ebeff",
    "#c0d4f5", "#f2cab5", "#ee8468", "#b40426",
)
_OVERLAY_COLOR = "#d62728"


@dataclass(frozen=True)
class ContourSet:
    """Iso-level polylines of a response surface in log-log coordinates."""

    levels: Tuple[float, ...]
    lines: Tuple[Tuple[float, np.ndarray], ...]  # (level, (N,2) log10 coords)
    overlay_source: Optional[str] = None

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        if lv.size and np.any(np.diff(lv) < 0):
            raise ValueError("levels must be sorted ascending")
        for level, line in self.lines:
            if line.ndim != 2 or line.shape[1] != 2 or line.shape[0] < 2:
                raise ValueError("polylines must be (N>=2, 2) arrays")


def default_levels(scores: np.ndarray, n: int = DEFAULT_N_LEVELS) -> np.ndarray:
    """n levels evenly spaced strictly inside the observed score range."""
    finite = scores[np.isfinite(scores)]
    if finite.size == 0:
        raise EmptySurface("no finite scores")
    lo, hi = float(finite.min()), float(finite.max())
    return np.linspace(lo, hi, n + 2)[1:-1]


# ---------------------------------------------------------------------------
# marching squares


def _edge_point(level, xa, ya, za, xb, yb, zb):
    # canonical orientation (low corner index first) so the two cells sharing
    # an edge compute bitwise-identical crossing points
    t = (level - za) / (zb - za)
    return (xa + t * (xb - xa), ya + t * (yb - ya))


def _cell_segments(level, x0, x1, y0, y1, z00, z10, z11, z01):
    """Marching-squares segments for one cell; corners z00=(x0,y0) etc."""
    idx = (
        (1 if z00 >= level else 0)
        | (2 if z10 >= level else 0)
        | (4 if z11 >= level else 0)
        | (8 if z01 >= level else 0)
    )
    if idx in (0, 15):
        return []

    def S():
        return _edge_point(level, x0, y0, z00, x1, y0, z10)

    def E():
        return _edge_point(level, x1, y0, z10, x1, y1, z11)

    def N():
        return _edge_point(level, x0, y1, z01, x1, y1, z11)

    def W():
        return _edge_point(level, x0, y0, z00, x0, y1, z01)

    table = {
        1: [(W, S)],
        2: [(S, E)],
        3: [(W, E)],
        4: [(E, N)],
        6: [(S, N)],
        7: [(W, N)],
        8: [(N, W)],
        9: [(S, N)],
        11: [(E, N)],
        12: [(W, E)],
        13: [(S, E)],
        14: [(W, S)],
    }
    if idx in (5, 10):
        center_above = (z00 + z10 + z11 + z01) / 4.0 >= level
        if idx == 5:  # z00 and z11 above
            pairs = [(W, N), (S, E)] if center_above else [(W, S), (E, N)]
        else:  # z10 and z01 above
            pairs = [(W, S), (E, N)] if center_above else [(W, N), (S, E)]
    else:
        pairs = table[idx]
    out = []
    for fa, fb in pairs:
        pa, pb = fa(), fb()
        if pa != pb:
            out.append((pa, pb))
    return out


def _chain_segments(segments) -> List[np.ndarray]:
    """Join shared endpoints into boundary-terminated or closed polylines."""
    adj = defaultdict(list)
    for si, (pa, pb) in enumerate(segments):
        adj[pa].append(si)
        adj[pb].append(si)
    used = [False] * len(segments)

    def walk(start_pt, start_seg):
        used[start_seg] = True
        pa, pb = segments[start_seg]
        nxt = pb if start_pt == pa else pa
        pts = [start_pt, nxt]
        while True:
            cand = [s for s in adj[pts[-1]] if not used[s]]
            if not cand:
                return pts
            s = cand[0]
            used[s] = True
            pa, pb = segments[s]
            pts.append(pb if pts[-1] == pa else pa)

    polylines = []
    # open chains first, from degree-1 endpoints
    for pt, segs in sorted(adj.items()):
        if len(segs) == 1 and not used[segs[0]]:
            polylines.append(walk(pt, segs[0]))
    # whatever remains is closed
    for si in range(len(segments)):
        if not used[si]:
            polylines.append(walk(segments[si][0], si))
    return [np.array(p, dtype=np.float64) for p in polylines]


def extract_contours(
    surface: ResponseSurface,
    levels: Optional[Sequence[float]] = None,
    overlay_source: Optional[str] = None,
) -> ContourSet:
    """Marching squares over the surface's (log axis, log contrast) grid.

    Cells touching a non-finite score are skipped. Raises EmptySurface when
    no fully finite 2x2 cell exists.
    """
    z = np.asarray(surface.scores, dtype=np.float64)
    if levels is None:
        levels = default_levels(z)
    levels = np.sort(np.asarray(levels, dtype=np.float64))
    lx = np.log10(surface.axis_values)
    ly = np.log10(surface.contrast_values)
    finite = np.isfinite(z)
    cell_ok = finite[:-1, :-1] & finite[1:, :-1] & finite[1:, 1:] & finite[:-1, 1:]
    if z.shape[0] < 2 or z.shape[1] < 2 or not np.any(cell_ok):
        raise EmptySurface(
            f"surface {surface.test_id}/{surface.metric} has no scored 2x2 cell"
        )
    lines: List[Tuple[float, np.ndarray]] = []
    for level in levels:
        segments = []
        for i in range(z.shape[0] - 1):
            for j in range(z.shape[1] - 1):
                if not cell_ok[i, j]:
                    continue
                segments.extend(
                    _cell_segments(
                        level,
                        lx[i], lx[i + 1], ly[j], ly[j + 1],
                        z[i, j], z[i + 1, j], z[i + 1, j + 1], z[i, j + 1],
                    )
                )
        for poly in _chain_segments(segments):
            lines.append((float(level), poly))
    return ContourSet(
        levels=tuple(float(v) for v in levels),
        lines=tuple(lines),
        overlay_source=overlay_source,
    )


# ---------------------------------------------------------------------------
# CSV export (schema: axis_value,contrast,score)


def write_surface_csv(surface: ResponseSurface, path) -> None:
    rows = ["axis_value,contrast,score"]
    for i, a in enumerate(surface.axis_values):
        for j, c in enumerate(surface.contrast_values):
            rows.append(f"{float(a)!r},{float(c)!r},{float(surface.scores[i, j])!r}")
    Path(path).write_text("\n".join(rows) + "\n")


def read_surface_csv(path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of write_surface_csv: (axis_values, contrast_values, scores)."""
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != "axis_value,contrast,score":
        raise ValueError(f"unexpected CSV header {lines[0]!r}")
    a_vals: List[float] = []
    triples = []
    for ln in lines[1:]:
        a, c, s = (float(tok) for tok in ln.split(","))
        triples.append((a, c, s))
        if not a_vals or a != a_vals[-1]:
            a_vals.append(a)
    n_a = len(a_vals)
    if n_a == 0 or len(triples) % n_a:
        raise ValueError("CSV rows do not form a rectangular grid")
    n_c = len(triples) // n_a
    axis = np.array(a_vals)
    contrast = np.array([triples[j][1] for j in range(n_c)])
    scores = np.array([t[2] for t in triples]).reshape(n_a, n_c)
    return axis, contrast, scores


# ---------------------------------------------------------------------------
# SVG rendering


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


class _Svg:
    W, H = 640, 460
    ML, MR, MT, MB = 74, 16, 34, 54

    def __init__(self, x_range, y_range, title, x_label, y_label):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.pw = self.W - self.ML - self.MR
        self.ph = self.H - self.MT - self.MB
        self.parts: List[str] = []
        self.title = title
        self.x_label = x_label
        self.y_label = y_label

    def px(self, x):
        return self.ML + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return self.MT + (self.y1 - y) / (self.y1 - self.y0) * self.ph

    def polyline(self, pts, color, width=1.2, dashed=False, title=None):
        coords = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in pts)
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        tip = f"<title>{html.escape(title)}</title>" if title else ""
        self.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} '
            f'points="{coords}">{tip}</polyline>'
        )

    def _log_ticks(self, lo, hi):
        ticks = []
        k0, k1 = int(np.floor(lo)), int(np.ceil(hi))
        for k in range(k0, k1 + 1):
            if lo - 1e-9 <= k <= hi + 1e-9:
                ticks.append((float(k), f"{10.0 ** k:g}"))
        if hi - lo < 1.6:  # add 2x and 5x mantissas on short ranges
            for k in range(k0 - 1, k1 + 1):
                for m, lg in ((2, np.log10(2.0)), (5, np.log10(5.0))):
                    p = k + lg
                    if lo - 1e-9 <= p <= hi + 1e-9:
                        ticks.append((p, f"{m * 10.0 ** k:g}"))
        return sorted(ticks)

    def render(self, log_x=True, log_y=True) -> str:
        axes = [
            f'<rect x="{self.ML}" y="{self.MT}" width="{self.pw}" height="{self.ph}" '
            f'fill="none" stroke="#444" stroke-width="1"/>'
        ]
        xt = self._log_ticks(self.x0, self.x1) if log_x else [
            (v, f"{v:g}") for v in np.linspace(self.x0, self.x1, 5)
        ]
        yt = self._log_ticks(self.y0, self.y1) if log_y else [
            (v, f"{v:g}") for v in np.linspace(self.y0, self.y1, 5)
        ]
        for pos, label in xt:
            x = _f(self.px(pos))
            axes.append(
                f'<line x1="{x}" y1="{self.MT + self.ph}" x2="{x}" '
                f'y2="{self.MT + self.ph + 5}" stroke="#444"/>'
                f'<text x="{x}" y="{self.MT + self.ph + 18}" font-size="11" '
                f'text-anchor="middle">{label}</text>'
            )
        for pos, label in yt:
            y = _f(self.py(pos))
            axes.append(
                f'<line x1="{self.ML - 5}" y1="{y}" x2="{self.ML}" y2="{y}" stroke="#444"/>'
                f'<text x="{self.ML - 8}" y="{y}" font-size="11" text-anchor="end" '
                f'dominant-baseline="middle">{label}</text>'
            )
        labels = [
            f'<text x="{self.W / 2:g}" y="18" font-size="13" text-anchor="middle" '
            f'font-weight="bold">{html.escape(self.title)}</text>',
            f'<text x="{self.ML + self.pw / 2:g}" y="{self.H - 14}" font-size="12" '
            f'text-anchor="middle">{html.escape(self.x_label)}</text>',
            f'<text x="16" y="{self.MT + self.ph / 2:g}" font-size="12" '
            f'text-anchor="middle" transform="rotate(-90 16 {self.MT + self.ph / 2:g})">'
            f"{html.escape(self.y_label)}</text>",
        ]
        body = "\n".join(axes + self.parts + labels)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" '
            f'height="{self.H}" viewBox="0 0 {self.W} {self.H}" '
            f'font-family="sans-serif">\n<rect width="100%" height="100%" '
            f'fill="white"/>\n{body}\n</svg>\n'
        )


def _level_color(k: int, n: int) -> str:
    if n <= 1:
        return _LEVEL_COLORS[0]
    idx = round(k * (len(_LEVEL_COLORS) - 1) / (n - 1))
    return _LEVEL_COLORS[idx]


def render_surface_svg(surface: ResponseSurface, curve=None, title="") -> str:
    """Contour figure; `curve` is an optional human ThresholdCurve overlay."""
    contours = extract_contours(surface)
    lx = np.log10(surface.axis_values)
    ly = np.log10(surface.contrast_values)
    svg = _Svg(
        (lx.min(), lx.max()),
        (ly.min(), ly.max()),
        title or f"{surface.test_id}: {surface.metric}",
        "axis value",
        "contrast",
    )
    level_index = {lv: k for k, lv in enumerate(contours.levels)}
    for level, poly in contours.lines:
        svg.polyline(
            poly,
            _level_color(level_index[level], len(contours.levels)),
            title=f"score {level:.6g}",
        )
    if curve is not None:
        lo, hi = curve.domain
        fa = np.geomspace(max(lo, surface.axis_values.min()),
                          min(hi, surface.axis_values.max()), 120)
        if fa[0] < fa[-1]:
            thr = curve.threshold_at(fa)
            pts = np.column_stack([np.log10(fa), np.log10(thr)])
            keep = (pts[:, 1] >= ly.min()) & (pts[:, 1] <= ly.max())
            if keep.any():
                svg.polyline(pts[keep], _OVERLAY_COLOR, width=2.2, title="human threshold")
    return svg.render()


def render_matching_svg(match: dict, human=None, title="") -> str:
    """Matched-contrast lines; metric dashed, human matching curve solid red.

    `match` is the JSON form of a MatchResult (ref_contrasts, axis_values,
    matched). `human` is an optional MatchingCurve.
    """
    axis = np.asarray(match["axis_values"], dtype=np.float64)
    matched = np.asarray(
        [[np.nan if v is None else v for v in row] for row in match["matched"]],
        dtype=np.float64,
    )
    ref_contrasts = np.asarray(match["ref_contrasts"], dtype=np.float64)
    finite = matched[np.isfinite(matched)]
    ys = np.concatenate([finite, ref_contrasts])
    svg = _Svg(
        (np.log10(axis.min()), np.log10(axis.max())),
        (np.log10(ys.min()), np.log10(ys.max())),
        title,
        "spatial frequency (cpd)",
        "matched contrast",
    )
    for k, rc in enumerate(ref_contrasts):
        if human is not None:
            hy = []
            for f in axis:
                try:
                    hy.append(human.matched_contrast(rc, f))
                except Exception:
                    hy.append(np.nan)
            hy = np.asarray(hy)
            ok = np.isfinite(hy)
            if ok.sum() >= 2:
                svg.polyline(
                    np.column_stack([np.log10(axis[ok]), np.log10(hy[ok])]),
                    _OVERLAY_COLOR,
                    width=1.8,
                    title=f"human, ref contrast {rc:.4g}",
                )
        row = matched[k]
        ok = np.isfinite(row)
        if ok.sum() >= 2:
            svg.polyline(
                np.column_stack([np.log10(axis[ok]), np.log10(row[ok])]),
                "#222222",
                dashed=True,
                title=f"metric, ref contrast {rc:.4g}",
            )
    return svg.render()


def render_color_svg(q: np.ndarray, title="") -> str:
    """Per-direction metric responses across color-matched triplets."""
    q = np.asarray(q, dtype=np.float64)
    lo = float(np.nanmin(q)) if np.isfinite(q).any() else 0.0
    hi = float(np.nanmax(q)) if np.isfinite(q).any() else 1.0
    if hi <= lo:
        hi = lo + 1.0
    svg = _Svg((0.0, max(1.0, q.shape[0] - 1.0)), (lo, hi), title,
               "triplet index", "metric response")
    for d, (name, color) in enumerate(
        (("Ach", "#444444"), ("RG", "#c02020"), ("YV", "#b8a000"))
    ):
        col = q[:, d]
        ok = np.isfinite(col)
        if ok.sum() >= 2:
            pts = np.column_stack([np.nonzero(ok)[0].astype(float), col[ok]])
            svg.polyline(pts, color, width=1.8, title=name)
    return svg.render(log_x=False, log_y=False)


# ---------------------------------------------------------------------------
# report bundle


_CSS = """
body { font-family: sans-serif; margin: 1.5em; color: #222; }
table { border-collapse: collapse; margin: 1em 0; }
th, td { border: 1px solid #999; padding: 4px 10px; text-align: center; }
th { background: #eee; }
td.q1 { background: #b7e1b0; }
td.q2 { background: #e2f0d9; }
td.q3 { background: #fff2cc; }
td.q4 { background: #f8cbad; }
td.missing { color: #999; }
figure { margin: 1em 0; }
"""


def _quartile_class(value, values, lower_is_better):
    vals = sorted(values, reverse=not lower_is_better)
    n = len(vals)
    better = sum(1 for v in vals if (v < value if lower_is_better else v > value))
    return f"q{1 + min(3, int(4 * better / n))}"


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def render_report(
    results_root,
    out_dir,
    pack=None,
    reproducible: bool = False,
    test_order: Optional[Sequence[str]] = None,
) -> dict:
    """Build the HTML/SVG/CSV bundle from a results tree.

    Reads surfaces/<test>/<metric>/surface.json and
    scores/<test>/<metric>/score.json under results_root. Missing pieces
    become placeholders, never errors. Returns a summary dict.
    """
    results_root = Path(results_root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    surfaces: Dict[Tuple[str, str], dict] = {}
    sdir = results_root / "surfaces"
    if sdir.is_dir():
        for p in sorted(sdir.glob("*/*/surface.json")):
            surfaces[(p.parent.parent.name, p.parent.name)] = _load_json(p)
    scores: Dict[Tuple[str, str], dict] = {}
    matches: Dict[Tuple[str, str], dict] = {}
    scdir = results_root / "scores"
    if scdir.is_dir():
        for p in sorted(scdir.glob("*/*/score.json")):
            scores[(p.parent.parent.name, p.parent.name)] = _load_json(p)
        for p in sorted(scdir.glob("*/*/matches.json")):
            matches[(p.parent.parent.name, p.parent.name)] = _load_json(p)

    tests_seen = sorted({t for t, _ in surfaces} | {t for t, _ in scores})
    if test_order:
        order = {t: i for i, t in enumerate(test_order)}
        tests_seen.sort(key=lambda t: (order.get(t, len(order)), t))
    metrics = sorted({m for _, m in surfaces} | {m for _, m in scores})

    n_figures = 0
    for metric in metrics:
        mdir = out_dir / metric
        mdir.mkdir(exist_ok=True)
        sections = []
        for test_id in tests_seen:
            data = surfaces.get((test_id, metric))
            score = scores.get((test_id, metric))
            caption = ""
            if score is not None and score.get("value") is not None:
                caption = f"{score['score_type']} = {score['value']:.4g}"
            elif score is not None:
                caption = f"{score['score_type']}: degenerate"
            fig_rel = None
            if data is not None and "q" in data:
                q = np.asarray(
                    [[np.nan if v is None else v for v in row] for row in data["q"]]
                )
                svg_text = render_color_svg(q, title=f"{test_id}: {metric}")
                fig_rel = f"{test_id}.svg"
                (mdir / fig_rel).write_text(svg_text)
                n_figures += 1
            elif data is not None:
                surface = ResponseSurface.from_json(data)
                try:
                    curve = pack.curve_for(test_id) if pack is not None else None
                except Exception:
                    curve = None
                mrec = matches.get((test_id, metric))
                try:
                    if mrec is not None:
                        human = pack.matching_sf if pack is not None else None
                        svg_text = render_matching_svg(
                            mrec, human=human, title=f"{test_id}: {metric}"
                        )
                    else:
                        svg_text = render_surface_svg(
                            surface, curve=curve, title=f"{test_id}: {metric}"
                        )
                except EmptySurface:
                    svg_text = None
                if svg_text is not None:
                    fig_rel = f"{test_id}.svg"
                    (mdir / fig_rel).write_text(svg_text)
                    n_figures += 1
                write_surface_csv(surface, mdir / f"{test_id}.csv")
            if data is None and score is None:
                sections.append(
                    f"<h2>{html.escape(test_id)}</h2><p class='missing'>not scored</p>"
                )
                continue
            fig_html = (
                f'<img src="{fig_rel}" alt="{html.escape(test_id)}"/>'
                if fig_rel
                else "<p class='missing'>no figure</p>"
            )
            err_note = ""
            n_err = len(data.get("errors", [])) if data else 0
            if n_err:
                err_note = f"<p>{n_err} scoring errors</p>"
            sections.append(
                f"<h2>{html.escape(test_id)}</h2><figure>{fig_html}"
                f"<figcaption>{html.escape(caption)}</figcaption></figure>{err_note}"
            )
        page = (
            f"<title>{html.escape(metric)}</title>\n<style>{_CSS}</style>\n"
            f"<h1>{html.escape(metric)}</h1>\n<p><a href='../index.html'>index</a></p>\n"
            + "\n".join(sections)
        )
        (out_dir / f"{metric}.html").write_text(page)

    # summary table, quartile-colored per column
    header = "".join(f"<th>{html.escape(t)}</th>" for t in tests_seen)
    body_rows = []
    col_values = {
        t: [
            scores[(t, m)]["value"]
            for m in metrics
            if (t, m) in scores and scores[(t, m)].get("value") is not None
        ]
        for t in tests_seen
    }
    for metric in metrics:
        cells = [f"<td><a href='{metric}.html'>{html.escape(metric)}</a></td>"]
        for t in tests_seen:
            rec = scores.get((t, metric))
            if rec is None or rec.get("value") is None:
                cells.append("<td class='missing'>&middot;</td>")
                continue
            lower_better = rec["score_type"].startswith("matching_rmse")
            cls = _quartile_class(rec["value"], col_values[t], lower_better)
            cells.append(f"<td class='{cls}'>{rec['value']:.3f}</td>")
        body_rows.append("<tr>" + "".join(cells) + "</tr>")
    stamp = (
        ""
        if reproducible
        else f"<p>generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}</p>"
    )
    index = (
        f"<title>quality metric benchmark</title>\n<style>{_CSS}</style>\n"
        f"<h1>quality metric benchmark</h1>\n"
        f"<table>\n<tr><th>metric</th>{header}</tr>\n"
        + "\n".join(body_rows)
        + f"\n</table>\n{stamp}"
    )
    (out_dir / "index.html").write_text(index)
    return {
        "metrics": len(metrics),
        "tests": len(tests_seen),
        "figures": n_figures,
        "out_dir": str(out_dir),
    }
