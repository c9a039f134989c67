"""Phase portraits of trained two-dimensional models.

A portrait shows the autonomous part of the learned field h -> beta Xi(h) on a
grid, the hidden trajectories of selected samples, and the decision regions
argmax_j (A h + b)_j.  For two classes with invertible A, the anchor point
-A^{-1} b and the rows of A are overlaid as well.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionary import DictionarySpec, evaluate, evaluate_batch
from .integrator import solve_forward
from .model import Parameters

__all__ = [
    "PortraitSpec",
    "Portrait",
    "UnsupportedHiddenDim",
    "SingularReadout",
    "compute_portrait",
    "render_svg",
    "render_csv",
    "render_portrait",
    "linear_part_eigenvalues",
    "region_classes",
]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
REGION_TINT = ("#c6dbef", "#fcbba1", "#c7e9c0", "#dadaeb", "#fdd0a2", "#d9c3bc", "#f7c6e4", "#b8ecf2")


class UnsupportedHiddenDim(ValueError):
    pass


class SingularReadout(UserWarning):
    pass


@dataclass(frozen=True)
class PortraitSpec:
    window: tuple = (-2.0, 2.0, -2.0, 2.0)  # (h1min, h1max, h2min, h2max)
    resolution: int = 15
    sample_ids: tuple = ()  # empty: the first ``per_class`` samples of each class
    per_class: int = 5
    output_format: str = "svg"

    def __post_init__(self):
        x0, x1, y0, y1 = (float(v) for v in self.window)
        if not (x1 > x0 and y1 > y0):
            raise ValueError("portrait window is degenerate")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError("grid resolution must be an integer >= 2")
        if self.output_format not in ("svg", "csv"):
            raise ValueError("output format must be 'svg' or 'csv'")
        object.__setattr__(self, "window", (x0, x1, y0, y1))


@dataclass
class Portrait:
    window: tuple
    grid: np.ndarray  # (R*R, 2), h1 varying fastest
    arrows: np.ndarray  # (R*R, 2)
    regions: np.ndarray  # (R*R,) class index
    trajectories: list = field(default_factory=list)  # (sample_id, class, times, states)
    predicted: dict = field(default_factory=dict)  # sample_id -> predicted class
    anchor: np.ndarray | None = None
    readout_rows: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    resolution: int = 0


def region_classes(params: Parameters, points) -> np.ndarray:
    """Pointwise decision rule argmax_j (A h + b)_j."""
    z = np.asarray(points, dtype=float) @ params.A.T + params.b
    return np.argmax(z, axis=1)


def linear_part_eigenvalues(params: Parameters, spec: DictionarySpec) -> np.ndarray:
    """Eigenvalues of beta D Xi(0), the linearization of the autonomous field at 0."""
    J = params.beta @ evaluate(spec, np.zeros(spec.m)).jacobian
    return np.linalg.eigvals(J)


def _select(dataset, ps: PortraitSpec):
    series = list(dataset)
    if ps.sample_ids:
        by_id = {ts.id: ts for ts in series}
        missing = [s for s in ps.sample_ids if s not in by_id]
        if missing:
            raise KeyError(f"samples not in dataset: {missing}")
        return [by_id[s] for s in ps.sample_ids]
    picked, counts = [], {}
    for ts in series:
        c = ts.label_index if ts.label is not None else -1
        if counts.get(c, 0) < ps.per_class:
            picked.append(ts)
            counts[c] = counts.get(c, 0) + 1
    return picked


def compute_portrait(params: Parameters, spec: DictionarySpec, dataset, ps: PortraitSpec,
                     substeps: int = 1) -> Portrait:
    if spec.m != 2 or params.m != 2:
        raise UnsupportedHiddenDim(f"phase portraits need m = 2, model has m = {params.m}")
    x0, x1, y0, y1 = ps.window
    R = ps.resolution
    g1, g2 = np.meshgrid(np.linspace(x0, x1, R), np.linspace(y0, y1, R))
    grid = np.column_stack([g1.ravel(), g2.ravel()])
    arrows = evaluate_batch(spec, grid) @ params.beta.T
    regions = region_classes(params, grid)

    trajs, predicted = [], {}
    for ts in _select(dataset, ps):
        tr = solve_forward(params, spec, ts, substeps)
        label = ts.label_index if ts.label is not None else -1
        trajs.append((ts.id, label, tr.grid.times, tr.states))
        predicted[ts.id] = int(region_classes(params, tr.states[-1:])[0])

    anchor = rows = None
    if params.num_classes == 2:
        if abs(np.linalg.det(params.A)) > 1e-12 * max(1.0, np.abs(params.A).max() ** 2):
            anchor = -np.linalg.solve(params.A, params.b)
            rows = params.A.copy()
        else:
            warnings.warn("readout matrix A is singular; anchor/row overlay skipped", SingularReadout)
    return Portrait(ps.window, grid, arrows, regions, trajs, predicted, anchor, rows,
                    linear_part_eigenvalues(params, spec), R)


def _fmt(v):
    return f"{float(v):.6g}"


def render_csv(p: Portrait) -> str:
    lines = ["kind,h1,h2,v1,v2,class,sample_id,t"]
    for (h1, h2), (v1, v2), c in zip(p.grid.tolist(), p.arrows.tolist(), p.regions.tolist()):
        lines.append(f"grid,{h1!r},{h2!r},{v1!r},{v2!r},{c},,")
    for sid, label, times, states in p.trajectories:
        for t, (h1, h2) in zip(times.tolist(), states.tolist()):
            lines.append(f"trajectory,{h1!r},{h2!r},,,{label},{sid},{t!r}")
    if p.anchor is not None:
        a1, a2 = p.anchor.tolist()
        lines.append(f"anchor,{a1!r},{a2!r},,,,,")
        for j, (r1, r2) in enumerate(p.readout_rows.tolist()):
            lines.append(f"readout_row,{a1!r},{a2!r},{r1!r},{r2!r},{j},,")
    return "\n".join(lines) + "\n"


def render_svg(p: Portrait) -> str:
    x0, x1, y0, y1 = p.window
    w, h = x1 - x0, y1 - y0
    R = p.resolution
    cw, ch = w / (R - 1), h / (R - 1)
    cell = min(cw, ch)
    stroke = 0.004 * max(w, h)
    font = 0.035 * max(w, h)
    mags = np.hypot(p.arrows[:, 0], p.arrows[:, 1])
    vmax = float(mags.max()) if mags.size else 0.0
    scale = 0.8 * cell / vmax if vmax > 0 else 0.0

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x0)} {_fmt(-y1)} {_fmt(w)} {_fmt(h)}" '
        'width="600" height="600" preserveAspectRatio="none">',
        "<defs>",
        f'<marker id="head" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="4" markerHeight="4" '
        'orient="auto"><path d="M0,0 L10,5 L0,10 z" style="fill:#333"/></marker>',
        "</defs>",
        # flip so that h2 grows upward while the viewBox stays in data units
        '<g transform="scale(1,-1)">',
        '<g id="regions">',
    ]
    for (a, b), c in zip(p.grid, p.regions):
        color = REGION_TINT[int(c) % len(REGION_TINT)]
        out.append(f'<rect x="{_fmt(a - cw / 2)}" y="{_fmt(b - ch / 2)}" width="{_fmt(cw)}" '
                   f'height="{_fmt(ch)}" style="fill:{color};stroke:none"/>')
    out.append("</g>")
    out.append(f'<g id="field" style="stroke:#333;stroke-width:{_fmt(stroke)}">')
    for (a, b), (u, v) in zip(p.grid, p.arrows):
        if scale == 0 or u == 0 and v == 0:
            continue
        out.append(f'<line x1="{_fmt(a)}" y1="{_fmt(b)}" x2="{_fmt(a + scale * u)}" '
                   f'y2="{_fmt(b + scale * v)}" marker-end="url(#head)"/>')
    out.append("</g>")
    out.append('<g id="trajectories" style="fill:none">')
    for sid, label, _, states in p.trajectories:
        color = PALETTE[label % len(PALETTE)] if label >= 0 else "#000"
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in states)
        out.append(f'<polyline points="{pts}" style="stroke:{color};stroke-width:{_fmt(stroke)}">'
                   f"<title>{sid}</title></polyline>")
        a, b = states[-1]
        s = 3 * stroke
        out.append(f'<rect x="{_fmt(a - s)}" y="{_fmt(b - s)}" width="{_fmt(2 * s)}" height="{_fmt(2 * s)}" '
                   f'style="fill:{color};stroke:#000;stroke-width:{_fmt(stroke / 2)}"/>')
    out.append("</g>")
    if p.anchor is not None:
        a, b = p.anchor
        out.append(f'<g id="readout" style="stroke:#000;stroke-width:{_fmt(2 * stroke)}">')
        out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{_fmt(3 * stroke)}" style="fill:#000"/>')
        for u, v in p.readout_rows:
            out.append(f'<line x1="{_fmt(a)}" y1="{_fmt(b)}" x2="{_fmt(a + u)}" y2="{_fmt(b + v)}" '
                       'marker-end="url(#head)"/>')
        out.append("</g>")
    out.append("</g>")
    # legend, drawn unflipped in data units
    eig = ""
    if p.eigenvalues is not None:
        eig = "; eig(beta DXi(0)) = " + ", ".join(f"{complex(e):.4g}" for e in p.eigenvalues)
    out.append(f'<text x="{_fmt(x0 + 0.02 * w)}" y="{_fmt(-y1 + 1.2 * font)}" '
               f'style="font-family:sans-serif;font-size:{_fmt(font)}px;fill:#000">'
               f"max |beta Xi(h)| = {vmax:.4g} (arrow = 0.8 cell){eig}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_portrait(params: Parameters, spec: DictionarySpec, dataset, ps: PortraitSpec,
                    substeps: int = 1) -> bytes:
    p = compute_portrait(params, spec, dataset, ps, substeps)
    text = render_svg(p) if ps.output_format == "svg" else render_csv(p)
    return text.encode("utf-8")
