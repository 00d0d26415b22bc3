"""Serialization for traces and driving paths: CSV, JSON sidecars, SVG.

All writers are deterministic functions of their inputs: floats go out via
repr-faithful %.17g, dict keys are emitted in a fixed order, and nothing
records wall-clock time.  Reading a written trace back reproduces the
float64 values exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .driving import DrivingPath, DrivingSpec, Mesh
from .splitting import FidelitySchedule, Trace

__all__ = [
    "trace_csv",
    "driving_csv",
    "trace_metadata",
    "write_trace",
    "read_trace_csv",
    "read_driving_csv",
    "trace_svg",
]

_FMT = "%.17g"


def _g(x: float) -> str:
    return _FMT % float(x)


def trace_csv(trace: Trace) -> str:
    """Trace as CSV text with header t,re,im."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "re", "im"])
    for t, z in zip(trace.times, trace.points):
        w.writerow([_g(t), _g(z.real), _g(z.imag)])
    return buf.getvalue()


def driving_csv(path: DrivingPath) -> str:
    """Driving path as CSV text with header t,value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value"])
    for t, v in zip(path.mesh.t, path.values):
        w.writerow([_g(t), _g(v)])
    return buf.getvalue()


def trace_metadata(trace: Trace) -> dict:
    """JSON-ready run description for a trace (no timestamps)."""
    meta: dict = {"format": "slesplit-trace", "version": 1}
    if trace.spec is not None:
        s = trace.spec
        meta["driving"] = {"kind": s.kind, "kappa": s.kappa, "seed": s.seed}
        if s.kind == "nrbm":
            meta["driving"]["p"] = s.p
        if s.kind == "fbm":
            meta["driving"]["hurst"] = s.hurst
    if trace.schedule is not None:
        sc = trace.schedule
        meta["schedule"] = {"horizon": sc.horizon, "steps": sc.steps, "y0": sc.y0}
        if sc.theory_n is not None:
            meta["schedule"]["theory_n"] = sc.theory_n
    meta["stream"] = trace.stream
    meta["shifted"] = trace.shifted
    meta["points"] = len(trace.times)
    return meta


def write_trace(trace: Trace, out_base: str, svg: bool = False) -> list:
    """Write <base>.csv and <base>.json (and optionally <base>.svg).

    Returns the list of paths written.
    """
    written = []
    csv_path = out_base + ".csv"
    with open(csv_path, "w") as f:
        f.write(trace_csv(trace))
    written.append(csv_path)
    json_path = out_base + ".json"
    with open(json_path, "w") as f:
        json.dump(trace_metadata(trace), f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(json_path)
    if svg:
        svg_path = out_base + ".svg"
        with open(svg_path, "w") as f:
            f.write(trace_svg(trace))
        written.append(svg_path)
    return written


def read_trace_csv(path: str) -> Trace:
    """Read a t,re,im CSV back into a bare Trace (no spec or schedule)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["t", "re", "im"]:
        raise ValueError(f"{path}: expected header t,re,im")
    body = [r for r in rows[1:] if r]
    t = np.array([float(r[0]) for r in body])
    z = np.array([complex(float(r[1]), float(r[2])) for r in body])
    return Trace(times=t, points=z)


def read_driving_csv(path: str, spec: DrivingSpec | None = None,
                     scaled: bool = True) -> DrivingPath:
    """Read a t,value CSV back into a DrivingPath.

    The file does not say how it was produced, so the caller states the
    spec; by default the values are taken as an already scaled driving
    force.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise ValueError(f"{path}: expected header t,value")
    body = [r for r in rows[1:] if r]
    t = np.array([float(r[0]) for r in body])
    v = np.array([float(r[1]) for r in body])
    if spec is None:
        spec = DrivingSpec("bm", kappa=1.0, seed=0)
    return DrivingPath(Mesh(t), v, spec, scaled=scaled)


def trace_svg(trace: Trace, width: int = 800) -> str:
    """Standalone SVG polyline of the trace, y axis pointing up.

    The viewBox is the bounding box padded by 5%; stroke width is the
    diagonal divided by 2000 so renders look alike across scales.
    """
    p = np.asarray(trace.points)
    x, y = p.real, -p.imag
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    dx, dy = x1 - x0, y1 - y0
    diag = math.hypot(dx, dy)
    if diag == 0.0:
        raise ValueError("degenerate trace: all points coincide")
    pad = 0.05 * diag
    vb = (x0 - pad, y0 - pad, dx + 2 * pad, dy + 2 * pad)
    height = max(int(round(width * vb[3] / vb[2])), 1)
    pts = " ".join(f"{_g(a)},{_g(b)}" for a, b in zip(x, y))
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{width}" height="{height}" '
        f'viewBox="{_g(vb[0])} {_g(vb[1])} {_g(vb[2])} {_g(vb[3])}">\n'
        f'<polyline fill="none" stroke="#1f3b73" '
        f'stroke-width="{_g(diag / 2000.0)}" points="{pts}"/>\n'
        "</svg>\n"
    )
