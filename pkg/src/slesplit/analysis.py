"""Trace statistics: distances, moment checks, fractal dimension, sweeps.

Distances between traces are taken pointwise after linear interpolation
onto the union of the two meshes, in sup norm or L^p (p >= 2, matching the
norms for which strong convergence of the scheme has any backing).

The moment machinery verifies the scheme's signature property.  One
splitting step conditions to an affine map of the square moments,

    E[Z'^2 | Z] = Z^2 + (kappa - 4) h
    E[Z'^4 | Z] = Z^4 + (6 kappa - 8) h Z^2 + (3 kappa^2 - 16 kappa + 16) h^2,

and (3k^2-16k+16) = (6k-8)(k-4)/2 makes the recursion telescope exactly to
the SDE's closed forms at every mesh time.  The quadrature check measures
the conditional moments with 20-node Gauss-Hermite quadrature (exact for
these integrands: polynomials in the increment once the roots square away),
extracts the affine coefficients from two probe states, and propagates the
recursion; the ensemble check does the same job by Monte Carlo.

Dimension estimates use box counting over a geometric scale ladder anchored
at the bounding-box corner (optionally averaged over 4 grid offsets) and a
yardstick walk with segment-precision crossings.  Both carry the usual
desk-scale bias; acceptance tolerances absorb it.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .driving import DrivingSpec, Mesh, refine_bm, sample_bm, sample_bm_many, \
    sample_driving
from .halfplane import sqrt_h
from .splitting import FidelitySchedule, Trace, draw_curve, run_standard

__all__ = [
    "sup_distance",
    "lp_distance",
    "DimensionFit",
    "densify",
    "box_dimension",
    "yardstick_dimension",
    "kendall_tau",
    "SweepCell",
    "SweepResult",
    "dimension_sweep",
    "MomentReport",
    "second_moment",
    "fourth_moment",
    "quadrature_moment_check",
    "ensemble_moment_check",
    "ConvergenceReport",
    "self_convergence",
    "map_indexed",
]


def map_indexed(fn, items, workers: int = 1) -> list:
    """Map preserving order; a process pool when workers > 1.

    Work is split per item and merged by index, so the result is the same
    for any worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Distances


def _on_union(a: Trace, b: Trace):
    if float(a.times[-1]) != float(b.times[-1]):
        raise ValueError("traces must share a horizon")
    u = np.union1d(a.times, b.times)
    fa = np.interp(u, a.times, a.points.real) + 1j * np.interp(u, a.times, a.points.imag)
    fb = np.interp(u, b.times, b.points.real) + 1j * np.interp(u, b.times, b.points.imag)
    return u, fa, fb


def sup_distance(a: Trace, b: Trace) -> float:
    """Sup distance of linearly interpolated traces on the union mesh."""
    _, fa, fb = _on_union(a, b)
    return float(np.abs(fa - fb).max())


def lp_distance(a: Trace, b: Trace, p: float = 2.0, allow_low_p: bool = False) -> float:
    """L^p distance in time on the union mesh (trapezoid rule).

    Exponents below 2 are refused unless ``allow_low_p``: nothing is known
    about the scheme in those norms and reporting them invites misreading.
    """
    if p < 2.0 and not allow_low_p:
        raise ValueError("L^p exponents below 2 need allow_low_p=True")
    u, fa, fb = _on_union(a, b)
    return float(np.trapezoid(np.abs(fa - fb) ** p, u) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Fractal dimension


@dataclass(frozen=True)
class DimensionFit:
    """Log-log least-squares fit of counts against inverse scale."""

    dimension: float
    intercept: float
    r2: float
    scales: tuple
    counts: tuple
    method: str


def _as_points(trace_or_points) -> np.ndarray:
    pts = getattr(trace_or_points, "points", trace_or_points)
    return np.asarray(pts, dtype=complex)


def densify(points: np.ndarray, max_seg: float) -> np.ndarray:
    """Insert collinear samples so consecutive gaps are at most max_seg."""
    if max_seg <= 0.0:
        raise ValueError("max_seg must be positive")
    p = np.asarray(points, dtype=complex)
    seg = np.abs(np.diff(p))
    reps = np.maximum(np.ceil(seg / max_seg).astype(np.int64), 1)
    if reps.max() == 1:
        return p
    starts = np.repeat(p[:-1], reps)
    deltas = np.repeat(np.diff(p) / reps, reps)
    base = np.repeat(np.concatenate(([0], np.cumsum(reps)[:-1])), reps)
    out = np.empty(int(reps.sum()) + 1, dtype=complex)
    out[:-1] = starts + deltas * (np.arange(len(starts)) - base)
    out[-1] = p[-1]
    return out


def _bbox_diag(p: np.ndarray):
    x0, x1 = p.real.min(), p.real.max()
    y0, y1 = p.imag.min(), p.imag.max()
    diag = math.hypot(x1 - x0, y1 - y0)
    if diag == 0.0:
        raise ValueError("degenerate bounding box: all points coincide")
    return x0, y0, diag


def box_dimension(trace, n_scales: int = 12, coarse_exp: float = 3.0,
                  fine_exp: float = 9.0, offsets: int = 1) -> DimensionFit:
    """Box-counting dimension of a polyline.

    Boxes of size eps = diag / 2^e for n_scales geometric values of e
    between coarse_exp and fine_exp, grid anchored at the bounding-box
    corner.  The polyline is densified to a sixteenth of the finest scale
    first so counts measure the curve, not the sampling: corner-clipping
    boxes are missed in proportion to the sample spacing, and this depth is
    where another halving moves the counts by under a percent.  ``offsets=4``
    averages the count over half-box grid shifts (off by default).
    """
    if n_scales < 4:
        raise ValueError("need at least 4 scales for a defensible fit")
    if offsets not in (1, 4):
        raise ValueError("offsets must be 1 or 4")
    p = _as_points(trace)
    if len(p) < 2:
        raise ValueError("need at least two points")
    x0, y0, diag = _bbox_diag(p)
    eps = diag / 2.0 ** np.linspace(coarse_exp, fine_exp, n_scales)
    dense = densify(p, eps.min() / 16.0)
    x = dense.real - x0
    y = dense.imag - y0
    counts = np.empty(n_scales)
    for i, e in enumerate(eps):
        shifts = ((0.0, 0.0),) if offsets == 1 else \
            ((0.0, 0.0), (0.5 * e, 0.0), (0.0, 0.5 * e), (0.5 * e, 0.5 * e))
        tot = 0
        for ox, oy in shifts:
            ix = np.floor((x + ox) / e).astype(np.int64)
            iy = np.floor((y + oy) / e).astype(np.int64)
            tot += len(np.unique((ix << 32) | iy))
        counts[i] = tot / len(shifts)
    logs = np.log(1.0 / eps)
    logn = np.log(counts)
    slope, intercept = np.polyfit(logs, logn, 1)
    resid = logn - (slope * logs + intercept)
    ss_tot = float(((logn - logn.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return DimensionFit(float(slope), float(intercept), r2,
                        tuple(eps), tuple(counts), "box")


def yardstick_dimension(trace, n_rulers: int = 10, coarse_exp: float = 3.0,
                        fine_exp: float = 8.0) -> DimensionFit:
    """Divider (yardstick) dimension of a polyline.

    Walks the curve with rulers ell = diag / 2^e; each stride ends exactly
    where the circle |z - anchor| = ell first crosses a segment (solved on
    the segment, not snapped to vertices), plus a fractional final stride.
    """
    if n_rulers < 4:
        raise ValueError("need at least 4 rulers for a defensible fit")
    p = _as_points(trace)
    if len(p) < 2:
        raise ValueError("need at least two points")
    _, _, diag = _bbox_diag(p)
    rulers = diag / 2.0 ** np.linspace(coarse_exp, fine_exp, n_rulers)
    counts = np.array([_yard_count(p, ell) for ell in rulers])
    logs = np.log(1.0 / rulers)
    logn = np.log(counts)
    slope, intercept = np.polyfit(logs, logn, 1)
    resid = logn - (slope * logs + intercept)
    ss_tot = float(((logn - logn.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return DimensionFit(float(slope), float(intercept), r2,
                        tuple(rulers), tuple(counts), "yardstick")


def _yard_count(p: np.ndarray, ell: float, chunk: int = 4096) -> float:
    n = len(p)
    a = complex(p[0])
    i = 1
    strides = 0.0
    while True:
        j = -1
        start = i
        while start < n:
            stop = min(start + chunk, n)
            far = np.abs(p[start:stop] - a) >= ell
            hit = np.argmax(far)
            if far[hit]:
                j = start + int(hit)
                break
            start = stop
        if j < 0:
            strides += abs(p[-1] - a) / ell
            return max(strides, 1e-12)
        q0 = a if j == i else complex(p[j - 1])
        d = complex(p[j]) - q0
        w = q0 - a
        aa = d.real * d.real + d.imag * d.imag
        bb = 2.0 * (w.real * d.real + w.imag * d.imag)
        cc = w.real * w.real + w.imag * w.imag - ell * ell
        s = (-bb + math.sqrt(bb * bb - 4.0 * aa * cc)) / (2.0 * aa)
        a = q0 + s * d
        strides += 1.0
        i = j


# ---------------------------------------------------------------------------
# Rank concordance and the kappa/Hurst sweep


def _concordance(pairs) -> tuple:
    conc = disc = 0
    pts = list(pairs)
    for i in range(len(pts)):
        xi, yi = pts[i]
        for j in range(i + 1, len(pts)):
            xj, yj = pts[j]
            if xi == xj or yi == yj:
                continue
            if (xi < xj) == (yi < yj):
                conc += 1
            else:
                disc += 1
    return conc, disc


def kendall_tau(pairs) -> float:
    """Kendall tau over the given (x, y) pairs, ties dropped."""
    conc, disc = _concordance(pairs)
    if conc + disc == 0:
        raise ValueError("no comparable pairs")
    return (conc - disc) / (conc + disc)


def _grouped_tau(groups) -> float:
    """Tau counting only pairs inside a group (other coordinates fixed)."""
    conc = disc = 0
    for g in groups:
        c, d = _concordance(g)
        conc += c
        disc += d
    if conc + disc == 0:
        raise ValueError("no comparable pairs")
    return (conc - disc) / (conc + disc)


@dataclass(frozen=True)
class SweepCell:
    kappa: float
    hurst: float
    mean_dimension: float
    stderr: float
    paths: int
    steps: int
    dimensions: tuple


@dataclass(frozen=True)
class SweepResult:
    """Grid of fractional-trace dimension estimates with rank diagnostics.

    tau_kappa is the concordance of the mean dimension with kappa at fixed
    Hurst index (want +1: rougher with more noise), tau_hurst the
    concordance of the negated dimension with H at fixed kappa (want +1:
    smoother driving, smoother trace).
    """

    cells: tuple
    tau_kappa: float
    tau_hurst: float


def _sweep_path_dimension(args) -> float:
    kappa, hurst, steps, y0, horizon, seed, stream, samples, offsets = args
    spec = DrivingSpec("fbm", kappa=kappa, hurst=hurst, seed=seed)
    sched = FidelitySchedule.practical(steps, y0, horizon)
    fan = draw_curve(sample_driving(spec, sched.mesh(), stream=stream), y0,
                     samples=samples)
    # The fine end of the window tracks the point-spacing floor, which drops
    # by half an exponent per fourfold increase in fan density (calibrated
    # at 2^11 and 2^13 points; deeper than 2^6.5 the counts flatten anyway).
    fine = min(6.5, 6.0 + 0.25 * math.log2(max(1.0, samples / 2048.0)))
    return box_dimension(fan, coarse_exp=2.5, fine_exp=fine,
                         offsets=offsets).dimension


def dimension_sweep(kappas, hursts, paths_per_cell: int, steps: int, y0: float,
                    horizon: float = 1.0, seed: int = 0, workers: int = 1,
                    samples=2048, offsets: int = 1) -> SweepResult:
    """Mean box dimension of drawn fractional curves over a (kappa, H) grid.

    Each path draws the final-time curve (draw_curve) from a fresh
    fractional driving sample and box-counts it.  samples is the number of
    curve points per path; a sequence gives one value per kappa (rougher
    curves need a denser drawing before the counts stabilise).  Path i of
    cell c runs on stream c * paths_per_cell + i, so the grid is
    reproducible point by point regardless of worker count.
    """
    kappas = [float(k) for k in kappas]
    hursts = [float(h) for h in hursts]
    if paths_per_cell < 1:
        raise ValueError("need at least one path per cell")
    try:
        per_kappa = [int(s) for s in samples]
    except TypeError:
        per_kappa = [int(samples)] * len(kappas)
    if len(per_kappa) != len(kappas):
        raise ValueError("need one samples value per kappa")
    jobs = []
    for ci, (k, h, s) in enumerate(
            (k, h, s) for k, s in zip(kappas, per_kappa) for h in hursts):
        for j in range(paths_per_cell):
            jobs.append((k, h, steps, y0, horizon, seed,
                         ci * paths_per_cell + j, s, offsets))
    dims = map_indexed(_sweep_path_dimension, jobs, workers)
    cells = []
    for ci, (k, h) in enumerate((k, h) for k in kappas for h in hursts):
        d = np.array(dims[ci * paths_per_cell:(ci + 1) * paths_per_cell])
        err = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
        cells.append(SweepCell(k, h, float(d.mean()), err, paths_per_cell,
                               steps, tuple(d)))
    def tau_or_nan(groups):
        try:
            return _grouped_tau(groups)
        except ValueError:
            return math.nan   # degenerate grid: no comparable pairs this way
    tau_k = tau_or_nan([[(c.kappa, c.mean_dimension) for c in cells if c.hurst == h]
                        for h in hursts])
    tau_h = tau_or_nan([[(c.hurst, -c.mean_dimension) for c in cells if c.kappa == k]
                        for k in kappas])
    return SweepResult(tuple(cells), tau_k, tau_h)


# ---------------------------------------------------------------------------
# Moment preservation

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(20)
_SQRT_PI = math.sqrt(math.pi)


def second_moment(kappa: float, y0: float, t):
    """Closed form E[Z_t^2] = -y0^2 + (kappa - 4) t."""
    return -y0 * y0 + (kappa - 4.0) * np.asarray(t, dtype=float)


def fourth_moment(kappa: float, y0: float, t):
    """Closed form E[Z_t^4] = y0^4 + (6k - 8)(-y0^2 t + (k - 4) t^2 / 2)."""
    t = np.asarray(t, dtype=float)
    return y0 ** 4 + (6.0 * kappa - 8.0) * (-y0 * y0 * t + (kappa - 4.0) * t * t / 2.0)


def _gh_conditional(z: complex, h: float, sqrt_kappa: float):
    """E[Z'^2 | z] and E[Z'^4 | z] for one step, by 20-node Gauss-Hermite."""
    s = sqrt_h(z * z - 2.0 * h)
    w = s + sqrt_kappa * math.sqrt(2.0 * h) * _GH_X
    zz2 = w * w - 2.0 * h          # Z'^2, exactly (roots square away)
    m2 = (_GH_W @ zz2) / _SQRT_PI
    m4 = (_GH_W @ (zz2 * zz2)) / _SQRT_PI
    return m2, m4


@dataclass(frozen=True, eq=False)
class MomentReport:
    """Measured vs target square moments along the mesh."""

    mode: str
    kappa: float
    y0: float
    horizon: float
    steps: int
    times: np.ndarray
    target2: np.ndarray
    measured2: np.ndarray
    target4: np.ndarray
    measured4: np.ndarray
    max_dev2: float
    max_dev4: float
    max_identity_dev2: float | None = None
    max_identity_dev4: float | None = None
    stderr2: np.ndarray | None = None
    stderr4: np.ndarray | None = None
    n_paths: int | None = None


def quadrature_moment_check(kappa: float, y0: float, steps: int,
                            horizon: float = 1.0, seed: int = 0,
                            stream: int = 0) -> MomentReport:
    """Deterministic moment verification along one driven trajectory.

    At every step the conditional moments are measured by quadrature at two
    probe states (the trajectory state and a shifted one), the affine
    transfer coefficients are solved from the probes, and the unconditional
    recursion is propagated.  The report compares that propagation against
    the closed forms, and separately tracks the worst deviation of the
    measured coefficients from (kappa-4) h, (6 kappa-8) h and
    (3 kappa^2 - 16 kappa + 16) h^2.
    """
    mesh = Mesh.uniform(horizon, steps)
    sk = math.sqrt(kappa)
    incr = (np.diff(sample_bm(mesh, seed, stream).values) * sk).tolist()
    dt = mesh.dt.tolist()
    z = complex(0.0, y0)
    m2 = z * z
    m4 = m2 * m2
    measured2 = np.empty(steps + 1, dtype=complex)
    measured4 = np.empty(steps + 1, dtype=complex)
    measured2[0] = m2
    measured4[0] = m4
    id2 = id4 = 0.0
    for k, (h, c) in enumerate(zip(dt, incr)):
        zb = z + 1j
        q2a, q4a = _gh_conditional(z, h, sk)
        q2b, q4b = _gh_conditional(zb, h, sk)
        za2 = z * z
        zb2 = zb * zb
        alpha = q2a - za2
        ra = q4a - za2 * za2
        rb = q4b - zb2 * zb2
        aa = (ra - rb) / (za2 - zb2)
        bb = ra - aa * za2
        id2 = max(id2, abs(alpha - (kappa - 4.0) * h), abs(q2b - zb2 - (kappa - 4.0) * h))
        id4 = max(id4, abs(aa - (6.0 * kappa - 8.0) * h),
                  abs(bb - (3.0 * kappa * kappa - 16.0 * kappa + 16.0) * h * h))
        m4 = m4 + aa * m2 + bb
        m2 = m2 + alpha
        s = sqrt_h(z * z - 2.0 * h) + c
        z = sqrt_h(s * s - 2.0 * h)
        measured2[k + 1] = m2
        measured4[k + 1] = m4
    t2 = second_moment(kappa, y0, mesh.t)
    t4 = fourth_moment(kappa, y0, mesh.t)
    return MomentReport(
        mode="quadrature", kappa=kappa, y0=y0, horizon=horizon, steps=steps,
        times=mesh.t, target2=t2, measured2=measured2, target4=t4,
        measured4=measured4,
        max_dev2=float(np.abs(measured2 - t2).max()),
        max_dev4=float(np.abs(measured4 - t4).max()),
        max_identity_dev2=id2, max_identity_dev4=id4)


def ensemble_moment_check(kappa: float, y0: float, steps: int,
                          horizon: float = 1.0, n_paths: int = 10_000,
                          seed: int = 0) -> MomentReport:
    """Monte Carlo moment verification over an ensemble of paths.

    The stepping is vectorised across paths but each path's noise comes
    from its own stream, so the ensemble is reproducible path by path.
    """
    if n_paths < 2:
        raise ValueError("need at least two paths")
    mesh = Mesh.uniform(horizon, steps)
    incr = np.diff(sample_bm_many(mesh, seed, n_paths), axis=1) * math.sqrt(kappa)
    z = np.full(n_paths, complex(0.0, y0))
    measured2 = np.empty(steps + 1, dtype=complex)
    measured4 = np.empty(steps + 1, dtype=complex)
    stderr2 = np.empty(steps + 1)
    stderr4 = np.empty(steps + 1)

    def record(k):
        z2 = z * z
        z4 = z2 * z2
        measured2[k] = z2.mean()
        measured4[k] = z4.mean()
        stderr2[k] = math.sqrt((z2.real.var() + z2.imag.var()) / n_paths)
        stderr4[k] = math.sqrt((z4.real.var() + z4.imag.var()) / n_paths)

    record(0)
    dt = mesh.dt
    for k in range(steps):
        h = float(dt[k])
        s = sqrt_h(z * z - 2.0 * h) + incr[:, k]
        z = sqrt_h(s * s - 2.0 * h)
        record(k + 1)
    t2 = second_moment(kappa, y0, mesh.t)
    t4 = fourth_moment(kappa, y0, mesh.t)
    return MomentReport(
        mode="ensemble", kappa=kappa, y0=y0, horizon=horizon, steps=steps,
        times=mesh.t, target2=t2, measured2=measured2, target4=t4,
        measured4=measured4,
        max_dev2=float(np.abs(measured2 - t2).max()),
        max_dev4=float(np.abs(measured4 - t4).max()),
        stderr2=stderr2, stderr4=stderr4, n_paths=n_paths)


# ---------------------------------------------------------------------------
# Self-convergence across dyadic meshes


@dataclass(frozen=True)
class ConvergenceReport:
    """Median coupled distances between consecutive dyadic refinement levels."""

    kappa: float
    y0: float
    horizon: float
    levels: tuple              # step counts, coarse to fine
    median_sup: tuple          # one entry per consecutive level pair
    median_l2: tuple
    paths: int
    monotone_sup: bool
    monotone_l2: bool
    order_sup: float           # mean log2 ratio of consecutive medians


def _converge_path(args):
    kappa, lo, hi, y0, horizon, seed, stream = args
    path = sample_bm(Mesh.uniform(horizon, 2 ** lo), seed, stream)
    traces = []
    while True:
        traces.append(run_standard(path, y0, kappa))
        if path.mesh.n_steps >= 2 ** hi:
            break
        path = refine_bm(path, 2)
    # compare at the coarser level's times, which dyadic nesting shares
    # exactly; interpolating onto a union mesh would bury the scheme
    # difference under interpolation error
    sups, l2s = [], []
    for a, b in zip(traces, traces[1:]):
        diff = np.abs(a.points - b.points[::2])
        sups.append(float(diff.max()))
        l2s.append(float(math.sqrt(np.trapezoid(diff * diff, a.times))))
    return sups, l2s


def self_convergence(kappa: float, lo: int, hi: int, paths: int, y0: float,
                     horizon: float = 1.0, seed: int = 0,
                     workers: int = 1) -> ConvergenceReport:
    """Coupled self-convergence study over meshes 2^lo ... 2^hi.

    Every level of a path reuses one Brownian path through bridge
    refinement; distances are between consecutive levels at the coarser
    level's mesh times (a deterministic flow therefore reports
    machine-level distances), medians across paths.  The monotonicity
    verdicts treat anything below 1e-13 as converged: at roundoff level a
    strict ordering of successive distances is noise.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi dyadic levels")
    if paths < 1:
        raise ValueError("need at least one path")
    rows = map_indexed(_converge_path,
                       [(kappa, lo, hi, y0, horizon, seed, s) for s in range(paths)],
                       workers)
    sups = np.median(np.array([r[0] for r in rows]), axis=0)
    l2s = np.median(np.array([r[1] for r in rows]), axis=0)
    order = float(np.mean(np.log2(sups[:-1] / sups[1:]))) if len(sups) > 1 else math.nan
    atol = 1e-13

    def decreasing(d):
        return bool(np.all((np.diff(d) < 0.0) | (d[1:] < atol)))

    return ConvergenceReport(
        kappa=kappa, y0=y0, horizon=horizon,
        levels=tuple(2 ** n for n in range(lo, hi + 1)),
        median_sup=tuple(float(x) for x in sups),
        median_l2=tuple(float(x) for x in l2s),
        paths=paths,
        monotone_sup=decreasing(sups),
        monotone_l2=decreasing(l2s),
        order_sup=order)
