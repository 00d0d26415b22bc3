"""Splitting engines for the reverse Loewner flow.

The reverse SDE  dZ = -2/Z dt + sqrt(kappa) dB,  Z_0 = i y0, is split per
mesh cell into drift / noise / drift legs.  Both drift legs are solved
exactly by the slit flow, the noise leg is a real translation, so one step
of size h with Brownian increment dB reads

    Z  ->  sqrt_h( ( sqrt_h(Z^2 - 2h) + sqrt(kappa) dB )^2 - 2h ).

The step inherits two structural facts from the exact legs: the imaginary
part never decreases (so traces started at i y0 stay above y0 and are never
swallowed), and the squares satisfy the per-step identity

    Z_{k+1}^2 + 2 h  =  ( sqrt_h(Z_k^2 - 2h) + sqrt(kappa) dB )^2

exactly, which is what makes the second and fourth moments of Z_k match the
SDE's closed forms with no discretisation bias:

    E[Z_k^2] = -y0^2 + (kappa - 4) t_k
    E[Z_k^4] =  y0^4 + (6 kappa - 8) ( -y0^2 t_k + (kappa - 4) t_k^2 / 2 ).

Trace fidelity is steered by a schedule: theory mode takes a resolution
parameter N and uses y0 = N^{-1/2} with ceil(T (4N+1)^3) steps, practical
mode takes y0 and the step count directly.

The fractional variant replaces the drift field by -2 |Z|^{2-1/H} / Z and
the noise by kappa^H dB^H.  That field is not holomorphic for H != 1/2, but
on the squared state w = Z^2 it collapses to a real-direction flow

    dw/dt = -4 |w|^{1 - 1/(2H)}        (Im w frozen),

so the half-step reduces to a scalar ODE for Re w, integrated by classical
RK4 with adaptive substeps capped at 1% relative displacement.  At H = 1/2
the field is constant and one substep reproduces sqrt_h(Z^2 - 2h) exactly.

Two different point sets come out of one run, and they are not the same
object.  The Trace records the flow of a single launch point i y0 through
the step maps G_1, G_2, ... as prefix compositions G_k ... G_1 (i y0); its
real part rides the accumulated driving force, so the recorded polyline is
distributed like the graph of a time-changed Brownian motion over the
monotone imaginary part - box dimension about 3/2 regardless of kappa.  The
picture the flow has *drawn* by the final time is a different evaluation of
the same maps: the curve point laid down during step k sits at the driving
position, and its final location is the suffix composition
G_M ... G_{k+1} (lifted driving point).  draw_curve computes those suffix
images for a subsampled set of steps in one sweep, vectorised over the
active points, and that set carries the kappa-dependent fractal geometry
(the hull boundary grown by the flow agrees in law with the forward trace
up to a real shift).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .driving import (DrivingPath, DrivingSpec, Mesh, refine_bm,
                      sample_driving, scale_factor)
from .halfplane import sqrt_h

__all__ = [
    "SINGULARITY_FLOOR",
    "SingularityError",
    "FidelitySchedule",
    "StepRecord",
    "Trace",
    "sle_step",
    "fsle_halfstep",
    "run_standard",
    "simulate_sle",
    "simulate_nrsle",
    "simulate_fsle",
    "simulate",
    "draw_curve",
    "simulate_curve",
    "dense_points",
]

# hard floor on |Z| for the fractional field; unreachable from i y0 with
# y0 above it (Im Z is nondecreasing) but enforced against misuse
SINGULARITY_FLOOR = 1e-8

_SUBSTEP_POLICY = 1e-2  # max relative displacement per RK4 substep


class SingularityError(ArithmeticError):
    """Fractional drift field evaluated too close to the origin."""

    def __init__(self, msg: str, step: int | None = None, t: float | None = None):
        super().__init__(msg)
        self.step = step
        self.t = t


@dataclass(frozen=True)
class FidelitySchedule:
    """Trace resolution: horizon, step count and launch height y0."""

    horizon: float
    steps: int
    y0: float
    theory_n: int | None = None

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")
        if not self.y0 > 0.0:
            raise ValueError("launch height y0 must be positive")

    @classmethod
    def theory(cls, n: int, horizon: float = 1.0) -> "FidelitySchedule":
        """Resolution-N schedule: y0 = N^{-1/2}, ceil(T (4N+1)^3) steps."""
        if n < 1:
            raise ValueError("resolution parameter must be >= 1")
        steps = math.ceil(horizon * (4 * n + 1) ** 3)
        return cls(horizon=float(horizon), steps=steps, y0=1.0 / math.sqrt(n),
                   theory_n=n)

    @classmethod
    def practical(cls, steps: int, y0: float, horizon: float = 1.0) -> "FidelitySchedule":
        return cls(horizon=float(horizon), steps=int(steps), y0=float(y0))

    def mesh(self) -> Mesh:
        return Mesh.uniform(self.horizon, self.steps)


@dataclass(frozen=True)
class StepRecord:
    """One step of the engine, for auditing the square identity."""

    k: int
    pre: complex
    half: complex      # state after the first drift leg
    increment: float   # scaled noise translation
    post: complex


@dataclass(frozen=True, eq=False)
class Trace:
    """Points Z_k of a reverse-flow trace on its mesh.

    Reference solvers may leave ``spec``/``schedule`` unset; the distance
    and dimension machinery only touches times and points.
    """

    times: np.ndarray
    points: np.ndarray
    spec: DrivingSpec | None = None
    schedule: FidelitySchedule | None = None
    stream: int = 0
    shifted: bool = False
    driving: DrivingPath | None = None
    records: tuple | None = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def sle_step(z: complex, h: float, db: float, kappa: float) -> complex:
    """One splitting step of size h with Brownian increment db."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if not z.imag > 0.0:
        raise ValueError("state must lie in the open upper half-plane")
    s = sqrt_h(z * z - 2.0 * h)
    w = s + math.sqrt(kappa) * db
    return sqrt_h(w * w - 2.0 * h)


def run_standard(path: DrivingPath, y0: float, kappa: float | None = None,
                 shift: bool = False, keep_records: bool = False) -> Trace:
    """Run the splitting scheme on an already sampled driving path.

    This is the coupling entry point: convergence studies refine one path
    across dyadic meshes and rerun the same scheme on each level.  ``kappa``
    defaults to the path's spec; scaled paths are used as-is.
    """
    if not y0 > 0.0:
        raise ValueError("launch height y0 must be positive")
    if path.scaled:
        incr = np.diff(path.values)
        kappa = path.spec.kappa
    else:
        if kappa is None:
            kappa = path.spec.kappa
        # scale the path, then difference: the same products a piecewise
        # window representation sees, so the two agree to the ulp
        incr = np.diff(path.values * math.sqrt(kappa))
    incr = incr.tolist()
    dt = path.mesh.dt.tolist()
    points = np.empty(len(path.mesh.t), dtype=complex)
    z = complex(0.0, y0)
    points[0] = z
    records = [] if keep_records else None
    csqrt = cmath.sqrt
    for k, (h, c) in enumerate(zip(dt, incr)):
        s = csqrt(z * z - 2.0 * h)
        if s.imag < 0.0:
            s = -s
        w = s + c
        z = csqrt(w * w - 2.0 * h)
        if z.imag < 0.0:
            z = -z
        points[k + 1] = z
        if keep_records:
            records.append(StepRecord(k, complex(points[k]), s, c, z))
    if shift:
        points = points + (1.0 if path.scaled else math.sqrt(kappa)) * path.values[-1]
    schedule = FidelitySchedule(horizon=path.mesh.horizon, steps=path.mesh.n_steps,
                                y0=y0)
    spec = path.spec if path.spec.kappa == kappa else replace(path.spec, kappa=kappa)
    return Trace(path.mesh.t, points, spec, schedule, stream=path.stream,
                 shifted=shift, driving=path,
                 records=tuple(records) if records is not None else None)


def simulate_sle(spec: DrivingSpec, schedule: FidelitySchedule, stream: int = 0,
                 shift: bool = False, keep_records: bool = False) -> Trace:
    """Standard trace: splitting scheme driven by sqrt(kappa) * BM.

    ``shift`` adds the realized endpoint sqrt(kappa) B_T to every point,
    moving the trace into the forward-curve frame; all statistics computed
    downstream are invariant under it, so the default is off.
    """
    if spec.kind != "bm":
        raise ValueError("simulate_sle wants a 'bm' driving spec")
    path = sample_driving(spec, schedule.mesh(), stream)
    tr = run_standard(path, schedule.y0, spec.kappa, shift=shift,
                      keep_records=keep_records)
    return replace(tr, schedule=schedule)


def simulate_nrsle(spec: DrivingSpec, schedule: FidelitySchedule, stream: int = 0,
                   shift: bool = False, keep_records: bool = False) -> Trace:
    """Noise-reinforced trace: same splitting, nrBM noise.

    At p = 0 the sampler reduction is bitwise, so the trace coincides with
    ``simulate_sle`` for the same seed and stream.
    """
    if spec.kind != "nrbm":
        raise ValueError("simulate_nrsle wants an 'nrbm' driving spec")
    path = sample_driving(spec, schedule.mesh(), stream)
    tr = run_standard(path, schedule.y0, spec.kappa, shift=shift,
                      keep_records=keep_records)
    return replace(tr, schedule=schedule)


# ---------------------------------------------------------------------------
# Fractional variant


def _halfstep_w(x: float, b: float, tau: float, beta: float) -> float:
    """Advance Re w by RK4 along dx/dt = -4 (x^2 + b^2)^(beta/2).

    Substeps are sized so each moves x by at most 1% of |w|; the field is
    smooth away from w = 0 and the policy keeps the local RK4 error far
    below the quadrature tolerances used in the tests.
    """
    floor2 = SINGULARITY_FLOOR * SINGULARITY_FLOOR
    left = tau
    guard = 0
    while left > 0.0:
        r = math.hypot(x, b)
        if r < floor2:
            raise SingularityError(
                f"fractional drift field within {SINGULARITY_FLOOR:g} of the origin")
        speed = 4.0 * r ** beta
        dt = min(left, _SUBSTEP_POLICY * r / speed)
        half = 0.5 * dt
        k1 = -4.0 * r ** beta
        k2 = -4.0 * math.hypot(x + half * k1, b) ** beta
        k3 = -4.0 * math.hypot(x + half * k2, b) ** beta
        k4 = -4.0 * math.hypot(x + dt * k3, b) ** beta
        x += dt * (k1 + 2.0 * (k2 + k3) + k4) / 6.0
        left -= dt
        guard += 1
        if guard > 10_000_000:
            raise SingularityError("fractional half-step failed to converge")
    return x


def fsle_halfstep(z: complex, h: float, hurst: float) -> complex:
    """Exact-drift half-step of the fractional field, duration h/2.

    Integrates dz/dt = -2 |z|^{2-1/H} / z.  On w = z^2 the field is the
    real-direction flow dw/dt = -4 |w|^{1-1/(2H)} with Im w constant, so we
    integrate a scalar ODE and lift back with sqrt_h.  For H = 1/2 the flow
    is the exact translation w -> w - 2h, i.e. sqrt_h(z^2 - 2h).
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if not (0.0 < hurst < 1.0):
        raise ValueError("Hurst index must lie in (0, 1)")
    if not z.imag > 0.0:
        raise ValueError("state must lie in the open upper half-plane")
    if abs(z) < SINGULARITY_FLOOR:
        raise SingularityError(
            f"fractional drift field within {SINGULARITY_FLOOR:g} of the origin")
    w = z * z
    x, b = w.real, w.imag
    beta = 1.0 - 1.0 / (2.0 * hurst)
    if beta == 0.0:
        x -= 2.0 * h
    else:
        x = _halfstep_w(x, b, 0.5 * h, beta)
    return sqrt_h(complex(x, b))


def simulate_fsle(spec: DrivingSpec, schedule: FidelitySchedule,
                  stream: int = 0) -> Trace:
    """Fractional trace: drift half-steps around kappa^H * fBM translations."""
    if spec.kind != "fbm":
        raise ValueError("simulate_fsle wants an 'fbm' driving spec")
    path = sample_driving(spec, schedule.mesh(), stream)
    incr = np.diff(path.values * scale_factor(spec)).tolist()
    dt = path.mesh.dt.tolist()
    points = np.empty(len(path.mesh.t), dtype=complex)
    z = complex(0.0, schedule.y0)
    points[0] = z
    hurst = spec.hurst
    for k, (h, c) in enumerate(zip(dt, incr)):
        try:
            z = fsle_halfstep(z, h, hurst)
            z = z + c
            z = fsle_halfstep(z, h, hurst)
        except SingularityError as exc:
            raise SingularityError(str(exc), step=k,
                                   t=float(path.mesh.t[k])) from None
        points[k + 1] = z
    return Trace(path.mesh.t, points, spec, schedule, stream=stream, driving=path)


def simulate(spec: DrivingSpec, schedule: FidelitySchedule, stream: int = 0,
             shift: bool = False) -> Trace:
    """Variant dispatch on spec.kind."""
    if spec.kind == "bm":
        return simulate_sle(spec, schedule, stream, shift=shift)
    if spec.kind == "nrbm":
        return simulate_nrsle(spec, schedule, stream, shift=shift)
    if shift:
        raise ValueError("the forward-frame shift is defined for real driving "
                         "forces of the standard variants only")
    return simulate_fsle(spec, schedule, stream)


# ---------------------------------------------------------------------------
# Final-time picture of the drawn curve


def _fan_slit(incr, dt, y0: float, stride: int) -> np.ndarray:
    """Suffix images under exact slit legs, telescoped.

    Written out in time order the step chain is

        S_{h/2}  T_0  S_h  T_1  S_h  ...  S_h  T_{M-1}  S_{h/2}

    (S_tau the slit flow of duration tau, T_k the k-th translation): the
    second drift leg of one step and the first of the next are the same ODE,
    so they fuse into a single sqrt per step.  A point injected before step k
    enters with its own half leg applied, i sqrt(y0^2 + 2 h_k), then shares
    every later map with the rest of the fan.
    """
    m = len(incr)
    fan = np.empty((m + stride - 1) // stride, dtype=complex)
    n = 0
    incr = incr.tolist()
    dt = dt.tolist()
    for k in range(m):
        h = dt[k]
        if k % stride == 0:
            fan[n] = complex(0.0, math.sqrt(y0 * y0 + 2.0 * h))
            n += 1
        a = fan[:n]
        a += incr[k]
        tau = 0.5 * (h + dt[k + 1]) if k + 1 < m else 0.5 * h
        np.multiply(a, a, out=a)
        a -= 4.0 * tau
        np.sqrt(a, out=a)
        np.negative(a, out=a, where=a.imag < 0.0)
    return fan


def _halfstep_w_fan(x: np.ndarray, b: np.ndarray, tau: float, beta: float) -> None:
    """Vectorised twin of :func:`_halfstep_w`; advances x in place.

    One RK4 round covers every point whose substep policy admits the full
    half leg in one go (the generic case, since the leg is short).  The few
    stragglers near the origin, where the displacement policy shrinks the
    substep, finish through the scalar adaptive integrator.
    """
    floor2 = SINGULARITY_FLOOR * SINGULARITY_FLOOR
    rr = x * x + b * b
    r = np.sqrt(rr)
    if np.any(r < floor2):
        raise SingularityError(
            f"fractional drift field within {SINGULARITY_FLOOR:g} of the origin")
    speed = 4.0 * r ** beta
    dt = np.minimum(tau, _SUBSTEP_POLICY * r / speed)
    half = 0.5 * dt
    k1 = -speed
    step = half * k1
    k2 = -4.0 * (step * step + 2.0 * x * step + rr) ** (0.5 * beta)
    step = half * k2
    k3 = -4.0 * (step * step + 2.0 * x * step + rr) ** (0.5 * beta)
    step = dt * k3
    k4 = -4.0 * (step * step + 2.0 * x * step + rr) ** (0.5 * beta)
    lag = np.flatnonzero(dt < tau)
    x += dt * (k1 + 2.0 * (k2 + k3) + k4) / 6.0
    for i in lag.tolist():
        x[i] = _halfstep_w(float(x[i]), float(b[i]), float(tau - dt[i]), beta)


def _fan_fractional(incr, dt, y0: float, hurst: float, stride: int) -> np.ndarray:
    """Suffix images under the fractional drift legs (no telescoping;
    the RK4 half-steps are kept identical to the Trace recursion)."""
    beta = 1.0 - 1.0 / (2.0 * hurst)
    m = len(incr)
    size = (m + stride - 1) // stride
    x = np.empty(size)
    b = np.empty(size)
    n = 0
    lift_cache: dict[float, float] = {}
    incr = incr.tolist()
    dt = dt.tolist()
    for k in range(m):
        h = dt[k]
        xs, bs = x[:n], b[:n]
        if beta == 0.0:
            xs -= 2.0 * h
        else:
            _halfstep_w_fan(xs, bs, 0.5 * h, beta)
        if k % stride == 0:
            # fresh point gets its own first half leg, cached per step size
            lifted = lift_cache.get(h)
            if lifted is None:
                lifted = (-y0 * y0 - 2.0 * h if beta == 0.0
                          else _halfstep_w(-y0 * y0, 0.0, 0.5 * h, beta))
                lift_cache[h] = lifted
            x[n] = lifted
            b[n] = 0.0
            n += 1
            xs, bs = x[:n], b[:n]
        z = sqrt_h(xs + 1j * bs)
        z += incr[k]
        np.multiply(z.real, z.real, out=xs)
        xs -= z.imag * z.imag
        np.multiply(z.real, z.imag, out=bs)
        bs *= 2.0
        if beta == 0.0:
            xs -= 2.0 * h
        else:
            _halfstep_w_fan(xs, bs, 0.5 * h, beta)
    out = sqrt_h(x[:n] + 1j * b[:n])
    return out


def draw_curve(path: DrivingPath, y0: float, kappa: float | None = None,
               samples: int = 4096) -> np.ndarray:
    """Final-time picture of the curve the flow draws along ``path``.

    The Trace follows one launch point through prefix compositions of the
    step maps; this follows the *drawing*: every ``stride`` steps the current
    driving position (lifted off the axis by its half leg) is injected into a
    fan of points, and each subsequent step map is applied to the whole fan.
    The result is the set of suffix-composition images at the final time,
    ordered along the curve, at most ``samples`` of them.  Box-counting this
    set is what exposes the kappa dependence of the fractal dimension; the
    recorded Trace polyline does not carry it.

    Bare (unscaled) paths are scaled by the spec's factor first, matching
    :func:`run_standard`.
    """
    if not y0 > 0.0:
        raise ValueError("launch height y0 must be positive")
    if samples < 2:
        raise ValueError("need at least two curve samples")
    spec = path.spec
    if path.scaled:
        vals = path.values
    elif spec.kind == "bm" and kappa is not None:
        vals = path.values * math.sqrt(kappa)
    else:
        vals = path.values * scale_factor(spec)
    incr = np.diff(vals)
    stride = max(1, len(incr) // int(samples))
    if spec.kind == "fbm" and spec.hurst != 0.5:
        return _fan_fractional(incr, path.mesh.dt, y0, spec.hurst, stride)
    return _fan_slit(incr, path.mesh.dt, y0, stride)


def simulate_curve(spec: DrivingSpec, schedule: FidelitySchedule, stream: int = 0,
                   samples: int = 4096) -> np.ndarray:
    """Sample a driving path and return its drawn curve at the final time."""
    path = sample_driving(spec, schedule.mesh(), stream)
    return draw_curve(path, schedule.y0, samples=samples)


def dense_points(trace: Trace, factor: int) -> Trace:
    """Evaluate the continuous interpolant of a standard trace between steps.

    The splitting step has a closed-form interpolant: with Z = Z_k,
    S1 = sqrt_h(Z^2 - 2h) + sqrt(kappa) dB_k and tau = t - t_k,

        Z(t) = sqrt_h(Z^2 - 2 tau) + sqrt_h(S1^2 - 2 tau) - S1
               + sqrt(kappa) B_[t_k, t],

    which hits Z_k and Z_{k+1} at the cell ends.  The Brownian values inside
    the cell come from bridge refinement of the trace's own driving path, so
    the returned trace is a genuine refinement (coarse points are reused).
    """
    if trace.spec.kind != "bm" or trace.shifted:
        raise ValueError("dense output is defined for unshifted standard traces")
    fine = refine_bm(trace.driving, factor)
    r = int(factor)
    sk = scale_factor(trace.spec)
    t = fine.mesh.t
    vals = fine.values
    out = np.empty(len(t), dtype=complex)
    out[0::r] = trace.points
    for k in range(trace.schedule.steps):
        z = complex(trace.points[k])
        h = float(trace.times[k + 1] - trace.times[k])
        s1 = sqrt_h(z * z - 2.0 * h) + sk * (vals[(k + 1) * r] - vals[k * r])
        for j in range(1, r):
            i = k * r + j
            tau = float(t[i] - trace.times[k])
            bpart = sk * (vals[i] - vals[k * r])
            out[i] = (sqrt_h(z * z - 2.0 * tau)
                      + sqrt_h(s1 * s1 - 2.0 * tau) - s1 + bpart)
    return replace(trace, times=t, points=out, driving=fine, records=None)
