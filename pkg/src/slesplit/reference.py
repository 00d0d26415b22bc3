"""Independent reference solvers used to cross-check the splitting engine.

Three routes, none of which share discretisation machinery with the engine:

* ``euler_reverse``: explicit Euler on dZ = -2/Z dt + d(driving force).
  First order, biased, but structurally unrelated to the splitting.
* ``exact_piecewise_trace``: for piecewise-constant driving the reverse flow
  is solvable in closed form, a composition of zero-centred slit flows and
  jump translations.  On the splitting's own leg structure (driving frozen
  at sqrt(kappa) B_{t_k} on windows [t_k - h/2, t_k + h/2)) this reproduces
  the splitting states with no stepping error at all, which pins the engine
  to the exact flow it claims to compose.
* ``forward_point``: pointwise integration of the forward equation
  dg/dt = 2/(g - lambda(t)) with lambda piecewise linear in the sampled
  driving force, used to study interpolated driving paths.  Points whose
  flow reaches the driving force are swallowed and reported as such.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .driving import DrivingPath, Mesh
from .splitting import FidelitySchedule, Trace

__all__ = [
    "SWALLOW_EPS",
    "EulerCrossingError",
    "SwallowedError",
    "PiecewiseConstantDriving",
    "euler_reverse",
    "exact_piecewise_trace",
    "piecewise_from_path",
    "forward_point",
]

SWALLOW_EPS = 1e-6

_FORWARD_POLICY = 1e-2  # max relative displacement per forward RK4 substep


class EulerCrossingError(ArithmeticError):
    """Euler state left the open upper half-plane."""

    def __init__(self, step: int, t: float):
        super().__init__(f"Euler state crossed into Im <= 0 at step {step} (t = {t:g})")
        self.step = step
        self.t = t


class SwallowedError(ArithmeticError):
    """Forward flow of a point reached the driving force."""

    def __init__(self, t: float):
        super().__init__(f"point swallowed at t = {t:.6g}")
        self.t = t


def _scaled_increments(path: DrivingPath, kappa: float | None) -> np.ndarray:
    if path.scaled:
        return np.diff(path.values)
    if kappa is None:
        raise ValueError("raw driving path needs an explicit kappa")
    return np.diff(path.values * math.sqrt(kappa))


def euler_reverse(z0: complex, path: DrivingPath, kappa: float | None = None) -> Trace:
    """Explicit Euler on the reverse SDE along a sampled driving path.

    The exact flow keeps Im Z increasing; Euler inherits that for any step
    size (the drift tilts upward), but the crossing guard stays in as a
    tripwire against bad inputs.
    """
    if not z0.imag > 0.0:
        raise ValueError("start point must lie in the open upper half-plane")
    incr = _scaled_increments(path, kappa).tolist()
    dt = path.mesh.dt.tolist()
    t = path.mesh.t
    points = np.empty(len(t), dtype=complex)
    z = complex(z0)
    points[0] = z
    for k, (h, c) in enumerate(zip(dt, incr)):
        z = z - 2.0 * h / z + c
        if not z.imag > 0.0:
            raise EulerCrossingError(k, float(t[k + 1]))
        points[k + 1] = z
    sched = FidelitySchedule(horizon=path.mesh.horizon, steps=path.mesh.n_steps,
                             y0=z0.imag)
    return Trace(t, points, path.spec, sched, stream=path.stream)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDriving:
    """Driving force frozen at ``levels[j]`` on [breakpoints[j], breakpoints[j+1])."""

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if bp.ndim != 1 or len(bp) < 2:
            raise ValueError("need at least one interval")
        if not np.all(np.diff(bp) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if lv.shape != (len(bp) - 1,):
            raise ValueError("need one level per interval")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)


def exact_piecewise_trace(z0: complex, driving: PiecewiseConstantDriving) -> Trace:
    """Exact reverse flow under piecewise-constant driving.

    Between jumps the shifted state follows the zero-centred slit flow
    z -> sqrt_h(z^2 - 4 tau); at a jump of the driving force the state
    translates by the jump.  Emitted values at interior breakpoints are the
    left limits.  No stepping error enters anywhere.
    """
    if not z0.imag > 0.0:
        raise ValueError("start point must lie in the open upper half-plane")
    bp = driving.breakpoints
    lv = driving.levels
    points = np.empty(len(bp), dtype=complex)
    z = complex(z0)
    points[0] = z
    csqrt = cmath.sqrt
    for j in range(len(lv)):
        if j:
            z = z + (lv[j] - lv[j - 1])
        tau = bp[j + 1] - bp[j]
        z = csqrt(z * z - 4.0 * tau)
        if z.imag < 0.0:
            z = -z
        points[j + 1] = z
    return Trace(bp.copy(), points, None, None)


def piecewise_from_path(path: DrivingPath, kappa: float | None = None) -> PiecewiseConstantDriving:
    """Window driving equivalent to the splitting on ``path``'s mesh.

    The driving force is frozen at its value sqrt(kappa) B_{t_k} on the
    window [t_k - h/2, t_k + h/2) (clipped to the horizon), so the jumps
    are the splitting's noise translations and the flow between jumps is the
    drift leg.  Windows are split at the mesh points they straddle, so the
    emitted trace contains the mesh times at the even indices.
    """
    if path.scaled:
        v = path.values
    else:
        if kappa is None:
            raise ValueError("raw driving path needs an explicit kappa")
        v = path.values * math.sqrt(kappa)
    t = path.mesh.t
    n = path.mesh.n_steps
    bp = np.empty(2 * n + 1)
    bp[0::2] = t
    bp[1::2] = t[:-1] + 0.5 * path.mesh.dt
    lv = np.empty(2 * n)
    lv[0::2] = v[:-1]
    lv[1::2] = v[1:]
    return PiecewiseConstantDriving(bp, lv)


def forward_point(z0: complex, path: DrivingPath, kappa: float | None = None,
                  eps: float = SWALLOW_EPS) -> complex:
    """Forward Loewner flow of a single point under a sampled driving force.

    Integrates dg/dt = 2/(g - lambda(t)) with lambda piecewise linear
    between the path's mesh values, by classical RK4 with substeps capped
    at 1% relative displacement.  Raises :class:`SwallowedError` when the
    state comes within ``eps`` of the driving force.
    """
    if not z0.imag > 0.0:
        raise ValueError("start point must lie in the open upper half-plane")
    if path.scaled:
        lam = path.values
    else:
        if kappa is None:
            raise ValueError("raw driving path needs an explicit kappa")
        lam = path.values * math.sqrt(kappa)
    t = path.mesh.t
    g = complex(z0)
    for k in range(path.mesh.n_steps):
        t0 = float(t[k])
        h = float(t[k + 1] - t[k])
        l0 = float(lam[k])
        slope = (float(lam[k + 1]) - l0) / h
        tau = 0.0
        guard = 0
        while tau < h:
            d = g - (l0 + slope * tau)
            ad = abs(d)
            if ad < eps:
                raise SwallowedError(t0 + tau)
            dt = min(h - tau, 0.5 * _FORWARD_POLICY * ad * ad)
            k1 = 2.0 / d
            k2 = 2.0 / (g + 0.5 * dt * k1 - (l0 + slope * (tau + 0.5 * dt)))
            k3 = 2.0 / (g + 0.5 * dt * k2 - (l0 + slope * (tau + 0.5 * dt)))
            k4 = 2.0 / (g + dt * k3 - (l0 + slope * (tau + dt)))
            g = g + dt * (k1 + 2.0 * (k2 + k3) + k4) / 6.0
            tau += dt
            guard += 1
            if guard > 1_000_000:
                raise SwallowedError(t0 + tau)
    return g
