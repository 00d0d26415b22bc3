"""Driving processes on a time mesh.

Three sources of noise feed the Loewner engines:

* standard Brownian motion,
* noise-reinforced Brownian motion  B^p_t = t^p \\int_0^t s^{-p} dB_s,
  with reinforcement strength p < 1/2 (negative p penalises),
* fractional Brownian motion with Hurst index H in (0, 1) and covariance
  (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.

All samplers are exact in law on the mesh (no stepping error enters through
the noise) and are pure functions of (mesh, parameters, seed, stream): the
stream index isolates paths of an ensemble so that batch size and worker
count can never change a single path.  Values are raw process samples; the
driving force fed to an engine is the scaled process sqrt(kappa) * B (or
kappa^H * B^H), tracked by the ``scaled`` flag.

The noise-reinforced sampler uses the time change that makes the law exact:
B^p_t  =  (1 - 2p)^{-1/2} t^p W(t^{1-2p})  for a standard BM W, giving
Cov(B^p_s, B^p_t) = (1-2p)^{-1} s^{1-p} t^p for s <= t.  The companion SDE
sampler integrates  dB^p_t = (p/t) B^p_t dt + dB_t  by Euler from the first
mesh point (whose value is drawn from the exact law) and exists to validate
the time change, not to be used in anger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "P_MIN",
    "Mesh",
    "DrivingSpec",
    "DrivingPath",
    "FbmSynthesisError",
    "path_rng",
    "scale_factor",
    "sample_bm",
    "sample_bm_many",
    "refine_bm",
    "sample_fbm",
    "sample_nrbm_exact",
    "sample_nrbm_exact_many",
    "sample_nrbm_sde",
    "sample_nrbm_sde_many",
    "sample_driving",
    "power_interpolate",
]

# reinforcement strengths below this overflow the time change on desk-scale
# meshes long before they become statistically interesting
P_MIN = -10.0

_KINDS = ("bm", "nrbm", "fbm")


class FbmSynthesisError(ValueError):
    """Raised when the fBM covariance is numerically non-PSD on the mesh."""


def path_rng(seed: int, stream: int = 0, kind: int = 0, level: int = 0) -> np.random.Generator:
    """Counter-based generator for one path-shaped draw.

    ``kind`` 0 is a base sample, 1 a bridge-refinement pass at dyadic
    ``level``.  The full tuple keys the Philox counter, so every (seed,
    stream, kind, level) combination is an independent, reproducible stream.
    """
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence((int(seed), int(stream), int(kind), int(level)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Strictly increasing time grid starting at 0."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("mesh needs at least two time points")
        if t[0] != 0.0:
            raise ValueError("mesh must start at t = 0")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("mesh times must be strictly increasing")
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "Mesh":
        if horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if steps < 1:
            raise ValueError("need at least one step")
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def mesh_size(self) -> float:
        return float(self.dt.max())

    def halved(self) -> "Mesh":
        """Mesh with every cell split at its midpoint."""
        t = self.t
        out = np.empty(2 * len(t) - 1)
        out[0::2] = t
        out[1::2] = 0.5 * (t[:-1] + t[1:])
        return Mesh(out)


@dataclass(frozen=True)
class DrivingSpec:
    """What to sample and how to scale it.

    kind   one of "bm", "nrbm", "fbm"
    kappa  diffusivity of the Loewner driving force sqrt(kappa) B
    p      reinforcement strength (nrbm only), P_MIN < p < 1/2
    hurst  Hurst index (fbm only), 0 < H < 1
    seed   master seed; per-path streams are derived from it
    """

    kind: str = "bm"
    kappa: float = 0.0
    p: float = 0.0
    hurst: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown driving kind {self.kind!r}")
        if self.kappa < 0.0:
            raise ValueError("kappa must be >= 0")
        if self.kind == "nrbm" and not (P_MIN < self.p < 0.5):
            raise ValueError("reinforcement strength must be < 1/2 "
                             f"(and > {P_MIN:g}); got p = {self.p:g}")
        if self.kind == "fbm" and not (0.0 < self.hurst < 1.0):
            raise ValueError("Hurst index must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def scale_factor(spec: DrivingSpec) -> float:
    """Multiplier turning raw samples into the driving force.

    kappa^H for fractional driving, sqrt(kappa) otherwise; the H = 1/2 case
    goes through sqrt too, so the reduction to standard driving is bitwise
    (pow need not round identically to sqrt).
    """
    if spec.kind == "fbm" and spec.hurst != 0.5:
        return spec.kappa ** spec.hurst
    return math.sqrt(spec.kappa)


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """Sampled path of a driving process on a mesh.

    ``scaled`` records whether values carry the kappa factor already;
    ``refine_level`` counts bridge-refinement passes applied so far (the
    refinement streams are keyed by it).
    """

    mesh: Mesh
    values: np.ndarray
    spec: DrivingSpec
    stream: int = 0
    scaled: bool = False
    refine_level: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.mesh.t.shape:
            raise ValueError("values must align with the mesh")
        if v[0] != 0.0:
            raise ValueError("driving paths start at 0")
        object.__setattr__(self, "values", v)

    def driving_force(self) -> "DrivingPath":
        """The scaled path sqrt(kappa) B (or kappa^H B^H)."""
        if self.scaled:
            return self
        return replace(self, values=self.values * scale_factor(self.spec),
                       scaled=True)


# ---------------------------------------------------------------------------
# Brownian motion and bridge refinement


def sample_bm(mesh: Mesh, seed: int, stream: int = 0) -> DrivingPath:
    """Standard Brownian motion, exact on the mesh."""
    z = path_rng(seed, stream).standard_normal(mesh.n_steps)
    values = np.empty(len(mesh.t))
    values[0] = 0.0
    np.cumsum(np.sqrt(mesh.dt) * z, out=values[1:])
    return DrivingPath(mesh, values, DrivingSpec("bm", seed=seed), stream=stream)


def sample_bm_many(mesh: Mesh, seed: int, n_paths: int) -> np.ndarray:
    """(n_paths, len(mesh)) matrix of BM values, path i on stream i.

    Row i is bitwise the same as ``sample_bm(mesh, seed, stream=i).values``.
    """
    sdt = np.sqrt(mesh.dt)
    out = np.empty((n_paths, len(mesh.t)))
    out[:, 0] = 0.0
    for i in range(n_paths):
        z = path_rng(seed, i).standard_normal(mesh.n_steps)
        np.cumsum(sdt * z, out=out[i, 1:])
    return out


def refine_bm(path: DrivingPath, factor: int) -> DrivingPath:
    """Brownian-bridge midpoint refinement by a dyadic factor.

    Existing mesh points keep their values bit-exactly; each pass inserts
    conditionally correct midpoints, N((a+b)/2, h/4) over a cell of width h.
    Successive passes use streams keyed by the running refinement level, so
    refine(refine(p, 2), 2) and refine(p, 4) agree bitwise.
    """
    if path.spec.kind != "bm":
        raise ValueError("bridge refinement is defined for BM paths only")
    f = int(factor)
    if f < 1 or f & (f - 1):
        raise ValueError("refinement factor must be a power of two")
    out = path
    while f > 1:
        rng = path_rng(out.spec.seed, out.stream, kind=1, level=out.refine_level)
        mesh = out.mesh.halved()
        v = np.empty(len(mesh.t))
        v[0::2] = out.values
        mid = 0.5 * (out.values[:-1] + out.values[1:])
        v[1::2] = mid + np.sqrt(0.25 * out.mesh.dt) * rng.standard_normal(out.mesh.n_steps)
        out = replace(out, mesh=mesh, values=v, refine_level=out.refine_level + 1)
        f //= 2
    return out


# ---------------------------------------------------------------------------
# Fractional Brownian motion

_CHOL_CACHE: dict = {}
_CHOL_LIMIT = 2048  # dense factor only for small meshes; Hosking beyond


def _fbm_cov(s: np.ndarray, t: np.ndarray, hurst: float) -> np.ndarray:
    h2 = 2.0 * hurst
    return 0.5 * (s ** h2 + t ** h2 - np.abs(t - s) ** h2)


def _fgn_gamma(n: int, dt: float, hurst: float) -> np.ndarray:
    """Autocovariance of the stationary increment sequence on a uniform mesh."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * dt ** h2 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def _fgn_hosking(gamma: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Exact stationary Gaussian sequence via the Durbin-Levinson recursion.

    O(n^2) time, O(n) memory; fails loudly if the running innovation
    variance turns non-positive (covariance numerically non-PSD).
    """
    n = len(z)
    x = np.empty(n)
    x[0] = math.sqrt(gamma[0]) * z[0]
    if n == 1:
        return x
    phi = np.empty(n - 1)
    v = gamma[0]
    for k in range(1, n):
        if k == 1:
            rho = gamma[1] / gamma[0]
        else:
            rho = (gamma[k] - phi[:k - 1] @ gamma[k - 1:0:-1]) / v
            phi[:k - 1] -= rho * phi[k - 2::-1]
        phi[k - 1] = rho
        v *= 1.0 - rho * rho
        if not v > 0.0:
            raise FbmSynthesisError(
                "fBM increment covariance is numerically non-PSD on this mesh "
                "(Hurst index too close to 1 for the mesh length)")
        x[k] = phi[:k] @ x[k - 1::-1] + math.sqrt(v) * z[k]
    return x


def _increment_chol(mesh: Mesh, hurst: float) -> np.ndarray:
    key = (mesh.t.tobytes(), hurst)
    L = _CHOL_CACHE.get(key)
    if L is None:
        t1 = mesh.t[1:]
        a, b = np.meshgrid(t1, t1, indexing="ij")
        c = _fbm_cov(a, b, hurst)
        a0, b0 = np.meshgrid(mesh.t[:-1], mesh.t[:-1], indexing="ij")
        cov = (c - _fbm_cov(a, b0, hurst) - _fbm_cov(a0, b, hurst)
               + _fbm_cov(a0, b0, hurst))
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise FbmSynthesisError(
                "fBM increment covariance is numerically non-PSD on this mesh "
                "(Hurst index too close to 1 for the mesh length)") from exc
        _CHOL_CACHE[key] = L
    return L


def sample_fbm(mesh: Mesh, hurst: float, seed: int, stream: int = 0) -> DrivingPath:
    """Fractional Brownian motion, exact in law on the mesh.

    Small meshes go through a cached Cholesky factor of the increment
    covariance; longer uniform meshes use the Hosking recursion (same law,
    O(n) memory).  Non-uniform meshes beyond the dense limit are refused
    rather than approximated.  H = 1/2 short-circuits to independent
    increments, bitwise the same as :func:`sample_bm` on the shared draw.
    """
    if not (0.0 < hurst < 1.0):
        raise ValueError("Hurst index must lie in (0, 1)")
    n = mesh.n_steps
    z = path_rng(seed, stream).standard_normal(n)
    uniform = np.allclose(mesh.dt, mesh.dt[0], rtol=1e-12, atol=0.0)
    if hurst == 0.5:
        incr = np.sqrt(mesh.dt) * z
    elif n <= _CHOL_LIMIT:
        incr = _increment_chol(mesh, hurst) @ z
    elif uniform:
        incr = _fgn_hosking(_fgn_gamma(n, float(mesh.dt[0]), hurst), z)
    else:
        raise ValueError(
            f"non-uniform fBM meshes are limited to {_CHOL_LIMIT} steps")
    values = np.empty(len(mesh.t))
    values[0] = 0.0
    np.cumsum(incr, out=values[1:])
    return DrivingPath(mesh, values, DrivingSpec("fbm", hurst=hurst, seed=seed),
                       stream=stream)


# ---------------------------------------------------------------------------
# Noise-reinforced Brownian motion


def _check_p(p: float):
    if not (P_MIN < p < 0.5):
        raise ValueError("reinforcement strength must be < 1/2 "
                         f"(and > {P_MIN:g}); got p = {p:g}")


def sample_nrbm_exact(mesh: Mesh, p: float, seed: int, stream: int = 0) -> DrivingPath:
    """Noise-reinforced BM through the exact time change.

    At p = 0 the formula collapses to standard BM and the draws line up
    increment for increment, so the reduction is bitwise, not just in law.
    """
    _check_p(p)
    z = path_rng(seed, stream).standard_normal(mesh.n_steps)
    values = np.empty(len(mesh.t))
    values[0] = 0.0
    if p == 0.0:
        np.cumsum(np.sqrt(mesh.dt) * z, out=values[1:])
    else:
        u = mesh.t ** (1.0 - 2.0 * p)
        w = np.cumsum(np.sqrt(np.diff(u)) * z)
        values[1:] = (1.0 - 2.0 * p) ** -0.5 * mesh.t[1:] ** p * w
    return DrivingPath(mesh, values, DrivingSpec("nrbm", p=p, seed=seed),
                       stream=stream)


def sample_nrbm_exact_many(mesh: Mesh, p: float, seed: int, n_paths: int) -> np.ndarray:
    """(n_paths, len(mesh)) matrix of exact nrBM values, path i on stream i."""
    _check_p(p)
    out = np.empty((n_paths, len(mesh.t)))
    for i in range(n_paths):
        out[i] = sample_nrbm_exact(mesh, p, seed, stream=i).values
    return out


def sample_nrbm_sde(mesh: Mesh, p: float, seed: int, stream: int = 0) -> DrivingPath:
    """One-step integration of dB^p = (p/t) B^p dt + dB.

    The drift blows up at t = 0, so the first mesh value is drawn from the
    exact law and stepping starts from there.  Within a cell the drift's
    deterministic factor is applied exactly,

        B_{k+1} = (t_{k+1}/t_k)^p B_k + sigma_k z_k,

    with the noise variance sigma_k^2 = h (t_{k+1}/t_mid)^{2p} from the
    midpoint of the damping coefficient over the cell.  Plain left-point
    Euler leaves a covariance bias of several percent at desk meshes for p
    near 1/2, and even the exact propagator with raw sqrt(h) noise keeps a
    2-3% bias from the early cells, where the coefficient moves by orders
    of magnitude; the midpoint rule knocks that down an order without
    collapsing into the exact sampler.  At p = 0 the propagator and the
    noise factor are exactly 1 and the path reduces bitwise to the standard
    BM sampler.
    """
    _check_p(p)
    z = path_rng(seed, stream).standard_normal(mesh.n_steps)
    t = mesh.t
    fac = (t[1:] / (0.5 * (t[:-1] + t[1:]))) ** (2.0 * p)
    incr = np.sqrt(mesh.dt * fac) * z
    prop = (t[2:] / t[1:-1]) ** p
    v = np.empty(len(t))
    v[0] = 0.0
    v[1] = math.sqrt(t[1] / (1.0 - 2.0 * p)) * z[0]
    for k in range(1, len(t) - 1):
        v[k + 1] = prop[k - 1] * v[k] + incr[k]
    return DrivingPath(mesh, v, DrivingSpec("nrbm", p=p, seed=seed), stream=stream)


def sample_nrbm_sde_many(mesh: Mesh, p: float, seed: int, n_paths: int) -> np.ndarray:
    """Vectorised SDE ensemble; row i is bitwise the solo stream-i path."""
    _check_p(p)
    t = mesh.t
    zs = np.empty((n_paths, mesh.n_steps))
    for i in range(n_paths):
        zs[i] = path_rng(seed, i).standard_normal(mesh.n_steps)
    fac = (t[1:] / (0.5 * (t[:-1] + t[1:]))) ** (2.0 * p)
    incr = np.sqrt(mesh.dt * fac) * zs
    prop = (t[2:] / t[1:-1]) ** p
    v = np.empty((n_paths, len(t)))
    v[:, 0] = 0.0
    v[:, 1] = math.sqrt(t[1] / (1.0 - 2.0 * p)) * zs[:, 0]
    for k in range(1, len(t) - 1):
        v[:, k + 1] = prop[k - 1] * v[:, k] + incr[:, k]
    return v


# ---------------------------------------------------------------------------


def sample_driving(spec: DrivingSpec, mesh: Mesh, stream: int = 0) -> DrivingPath:
    """Dispatch on spec.kind; returns raw (unscaled) samples."""
    if spec.kind == "bm":
        out = sample_bm(mesh, spec.seed, stream)
    elif spec.kind == "nrbm":
        out = sample_nrbm_exact(mesh, spec.p, spec.seed, stream)
    else:
        out = sample_fbm(mesh, spec.hurst, spec.seed, stream)
    return replace(out, spec=spec)


def power_interpolate(path: DrivingPath, power: float, refine: int) -> DrivingPath:
    """Power-law interpolation of a sampled path onto a refined mesh.

    Within each cell [t_k, t_k + h] the interpolant is

        t  ->  values[k] + ((t - t_k)/h)^power * (values[k+1] - values[k])

    sampled at ``refine`` equal sub-steps per cell.  Mesh points keep their
    values bit-exactly (the endpoints are copied, not recomputed); power = 1
    is linear interpolation and refine = 1 returns the path unchanged.
    """
    if power <= 0.0:
        raise ValueError("interpolation power must be positive")
    r = int(refine)
    if r < 1:
        raise ValueError("refinement must be a positive integer")
    if r == 1:
        return path
    t, v = path.mesh.t, path.values
    h = np.diff(t)
    dv = np.diff(v)
    frac = np.arange(1, r) / r
    w = frac ** power
    n = len(t) - 1
    tt = np.empty(n * r + 1)
    vv = np.empty(n * r + 1)
    tt[0::r] = t
    vv[0::r] = v
    for j in range(1, r):
        tt[j::r] = t[:-1] + frac[j - 1] * h
        vv[j::r] = v[:-1] + w[j - 1] * dv
    return replace(path, mesh=Mesh(tt), values=vv)
