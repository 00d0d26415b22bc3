"""Shared test helpers: ulp distances and a deterministic hypothesis profile."""
import numpy as np
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")


def ulp_diff(a: float, b: float) -> float:
    """|a - b| measured in units of the last place of the larger magnitude."""
    if a == b:
        return 0.0
    scale = np.spacing(max(abs(a), abs(b)))
    return abs(a - b) / scale


def ulp_diff_complex(a: complex, b: complex) -> float:
    """Componentwise ulp distance, worst component, shared complex scale.

    A component that is tiny relative to the other axis is compared at the
    ulp of the full magnitude: ulp-accuracy of a complex number does not
    promise componentwise relative accuracy near the axes.
    """
    mag = max(abs(a), abs(b))
    if mag == 0.0:
        return 0.0
    scale = np.spacing(mag)
    return max(abs(a.real - b.real), abs(a.imag - b.imag)) / scale


def max_ulp_arrays(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        return max(ulp_diff_complex(complex(x), complex(y))
                   for x, y in zip(a.ravel(), b.ravel()))
    return max(ulp_diff(float(x), float(y))
               for x, y in zip(a.ravel(), b.ravel()))


