"""Branch convention and inverse pairing of the half-plane building blocks."""
import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slesplit.halfplane import slit_forward, slit_reverse, sqrt_h

from conftest import ulp_diff_complex

finite = st.floats(min_value=-1e6, max_value=1e6,
                   allow_nan=False, allow_infinity=False)


def test_sqrt_h_nonnegative_real():
    assert sqrt_h(4.0) == 2.0 + 0.0j
    assert sqrt_h(0.0) == 0.0 + 0.0j


def test_sqrt_h_negative_real_is_positive_imaginary():
    assert sqrt_h(-4.0) == 2.0j
    # the principal branch alone would give -2j just below the cut
    assert sqrt_h(complex(-4.0, -0.0)).imag == 2.0


def test_sqrt_h_known_values():
    assert abs(sqrt_h(2.0j) - (1.0 + 1.0j)) < 4e-16
    assert abs(sqrt_h(3.0 - 4.0j) - (-2.0 + 1.0j)) < 1e-15   # upper branch


def test_sqrt_h_array_matches_scalar():
    w = np.array([1.0 + 1.0j, -1.0 - 1.0j, -9.0 + 0.0j, 0.25 + 0.0j, -2.0 + 3.0j])
    arr = sqrt_h(w)
    assert arr.dtype == np.complex128
    for wi, ri in zip(w, arr):
        assert complex(ri) == sqrt_h(complex(wi))


@given(st.builds(complex, finite, finite))
def test_sqrt_h_lands_in_closed_upper_halfplane(w):
    assert sqrt_h(w).imag >= 0.0


def test_sqrt_h_squares_back_across_magnitudes():
    rng = np.random.default_rng(1)
    n = 1_000_000
    mag = 10.0 ** rng.uniform(-150.0, 150.0, n)
    ang = rng.uniform(-np.pi, np.pi, n)
    w = mag * np.exp(1j * ang)
    r = sqrt_h(w)
    back = r * r
    rel = np.abs(back - w) / np.abs(w)
    # relative error of one square after one root: 4 ulp is generous
    assert float(rel.max()) <= 4.0 * 2.0 ** -52


@given(st.builds(complex, finite, st.floats(min_value=0.0, max_value=1e6)),
       st.floats(min_value=0.0, max_value=1e6))
def test_sqrt_of_shifted_square_never_loses_height(z, a):
    # Im sqrt_h(z^2 - a) >= Im z for Im z >= 0, a >= 0: the inequality the
    # no-swallowing argument rests on
    lhs = sqrt_h(z * z - a).imag
    assert lhs >= z.imag - 1e-9 * max(1.0, abs(z))


@given(st.builds(complex, st.floats(min_value=-100.0, max_value=100.0),
                 st.floats(min_value=1e-9, max_value=100.0)),
       st.floats(min_value=-50.0, max_value=50.0),
       st.floats(min_value=1e-6, max_value=100.0))
def test_slit_reverse_strictly_raises_interior_points(z, anchor, t):
    # t bounded away from 0 so the height gain ~ 2 t Im z / |z - anchor|^2
    # clears the floating-point spacing and strictness is observable
    assert slit_reverse(z, anchor, t).imag > z.imag


def test_roundtrip_reverse_then_forward_8ulp():
    # 1e5 interior points no closer to the anchor than the slit height; the
    # error is measured at the working scale (the identity degrades, with
    # the conditioning, for points hugging the anchor under a tall slit)
    rng = np.random.default_rng(42)
    n = 100_000
    t = rng.uniform(0.0, 1.0, n)
    r = 2.0 * np.sqrt(t) + rng.uniform(0.0, 4.0, n)
    th = rng.uniform(1e-6, math.pi - 1e-6, n)
    anchor = rng.uniform(-2.0, 2.0, n)
    z = anchor + r * np.exp(1j * th)
    worst = 0.0
    for i in range(n):
        a, ti, zi = float(anchor[i]), float(t[i]), complex(z[i])
        back = slit_forward(slit_reverse(zi, a, ti), a, ti)
        scale = max(abs(zi), abs(zi - a))
        err = max(abs(back.real - zi.real), abs(back.imag - zi.imag))
        worst = max(worst, err / np.spacing(scale))
    assert worst <= 8.0


@given(st.builds(complex, st.floats(min_value=-10.0, max_value=10.0),
                 st.floats(min_value=1e-6, max_value=10.0)))
def test_zero_duration_is_identity(z):
    # identity up to the square/root round trip, not bitwise
    for out, a in ((slit_forward(z, 0.3, 0.0), 0.3),
                   (slit_reverse(z, -1.2, 0.0), -1.2)):
        assert abs(out - z) <= 4.0 * np.spacing(max(abs(z), abs(z - a)))


def test_slit_map_known_values():
    assert abs(slit_forward(1.0j, 0.0, 1.0) - math.sqrt(3.0)) < 1e-15
    assert abs(slit_forward(2.0 + 1.0j, 2.0, 1.0) - (2.0 + math.sqrt(3.0))) < 1e-15
    assert abs(slit_reverse(3.0, 0.0, 1.0) - math.sqrt(5.0)) < 1e-15
    assert abs(slit_reverse(1.0j, 0.0, 1.0) - 1.0j * math.sqrt(5.0)) < 1e-15


def test_slit_forward_tip_lands_on_anchor():
    t = 0.7
    tip = 1.5 + 2.0j * math.sqrt(t)
    # the root halves the exponent of the cancellation residual, so machine
    # epsilon in tip^2 + 4t surfaces as ~1e-8 at the branch point
    assert abs(slit_forward(tip, 1.5, t) - 1.5) < 5e-8


def test_slit_reverse_grows_the_tip_from_the_anchor():
    z = slit_reverse(complex(0.0, 1e-300), 0.0, 0.25)
    assert abs(z - 1.0j) < 1e-12


def test_slit_reverse_matches_ode_flow():
    # integrate dz/dt = -2/z very finely and compare against the closed form
    z = 0.3 + 1.0j
    n = 200000
    h = 0.5 / n
    w = z
    for _ in range(n):
        mid = w - h / w          # midpoint step of dz/dt = -2/z
        w = w - 2.0 * h / mid
    assert abs(w - slit_reverse(z, 0.0, 0.5)) < 1e-9


def test_negative_duration_rejected():
    with pytest.raises(ValueError):
        slit_forward(1.0j, 0.0, -1e-9)
    with pytest.raises(ValueError):
        slit_reverse(1.0j, 0.0, -0.5)


def test_anchor_translation_covariance():
    z = 0.4 + 0.9j
    for a in (-3.0, 0.0, 2.5):
        lhs = slit_forward(z + a, a, 0.3)
        rhs = slit_forward(z, 0.0, 0.3) + a
        assert abs(lhs - rhs) < 1e-12


def test_swallowed_point_stays_in_closed_halfplane():
    # a real point inside the slit's reach has no conformal preimage; the
    # documented behavior is the upper-branch image, not an error
    z = slit_reverse(0.1, 0.0, 1.0)
    assert z.imag >= 0.0


def test_principal_branch_differs_where_it_should():
    w = complex(-2.0, -1e-18)
    assert cmath.sqrt(w).imag < 0.0
    assert sqrt_h(w).imag > 0.0


def test_ulp_helper_sanity():
    assert ulp_diff_complex(1.0 + 1.0j, 1.0 + 1.0j) == 0.0
    assert ulp_diff_complex(1.0 + 0.0j, 1.0 + np.spacing(1.0) * 1j) == 1.0
