"""Engine contracts: step algebra, variants, reductions, the drawn curve."""
import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slesplit.driving import DrivingPath, DrivingSpec, Mesh, sample_driving
from slesplit.halfplane import sqrt_h
from slesplit.splitting import (
    FidelitySchedule,
    SingularityError,
    Trace,
    dense_points,
    draw_curve,
    fsle_halfstep,
    run_standard,
    simulate,
    simulate_curve,
    simulate_fsle,
    simulate_nrsle,
    simulate_sle,
    sle_step,
)

from conftest import ulp_diff_complex


def zero_path(steps: int, horizon: float = 1.0) -> DrivingPath:
    mesh = Mesh.uniform(horizon, steps)
    return DrivingPath(mesh, np.zeros(len(mesh.t)), DrivingSpec("bm", kappa=0.0))


# ---------------------------------------------------------------------------
# Schedules


def test_theory_schedule():
    s = FidelitySchedule.theory(4, horizon=1.0)
    assert s.y0 == 0.5
    assert s.steps == 17 ** 3
    assert s.theory_n == 4
    assert s.mesh().n_steps == s.steps


def test_practical_schedule_and_validation():
    s = FidelitySchedule.practical(128, 0.01, horizon=2.0)
    assert (s.steps, s.y0, s.horizon) == (128, 0.01, 2.0)
    with pytest.raises(ValueError):
        FidelitySchedule.practical(0, 0.01)
    with pytest.raises(ValueError):
        FidelitySchedule.practical(16, 0.0)
    with pytest.raises(ValueError):
        FidelitySchedule.practical(16, 0.01, horizon=-1.0)
    with pytest.raises(ValueError):
        FidelitySchedule.theory(0)


# ---------------------------------------------------------------------------
# One step


def test_sle_step_frozen_value():
    # checked against a 40-digit evaluation of the same composition
    v = sle_step(1.0j, 0.5, 0.5, 4.0)
    assert v == complex(0.8555996771673522, 1.6528916502810695)


def test_sle_step_validation():
    with pytest.raises(ValueError):
        sle_step(1.0j, 0.0, 0.1, 2.0)
    with pytest.raises(ValueError):
        sle_step(1.0 - 1e-12j, 0.1, 0.1, 2.0)


@given(st.floats(min_value=-5.0, max_value=5.0),
       st.floats(min_value=1e-6, max_value=5.0),
       st.floats(min_value=1e-9, max_value=0.25),
       st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=0.0, max_value=16.0))
def test_step_square_identity(re, im, h, db, kappa):
    # Z'^2 + 2h = (sqrt_h(Z^2 - 2h) + sqrt(kappa) db)^2 is exact algebra;
    # numerically it holds to a few ulp because only squares and roots enter
    z = complex(re, im)
    out = sle_step(z, h, db, kappa)
    w = sqrt_h(z * z - 2.0 * h) + math.sqrt(kappa) * db
    assert ulp_diff_complex(out * out + 2.0 * h, w * w) <= 8.0


@given(st.floats(min_value=-5.0, max_value=5.0),
       st.floats(min_value=1e-6, max_value=5.0),
       st.floats(min_value=1e-9, max_value=0.25),
       st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=0.0, max_value=16.0))
def test_step_keeps_height(re, im, h, db, kappa):
    z = complex(re, im)
    assert sle_step(z, h, db, kappa).imag >= z.imag


# ---------------------------------------------------------------------------
# Standard runs


def test_zero_noise_matches_slit_growth():
    y0 = 0.25
    tr = run_standard(zero_path(256), y0)
    target = 1j * np.sqrt(y0 * y0 + 4.0 * tr.times)
    rel = np.abs(tr.points - target) / np.abs(target)
    assert float(rel.max()) < 1e-12


def test_scaled_and_unscaled_paths_agree_bitwise():
    spec = DrivingSpec("bm", kappa=3.0, seed=5)
    path = sample_driving(spec, Mesh.uniform(1.0, 128), stream=2)
    a = run_standard(path, 0.05)
    b = run_standard(path.driving_force(), 0.05)
    assert np.array_equal(a.points, b.points)


def test_explicit_kappa_overrides_spec():
    path = sample_driving(DrivingSpec("bm", kappa=1.0, seed=5),
                          Mesh.uniform(1.0, 64))
    a = run_standard(path, 0.05, kappa=4.0)
    direct = sample_driving(DrivingSpec("bm", kappa=4.0, seed=5),
                            Mesh.uniform(1.0, 64))
    b = run_standard(direct, 0.05)
    assert np.array_equal(a.points, b.points)
    assert a.spec.kappa == 4.0


def test_step_records_audit_the_identity():
    spec = DrivingSpec("bm", kappa=2.0, seed=1)
    tr = simulate_sle(spec, FidelitySchedule.practical(64, 0.1),
                      keep_records=True)
    assert len(tr.records) == 64
    h = 1.0 / 64.0
    for rec in tr.records[:16]:
        assert rec.half == sqrt_h(rec.pre * rec.pre - 2.0 * h)
        lhs = rec.post * rec.post + 2.0 * h
        rhs = (rec.half + rec.increment) ** 2
        assert ulp_diff_complex(lhs, rhs) <= 8.0


def test_imaginary_part_monotone_and_above_launch():
    for stream in range(8):
        spec = DrivingSpec("bm", kappa=6.0, seed=7)
        tr = simulate_sle(spec, FidelitySchedule.practical(512, 0.02),
                          stream=stream)
        im = tr.points.imag
        assert np.all(np.diff(im) >= 0.0)
        assert np.all(im >= 0.02)


def test_shift_moves_every_point_by_terminal_driving():
    spec = DrivingSpec("bm", kappa=2.0, seed=3)
    sched = FidelitySchedule.practical(64, 0.1)
    plain = simulate_sle(spec, sched, stream=1)
    moved = simulate_sle(spec, sched, stream=1, shift=True)
    delta = math.sqrt(2.0) * plain.driving.values[-1]
    assert moved.shifted
    assert np.allclose(moved.points, plain.points + delta, rtol=0, atol=0)


def test_run_standard_validation():
    with pytest.raises(ValueError):
        run_standard(zero_path(4), 0.0)


# ---------------------------------------------------------------------------
# Variant dispatch and reductions


def test_nrsle_p_zero_is_sle_bitwise():
    sched = FidelitySchedule.practical(128, 0.05)
    a = simulate_sle(DrivingSpec("bm", kappa=3.0, seed=2), sched, stream=1)
    b = simulate_nrsle(DrivingSpec("nrbm", kappa=3.0, p=0.0, seed=2), sched,
                       stream=1)
    assert np.array_equal(a.points, b.points)


def test_fsle_half_is_sle_bitwise():
    sched = FidelitySchedule.practical(128, 0.05)
    a = simulate_sle(DrivingSpec("bm", kappa=3.0, seed=2), sched, stream=1)
    b = simulate_fsle(DrivingSpec("fbm", kappa=3.0, hurst=0.5, seed=2), sched,
                      stream=1)
    assert np.array_equal(a.points, b.points)


def test_simulate_dispatch_and_kind_checks():
    sched = FidelitySchedule.practical(32, 0.1)
    assert simulate(DrivingSpec("bm", kappa=2.0), sched).spec.kind == "bm"
    assert simulate(DrivingSpec("nrbm", kappa=2.0, p=0.1), sched).spec.kind == "nrbm"
    assert simulate(DrivingSpec("fbm", kappa=2.0, hurst=0.6), sched).spec.kind == "fbm"
    with pytest.raises(ValueError):
        simulate_sle(DrivingSpec("fbm", kappa=2.0, hurst=0.6), sched)
    with pytest.raises(ValueError):
        simulate_nrsle(DrivingSpec("bm", kappa=2.0), sched)
    with pytest.raises(ValueError):
        simulate_fsle(DrivingSpec("bm", kappa=2.0), sched)
    with pytest.raises(ValueError):
        simulate(DrivingSpec("fbm", kappa=2.0, hurst=0.6), sched, shift=True)


def test_fsle_smoother_driving_completes():
    # high Hurst, moderate kappa: valid trace with strictly rising height
    spec = DrivingSpec("fbm", kappa=3.0, hurst=0.8, seed=4)
    tr = simulate_fsle(spec, FidelitySchedule.practical(256, 0.05))
    assert np.all(np.isfinite(tr.points))
    assert np.all(np.diff(tr.points.imag) >= 0.0)


# ---------------------------------------------------------------------------
# Fractional half-step


def test_fractional_halfstep_matches_closed_form_on_the_axis():
    # on b = 0, x < 0 the flow is d|x|/dt = 4 |x|^beta, solvable in closed
    # form: |x(t)|^(1-beta) = |x0|^(1-beta) + 4 (1-beta) t
    for hurst in (0.25, 0.4, 0.7):
        beta = 1.0 - 1.0 / (2.0 * hurst)
        x0 = -0.5
        h = 0.01
        z0 = sqrt_h(complex(x0, 0.0))  # lift to the half-plane state
        out = fsle_halfstep(z0, h, hurst)
        mag = (abs(x0) ** (1.0 - beta) + 4.0 * (1.0 - beta) * 0.5 * h) \
            ** (1.0 / (1.0 - beta))
        target = sqrt_h(complex(-mag, 0.0))
        assert abs(out - target) < 1e-10


def test_fractional_halfstep_half_is_exact_translation():
    z = 0.3 + 0.8j
    h = 0.05
    assert fsle_halfstep(z, h, 0.5) == sqrt_h(z * z - 2.0 * h)


def test_fractional_halfstep_freezes_imaginary_part_of_square():
    z = 0.4 + 1.1j
    out = fsle_halfstep(z, 0.02, 0.7)
    assert abs((out * out).imag - (z * z).imag) < 1e-12


def test_fractional_halfstep_validation():
    with pytest.raises(ValueError):
        fsle_halfstep(1.0j, 0.0, 0.7)
    with pytest.raises(ValueError):
        fsle_halfstep(1.0j, 0.1, 1.0)
    with pytest.raises(ValueError):
        fsle_halfstep(0.5 + 0.0j, 0.1, 0.7)
    with pytest.raises(SingularityError):
        fsle_halfstep(1e-9j, 0.1, 0.7)


def test_fsle_singularity_reports_step_and_time():
    # a launch height below the floor trips on the very first half-step, and
    # the driver attaches where it happened
    spec = DrivingSpec("fbm", kappa=1.0, hurst=0.25, seed=0)
    sched = FidelitySchedule.practical(4, 1e-9)
    with pytest.raises(SingularityError) as exc:
        simulate_fsle(spec, sched)
    assert exc.value.step == 0
    assert exc.value.t == 0.0


# ---------------------------------------------------------------------------
# Dense interpolant


def test_dense_points_refines_without_moving_knots():
    spec = DrivingSpec("bm", kappa=2.0, seed=6)
    tr = simulate_sle(spec, FidelitySchedule.practical(32, 0.1))
    fine = dense_points(tr, 4)
    assert len(fine.points) == 4 * 32 + 1
    assert np.allclose(np.diff(fine.times), 1.0 / 128.0)
    assert np.array_equal(fine.points[::4], tr.points)
    assert np.all(fine.points.imag > 0.0)


def test_dense_points_interpolant_is_continuous_at_cell_ends():
    # the closed form hits Z_{k+1} as tau -> h; evaluate just inside
    spec = DrivingSpec("bm", kappa=4.0, seed=9)
    tr = simulate_sle(spec, FidelitySchedule.practical(16, 0.2))
    fine = dense_points(tr, 64)
    jumps = np.abs(np.diff(fine.points))
    assert float(jumps.max()) < 0.2   # no teleporting between substeps


def test_dense_points_rejects_variants_and_shifted():
    sched = FidelitySchedule.practical(16, 0.1)
    fr = simulate_fsle(DrivingSpec("fbm", kappa=2.0, hurst=0.6, seed=0), sched)
    with pytest.raises(ValueError):
        dense_points(fr, 2)
    sh = simulate_sle(DrivingSpec("bm", kappa=2.0, seed=0), sched, shift=True)
    with pytest.raises(ValueError):
        dense_points(sh, 2)


# ---------------------------------------------------------------------------
# The drawn curve (final-time fan)


def test_curve_zero_noise_closed_form():
    # with no noise the point injected at t_k flows to i sqrt(y0^2 + 4(T-t_k))
    y0 = 0.125
    M = 256
    path = zero_path(M)
    fan = draw_curve(path, y0, samples=64)
    stride = M // 64
    tk = path.mesh.t[:-1][::stride]
    target = 1j * np.sqrt(y0 * y0 + 4.0 * (1.0 - tk))
    assert float(np.abs(fan - target).max()) < 1e-12


def test_curve_first_point_is_trace_endpoint():
    # the earliest injected point rides every step map, so it reproduces the
    # recorded endpoint up to the telescoped-root rearrangement
    spec = DrivingSpec("bm", kappa=4.0, seed=8)
    sched = FidelitySchedule.practical(1024, 0.03)
    tr = simulate_sle(spec, sched, stream=3)
    fan = simulate_curve(spec, sched, stream=3, samples=4)
    assert abs(fan[0] - tr.points[-1]) < 1e-9 * max(1.0, abs(tr.points[-1]))


def test_curve_fractional_first_point_is_trace_endpoint():
    spec = DrivingSpec("fbm", kappa=3.0, hurst=0.7, seed=8)
    sched = FidelitySchedule.practical(128, 0.05)
    tr = simulate_fsle(spec, sched, stream=1)
    fan = simulate_curve(spec, sched, stream=1, samples=4)
    assert abs(fan[0] - tr.points[-1]) < 1e-9


def test_curve_deterministic_and_in_upper_halfplane():
    spec = DrivingSpec("bm", kappa=6.0, seed=1)
    sched = FidelitySchedule.practical(2048, 0.02)
    a = simulate_curve(spec, sched, samples=256)
    b = simulate_curve(spec, sched, samples=256)
    assert np.array_equal(a, b)
    assert np.all(a.imag > 0.0)
    assert len(a) == 256


def test_curve_fbm_half_matches_bm_fan_bitwise():
    mesh = Mesh.uniform(1.0, 512)
    a = draw_curve(sample_driving(DrivingSpec("bm", kappa=3.0, seed=2), mesh),
                   0.05, samples=64)
    b = draw_curve(sample_driving(DrivingSpec("fbm", kappa=3.0, hurst=0.5,
                                              seed=2), mesh),
                   0.05, samples=64)
    assert np.array_equal(a, b)


def test_curve_scaled_path_and_explicit_kappa_agree():
    path = sample_driving(DrivingSpec("bm", kappa=5.0, seed=4),
                          Mesh.uniform(1.0, 256))
    a = draw_curve(path, 0.05, samples=32)
    b = draw_curve(path.driving_force(), 0.05, samples=32)
    c = draw_curve(path, 0.05, kappa=5.0, samples=32)
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)


def test_curve_slit_fan_matches_scalar_composition():
    # brute-force suffix composition with scalar steps, small case
    y0 = 0.2
    M, S = 32, 8
    spec = DrivingSpec("bm", kappa=2.0, seed=3)
    path = sample_driving(spec, Mesh.uniform(1.0, M))
    fan = draw_curve(path, y0, samples=S)
    incr = np.diff(path.values * math.sqrt(2.0))
    h = 1.0 / M
    stride = M // S
    for idx, k in enumerate(range(0, M, stride)):
        z = complex(0.0, y0)
        z = sqrt_h(z * z - 2.0 * h)          # own first half leg
        for j in range(k, M):
            if j > k:
                z = sqrt_h(z * z - 2.0 * h)
            z += incr[j]
            z = sqrt_h(z * z - 2.0 * h)
        assert abs(fan[idx] - z) < 1e-11


def test_curve_fractional_fan_matches_scalar_composition():
    y0 = 0.2
    M, S = 32, 8
    hurst = 0.7
    spec = DrivingSpec("fbm", kappa=2.0, hurst=hurst, seed=3)
    path = sample_driving(spec, Mesh.uniform(1.0, M))
    fan = draw_curve(path, y0, samples=S)
    incr = np.diff(path.values * 2.0 ** hurst)
    h = 1.0 / M
    stride = M // S
    for idx, k in enumerate(range(0, M, stride)):
        z = fsle_halfstep(complex(0.0, y0), h, hurst)
        for j in range(k, M):
            if j > k:
                z = fsle_halfstep(z, h, hurst)
            z += incr[j]
            z = fsle_halfstep(z, h, hurst)
        assert abs(fan[idx] - z) < 1e-9


def test_curve_validation():
    path = sample_driving(DrivingSpec("bm", kappa=2.0, seed=0),
                          Mesh.uniform(1.0, 16))
    with pytest.raises(ValueError):
        draw_curve(path, 0.0)
    with pytest.raises(ValueError):
        draw_curve(path, 0.1, samples=1)


def test_curve_size_follows_stride():
    path = sample_driving(DrivingSpec("bm", kappa=2.0, seed=0),
                          Mesh.uniform(1.0, 100))
    fan = draw_curve(path, 0.1, samples=16)
    stride = 100 // 16
    assert len(fan) == math.ceil(100 / stride)
    # more samples than steps: every step injects
    assert len(draw_curve(path, 0.1, samples=1000)) == 100
