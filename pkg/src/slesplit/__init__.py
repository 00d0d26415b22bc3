"""Loewner traces by splitting: simulation, verification, measurement.

The reverse Loewner flow driven by a Brownian-type force is integrated with
a splitting scheme whose drift legs are exact slit maps and whose noise leg
is an exact translation, so one step costs two square roots and preserves
the flow's second and fourth moments identically.  Drivers cover standard,
noise-reinforced and fractional Brownian forcing; analysis code verifies
the moment identities and measures fractal dimensions of the traces.
"""
from .driving import (
    DrivingPath,
    DrivingSpec,
    FbmSynthesisError,
    Mesh,
    path_rng,
    power_interpolate,
    refine_bm,
    sample_bm,
    sample_bm_many,
    sample_driving,
    sample_fbm,
    sample_nrbm_exact,
    sample_nrbm_sde,
    scale_factor,
)
from .halfplane import slit_forward, slit_reverse, sqrt_h
from .reference import (
    EulerCrossingError,
    PiecewiseConstantDriving,
    SwallowedError,
    euler_reverse,
    exact_piecewise_trace,
    forward_point,
    piecewise_from_path,
)
from .splitting import (
    FidelitySchedule,
    SingularityError,
    StepRecord,
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
from .analysis import (
    ConvergenceReport,
    DimensionFit,
    MomentReport,
    SweepResult,
    box_dimension,
    dimension_sweep,
    ensemble_moment_check,
    fourth_moment,
    kendall_tau,
    lp_distance,
    quadrature_moment_check,
    second_moment,
    self_convergence,
    sup_distance,
    yardstick_dimension,
)
from .traceio import read_driving_csv, read_trace_csv, trace_csv, trace_svg, write_trace

__version__ = "0.1.0"
