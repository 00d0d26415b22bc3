"""Render a gallery of traces and drawn curves as SVG.

Two kinds of picture per parameter choice:

  * the recorded trace, i.e. the path k -> Z_k of the reverse flow started
    at i*y0, which for every kappa is a graph-like object (its roughness
    reflects the time-changed driving noise, not the SLE phase), and
  * the drawn curve at the final time, the fan of images of points injected
    along the run, which is the object whose fractal dimension follows the
    1 + kappa/8 law.

The contrast between the two is the quickest visual sanity check the
package offers: traces for kappa = 2 and kappa = 6 look like siblings,
the drawn curves do not.
"""
import argparse
import os
import sys

import numpy as np

from slesplit.driving import DrivingSpec
from slesplit.splitting import FidelitySchedule, Trace, simulate, simulate_curve
from slesplit.traceio import trace_svg, write_trace


GALLERY = (
    DrivingSpec("bm", kappa=2.0, seed=11),
    DrivingSpec("bm", kappa=4.0, seed=11),
    DrivingSpec("bm", kappa=6.0, seed=11),
    DrivingSpec("nrbm", kappa=4.0, p=-0.5, seed=11),
    DrivingSpec("nrbm", kappa=4.0, p=0.3, seed=11),
    DrivingSpec("fbm", kappa=4.0, hurst=0.4, seed=11),
    DrivingSpec("fbm", kappa=4.0, hurst=0.7, seed=11),
)


def tag(spec: DrivingSpec) -> str:
    extra = ""
    if spec.kind == "nrbm":
        extra = f"_p{spec.p:+.2f}"
    elif spec.kind == "fbm":
        extra = f"_H{spec.hurst:.2f}"
    return f"{spec.kind}_k{spec.kappa:g}{extra}".replace("+", "")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="gallery", help="output directory")
    ap.add_argument("--steps", type=int, default=4096,
                    help="mesh steps for recorded traces")
    ap.add_argument("--curve-steps", type=int, default=16384,
                    help="mesh steps for drawn curves")
    ap.add_argument("--samples", type=int, default=4096,
                    help="points per drawn curve")
    ap.add_argument("--stream", type=int, default=0)
    args = ap.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    sched = FidelitySchedule.practical(args.steps, args.steps ** -0.5)
    for spec in GALLERY:
        trace = simulate(spec, sched, stream=args.stream)
        files = write_trace(trace, os.path.join(args.out, "trace_" + tag(spec)),
                            svg=True)
        print("  ".join(files))

    curve_sched = FidelitySchedule.practical(args.curve_steps,
                                             args.curve_steps ** -0.5)
    for kappa in (2.0, 4.0, 6.0):
        spec = DrivingSpec("bm", kappa=kappa, seed=11)
        fan = simulate_curve(spec, curve_sched, stream=args.stream,
                             samples=args.samples)
        shell = Trace(np.arange(len(fan), dtype=float), fan)
        name = os.path.join(args.out, f"curve_bm_k{kappa:g}.svg")
        with open(name, "w") as fh:
            fh.write(trace_svg(shell))
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
