"""Step-size check for the two-atom, 30-mode cavity runs.

Evolves one initial state to a short horizon at several dt and reports the
deviation of pop1, ge+eg and S_{1:2} from the finest step.

    python scripts/cavity_dt_scan.py --dts 0.04 0.02 0.01 0.005 --time 2
"""
import argparse
import time

import numpy as np

from bandchain import exact
from bandchain import mps as tn
from bandchain.model import assemble_dicke_matrix
from bandchain.runs import FIG7_SPEC, RunConfig
from bandchain.transform import band_reduce


def main():
    p = argparse.ArgumentParser(description="dt scan for the cavity runs")
    p.add_argument("--dts", type=float, nargs="+", default=[0.04, 0.02, 0.01, 0.005])
    p.add_argument("--time", type=float, default=2.0, help="horizon in 1/omega_a1")
    p.add_argument("--state", default="psi2")
    p.add_argument("--nf", type=int, default=8)
    p.add_argument("--sample", type=float, default=0.2, help="sampling interval in 1/omega_a1")
    args = p.parse_args()

    spec = RunConfig(spec=FIG7_SPEC).load_spec()
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, spec.mode_count, args.nf)
    out = {}
    for dt in sorted(args.dts, reverse=True):
        steps = int(round(args.time / dt))
        stride = max(1, int(round(args.sample / dt)))
        if abs(stride * dt - args.sample) > 1e-9:
            raise SystemExit(f"dt {dt} does not divide the sampling interval {args.sample}")
        t0 = time.perf_counter()
        res = tn.tebd_run(tn.init_product_mps(layout, args.state), tn.build_gate_layers(band, layout, dt),
                          tn.TruncationPolicy(), steps, stride)
        out[dt] = np.array([[r["pop1"], r["ge"] + r["eg"], r["S12"]] for r in res.records])
        print(f"dt {dt:<7g} {time.perf_counter() - t0:6.1f} s  max bond {res.max_bond}  "
              f"final pop1, ge+eg, S12 = {np.round(out[dt][-1], 6)}", flush=True)
    ref_dt = min(out)
    ref = out[ref_dt]
    n = min(len(v) for v in out.values())
    for dt, vals in sorted(out.items(), reverse=True):
        if dt != ref_dt:
            dev = np.max(np.abs(vals[:n] - ref[:n]), axis=0)
            print(f"dt {dt:<7g} vs {ref_dt:g}: pop1 {dev[0]:.2e}  ge+eg {dev[1]:.2e}  S12 {dev[2]:.2e}")


if __name__ == "__main__":
    main()
