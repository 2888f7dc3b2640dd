"""TEBD step-size convergence against exact evolution on a small instance.

    python scripts/tebd_dt_scan.py --divisions 100 200 400 800
"""
import argparse
import math

import numpy as np

from bandchain import exact
from bandchain import mps as tn
from bandchain.model import assemble_dicke_matrix, build_pec_cavity_spec
from bandchain.transform import band_reduce


def main():
    p = argparse.ArgumentParser(description="TEBD dt scan")
    p.add_argument("--divisions", type=int, nargs="+", default=[100, 200, 400],
                   help="steps per atomic period")
    p.add_argument("--periods", type=float, default=3.0)
    p.add_argument("--nf", type=int, default=4)
    p.add_argument("--chi-max", type=int, default=64)
    p.add_argument("--cutoff", type=float, default=1e-10)
    p.add_argument("--state", default="psi1")
    args = p.parse_args()

    spec = build_pec_cavity_spec([-0.2, 0.15], 3, "all", 0.1)
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    layout = exact.HilbertSpaceLayout(2, 3, args.nf)
    w, v = np.linalg.eigh(exact.build_band_hamiltonian(band, layout).dense())
    c = v.conj().T @ exact.initial_state(layout, args.state).amplitudes
    dts, errs = [], []
    for n in args.divisions:
        dt = 2 * math.pi / n
        steps = int(round(args.periods * n))
        sched = tn.build_gate_layers(band, layout, dt)
        pol = tn.TruncationPolicy(chi_max=args.chi_max, cutoff=args.cutoff)
        res = tn.tebd_run(tn.init_product_mps(layout, args.state), sched, pol, steps, max(1, steps // 60))
        err = 0.0
        for rec in res.records:
            psi = exact.StateVector(v @ (np.exp(-1j * w * rec["time"]) * c), layout)
            err = max(err, max(abs(rec[f"pop{j + 1}"] - exact.atomic_population(psi, j)) for j in range(2)))
        dts.append(dt)
        errs.append(err)
        print(f"dt = 2pi/{n:<5d} max population error {err:.3e}  discarded {pol.discarded:.1e}", flush=True)
    if len(dts) > 1:
        print(f"fitted slope {np.polyfit(np.log(dts), np.log(errs), 1)[0]:.2f}")


if __name__ == "__main__":
    main()
