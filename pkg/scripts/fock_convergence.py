"""Dicke vs band population difference as a function of the Fock cutoff.

Both Hamiltonians truncate each mode at N_f photons, but the band form does so
in the rotated (chain) basis, so the two truncated models differ. This scan
shows how the difference shrinks as N_f grows for the three-atom cavity.

    python scripts/fock_convergence.py --nf 3 4 5 6 --periods 1
"""
import argparse
import math
import time

import numpy as np

from bandchain import exact
from bandchain.model import assemble_dicke_matrix
from bandchain.runs import FIG5_SPEC, RunConfig
from bandchain.transform import band_reduce


def populations(h, psi0, dt, steps, stride):
    out = []
    for psi in exact.iter_evolve(h, psi0, dt, steps, stride):
        out.append([exact.atomic_population(psi, j) for j in range(psi0.layout.atom_count)])
    return np.array(out)


def main():
    p = argparse.ArgumentParser(description="Fock-cutoff scan of the Dicke/band difference")
    p.add_argument("--nf", type=int, nargs="+", default=[3, 4, 5, 6])
    p.add_argument("--periods", type=float, default=1.0)
    p.add_argument("--stride", type=int, default=10)
    args = p.parse_args()

    spec = RunConfig(spec=FIG5_SPEC).load_spec()
    band, _ = band_reduce(assemble_dicke_matrix(spec))
    dt = exact.default_dt(spec)
    steps = int(round(args.periods * 2 * math.pi / dt))
    print("nf  max|pop_D - pop_B|  top-Fock(D)  top-Fock(B)  seconds")
    for nf in args.nf:
        t0 = time.perf_counter()
        layout = exact.HilbertSpaceLayout(spec.atom_count, spec.mode_count, nf)
        psi0 = exact.initial_state(layout, "all_excited")
        hd = exact.build_dicke_hamiltonian(spec, layout).compile()
        hb = exact.build_band_hamiltonian(band, layout).compile()
        pd = populations(hd, psi0, dt, steps, args.stride)
        pb = populations(hb, psi0, dt, steps, args.stride)
        tops = []
        for h in (hd, hb):
            tops.append(max(exact.top_fock_occupancy(s) for s in exact.iter_evolve(h, psi0, dt, steps, steps // 20 or 1)))
        print(f"{nf:2d}  {np.max(np.abs(pd - pb)):.3e}          {tops[0]:.1e}      {tops[1]:.1e}      "
              f"{time.perf_counter() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main()
