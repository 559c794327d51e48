"""Compare the numba and numpy triplet kernels used by fine-scale assembly.

    python3 benchmarks/bench_kernels.py --h 256 --p 2 --repeat 5
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from hplod import _kernels
from hplod.assembly import q1_local_matrices
from hplod.mesh import build_mesh, nesting
from hplod.spaces import FineSpace, coupling_table, projection_quadrature_order


def _inputs(n_fine: int, n_coarse: int, degree: int):
    fine = FineSpace(build_mesh(2, n_fine))
    nest = nesting(build_mesh(2, n_coarse), fine.mesh)
    k, _ = q1_local_matrices(2, fine.mesh.size)
    scale = np.random.default_rng(0).uniform(0.25, 2.5, fine.mesh.num_elements)
    table = coupling_table(degree, nest.ratio, projection_quadrature_order(degree))
    q1 = (fine.cell_dofs, scale, k)
    coupling = (fine.cell_dofs, nest.parent, nest.offset, table, fine.mesh.element_volume, degree)
    return q1, coupling


def _time(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up (JIT compile for numba)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)) * 1e3


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=int, default=256, help="fine cells per axis")
    ap.add_argument("--H", type=int, default=8, help="coarse cells per axis")
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    q1, coupling = _inputs(args.h, args.H, args.p)
    cases = [
        ("q1_triplets", _kernels.q1_triplets_numpy, _kernels.q1_triplets_numba, q1),
        ("coupling_triplets", _kernels.coupling_triplets_numpy, _kernels.coupling_triplets_numba, coupling),
    ]
    print(f"fine mesh 1/{args.h}, coarse 1/{args.H}, p={args.p}, best of {args.repeat}")
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  match")
    for name, f_np, f_nb, a in cases:
        t_np = _time(f_np, a, args.repeat)
        t_nb = _time(f_nb, a, args.repeat)
        same = all(np.array_equal(x, y) for x, y in zip(f_np(*a), f_nb(*a)))
        print(f"{name:<20}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>10.2f}  {same}")


if __name__ == "__main__":
    main()
