"""Compare the compiled and pure-Python interior-point kernels.

Two workloads: random boxed SDPs of growing size, and the per-clique
subproblems that a decomposed run actually solves.  Both kernels must agree
on every objective; the table reports the median solve time and speedup.

    python benchmarks/bench_ipm.py --sizes 2,4,8,16 --repeat 5
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from cliqueopf import _backend, hsdp
from cliqueopf.netcase import generate_radial
from cliqueopf.primal_decomp import build_subproblem, initial_state
from cliqueopf.problem import OpfProblem, centralized_sdp


def random_instance(rng, m):
    G = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    A0 = 0.5 * (G + G.conj().T)
    boxes = [(i, 0.9, 1.1) for i in range(m)]
    return hsdp.HermitianSdp(A0, [], boxes)


def opf_workload(n, seed):
    """Centralized problem and every primal clique subproblem of one case."""
    case = generate_radial(n, seed, tree=True)
    p = OpfProblem.from_case(case)
    shared = initial_state(p).shared
    subs = [build_subproblem(p, shared, l)[0] for l in range(len(p.cliques))]
    return centralized_sdp(p), subs


def time_solves(problems, backend, repeat):
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for p in problems:
            hsdp.solve(p, backend=backend)
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def check_agreement(problems, backends):
    worst = 0.0
    for p in problems:
        vals = [hsdp.solve(p, backend=b).objective_value for b in backends]
        worst = max(worst, max(abs(v - vals[0]) / max(1.0, abs(vals[0])) for v in vals))
    return worst


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="2,4,8,16", help="matrix orders of the random instances")
    ap.add_argument("--per-size", type=int, default=10, help="random instances per size")
    ap.add_argument("--opf-n", type=int, default=30, help="buses of the OPF workload")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)

    backends = _backend.available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rng = np.random.default_rng(a.seed)
    workloads = []
    for m in [int(s) for s in a.sizes.split(",")]:
        workloads.append((f"random m={m}", [random_instance(rng, m) for _ in range(a.per_size)]))
    central, subs = opf_workload(a.opf_n, a.seed)
    workloads.append((f"cliques n={a.opf_n}", subs))
    workloads.append((f"centralized n={a.opf_n}", [central]))

    print(f"{'workload':<22}{'python s':>12}{'compiled s':>12}{'speedup':>10}{'max rel diff':>14}")
    for name, probs in workloads:
        t_py = time_solves(probs, "python", a.repeat)
        t_c = time_solves(probs, "compiled", a.repeat)
        diff = check_agreement(probs, ["python", "compiled"])
        print(f"{name:<22}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.2f}x{diff:>14.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
