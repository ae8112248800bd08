"""Command line interface: ``solve``, ``gen-radial`` and ``bench``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .chordal import decomposition_to_json
from .netcase import CaseError, generate_radial, load_case, save_case
from .problem import OpfProblem
from .runner import Mode, RunConfig, benchmark_scaling, run, write_scaling_csv


def _delay(text):
    try:
        clique, k = text.split(":")
        return int(clique) - 1, int(k)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected CLIQUE:ITERS, got {text!r}") from None


def _sizes(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cliqueopf", description="Clique-decomposed OPF relaxation solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a case file")
    s.add_argument("--case", required=True, help="case JSON file")
    s.add_argument("--mode", default="centralized", choices=[m.value for m in Mode])
    s.add_argument("--max-iters", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-2, help="relative stopping tolerance")
    s.add_argument("--step", type=float, default=1.0, help="initial step size")
    s.add_argument("--chain", default="chain", choices=["chain", "star"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stop", default="reference", choices=["reference", "residual"])
    s.add_argument("--async", dest="async_mode", action="store_true",
                   help="asynchronous dual rounds")
    s.add_argument("--delay", type=_delay, action="append", default=None, metavar="CLIQUE:ITERS",
                   help="delay the results of a clique (1-based) by ITERS rounds; repeatable")
    s.add_argument("--reference-bus", type=int, default=None, help="1-based angle reference bus")
    s.add_argument("--backend", default=None, help="interior-point backend (python or compiled)")
    s.add_argument("--out", default=None, help="report JSON (default: stdout)")
    s.add_argument("--dump-decomposition", default=None, metavar="FILE",
                   help="write the clique decomposition as JSON")

    g = sub.add_parser("gen-radial", help="generate a random radial case")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tree", action="store_true", help="random tree instead of a star")
    g.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="solver-time scaling over network size")
    b.add_argument("--sizes", type=_sizes, default=[10, 20, 40, 80])
    b.add_argument("--seeds-per-size", type=int, default=20)
    b.add_argument("--mode", default="cumulative-dual", choices=[m.value for m in Mode])
    b.add_argument("--step", type=float, default=1.0)
    b.add_argument("--max-iters", type=int, default=100)
    b.add_argument("--out", required=True, help="CSV file; plot data goes to FILE.plot.json")
    return p


def _cmd_solve(a) -> int:
    case = load_case(a.case)
    cfg = RunConfig(
        mode=a.mode, max_iters=a.max_iters, rel_tol=a.tol, step=a.step, chain=a.chain,
        seed=a.seed, stop=a.stop, async_mode=a.async_mode,
        delays=dict(a.delay) if a.delay else None,
        reference_bus=None if a.reference_bus is None else a.reference_bus - 1,
        backend=a.backend,
    )
    if a.dump_decomposition:
        prob = OpfProblem.from_case(case)
        with open(a.dump_decomposition, "w") as f:
            f.write(decomposition_to_json(prob.decomp, prob.coord))
    report = run(case, cfg)
    text = report.to_json()
    if a.out:
        with open(a.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    status = "converged" if report.converged else "NOT converged"
    print(f"{report.mode}: {status} after {report.n_iterations} iterations, "
          f"objective {report.objective:.6g}", file=sys.stderr)
    return 0 if report.converged else 1


def _cmd_gen(a) -> int:
    save_case(generate_radial(a.n, a.seed, tree=a.tree), a.out)
    return 0


def _cmd_bench(a) -> int:
    cfg = RunConfig(mode=a.mode, step=a.step, max_iters=a.max_iters)
    rows = benchmark_scaling(a.sizes, a.seeds_per_size, cfg)
    write_scaling_csv(rows, a.out)
    for r in rows:
        print(f"n={r['n']:4d}  cumulative {r['mean_cumulative_s']:.4f}s  "
              f"distributed {r['mean_distributed_s']:.4f}s  success {r['success_rate']:.0%}",
              file=sys.stderr)
    return 0


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return {"solve": _cmd_solve, "gen-radial": _cmd_gen, "bench": _cmd_bench}[a.command](a)
    except (CaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
