"""Compare the compiled and pure-Python heat-bath sweeps.

    python benchmarks/bench_kernels.py --L 8 16 --sweeps 50
"""
import argparse
import time

from bktlab import kernels
from bktlab.fields import ModelParams, iv_mcmc, villain_mcmc
from bktlab.lattice import Kind, build_domain


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--L", type=int, nargs="+", default=[8, 16])
    p.add_argument("--sweeps", type=int, default=50)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the Python fallback only")
    print(f"{'kernel':10s} {'L':>4s} " + " ".join(f"{b + ' [s]':>12s}" for b in backends) + f" {'speedup':>9s}")
    for L in args.L:
        free, zero = build_domain(Kind.FREE, L), build_domain(Kind.ZERO, L)
        jobs = {
            "iv": lambda b: iv_mcmc(free, ModelParams(beta=1.0, seed=0), args.sweeps, backend=b),
            "villain": lambda b: villain_mcmc(zero, ModelParams(beta=1.0, seed=0), args.sweeps, backend=b),
        }
        for name, job in jobs.items():
            t = [timed(lambda: job(b), args.repeat) for b in backends]
            speed = f"{t[0] / t[1]:9.1f}" if len(t) == 2 else f"{'-':>9s}"
            print(f"{name:10s} {L:4d} " + " ".join(f"{x:12.4f}" for x in t) + " " + speed)


if __name__ == "__main__":
    main()
