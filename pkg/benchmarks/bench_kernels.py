"""Compare the compiled kernels against the numpy fallback.

Times the GRU recurrence (forward and backward, one direction, H=40,
window 40) over several batch sizes and the sum-of-sinusoids synthesis.
Also reports the largest disagreement between the two backends.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from fadelab import _kernels_py as py_impl

try:
    from fadelab import _kernels as c_impl
except ImportError:
    c_impl = None


def best_ms(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number * 1e3


def gru_case(batch, H=40, T=40, seed=0):
    rng = np.random.default_rng(seed)
    gx = rng.normal(size=(T, batch, 3 * H))
    U = rng.normal(scale=0.2, size=(3 * H, H))
    dhs = rng.normal(size=(T, batch, H))
    return gx, U, dhs


def bench_gru(impls, batches, repeat):
    print(f"{'GRU batch':>10}" + "".join(f"{n + ' fwd':>14}{n + ' bwd':>14}" for n in impls) + f"{'max diff':>12}")
    for B in batches:
        gx, U, dhs = gru_case(B)
        row = f"{B:>10}"
        outs = []
        for impl in impls.values():
            fwd = impl.gru_recur_forward(gx, U)
            bwd = impl.gru_recur_backward(dhs, U, *fwd)
            outs.append(fwd + bwd)
            t_f = best_ms(lambda: impl.gru_recur_forward(gx, U), repeat)
            t_b = best_ms(lambda: impl.gru_recur_backward(dhs, U, *fwd), repeat)
            row += f"{t_f:>14.3f}{t_b:>14.3f}"
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(outs[0], outs[-1]))
        print(row + f"{diff:>12.2g}")


def bench_sos(impls, repeat):
    rng = np.random.default_rng(1)
    print(f"{'SoS rows x len':>16}" + "".join(f"{n + ' ms':>14}" for n in impls) + f"{'max diff':>12}")
    for rows, length in ((30, 160), (100, 2000), (1000, 2000)):
        cos_theta = np.cos(rng.uniform(0, 2 * np.pi, size=(rows, 64)))
        psi = rng.uniform(0, 2 * np.pi, size=(rows, 64))
        row = f"{rows:>7} x {length:<6}"
        outs = []
        for impl in impls.values():
            outs.append(impl.sos_channel(cos_theta, psi, 6.9333e-4, length))
            row += f"{best_ms(lambda: impl.sos_channel(cos_theta, psi, 6.9333e-4, length), repeat):>14.3f}"
        print(row + f"{float(np.max(np.abs(outs[0] - outs[-1]))):>12.2g}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batches", type=int, nargs="+", default=[1, 8, 32, 128, 968])
    args = ap.parse_args(argv)
    impls = {"cython": c_impl, "numpy": py_impl} if c_impl is not None else {"numpy": py_impl}
    if c_impl is None:
        print("compiled extension not built; timing the numpy fallback only")
    bench_gru(impls, args.batches, args.repeat)
    print()
    bench_sos(impls, args.repeat)


if __name__ == "__main__":
    main()
