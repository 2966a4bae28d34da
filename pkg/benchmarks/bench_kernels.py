"""Compare the compiled and pure-Python graph kernels.

    python3 benchmarks/bench_kernels.py [--sizes 10 40 200] [--repeat 5]

Each backend runs the same random sparse digraphs; results are checked for
agreement before timings are reported.
"""
import argparse
import timeit

import numpy as np

from botcascade._kernels import available_backends


def random_csr(rng, n, density):
    dense = rng.random((n, n)) < density
    np.fill_diagonal(dense, False)
    indptr = np.concatenate([[0], np.cumsum(dense.sum(axis=1))]).astype(np.int64)
    indices = np.nonzero(dense)[1].astype(np.int64)
    return indptr, indices


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 40, 200])
    ap.add_argument("--density", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the Python backend only")
    rng = np.random.default_rng(args.seed)
    header = f"{'kernel':<12}{'nodes':>7}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for n in args.sizes:
        indptr, indices = random_csr(rng, n, args.density)
        data = rng.random(len(indices))
        x = rng.random((n, 32))
        cases = {
            "betweenness": lambda m: m.betweenness(indptr, indices, n),
            "spmm": lambda m: m.spmm(indptr, indices, data, x),
        }
        for name, call in cases.items():
            outputs = [np.asarray(call(m)) for m in backends.values()]
            for other in outputs[1:]:
                np.testing.assert_allclose(other, outputs[0], rtol=1e-9, atol=1e-12)
            times = []
            for m in backends.values():
                number = max(1, int(0.2 / max(timeit.timeit(lambda: call(m), number=1), 1e-6)))
                best = min(timeit.repeat(lambda: call(m), number=number, repeat=args.repeat)) / number
                times.append(best * 1e3)
            row = f"{name:<12}{n:>7}" + "".join(f"{t:>14.4f}" for t in times)
            if len(times) > 1:
                row += f"{times[0] / times[1]:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
