"""Timing comparison of the compiled quadrature core against the numpy
fallback.

Both implementations are imported directly, so the package's own backend
selection does not matter here. Row counts mimic a fitted dataset (215
subjects, up to 5 intervals each) and a stacked batch of ten of them; node
counts are the ladder sizes a base-26 rule grows to as the heterogeneity
scale increases.

    python3 benchmarks/bench_backends.py
"""

import timeit

import numpy as np

from dare.backends import pykernels
from dare.likelihood import _active_rule

try:
    from dare.backends import _quadcore
except ImportError:
    _quadcore = None

KERNELS = {0: "exponential", 1: "beta-poisson"}
THETA1 = 0.8


def _measure(fn, args):
    # one warm call, then pick a repeat count worth ~50 ms per sample
    t0 = timeit.default_timer()
    fn(*args)
    once = timeit.default_timer() - t0
    number = max(1, int(0.05 / max(once, 1e-9)))
    times = timeit.repeat(lambda: fn(*args), number=number, repeat=5)
    return min(times) / number


def main():
    rng = np.random.default_rng(11)
    print("backend for this interpreter would be: %s" %
          ("numpy (compiled core not built)" if _quadcore is None
           else "cython"))
    if _quadcore is None:
        print("compiled core unavailable; timing the numpy fallback only")
    header = "%-12s %7s %7s %9s %12s %12s %8s" % (
        "kernel", "rows", "nodes", "grad", "numpy", "cython", "speedup")
    print()
    print(header)
    print("-" * len(header))
    for kind in (0, 1):
        theta1 = THETA1 if kind == 1 else 0.0
        for n_rows in (1075, 10750):
            a0 = rng.normal(-2.5, 1.2, n_rows)
            for n_nodes in (26, 104, 416):
                # same zero-weight trimming the likelihood applies
                nodes, weights = _active_rule(n_nodes)
                for want_grad in (True, False):
                    args = (kind, a0, 1.5, theta1, nodes, weights, want_grad)
                    t_py = _measure(pykernels.reduce_terms, args)
                    if _quadcore is not None:
                        t_cy = _measure(_quadcore.reduce_terms, args)
                        p_py = pykernels.reduce_terms(*args)[0]
                        p_cy = _quadcore.reduce_terms(*args)[0]
                        if not np.allclose(p_py, p_cy, rtol=1e-10):
                            raise AssertionError("backends disagree")
                        cy_txt = "%10.3f ms" % (t_cy * 1e3)
                        ratio = "%7.1fx" % (t_py / t_cy)
                    else:
                        cy_txt = "%12s" % "n/a"
                        ratio = "%8s" % ""
                    print("%-12s %7d %7d %9s %10.3f ms %s %s" % (
                        KERNELS[kind], n_rows, n_nodes,
                        "yes" if want_grad else "no",
                        t_py * 1e3, cy_txt, ratio))
    print()
    print("times are best-of-5 per call")


if __name__ == "__main__":
    main()
