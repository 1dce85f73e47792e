"""Compare the compiled and pure-numpy kernels on the paper device.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200] [--steps 20]

Times each hot kernel on the M=180 grid under both backends, checks that the
results agree, and times a short self-consistent transient end to end.
"""

import argparse
import time

import numpy as np

from spindd import _accel, kernels
from spindd import grid_solver as gs
from spindd.device import build_model, paper_device


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn()
    return (time.perf_counter() - t0) / repeat, out


def kernel_cases(model):
    rng = np.random.default_rng(7)
    pr = model.profiles
    N = model.n_nodes
    state = model.initial_state()
    n_old = state.as_array() + 0.01 * rng.standard_normal((N, 4))
    V = model.linear_potential()
    args = (n_old, V, model.n_left, model.n_right, model.grid.dx, 200.0,
            pr.D_mid, pr.p_mid, pr.eta_mid, pr.m_mid, pr.m_node, model.relax_rate, model.precession)
    sub, diag, sup, rhs = kernels.assemble_density(*args)
    rho = np.exp(V) * state.n0
    V0 = np.zeros(N)
    return {
        "assemble_density": lambda: kernels.assemble_density(*args),
        "block_thomas": lambda: kernels.block_thomas(sub, diag, sup, rhs)[0],
        "newton_poisson": lambda: kernels.newton_poisson(
            V0, rho, pr.C_node, model.lambda_D2, model.grid.dx, 1e-10, 50, 2.0)[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args(argv)

    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy backend can be timed")
    model = build_model(paper_device())
    backends = ["numba", "numpy"] if _accel.NUMBA_AVAILABLE else ["numpy"]
    results = {}
    for name in backends:
        prev = _accel.set_backend(name)
        try:
            for kname, fn in kernel_cases(model).items():
                results[name, kname] = _time(fn, args.repeat)
            settings = gs.SolverSettings()
            t0 = time.perf_counter()
            tr = gs.run_transient(model, settings, max_steps=args.steps, stop_at_steady=False, sample_j1=False)
            results[name, "transient"] = (time.perf_counter() - t0, tr.state.as_array())
        finally:
            _accel.set_backend(prev)

    print(f"{'kernel':<18}" + "".join(f"{b:>14}" for b in backends) + ("     speedup   max|diff|" if len(backends) == 2 else ""))
    for kname in ["assemble_density", "block_thomas", "newton_poisson", "transient"]:
        row = f"{kname:<18}"
        for b in backends:
            t = results[b, kname][0]
            row += f"{t * 1e6:>11.1f} us" if kname != "transient" else f"{t:>12.3f} s"
        if len(backends) == 2:
            a, b = results["numba", kname], results["numpy", kname]
            diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(_flat(a[1]), _flat(b[1])))
            row += f"{b[0] / a[0]:>11.1f}x {diff:>11.2e}"
        print(row)


def _flat(out):
    return out if isinstance(out, tuple) else (out,)


if __name__ == "__main__":
    main()
