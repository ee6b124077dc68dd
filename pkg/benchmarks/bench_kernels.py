"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times the phase-variance objective/gradient (the inner loop of the phase
minimization) and the unitary-kick update (the inner loop of the stochastic
integrator) on both backends, and checks that they agree.
"""

import argparse
import timeit

import numpy as np

from noisyctl import kernels
from noisyctl.spinalg import double_well_model


def phase_case(d, seed=0):
    rng = np.random.default_rng(seed)
    m = double_well_model(d - 1, 1.0, 0.3, 1.7)
    x = m.to_eigenbasis(m.controls[0])
    r = np.abs(rng.standard_normal(d))
    r /= np.linalg.norm(r)
    phi = rng.uniform(0, 2 * np.pi, d)
    return r, phi, np.ascontiguousarray(x), np.ascontiguousarray(x @ x)


def kick_case(d, n_traj, seed=0):
    rng = np.random.default_rng(seed)
    m = double_well_model(d - 1, 1.0, 0.3, 1.7)
    lams, vecs = zip(*(np.linalg.eigh(c.entries) for c in m.controls))
    psi = rng.standard_normal((n_traj, d)) + 1j * rng.standard_normal((n_traj, d))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    dw = 0.05 * rng.standard_normal((n_traj, m.n_controls))
    return (np.ascontiguousarray(psi), np.ascontiguousarray(vecs), np.ascontiguousarray(lams),
            np.ascontiguousarray(dw))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(sorted(backends))} (default: {kernels.BACKEND})")

    print("\nphase_variance_grad, one call")
    for d in (3, 9, 33, 65):
        case = phase_case(d)
        ref = backends["python"].phase_variance_grad(*case)
        row = [f"d={d:3d}"]
        for name in sorted(backends):
            fn = backends[name].phase_variance_grad
            val, grad = fn(*case)
            assert abs(val - ref[0]) < 1e-10 and np.allclose(grad, ref[1], atol=1e-10)
            n = 2000 if d < 40 else 200
            t = min(timeit.repeat(lambda: fn(*case), number=n, repeat=args.repeat)) / n
            row.append(f"{name} {t * 1e6:9.2f} us")
        print("  ".join(row))

    print("\napply_kicks, one step for all trajectories")
    for d, n_traj in ((3, 2000), (9, 2000), (33, 500)):
        psi, vecs, lams, dw = kick_case(d, n_traj)
        ref = psi.copy()
        backends["python"].apply_kicks(ref, vecs, lams, dw)
        row = [f"d={d:3d} M={n_traj}"]
        for name in sorted(backends):
            fn = backends[name].apply_kicks
            out = psi.copy()
            fn(out, vecs, lams, dw)
            assert np.allclose(out, ref, atol=1e-12)
            work = psi.copy()
            t = min(timeit.repeat(lambda: fn(work, vecs, lams, dw), number=20, repeat=args.repeat)) / 20
            row.append(f"{name} {t * 1e3:8.3f} ms")
        print("  ".join(row))


if __name__ == "__main__":
    main()
