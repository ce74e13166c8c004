"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 8 10 12] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fragsim import kernels
from fragsim._pykernels import apply_terms as py_apply, circuit_adjoint as py_adjoint, circuit_forward as py_forward
from fragsim.core import compile_operator
from fragsim.hamiltonian import assemble, make_rng, sample_all_to_all_gaussian
from fragsim.vqe import AnsatzSpec, gate_table


def _best(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench(n: int, repeat: int) -> list[tuple[str, int, float, float]]:
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    ck = kernels.compiled_backend
    rng = make_rng(n)
    model = sample_all_to_all_gaussian(n, n, 0.7)
    cop = compile_operator(assemble(model), n)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    out = np.empty_like(psi)
    spec = AnsatzSpec(n, 2, 1)
    table = gate_table(spec)
    params = rng.uniform(-np.pi, np.pi, spec.n_params)
    args = (table.kinds, table.m0s, table.m1s, table.pidx, params)
    lam = cop.apply(psi)
    grad = np.zeros(spec.n_params)

    def fwd(mod):
        return lambda: mod(psi.copy(), *args)

    def adj(mod):
        return lambda: mod(psi.copy(), lam.copy(), *args, grad)

    cases = [
        ("apply_terms", lambda: ck.apply_terms(psi, out, cop.diag, cop.xmasks, cop.zmasks, cop.coefs),
         lambda: py_apply(psi, out, cop.diag, cop.xmasks, cop.zmasks, cop.coefs)),
        ("circuit_forward", fwd(ck.circuit_forward), fwd(py_forward)),
        ("circuit_adjoint", adj(ck.circuit_adjoint), adj(py_adjoint)),
    ]
    return [(name, n, _best(c, repeat), _best(p, repeat)) for name, c, p in cases]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    print(f"{'kernel':<16} {'n':>3} {'cython (ms)':>12} {'numpy (ms)':>12} {'speedup':>8}")
    for n in a.sizes:
        for name, n_, tc, tp in bench(n, a.repeat):
            print(f"{name:<16} {n_:>3} {tc * 1e3:>12.3f} {tp * 1e3:>12.3f} {tp / tc:>8.1f}")


if __name__ == "__main__":
    main()
