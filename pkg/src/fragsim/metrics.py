"""Fidelities, local observables and the two-qubit mean-field variance study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fragsim.core import (
    DensityMatrix,
    StateVector,
    StructuralError,
    hermitian_eig,
    reduced_density,
)
from fragsim.fragmentation import FragmentLayout
from fragsim.hamiltonian import make_rng


@dataclass(frozen=True)
class VarianceDiff:
    v: float
    v_mf: float
    concurrence: float

    @property
    def diff(self) -> float:
        return self.v - self.v_mf


def _amps(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)


def _nq(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise StructuralError(f"dimension {dim} is not a power of two")
    return n


def _root(w: np.ndarray) -> np.ndarray:
    # eigenvalues below the eigensolver's resolution are round-off; their
    # square roots would otherwise leak into the nuclear norm
    floor = 64 * np.finfo(float).eps * max(float(np.max(np.abs(w), initial=0.0)), 1e-300)
    return np.sqrt(np.where(w > floor, w, 0.0))


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    Evaluated as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)`` via an
    SVD, which avoids squaring round-off the way an eigensolve of the inner
    product would.
    """
    if rho.shape != sigma.shape:
        raise StructuralError(f"density matrices differ in shape: {rho.shape} vs {sigma.shape}")
    w1, v1 = hermitian_eig(rho)
    w2, v2 = hermitian_eig(sigma)
    m = _root(w1)[:, None] * (v1.conj().T @ v2) * _root(w2)[None, :]
    return float(np.sum(np.linalg.svd(m, compute_uv=False)) ** 2)


def fragment_reduced(frag_state, layout: FragmentLayout, f: int) -> np.ndarray:
    """Fragment registers with the auxiliaries traced out."""
    psi = _amps(frag_state)
    nr = layout.n_registers(f)
    if psi.shape[0] != 1 << nr:
        raise StructuralError(f"fragment {f} state has {psi.shape[0]} amplitudes, expected {1 << nr}")
    return reduced_density(psi, nr, range(len(layout.partition[f])))


def exact_reduced(exact_full, layout: FragmentLayout, f: int) -> np.ndarray:
    psi = _amps(exact_full)
    if psi.shape[0] != 1 << layout.n:
        raise StructuralError(f"full state has {psi.shape[0]} amplitudes, expected {1 << layout.n}")
    return reduced_density(psi, layout.n, layout.partition[f])


def fragment_fidelity(frag_state, exact_full, layout: FragmentLayout, f: int) -> float:
    return uhlmann_fidelity(fragment_reduced(frag_state, layout, f), exact_reduced(exact_full, layout, f))


def concurrence(psi) -> float:
    c = _amps(psi)
    if c.shape != (4,):
        raise StructuralError(f"concurrence needs a two-qubit state, got {c.shape[0]} amplitudes")
    return float(2.0 * abs(c[0] * c[3] - c[1] * c[2]))


_ZZ = np.array([1.0, -1.0, -1.0, 1.0])
_Z1 = np.array([1.0, 1.0, -1.0, -1.0])
_Z2 = np.array([1.0, -1.0, 1.0, -1.0])


def variance_diff(psi) -> VarianceDiff:
    """V and V_MF for the single interface term sigma_z x sigma_z (qubit 1 inside).

    Both operators are diagonal, so the variances come straight from the
    computational-basis probabilities.
    """
    c = _amps(psi)
    if c.shape != (4,):
        raise StructuralError(f"variance_diff needs a two-qubit state, got {c.shape[0]} amplitudes")
    p = np.abs(c) ** 2
    p = p / p.sum()

    def var(d):
        m = p @ d
        return float(p @ d**2 - m * m)

    z2 = p @ _Z2
    return VarianceDiff(var(_ZZ), var(_Z1 * (_Z2 - z2)), concurrence(c))


def random_two_qubit_state(seed: int) -> StateVector:
    rng = make_rng(seed)
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    return StateVector.from_array(z, normalize=True)


def family_state(family: str, param: float) -> StateVector:
    if family == "alpha":
        if not 0.0 <= param <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {param}")
        amps = [np.sqrt(param), 0, 0, np.sqrt(1.0 - param)]
    elif family == "theta":
        amps = [np.cos(param / 2), 0, -1j * np.sin(param / 2), 0]
    elif family == "beta":
        amps = np.array([1.0, param, -1.0, param]) / np.sqrt(2.0 + 2.0 * param**2)
    else:
        raise ValueError(f"unknown family {family!r}")
    return StateVector.from_array(np.asarray(amps, dtype=np.complex128), normalize=True)


def local_expectations(psi_or_rho, site: int) -> tuple[float, float]:
    """(<S_x>, <S_z>) on one site, from a state vector or a density matrix."""
    if isinstance(psi_or_rho, DensityMatrix):
        arr = psi_or_rho.matrix
    elif isinstance(psi_or_rho, StateVector):
        arr = psi_or_rho.amplitudes
    else:
        arr = np.asarray(psi_or_rho, dtype=np.complex128)
    n = _nq(arr.shape[0])
    if not 0 <= site < n:
        raise StructuralError(f"site {site} out of range for {n} qubits")
    if arr.ndim == 1:
        r1 = reduced_density(arr, n, [site])
    else:
        rest = [q for q in range(n) if q != site]
        t = arr.reshape((2,) * (2 * n)).transpose([site] + rest + [n + site] + [n + q for q in rest])
        r1 = np.einsum("aibi->ab", t.reshape(2, 1 << (n - 1), 2, 1 << (n - 1)))
    return float(r1[0, 1].real), float(0.5 * (r1[0, 0] - r1[1, 1]).real)


def envelope_rows(n_states: int, seed: int = 0) -> list[tuple[int, float, float, float, float]]:
    """(seed, concurrence, V, V_MF, V - V_MF) for ``n_states`` random states."""
    rows = []
    for k in range(n_states):
        d = variance_diff(random_two_qubit_state(seed + k))
        rows.append((seed + k, d.concurrence, d.v, d.v_mf, d.diff))
    return rows
