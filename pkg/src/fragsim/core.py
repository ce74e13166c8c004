"""Dense statevector engine.

Operators are weighted sums of spin-1/2 Pauli strings, ``S_a = sigma_a / 2``.
Qubit 0 is the most significant bit of a basis-state index, so ``|01>`` on two
qubits is index 1 and qubit 1 is the one set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from fragsim import kernels

AXES = ("x", "y", "z")
NORM_TOL = 1e-10


class StructuralError(ValueError):
    """Bad indices, shapes or dimensions."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PauliString:
    """``coefficient * prod_q S_{axis}^{(q)}``; no factors means a scaled identity."""

    coefficient: float
    factors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        facs = tuple(sorted((int(q), str(a).lower()) for q, a in dict(self.factors).items()))
        if len(facs) != len(self.factors):
            raise StructuralError(f"repeated qubit in Pauli string {self.factors}")
        for q, a in facs:
            if a not in AXES:
                raise StructuralError(f"unknown axis {a!r}")
            if q < 0:
                raise StructuralError(f"negative qubit index {q}")
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @classmethod
    def of(cls, coefficient: float, factors: Mapping[int, str] | None = None) -> "PauliString":
        return cls(coefficient, tuple((factors or {}).items()))

    @property
    def max_index(self) -> int:
        return max((q for q, _ in self.factors), default=-1)


@dataclass(frozen=True)
class HermitianOperator:
    """A real-weighted Pauli sum; Hermitian by construction."""

    terms: tuple[PauliString, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.terms + other.terms)

    def __mul__(self, scale: float) -> "HermitianOperator":
        return HermitianOperator(tuple(PauliString(scale * t.coefficient, t.factors) for t in self.terms))

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def min_qubits(self) -> int:
        return max((t.max_index for t in self.terms), default=-1) + 1


def single(coefficient: float, qubit: int, axis: str) -> HermitianOperator:
    return HermitianOperator((PauliString.of(coefficient, {qubit: axis}),))


def pair(coefficient: float, i: int, a: str, j: int, b: str) -> HermitianOperator:
    return HermitianOperator((PauliString.of(coefficient, {i: a, j: b}),))


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 2**self.n_qubits:
            raise StructuralError(f"{amps.shape[0]} amplitudes for {self.n_qubits} qubits")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amps, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        n = int(round(math.log2(amps.shape[0])))
        if 2**n != amps.shape[0]:
            raise StructuralError(f"length {amps.shape[0]} is not a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, index: int | str) -> "StateVector":
        if isinstance(index, str):
            if len(index) != n:
                raise StructuralError(f"bitstring {index!r} is not {n} bits")
            index = int(index, 2)
        if not 0 <= index < 2**n:
            raise StructuralError(f"basis index {index} out of range for {n} qubits")
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def basis_index(self, tol: float = 1e-12) -> int | None:
        """Index of the basis state this is (up to phase), else None."""
        k = int(np.argmax(np.abs(self.amplitudes)))
        if abs(abs(self.amplitudes[k]) - 1.0) < tol:
            return k
        return None


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StructuralError(f"density matrix must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.dim)))

    def check(self, tol: float = 1e-10) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise NumericalError("density matrix not Hermitian", float(np.max(np.abs(m - m.conj().T))))
        tr = np.trace(m).real
        if abs(tr - 1.0) > tol:
            raise NumericalError("density matrix trace != 1", abs(tr - 1.0))
        low = float(np.linalg.eigvalsh(m)[0])
        if low < -1e-9:
            raise NumericalError("density matrix has a negative eigenvalue", low)


# --------------------------------------------------------------------------
# compiled operators


def bit(n: int, qubit: int) -> int:
    return 1 << (n - 1 - qubit)


@dataclass(frozen=True, eq=False)
class CompiledOperator:
    """Operator as ``diag * psi + sum_t coefs[t] * X^x_t Z^z_t psi`` on ``n`` qubits."""

    n: int
    diag: np.ndarray
    xmasks: np.ndarray
    zmasks: np.ndarray
    coefs: np.ndarray

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def norm_bound(self) -> float:
        return float(np.max(np.abs(self.diag), initial=0.0) + np.sum(np.abs(self.coefs)))

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(psi)
        kernels.apply_terms(psi, out, self.diag, self.xmasks, self.zmasks, self.coefs)
        return out

    def expect(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(psi)).real)

    def with_diag(self, diag: np.ndarray) -> "CompiledOperator":
        return CompiledOperator(self.n, np.ascontiguousarray(diag, dtype=np.float64), self.xmasks, self.zmasks, self.coefs)

    def dense(self) -> np.ndarray:
        dim = self.dim
        m = np.diag(self.diag.astype(np.complex128))
        idx = np.arange(dim, dtype=np.int64)
        for x, z, c in zip(self.xmasks, self.zmasks, self.coefs):
            src = idx ^ x
            sign = 1.0 - 2.0 * (np.bitwise_count(src & z) & 1)
            m[idx, src] += c * sign
        return m


def z_signs(n: int, zmask: int) -> np.ndarray:
    """(-1)^{popcount(b & zmask)} for every basis index b."""
    idx = np.arange(1 << n, dtype=np.int64)
    return 1.0 - 2.0 * (np.bitwise_count(idx & zmask) & 1)


@lru_cache(maxsize=512)
def compile_operator(op: HermitianOperator, n: int) -> CompiledOperator:
    if op.min_qubits > n:
        raise StructuralError(f"operator acts on qubit {op.min_qubits - 1} but state has {n} qubits")
    diag = np.zeros(1 << n)
    offdiag: dict[tuple[int, int], complex] = {}
    for term in op.terms:
        x = z = ny = 0
        for q, a in term.factors:
            b = bit(n, q)
            if a in ("x", "y"):
                x |= b
            if a in ("z", "y"):
                z |= b
            ny += a == "y"
        c = term.coefficient * 0.5 ** len(term.factors) * (1j**ny)
        if x == 0:
            diag += c.real * z_signs(n, z)
        else:
            offdiag[(x, z)] = offdiag.get((x, z), 0.0) + c
    keys = sorted(offdiag)
    return CompiledOperator(
        n,
        diag,
        np.array([k[0] for k in keys], dtype=np.int64),
        np.array([k[1] for k in keys], dtype=np.int64),
        np.array([offdiag[k] for k in keys], dtype=np.complex128),
    )


def _array(psi: StateVector | np.ndarray) -> np.ndarray:
    if isinstance(psi, StateVector):
        return psi.amplitudes
    return np.ascontiguousarray(psi, dtype=np.complex128)


def _nqubits(psi: StateVector | np.ndarray) -> int:
    if isinstance(psi, StateVector):
        return psi.n_qubits
    return int(round(math.log2(len(psi))))


# --------------------------------------------------------------------------
# public operations


def apply_pauli_sum(op: HermitianOperator, psi: StateVector) -> StateVector:
    """Return ``op |psi>`` (not normalized)."""
    n = _nqubits(psi)
    out = compile_operator(op, n).apply(_array(psi))
    return StateVector(n, out)


def expectation(op: HermitianOperator, psi: StateVector) -> float:
    n = _nqubits(psi)
    amps = _array(psi)
    val = np.vdot(amps, compile_operator(op, n).apply(amps))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise NumericalError("expectation of a Hermitian operator has an imaginary part", abs(val.imag))
    return float(val.real)


def expm_apply(cop: CompiledOperator, psi: np.ndarray, dt: float, tol: float = 1e-13,
               max_order: int = 80) -> np.ndarray:
    """``exp(-i H dt) psi`` by a Taylor series on sub-steps with ``|H| dt_sub <= 2``."""
    if dt == 0.0:
        return psi.copy()
    bound = cop.norm_bound
    nsub = max(1, math.ceil(bound * abs(dt) / 2.0))
    tau = dt / nsub
    out = psi.copy()
    work = np.empty_like(psi)
    for _ in range(nsub):
        term = out.copy()
        for k in range(1, max_order + 1):
            cop.apply(term, work)
            term, work = work * (-1j * tau / k), term
            out += term
            if np.linalg.norm(term) < tol:
                break
        else:
            raise NumericalError(f"Taylor series did not converge in {max_order} terms", float(np.linalg.norm(term)))
    return out


def evolve_step(op: HermitianOperator, psi: StateVector, dt: float) -> StateVector:
    """``exp(-i op dt) |psi>`` without forming the matrix exponential."""
    n = _nqubits(psi)
    out = expm_apply(compile_operator(op, n), _array(psi), float(dt))
    drift = abs(np.linalg.norm(out) - np.linalg.norm(_array(psi)))
    if drift > NORM_TOL:
        raise NumericalError("norm drift after time step", drift)
    return StateVector(n, out)


def reduced_density(psi: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise StructuralError(f"duplicate indices in {keep}")
    if any(not 0 <= q < n for q in keep):
        raise StructuralError(f"indices {keep} out of range for {n} qubits")
    rest = [q for q in range(n) if q not in keep]
    t = psi.reshape((2,) * n).transpose(keep + rest).reshape(1 << len(keep), -1)
    return t @ t.conj().T


def partial_trace(psi: StateVector, keep: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix over ``keep``, in the listed order."""
    return DensityMatrix(reduced_density(_array(psi), _nqubits(psi), keep))


def hermitian_eig(m: DensityMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column eigenvectors of a Hermitian matrix."""
    a = m.matrix if isinstance(m, DensityMatrix) else np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"expected a square matrix, got {a.shape}")
    if a.shape[0] > 4096:
        raise StructuralError(f"dimension {a.shape[0]} exceeds 4096")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-8 * scale:
        raise StructuralError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(a)
    return vals, vecs


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = hermitian_eig(a)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def operator_sum(parts: Iterable[HermitianOperator]) -> HermitianOperator:
    terms: list[PauliString] = []
    for p in parts:
        terms.extend(p.terms)
    return HermitianOperator(tuple(terms))
