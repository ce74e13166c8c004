"""First-order perturbation theory in a weak transverse field, with and without
mean-field replacement of the inter-fragment couplings, plus a direct
minimizer of the state-dependent mean-field energy.

Conventions: the unperturbed Hamiltonian is the classical z-z part
(``H0 + HI``), ``V = -sum_i h_i S_x^(i)`` and ``lambda`` scales ``V``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fragsim.core import (
    HermitianOperator,
    PauliString,
    StateVector,
    StructuralError,
    compile_operator,
    hermitian_eig,
)
from fragsim.fragmentation import FragmentLayout, interface_of
from fragsim.hamiltonian import SpinModel, assemble, exact_ground, make_rng

SWEEP_COLUMNS = ("h", "F_exact_vs_mfmin", "F_exact_vs_baremin", "F_exact_vs_ptfull", "F_exact_vs_ptmf")


class UnsupportedInstance(StructuralError):
    """The instance has degeneracies the first-order treatment does not cover."""


@dataclass(frozen=True)
class PTDecomposition:
    H0: HermitianOperator
    HI: HermitianOperator
    V: HermitianOperator
    lam: float = 1.0

    def total(self) -> HermitianOperator:
        return self.H0 + self.HI + self.V * self.lam


@dataclass(frozen=True)
class FirstOrderState:
    zeroth: StateVector
    first_correction: StateVector

    @property
    def normalization(self) -> float:
        return float(1.0 / np.sqrt(1.0 + np.vdot(self.first_correction.amplitudes,
                                                  self.first_correction.amplitudes).real))

    @property
    def state(self) -> np.ndarray:
        return self.normalization * (self.zeroth.amplitudes + self.first_correction.amplitudes)


def decompose(model: SpinModel, layout: FragmentLayout, lam: float = 1.0) -> PTDecomposition:
    if not model.is_zz:
        raise StructuralError("perturbation theory here covers z-z couplings only")
    if layout.n != model.n:
        raise StructuralError(f"layout covers {layout.n} spins, model has {model.n}")
    cross = set()
    for f in range(layout.n_fragments):
        cross.update(interface_of(model, layout, f))
    h0 = [PauliString.of(-J, {k[0]: "z", k[1]: "z"}) for k, J in model.couplings.items() if k not in cross]
    hi = [PauliString.of(-J, {k[0]: "z", k[1]: "z"}) for k, J in model.couplings.items() if k in cross]
    v = [PauliString.of(-h, {i: "x"}) for i, h in enumerate(model.fields) if h != 0.0]
    return PTDecomposition(HermitianOperator(tuple(h0)), HermitianOperator(tuple(hi)), HermitianOperator(tuple(v)), lam)


def _classical(model: SpinModel) -> np.ndarray:
    return compile_operator(assemble(model.with_fields(0.0)), model.n).diag


def flip_all(n: int, x: int) -> int:
    return x ^ ((1 << n) - 1)


def _v_column(model: SpinModel, x: int) -> dict[int, float]:
    """Nonzero ``<y|V|x>``: one entry per single-spin flip with a field."""
    n = model.n
    return {x ^ (1 << (n - 1 - i)): -0.5 * h for i, h in enumerate(model.fields) if h != 0.0}


def degenerate_set(model: SpinModel, x: int, tol: float = 1e-10) -> np.ndarray:
    e = _classical(model)
    scale = max(1.0, float(np.max(np.abs(e))))
    return np.flatnonzero(np.abs(e - e[x]) <= tol * scale)


def _check_degeneracy(model: SpinModel, x: int, dset: np.ndarray) -> None:
    partner = flip_all(model.n, x)
    extra = set(int(d) for d in dset) - {x, partner}
    if not extra:
        return
    touched = set(_v_column(model, x)) | set(_v_column(model, partner))
    if extra & touched:
        raise UnsupportedInstance(
            f"state {x} shares its classical energy with single-flip neighbours {sorted(extra & touched)}")


def _correction(model: SpinModel, x: int, dset: np.ndarray, lam: float) -> np.ndarray:
    e = _classical(model)
    skip = set(int(d) for d in dset)
    out = np.zeros(1 << model.n, dtype=np.complex128)
    for y, v in _v_column(model, x).items():
        if y not in skip:
            out[y] += lam * v / (e[x] - e[y])
    return out


def _first_order_energy(model: SpinModel, zeroth: np.ndarray) -> float:
    v = compile_operator(HermitianOperator(tuple(
        PauliString.of(-h, {i: "x"}) for i, h in enumerate(model.fields) if h != 0.0)), model.n)
    return v.expect(zeroth)


def first_order_full(model: SpinModel, layout: FragmentLayout, k: int, lam: float = 1.0,
                     sign: int = 1) -> FirstOrderState:
    """Zeroth state ``(|x> + sign |x_bar>)/sqrt(2)`` plus its first-order correction."""
    decompose(model, layout)
    n = model.n
    dset = degenerate_set(model, k)
    _check_degeneracy(model, k, dset)
    kb = flip_all(n, k)
    zeroth = np.zeros(1 << n, dtype=np.complex128)
    zeroth[k] += 1 / np.sqrt(2)
    zeroth[kb] += sign / np.sqrt(2)
    corr = (_correction(model, k, dset, lam) + sign * _correction(model, kb, dset, lam)) / np.sqrt(2)
    e1 = _first_order_energy(model, zeroth)
    if abs(e1) > 1e-12:
        raise UnsupportedInstance(f"first-order energy {e1} does not vanish")
    return FirstOrderState(StateVector(n, zeroth), StateVector(n, corr))


def first_order_meanfield(model: SpinModel, layout: FragmentLayout, k: int, lam: float = 1.0) -> FirstOrderState:
    """Zeroth state ``|x>`` (a basis state) plus its first-order correction."""
    decompose(model, layout)
    n = model.n
    dset = degenerate_set(model, k)
    _check_degeneracy(model, k, dset)
    zeroth = np.zeros(1 << n, dtype=np.complex128)
    zeroth[k] = 1.0
    e1 = _first_order_energy(model, zeroth)
    if abs(e1) > 1e-12:
        raise UnsupportedInstance(f"first-order energy {e1} does not vanish")
    return FirstOrderState(StateVector(n, zeroth), StateVector(n, _correction(model, k, dset, lam)))


def overlap(full: FirstOrderState, mf: FirstOrderState) -> complex:
    """``<psi_full|psi_mf>`` of the normalized first-order states.

    Raises if some basis state receives weight from both members of the Z2
    pair, which happens only for two spins.
    """
    z = full.zeroth.amplitudes
    support = np.flatnonzero(np.abs(z) > 0)
    if len(support) == 2:
        n = full.zeroth.n_qubits
        cols = [set(np.flatnonzero(np.abs(_flip_neighbours(n, int(s))) > 0)) for s in support]
        if cols[0] & cols[1]:
            raise UnsupportedInstance("the two members of the Z2 pair share single-flip neighbours (n = 2)")
    return complex(np.vdot(full.state, mf.state))


def _flip_neighbours(n: int, x: int) -> np.ndarray:
    out = np.zeros(1 << n)
    for i in range(n):
        out[x ^ (1 << i)] = 1.0
    return out


def w_matrix(model: SpinModel, layout: FragmentLayout, x: int) -> np.ndarray:
    """``W = V P (E_x - H0 - HI)^{-1} P V`` on the span of ``|x>, |x_bar>``."""
    decompose(model, layout)
    e = _classical(model)
    dset = set(int(d) for d in degenerate_set(model, x))
    pair = (x, flip_all(model.n, x))
    cols = [_v_column(model, p) for p in pair]
    w = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            w[a, b] = sum(cols[a][y] * cols[b][y] / (e[x] - e[y]) for y in cols[b] if y in cols[a] and y not in dset)
    return w


# --------------------------------------------------------------------------
# mean-field energy functional


class MeanFieldFunctional:
    """``E(psi) = <H0 + V> - sum_I J <S_z^i><S_z^j>``, each interface coupling once."""

    def __init__(self, model: SpinModel, layout: FragmentLayout):
        dec = decompose(model, layout)
        self.n = model.n
        self.local = compile_operator(dec.H0 + dec.V * dec.lam, model.n)
        cross = [(k, J) for k, J in model.couplings.items() if k in set(_all_interface(model, layout))]
        self.pairs = [(k[0], k[1], J) for k, J in cross]
        self.sz = {q: 0.5 * _zsign(model.n, q) for q in range(model.n)}

    def energy_and_field(self, psi: np.ndarray) -> tuple[float, np.ndarray]:
        """Energy and ``dE/d<psi|`` (the effective Hamiltonian applied to psi)."""
        p = np.abs(psi) ** 2
        mz = {q: float(p @ s) for q, s in self.sz.items()}
        hpsi = self.local.apply(psi)
        e = float(np.vdot(psi, hpsi).real)
        diag = np.zeros(psi.shape[0])
        for i, j, J in self.pairs:
            e -= J * mz[i] * mz[j]
            diag -= J * (mz[j] * self.sz[i] + mz[i] * self.sz[j])
        return e, hpsi + diag * psi


def _all_interface(model: SpinModel, layout: FragmentLayout) -> list:
    out = []
    for f in range(layout.n_fragments):
        out.extend(interface_of(model, layout, f))
    return out


def _zsign(n: int, q: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)


def meanfield_energy(model: SpinModel, layout: FragmentLayout, psi) -> float:
    arr = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)
    return MeanFieldFunctional(model, layout).energy_and_field(arr / np.linalg.norm(arr))[0]


def descend(fun: MeanFieldFunctional, psi: np.ndarray, step: float = 0.5, max_iters: int = 20000,
            tol: float = 1e-14) -> tuple[np.ndarray, float, list[float]]:
    """Projected gradient descent on the unit sphere with step halving on increase."""
    psi = psi / np.linalg.norm(psi)
    e, g = fun.energy_and_field(psi)
    trace = [e]
    for _ in range(max_iters):
        tangent = g - np.vdot(psi, g) * psi
        if np.linalg.norm(tangent) < 1e-12:
            break
        while True:
            trial = psi - step * tangent
            trial /= np.linalg.norm(trial)
            et, gt = fun.energy_and_field(trial)
            if et <= e or step < 1e-12:
                break
            step *= 0.5
        if et > e:
            break
        done = e - et < tol
        psi, e, g = trial, et, gt
        trace.append(e)
        step *= 1.2
        if done:
            break
    return psi, e, trace


def minimize_meanfield_energy(model: SpinModel, layout: FragmentLayout, h: float, seed: int,
                              multistart: int = 32) -> tuple[StateVector, float]:
    """Lowest mean-field energy over ``multistart`` random complex starts."""
    if model.n > 12:
        raise StructuralError(f"n={model.n} exceeds the dense limit of 12")
    fun = MeanFieldFunctional(model.with_fields(h), layout)
    rng = make_rng(seed)
    best = None
    for _ in range(multistart):
        z = rng.normal(size=1 << model.n) + 1j * rng.normal(size=1 << model.n)
        psi, e, _ = descend(fun, z)
        if best is None or e < best[1]:
            best = (psi, e)
    return StateVector(model.n, best[0]), best[1]


def bare_fragment_ground(model: SpinModel, layout: FragmentLayout) -> np.ndarray:
    """Ground state of the fragments with every interface coupling dropped."""
    dec = decompose(model, layout)
    m = compile_operator(dec.H0 + dec.V, model.n).dense()
    return hermitian_eig(m.real if not np.any(m.imag) else m)[1][:, 0].astype(np.complex128)


def _fid(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def pt_sweep(model: SpinModel, layout: FragmentLayout, h_grid: Sequence[float], seed: int = 0,
             multistart: int = 32) -> list[tuple[float, float, float, float, float]]:
    """Fidelities with the exact ground state across transverse fields.

    At ``h = 0`` the exact ground pair is degenerate; the symmetric
    combination of the classical minimizer is used, since it is the state
    the ground state approaches as ``h -> 0``.
    """
    base = model.with_fields(0.0)
    e = _classical(base)
    xstar = int(np.argmin(e))
    rows = []
    for h in h_grid:
        m = model.with_fields(h)
        sign = 1 if h >= 0 or model.n % 2 == 0 else -1
        full = first_order_full(m, layout, xstar, sign=sign)
        mf = first_order_meanfield(m, layout, xstar)
        if h == 0:
            exact = full.zeroth.amplitudes
        else:
            exact = exact_ground(m)[1]
        mfmin = minimize_meanfield_energy(base, layout, h, seed, multistart)[0].amplitudes
        bare = bare_fragment_ground(m, layout)
        rows.append((float(h), _fid(exact, mfmin), _fid(exact, bare), _fid(exact, full.state), _fid(exact, mf.state)))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()
